"""Complete elliptic integrals and Jacobi elliptic functions (parameter convention).

Everything takes the *parameter* m (modulus squared).  K and E use the
arithmetic-geometric mean, sn/cn/dn the descending Landen (AGM) recurrence of
DLMF 22.20(ii).
"""
from __future__ import annotations

import math

import numpy as np

M_MAX = 1.0 - 1e-12
_AGM_TOL = 1e-16
_MAX_AGM_STEPS = 64


class EllipticDomainError(ValueError):
    pass


def _check_m(m: float, allow_one: bool = False) -> float:
    m = float(m)
    if not (m >= 0.0):
        raise EllipticDomainError(f"parameter m must be >= 0, got {m}")
    if allow_one and m == 1.0:
        return m
    if m > M_MAX:
        raise EllipticDomainError(f"parameter m={m!r} too close to (or beyond) 1")
    return m


def _agm_sequence(m: float):
    a, b, c = 1.0, math.sqrt(1.0 - m), math.sqrt(m)
    seq = [(a, b, c)]
    for _ in range(_MAX_AGM_STEPS):
        if abs(c) <= _AGM_TOL * a:
            break
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        seq.append((a, b, c))
    return seq


def complete_K(m: float) -> float:
    """K(m) = int_0^{pi/2} (1 - m sin^2 t)^{-1/2} dt."""
    m = _check_m(m)
    a = _agm_sequence(m)[-1][0]
    return math.pi / (2.0 * a)


def complete_E(m: float) -> float:
    """E(m) = int_0^{pi/2} (1 - m sin^2 t)^{1/2} dt, for 0 <= m <= 1."""
    m = float(m)
    if m == 1.0:
        return 1.0
    if not (0.0 <= m < 1.0):
        raise EllipticDomainError(f"parameter m must lie in [0, 1], got {m}")
    seq = _agm_sequence(m)
    # E = K * (1 - sum_n 2^{n-1} c_n^2)
    s = 0.5 * seq[0][2] ** 2
    for n, (_, _, c) in enumerate(seq[1:], start=1):
        s += 2.0 ** (n - 1) * c * c
    return math.pi / (2.0 * seq[-1][0]) * (1.0 - s)


def complete_KE(m: float) -> tuple[float, float]:
    return complete_K(m), complete_E(m)


def dK_dm(m: float) -> float:
    K, E = complete_KE(m)
    if m == 0.0:
        return math.pi / 8.0
    return (E - (1.0 - m) * K) / (2.0 * m * (1.0 - m))


def jacobi_sncndn(x, m: float):
    """Return (sn, cn, dn) at x (scalar or array)."""
    m = _check_m(m)
    x = np.asarray(x, dtype=float)
    if m == 0.0:
        return np.sin(x), np.cos(x), np.ones_like(x)
    seq = _agm_sequence(m)
    n_last = len(seq) - 1
    a_last = seq[-1][0]
    phi = (2.0 ** n_last) * a_last * x
    for n in range(n_last, 0, -1):
        a, _, c = seq[n]
        phi = 0.5 * (phi + np.arcsin(c / a * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    # dn^2 = (1 - m) + m cn^2: both terms positive, no cancellation
    dn = np.sqrt((1.0 - m) + m * cn * cn)
    return sn, cn, dn


def jacobi_cd(x, m: float):
    """cd(x, m) = cn/dn; period 4K(m)."""
    _, cn, dn = jacobi_sncndn(x, m)
    out = cn / dn
    return float(out) if np.ndim(out) == 0 else out
