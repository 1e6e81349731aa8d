"""Stationary solutions u'' = gamma sin(beta u) on the torus.

Constant critical points are 0 (minimum) and pi/beta (saddle).  Non-constant
ones come from the pendulum reduction

    u(x) = (pi + 2 arcsin(sqrt(m) cd(sqrt(gamma beta) x, m))) / beta,

with the parameter m fixed by requiring the period 4K(m)/sqrt(gamma beta) to
equal 2*pi/j.  Truncated versions are obtained by Newton iteration on the
Galerkin system.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import elliptic
from .fields import (
    FourierField,
    ModelParams,
    dealias_size,
    derivative_coeffs,
    from_orthonormal,
    grid,
    grid_to_coeffs,
    gradient_coeffs,
    hessian_matrix,
    potential,
    to_orthonormal,
    translate,
)
from .spectrum import SpectrumReport, spectrum_at

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
ACCEPT_TOL = 1e-10


class NoSuchOrbitError(ValueError):
    pass


class NewtonError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(f"{msg}; residual history: {['%.3e' % r for r in history]}")
        self.history = list(history)


@dataclass(frozen=True)
class StationaryPoint:
    field: FourierField
    energy: float
    kind: str                        # minimum | constant-saddle | elliptic-saddle
    neg_count: int
    zero_count: int
    residual: float
    modulus: float | None = None
    harmonic: int | None = None
    residual_history: tuple = ()
    spectrum: SpectrumReport | None = field(default=None, repr=False, compare=False)

    @property
    def is_transition_state(self) -> bool:
        return self.neg_count == 1


# ---------------------------------------------------------------------------
# the explicit elliptic family
# ---------------------------------------------------------------------------

def solve_modulus_for_period(gamma_beta: float, j: int = 1) -> float:
    """m in (0, 1) with 4K(m)/sqrt(gamma_beta) = 2*pi/j."""
    if j < 1:
        raise ValueError("harmonic j must be >= 1")
    root = math.sqrt(gamma_beta)
    if not root > j:
        raise NoSuchOrbitError(
            f"no such orbit: sqrt(gamma*beta)={root:.6g} <= j={j}; the shortest "
            f"period near pi/beta is 2*pi/sqrt(gamma*beta) >= 2*pi/j")
    target = math.pi * root / (2.0 * j)
    hi = elliptic.M_MAX
    if elliptic.complete_K(hi) < target:
        raise NoSuchOrbitError(f"modulus for gamma*beta={gamma_beta} is beyond m = 1 - 1e-12")
    m = optimize.brentq(lambda s: elliptic.complete_K(s) - target, 0.0, hi,
                        xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(5):
        r = elliptic.complete_K(m) - target
        if abs(r) < 1e-15 * target or m == 0.0:
            break
        m_new = m - r / elliptic.dK_dm(m)
        if not (0.0 < m_new < 1.0):
            break
        m = m_new
    return m


def elliptic_profile(gamma: float, beta: float, m: float):
    """The closed-form solution as a callable of x (peak at x = 0)."""
    root = math.sqrt(gamma * beta)
    sq = math.sqrt(m)

    def u(x):
        return (math.pi + 2.0 * np.arcsin(sq * elliptic.jacobi_cd(root * np.asarray(x), m))) / beta

    return u


def elliptic_formula_field(p: ModelParams, j: int = 1, N: int | None = None,
                           M: int | None = None) -> tuple[FourierField, float]:
    """Project the closed-form solution onto |n| <= N; returns (field, m)."""
    N = p.N if N is None else N
    m = solve_modulus_for_period(p.gamma_beta, j)
    M = max(dealias_size(N), 4096) if M is None else M
    vals = elliptic_profile(p.gamma, p.beta, m)(grid(M))
    return FourierField(N, grid_to_coeffs(vals, N)), m


# ---------------------------------------------------------------------------
# Newton refinement
# ---------------------------------------------------------------------------

def _residual(coeffs, p):
    return float(np.linalg.norm(to_orthonormal(gradient_coeffs(coeffs, p))))


def _newton_step(u: FourierField, p: ModelParams, deflate: bool) -> np.ndarray:
    g = to_orthonormal(gradient_coeffs(u.coeffs, p))
    H = hessian_matrix(u, p)
    t = to_orthonormal(derivative_coeffs(u.coeffs)) if deflate else None
    if t is not None and np.linalg.norm(t) > 1e-12:
        # bordered system: step orthogonal to the translation direction
        t = t / np.linalg.norm(t)
        n = len(g)
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = H
        A[:n, n] = t
        A[n, :n] = t
        rhs = np.concatenate([-g, [0.0]])
        dw = linalg.solve(A, rhs, assume_a="sym")[:n]
    else:
        dw = linalg.solve(H, -g, assume_a="sym")
    return from_orthonormal(dw)


def _lowest_harmonic(u: FourierField, rel: float = 1e-8) -> int | None:
    N = u.N
    amp = np.hypot(u.coeffs[N + 1:], u.coeffs[N - 1::-1])
    if amp.size == 0 or amp.max() == 0:
        return None
    idx = np.flatnonzero(amp > rel * amp.max())
    return int(idx[0]) + 1


def pin_phase(u: FourierField, j: int) -> FourierField:
    """Translate so that u_hat(-j) = 0 and u_hat(j) > 0 (maximum at x = 0)."""
    a, b = u[j], u[-j]
    if a == 0.0 and b == 0.0:
        return u
    theta = math.atan2(b, a)
    return translate(u, -theta / j)


def classify(u: FourierField, p: ModelParams, spec: SpectrumReport | None = None):
    spec = spectrum_at(u, p) if spec is None else spec
    if spec.neg_count == 0:
        kind = "minimum"
    elif u.is_constant(tol=1e-10 * max(1.0, abs(u.mean))):
        kind = "constant-saddle"
    else:
        kind = "elliptic-saddle"
    return kind, spec


def newton_refine(u0: FourierField, p: ModelParams, *, deflate: bool | None = None,
                  tol: float = NEWTON_TOL, max_iter: int = 50, accept: float = ACCEPT_TOL,
                  harmonic: int | None = None, modulus: float | None = None,
                  with_spectrum: bool = True) -> StationaryPoint:
    """Damped Newton iteration for grad F = 0 on the truncated system.

    For non-constant fields the translation direction d/dx u is removed from
    each linear solve (``deflate`` defaults to that).  Stops at residual < tol;
    a stagnating iteration is accepted if the residual is below ``accept``.
    """
    u = u0
    if deflate is None:
        deflate = not u.is_constant(tol=1e-14)
    res = _residual(u.coeffs, p)
    history = [res]
    while res >= tol and len(history) <= max_iter:
        try:
            du = _newton_step(u, p, deflate)
        except linalg.LinAlgError as exc:
            raise NewtonError(f"singular Hessian after deflation ({exc})", history) from exc
        lam = 1.0
        for _ in range(30):
            trial = FourierField(u.N, u.coeffs + lam * du)
            r_trial = _residual(trial.coeffs, p)
            if np.isfinite(r_trial) and r_trial < res:
                break
            lam *= 0.5
        else:
            break                       # no decrease possible: roundoff floor
        u, res = trial, r_trial
        history.append(res)
    if res >= tol and res >= accept:
        raise NewtonError("Newton iteration did not converge", history)

    if harmonic is None and not u.is_constant(tol=1e-10):
        harmonic = _lowest_harmonic(u)
    if harmonic is not None and not u.is_constant(tol=1e-10):
        u = pin_phase(u, harmonic)
        res = _residual(u.coeffs, p)
    if with_spectrum:
        kind, spec = classify(u, p)
        neg, zero = spec.neg_count, spec.zero_count
    else:
        spec = None
        kind = "constant-saddle" if u.is_constant(1e-10) else "elliptic-saddle"
        neg = zero = -1
    return StationaryPoint(
        field=u,
        energy=potential(u, p),
        kind=kind,
        neg_count=neg,
        zero_count=zero,
        residual=res,
        modulus=modulus,
        harmonic=harmonic if kind == "elliptic-saddle" else None,
        residual_history=tuple(history),
        spectrum=spec,
    )


# ---------------------------------------------------------------------------
# saddles
# ---------------------------------------------------------------------------

def constant_saddle(p: ModelParams) -> StationaryPoint:
    return newton_refine(FourierField.constant(p.N, math.pi / p.beta), p, deflate=False)


def well_minimum(p: ModelParams, k: int = 0) -> StationaryPoint:
    return newton_refine(FourierField.constant(p.N, k * p.well_spacing), p, deflate=False)


def elliptic_saddle(p: ModelParams, j: int = 1, with_spectrum: bool = True) -> StationaryPoint:
    """Closed-form j-th harmonic family member, truncated to N and Newton-refined."""
    u0, m = elliptic_formula_field(p, j)
    return newton_refine(u0, p, deflate=True, harmonic=j, modulus=m,
                         with_spectrum=with_spectrum)


def enumerate_saddles(p: ModelParams) -> list[StationaryPoint]:
    """Constant saddle plus every elliptic family j < sqrt(gamma*beta), sorted by energy."""
    gb = p.gamma_beta
    if gb == 1.0:
        raise ValueError("gamma*beta = 1 is bifurcation-degenerate")
    out = [constant_saddle(p)]
    root = math.sqrt(gb)
    for j in range(1, int(math.floor(root)) + 1):
        if root == j:
            log.warning("sqrt(gamma*beta) = %d: family j=%d degenerates into pi/beta, skipped", j, j)
            continue
        out.append(elliptic_saddle(p, j))
    return sorted(out, key=lambda s: s.energy)


def transition_state(p: ModelParams) -> StationaryPoint:
    """Lowest-energy saddle: pi/beta below the bifurcation, the j=1 family above."""
    return constant_saddle(p) if p.require_regime() == "sub" else elliptic_saddle(p, 1)


# ---------------------------------------------------------------------------
# phase portrait data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseOrbit:
    level: float
    kind: str              # center | closed | separatrix | open
    u: np.ndarray
    v: np.ndarray
    period: float | None = None


def phase_energy(u, v, gamma: float, beta: float):
    """Conserved quantity of u'' = gamma sin(beta u)."""
    return 0.5 * np.asarray(v) ** 2 + (gamma / beta) * np.cos(beta * np.asarray(u))


def orbit_period(u_turn: float, gamma: float, beta: float) -> float:
    """Period of the closed orbit through (u_turn, 0), u_turn in [pi/beta, 2pi/beta)."""
    m = math.cos(beta * u_turn / 2.0) ** 2
    return 4.0 * elliptic.complete_K(m) / math.sqrt(gamma * beta)


def phase_portrait_data(gamma_beta: float, beta: float = 1.0, n_closed: int = 6,
                        n_open: int = 3, n_points: int = 201) -> list[PhaseOrbit]:
    """Level sets of H(u, u') = u'^2/2 + (gamma/beta) cos(beta u) over one cell.

    u ranges over [0, 2*pi/beta]; each orbit is returned as its upper and lower
    branch concatenated (closed orbits form a loop).
    """
    gamma = gamma_beta / beta
    top = gamma / beta
    orbits = [PhaseOrbit(-top, "center", np.array([math.pi / beta]), np.array([0.0]), 2 * math.pi / math.sqrt(gamma_beta))]
    s = np.linspace(0.0, math.pi, n_points)

    def branch(level, lo, hi):
        # cosine spacing clusters samples near the turning points
        u = lo + (hi - lo) * 0.5 * (1.0 - np.cos(s))
        rad = np.maximum(2.0 * (level - top * np.cos(beta * u)), 0.0)
        v = np.sqrt(rad)
        return np.concatenate([u, u[::-1]]), np.concatenate([v, -v[::-1]])

    for level in np.linspace(-top, top, n_closed + 2)[1:-1]:
        a = math.acos(level / top) / beta
        u, v = branch(level, a, 2 * math.pi / beta - a)
        orbits.append(PhaseOrbit(float(level), "closed", u, v, orbit_period(2 * math.pi / beta - a, gamma, beta)))
    u, v = branch(top, 0.0, 2 * math.pi / beta)
    orbits.append(PhaseOrbit(top, "separatrix", u, v, math.inf))
    for level in top * (1.0 + np.arange(1, n_open + 1) * 0.5):
        u, v = branch(float(level), 0.0, 2 * math.pi / beta)
        orbits.append(PhaseOrbit(float(level), "open", u, v, None))
    return orbits
