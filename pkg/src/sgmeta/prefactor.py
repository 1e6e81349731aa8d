"""Eyring-Kramers prefactors and functional determinant ratios.

Below the bifurcation (gamma*beta < 1) the saddle is the constant pi/beta and
everything is explicit.  Above it the saddle is the kink-antikink family; the
prefactor needs the Hessian spectrum there, either as a finite-N eigenvalue
product or via the zero-mode-removed determinant in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import elliptic
from .fields import FourierField, ModelParams, potential
from .spectrum import (
    SpectrumReport,
    constant_saddle_log_ratio,
    log_product_ratio,
    reference_eigenvalues,
)
from .stationary import StationaryPoint, solve_modulus_for_period


class RegimeError(ValueError):
    pass


class ClassificationError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionTimeEstimate:
    """prefactor * exp(barrier / eps) for the two-sided exit (either neighbour)."""

    regime: str
    prefactor: float
    barrier: float
    method: str
    N_used: int | None = None
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.prefactor > 0 and self.barrier > 0):
            raise ValueError(f"non-positive prefactor/barrier: {self.prefactor}, {self.barrier}")

    def expected_time(self, eps: float) -> float:
        return self.prefactor * math.exp(self.barrier / eps)

    def log_expected_time(self, eps: float) -> float:
        return math.log(self.prefactor) + self.barrier / eps

    def rate(self, eps: float) -> float:
        """Jump rate to either neighbouring well."""
        return 1.0 / self.expected_time(eps)

    def one_sided_rate(self, eps: float) -> float:
        return 0.5 * self.rate(eps)

    def to_dict(self, eps: float | None = None) -> dict:
        d = dict(regime=self.regime, method=self.method, prefactor=self.prefactor,
                 barrier=self.barrier, N_used=self.N_used, **self.extras)
        if eps is not None:
            d.update(epsilon=eps, expected_time=self.expected_time(eps),
                     rate_two_sided=self.rate(eps), rate_one_sided=self.one_sided_rate(eps))
        return d


@dataclass(frozen=True)
class DeterminantReport:
    log_ratio: float             # log |det ratio|
    sign: int
    zero_removed: bool
    m: float | None = None
    hooks: dict = field(default_factory=dict, compare=False)

    @property
    def value(self) -> float:
        return self.sign * math.exp(self.log_ratio)


# ---------------------------------------------------------------------------
# gamma*beta < 1
# ---------------------------------------------------------------------------

def closed_form_sub_prefactor(gamma_beta: float) -> float:
    r = math.sqrt(gamma_beta)
    return math.sin(math.pi * r) / (2.0 * gamma_beta * math.sinh(math.pi * r))


def prefactor_sub(p: ModelParams) -> tuple[TransitionTimeEstimate, TransitionTimeEstimate]:
    """(finite-N product, closed form) predictions for gamma*beta < 1."""
    gb = p.gamma_beta
    if not gb < 1.0:
        raise RegimeError(f"prefactor_sub needs gamma*beta < 1, got {gb}")
    barrier = 4.0 * math.pi * p.gamma / p.beta
    log_ratio = constant_saddle_log_ratio(gb, p.N)
    finite = TransitionTimeEstimate(
        "sub", math.exp(0.5 * log_ratio) / (2.0 * gb), barrier, "finite-N product", p.N,
        extras=dict(mu=gb, log_product_ratio=log_ratio))
    closed = TransitionTimeEstimate(
        "sub", closed_form_sub_prefactor(gb), barrier, "closed form", None, extras=dict(mu=gb))
    return finite, closed


# ---------------------------------------------------------------------------
# gamma*beta > 1
# ---------------------------------------------------------------------------

def manifold_length(u_star: FourierField) -> float:
    """Length 2*pi*||d/dx u|| of the circle of translates of u_star."""
    if u_star.is_constant():
        raise ValueError("constant field: no saddle manifold")
    n = u_star.wavenumbers
    return 2.0 * math.pi * math.sqrt(float(np.sum(n ** 2 * u_star.coeffs ** 2)))


def _check_super_signature(spec: SpectrumReport):
    if spec.neg_count != 1 or spec.zero_count != 1:
        raise ClassificationError(
            f"expected one negative and one zero eigenvalue, got "
            f"{spec.neg_count} negative / {spec.zero_count} zero")


def _barrier_super(p: ModelParams, saddle: StationaryPoint) -> float:
    return saddle.energy - potential(FourierField.zeros(saddle.field.N), p)


def prefactor_super(p: ModelParams, saddle: StationaryPoint,
                    spec: SpectrumReport | None = None) -> TransitionTimeEstimate:
    """Finite-N prefactor from the Hessian spectrum at the kink-antikink saddle."""
    if not p.gamma_beta > 1.0:
        raise RegimeError(f"prefactor_super needs gamma*beta > 1, got {p.gamma_beta}")
    spec = saddle.spectrum if spec is None else spec
    _check_super_signature(spec)
    N = saddle.field.N
    dnorm = manifold_length(saddle.field) / (2.0 * math.pi)
    mu = spec.mu
    log_ratio = log_product_ratio(spec.positive_eigenvalues(), reference_eigenvalues(p.gamma_beta, N))
    pref = math.sqrt(2.0 * math.pi / mu * math.exp(log_ratio)) / (2.0 * dnorm)
    return TransitionTimeEstimate(
        "super", pref, _barrier_super(p, saddle), "finite-N product", N,
        extras=dict(mu=mu, dx_norm=dnorm, manifold_length=2.0 * math.pi * dnorm,
                    log_product_ratio=log_ratio, barrier_constant_saddle=4.0 * math.pi * p.gamma / p.beta))


def prefactor_super_closed(p: ModelParams, saddle: StationaryPoint,
                           spec: SpectrumReport | None = None) -> TransitionTimeEstimate:
    """Same prefactor with the eigenvalue product replaced by the closed-form det'.

    Only mu still comes from the eigensolver.
    """
    spec = saddle.spectrum if spec is None else spec
    _check_super_signature(spec)
    det = mckane_tarlie(p.gamma, p.beta)
    mu = spec.mu
    dnorm = math.sqrt(det.hooks["y1_norm_sq"])
    # det' = -mu * prod(lambda_k) / prod(n^2 + gb)
    log_ratio = det.log_ratio - math.log(mu)
    pref = math.sqrt(2.0 * math.pi / mu * math.exp(log_ratio)) / (2.0 * dnorm)
    return TransitionTimeEstimate(
        "super", pref, _barrier_super(p, saddle), "closed form", None,
        extras=dict(mu=mu, dx_norm=dnorm, m=det.m, log_product_ratio=log_ratio,
                    barrier_constant_saddle=4.0 * math.pi * p.gamma / p.beta))


# ---------------------------------------------------------------------------
# functional determinants
# ---------------------------------------------------------------------------

GY_RTOL = 1e-13


def _periodic_bc_det(sign: float, gamma_beta: float) -> float:
    """det(Id - H(2pi) H(0)^{-1}) for y'' = sign*gamma_beta*y, via ODE integration."""
    def rhs(_, y):
        # two solutions at once: (y1, y1', y2, y2')
        return [y[1], sign * gamma_beta * y[0], y[3], sign * gamma_beta * y[2]]

    sol = solve_ivp(rhs, (0.0, 2.0 * math.pi), [1.0, 0.0, 0.0, 1.0], method="DOP853",
                    rtol=GY_RTOL, atol=1e-15)
    y = sol.y[:, -1]
    H2 = np.array([[y[0], y[2]], [y[1], y[3]]])
    return float(np.linalg.det(np.eye(2) - H2))       # H(0) = Id


def gelfand_yaglom_ratio(gamma_beta: float, check_tol: float = 1e-9) -> float:
    """det(-Laplacian - gb)/det(-Laplacian + gb) on the 2*pi torus from the 2x2 boundary determinants."""
    if not gamma_beta > 0:
        raise ValueError("gamma*beta must be positive")
    r = math.sqrt(gamma_beta)
    if r == round(r):
        raise ValueError(f"sqrt(gamma*beta) = {r:g} is an integer: the determinant vanishes (degenerate)")
    num = _periodic_bc_det(-1.0, gamma_beta)     # y'' = -gb y  -> 4 sin^2
    den = _periodic_bc_det(+1.0, gamma_beta)     # y'' = +gb y  -> -4 sinh^2
    ratio = num / den
    closed = -(math.sin(math.pi * r) / math.sinh(math.pi * r)) ** 2
    if abs(ratio - closed) > check_tol * abs(closed):
        raise ArithmeticError(f"ODE determinant {ratio!r} disagrees with closed form {closed!r}")
    return ratio


def mckane_tarlie(gamma: float, beta: float) -> DeterminantReport:
    """det' Lambda / det(-Laplacian + gb) at the kink-antikink saddle, translation mode removed."""
    gb = gamma * beta
    if not gb > 1.0:
        raise RegimeError(f"zero-mode-removed determinant needs gamma*beta > 1, got {gb}")
    m = solve_modulus_for_period(gb, 1)
    K, E = elliptic.complete_K(m), elliptic.complete_E(m)
    s = math.sinh(math.pi * math.sqrt(gb))
    value = -4.0 * (E + (m - 1.0) * K) ** 2 / (gb * (1.0 - m) * m * s * s)
    hooks = dict(
        K=K, E=E,
        quarter_point=K / math.sqrt(gb),
        # u'(K/sqrt(gb)) of the closed-form profile
        y1_quarter=-2.0 * math.sqrt(gamma * m / beta),
        y1_quarter_alt_scaling=-2.0 * math.sqrt(gamma * m / math.sqrt(beta)),
        y1_prime_quarter=0.0,
        y2_quarter=(E + (m - 1.0) * K) / (beta * (1.0 - m) * math.sqrt(m)),
        y2_prime_quarter=-math.sqrt(gamma / (beta * m)),
        y1_norm_sq=16.0 * math.sqrt(gamma) / beta ** 1.5 * (E - (1.0 - m) * K),
        value=value,
    )
    return DeterminantReport(math.log(abs(value)), -1 if value < 0 else 1, True, m, hooks)


def finite_n_det_prime_ratio(p: ModelParams, spec: SpectrumReport) -> float:
    """(-mu * prod' lambda_k) / prod_{|n|<=N} (n^2 + gb), zero eigenvalue dropped."""
    _check_super_signature(spec)
    N = (len(spec.eigenvalues) - 1) // 2
    lr = log_product_ratio(spec.positive_eigenvalues(), reference_eigenvalues(p.gamma_beta, N))
    return -spec.mu * math.exp(lr)
