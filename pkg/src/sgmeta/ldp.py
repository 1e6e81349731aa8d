"""Large-deviation rate functional on discrete paths and string-method barriers.

The rate functional of a path u(t) is

    I[u] = 1/2 int ||d_t u + grad F(u)||^2_{L^2} dt,

evaluated with a midpoint rule in time and exactly (spectrally) in space.
``communication_height`` relaxes a string of images between two wells to a
minimum-energy path and then lets the top image climb onto the saddle.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .fields import (
    FourierField,
    ModelParams,
    gradient_coeffs,
    l2_norm_sq,
    n_of,
    potential_coeffs,
    translate_coeffs,
)

log = logging.getLogger(__name__)

MAX_ITER = 10_000
MOVE_TOL = 1e-8


class StringConvergenceError(RuntimeError):
    def __init__(self, msg, diagnostics: dict):
        super().__init__(f"{msg}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PathDiscretization:
    images: tuple
    times: np.ndarray | None = None

    def __post_init__(self):
        imgs = tuple(self.images)
        object.__setattr__(self, "images", imgs)
        if len(imgs) < 3:
            raise ValueError(f"a path needs at least 3 images (K >= 2), got {len(imgs)}")
        Ns = {u.N for u in imgs}
        if len(Ns) != 1:
            raise ValueError(f"images have different truncations {sorted(Ns)}")
        if self.times is not None:
            t = np.asarray(self.times, dtype=float)
            if t.shape != (len(imgs),):
                raise ValueError("need one time per image")
            if not np.all(np.diff(t) > 0):
                raise ValueError("times must be strictly increasing")
            object.__setattr__(self, "times", t)

    @property
    def N(self) -> int:
        return self.images[0].N

    @property
    def K(self) -> int:
        return len(self.images) - 1

    def coeffs(self) -> np.ndarray:
        return np.stack([u.coeffs for u in self.images])

    @classmethod
    def from_coeffs(cls, coeffs: np.ndarray, times=None) -> "PathDiscretization":
        N = (coeffs.shape[1] - 1) // 2
        return cls(tuple(FourierField(N, row) for row in coeffs), times)

    def reversed(self) -> "PathDiscretization":
        """Same curve traversed backwards; times t -> t_end - t."""
        t = None if self.times is None else (self.times[-1] - self.times)[::-1]
        return PathDiscretization(self.images[::-1], t)

    def energies(self, p: ModelParams) -> np.ndarray:
        return potential_coeffs(self.coeffs(), p)


def action(path: PathDiscretization, p: ModelParams) -> float:
    """Midpoint-rule value of 1/2 int ||d_t u + grad F(u)||^2 dt."""
    if path.times is None:
        raise ValueError("action needs image times")
    if len(path.images) < 3:
        raise ValueError("action needs at least 3 images")
    c = path.coeffs()
    dt = np.diff(path.times)
    vel = np.diff(c, axis=0) / dt[:, None]
    mid = 0.5 * (c[1:] + c[:-1])
    r = vel + gradient_coeffs(mid, p)
    return 0.5 * math.fsum(l2_norm_sq(r) * dt)


def flow_path(u0: FourierField, p: ModelParams, t_final: float, n_images: int,
              rtol: float = 1e-11, atol: float = 1e-13) -> PathDiscretization:
    """Deterministic gradient flow d_t u = -grad F(u) sampled at uniform times."""
    if n_images < 3:
        raise ValueError("need at least 3 images")
    N = u0.N
    n2 = n_of(N).astype(float) ** 2

    def rhs(_, y):
        return -gradient_coeffs(y, p)

    def jac(_, y):
        # the Laplacian part dominates the stiffness; the nonlinear part is bounded
        return -np.diag(n2)

    times = np.linspace(0.0, t_final, n_images)
    sol = solve_ivp(rhs, (0.0, t_final), u0.coeffs, method="Radau", t_eval=times,
                    rtol=rtol, atol=atol, jac=jac)
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    return PathDiscretization.from_coeffs(sol.y.T, times)


# ---------------------------------------------------------------------------
# translation-invariant distance
# ---------------------------------------------------------------------------

def distance_mod_translation(u: FourierField, v: FourierField, n_grid: int = 256) -> tuple[float, float]:
    """min_t ||u(. - t) - v||_{L^2}; returns (distance, shift)."""
    if u.N != v.N:
        raise ValueError("fields must share N")

    def d2(t):
        return float(l2_norm_sq(translate_coeffs(u.coeffs, t) - v.coeffs))

    ts = np.linspace(0.0, 2 * math.pi, n_grid, endpoint=False)
    vals = [d2(t) for t in ts]
    i = int(np.argmin(vals))
    h = 2 * math.pi / n_grid
    res = minimize_scalar(d2, bounds=(ts[i] - h, ts[i] + h), method="bounded",
                          options={"xatol": 1e-12})
    best_t, best = (res.x, res.fun) if res.fun < vals[i] else (ts[i], vals[i])
    return math.sqrt(max(best, 0.0)), float(best_t % (2 * math.pi))


# ---------------------------------------------------------------------------
# string method
# ---------------------------------------------------------------------------

@dataclass
class StringResult:
    height: float
    argmax_image: FourierField
    argmax_index: int
    gradient_residual: float
    iterations: int
    images: np.ndarray = field(repr=False)
    energies: np.ndarray = field(repr=False)
    history: list = field(repr=False, default_factory=list)   # (iteration, phase, step, energies)
    relax_max_energies: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return dict(height=self.height, argmax_index=self.argmax_index,
                    gradient_residual=self.gradient_residual, iterations=self.iterations,
                    argmax_image=[float(x) for x in self.argmax_image.coeffs])


def _reparametrize(c: np.ndarray) -> np.ndarray:
    """Redistribute images to equal L^2 arc length along the piecewise-linear string."""
    seg = np.sqrt(l2_norm_sq(np.diff(c, axis=0)))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return c.copy()
    target = np.linspace(0.0, s[-1], len(c))
    j = np.clip(np.searchsorted(s, target, side="right") - 1, 0, len(c) - 2)
    w = np.where(seg[j] > 0, (target - s[j]) / np.where(seg[j] > 0, seg[j], 1.0), 0.0)
    out = (1 - w)[:, None] * c[j] + w[:, None] * c[j + 1]
    out[0], out[-1] = c[0], c[-1]
    return out


def _descent(c: np.ndarray, p: ModelParams, h: float, n2: np.ndarray) -> np.ndarray:
    """Semi-implicit gradient step (Laplacian implicit) on interior images."""
    out = c.copy()
    inner = c[1:-1]
    nonlin = gradient_coeffs(inner, p) - n2 * inner
    out[1:-1] = (inner - h * nonlin) / (1.0 + h * n2)
    return out


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    N = (a.shape[-1] - 1) // 2
    w = np.ones_like(a)
    w[..., N] = 2 * math.pi
    return float(np.sum(w * a * b))


def _climb(c: np.ndarray, i: int, p: ModelParams, h: float, n2: np.ndarray) -> np.ndarray:
    """Climbing-image step: descend in all directions except along the string tangent."""
    u = c[i]
    tau = c[i + 1] - c[i - 1]
    tau = tau / math.sqrt(_inner(tau, tau))
    g = gradient_coeffs(u, p)
    nonlin = g - n2 * u
    return (u - h * nonlin + 2.0 * h * _inner(g, tau) * tau) / (1.0 + h * n2)


def communication_height(a: FourierField, b: FourierField, p: ModelParams, K: int = 64, *,
                         step: float | None = None, perturbation: float | None = None,
                         max_iter: int = MAX_ITER, move_tol: float = MOVE_TOL,
                         grad_tol: float = 1e-7, climb: bool = True) -> StringResult:
    """Barrier max_s F(phi(s)) - F(a) along a relaxed string from a to b.

    Phase 1 is the plain string method (descent + equal-arc-length
    reparametrization, step halved whenever the top energy would rise) until
    the top image moves less than ``move_tol``.  Phase 2 (``climb=True``) lets
    the top image climb along the tangent onto the saddle.
    """
    if a.N != b.N:
        raise ValueError("endpoints must share N")
    if K < 2:
        raise ValueError("need K >= 2")
    N = a.N
    Fa = float(potential_coeffs(a.coeffs, p))
    if np.array_equal(a.coeffs, b.coeffs):
        return StringResult(0.0, a, 0, float(math.sqrt(l2_norm_sq(gradient_coeffs(a.coeffs, p)))),
                            0, np.tile(a.coeffs, (K + 1, 1)), np.full(K + 1, Fa))

    n2 = n_of(N).astype(float) ** 2
    h0 = 0.5 / max(1.0, p.gamma_beta) if step is None else step
    s = np.linspace(0.0, 1.0, K + 1)
    c = (1 - s)[:, None] * a.coeffs + s[:, None] * b.coeffs
    if perturbation is None:
        perturbation = 0.5 / p.beta if p.gamma_beta > 1 and N >= 1 else 0.0
    if perturbation and N >= 1:
        # even kick: leaves the translation-symmetric subspace, keeps x -> -x symmetry
        c[:, N + 1] += perturbation * math.sqrt(math.pi) * np.sin(math.pi * s)
    c = _reparametrize(c)

    E = potential_coeffs(c, p)
    history = [(0, "init", 0.0, E.copy())]
    relax_max = [float(E.max())]
    h = h0
    it = 0
    # phase 1: plain string
    while True:
        if it >= max_iter:
            raise StringConvergenceError("string did not converge", dict(
                iterations=it, step=h, max_energy=float(E.max()), phase="relax"))
        i_old = int(np.argmax(E))
        for _ in range(40):
            trial = _reparametrize(_descent(c, p, h, n2))
            E_trial = potential_coeffs(trial, p)
            if E_trial.max() <= E.max() + 1e-13 * max(1.0, abs(E.max())):
                break
            h *= 0.5
        move = math.sqrt(float(l2_norm_sq(trial[i_old] - c[i_old])))
        c, E = trial, E_trial
        it += 1
        h = min(h0, 2 * h)
        history.append((it, "relax", h, E.copy()))
        relax_max.append(float(E.max()))
        if move < move_tol:
            break

    i = int(np.argmax(E))
    if climb and 0 < i < K:
        hc = h0
        g_res = math.inf
        while True:
            if it >= max_iter:
                raise StringConvergenceError("climbing image did not converge", dict(
                    iterations=it, step=hc, gradient_residual=g_res, phase="climb"))
            new = _climb(c, i, p, hc, n2)
            move = math.sqrt(float(l2_norm_sq(new - c[i])))
            c = c.copy()
            c[i] = new
            # keep the other images equally spaced on either side of the climber
            c[: i + 1] = _reparametrize(_descent(c[: i + 1], p, hc, n2))
            c[i:] = _reparametrize(_descent(c[i:], p, hc, n2))
            E = potential_coeffs(c, p)
            it += 1
            g_res = math.sqrt(float(l2_norm_sq(gradient_coeffs(c[i], p))))
            history.append((it, "climb", hc, E.copy()))
            if g_res < grad_tol or move < 1e-3 * move_tol:
                break
            if int(np.argmax(E)) != i and 0 < int(np.argmax(E)) < K:
                i = int(np.argmax(E))

    i = int(np.argmax(E))
    top = FourierField(N, c[i])
    g_res = math.sqrt(float(l2_norm_sq(gradient_coeffs(c[i], p))))
    log.info("string converged after %d iterations: height %.12g, residual %.2e",
             it, E[i] - Fa, g_res)
    return StringResult(float(E[i] - Fa), top, i, g_res, it, c, E, history, relax_max)


def write_energies_csv(path, result: StringResult):
    K = len(result.energies) - 1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "phase", "step", "max_energy"] + [f"E{k}" for k in range(K + 1)])
        for it, phase, h, E in result.history:
            w.writerow([it, phase, repr(float(h)), repr(float(np.max(E)))] + [repr(float(x)) for x in E])
