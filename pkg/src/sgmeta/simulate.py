"""Time stepping of the Galerkin-truncated stochastic sine-Gordon equation.

    du = (u'' - gamma P_N sin(beta P_N u) - confining force) dt + sqrt(2 eps) P_N dW

in Fourier coefficients.  Space-time white noise has unit variance against
orthonormal modes, so the unnormalized zero coefficient receives noise with
standard deviation 1/sqrt(2 pi) per unit sqrt(time).

Trials are simulated as a batch (one row per trial) but each row consumes its
own random stream, seeded from (seed, trial index), so a trial's path does not
depend on which other trials share the batch.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .fields import (
    SQRT_2PI,
    FourierField,
    ModelParams,
    besov_norm_coeffs,
    coeffs_to_grid,
    dealias_size,
    grid_to_coeffs,
    n_of,
)

log = logging.getLogger(__name__)

SCHEMES = ("semi-implicit", "exponential")
_NOISE_CHUNK = 512


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    scheme: str = "semi-implicit"
    seed: int = 0
    max_time: float = 1e4
    check_every: int = 10
    kappa: float = 0.05
    delta: float | None = None       # None: 0.2 * 2*pi/beta
    c0: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if int(self.check_every) != self.check_every or self.check_every < 1:
            raise ValueError("check_every must be an integer >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must fit in 64 bits")

    def delta_for(self, p: ModelParams) -> float:
        return 0.2 * p.well_spacing if self.delta is None else self.delta

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HittingRecord:
    hit_time: float
    exit_side: str | None          # plus | minus | None when censored
    trial_seed: int
    steps: int
    censored: bool = False


# ---------------------------------------------------------------------------
# integrator
# ---------------------------------------------------------------------------

class Stepper:
    """Precomputed linear factors for one (params, config) pair; acts on batches."""

    def __init__(self, p: ModelParams, c: SimConfig, N: int | None = None):
        self.p, self.c = p, c
        self.N = p.N if N is None else N
        self.M = dealias_size(self.N)
        n2 = n_of(self.N).astype(float) ** 2
        dt = c.dt
        sigma = np.ones(2 * self.N + 1)
        sigma[self.N] = 1.0 / SQRT_2PI
        amp = math.sqrt(2.0 * p.epsilon)
        if c.scheme == "semi-implicit":
            self.lin = 1.0 / (1.0 + dt * n2)
            self.nl = dt * self.lin
            self.noise = amp * math.sqrt(dt) * sigma * self.lin
        else:
            z = dt * n2
            self.lin = np.exp(-z)
            phi1 = np.where(z > 0, -np.expm1(-z) / np.where(z > 0, z, 1.0), 1.0)
            self.nl = dt * phi1
            var = np.where(z > 0, -np.expm1(-2 * z) / np.where(z > 0, 2 * n2, 1.0), dt)
            self.noise = amp * sigma * np.sqrt(var)

    def drift(self, coeffs: np.ndarray) -> np.ndarray:
        """Nonlinear part: -gamma P_N sin(beta u) minus the confining force."""
        p, N = self.p, self.N
        vals = coeffs_to_grid(coeffs, self.M)
        out = -p.gamma * grid_to_coeffs(np.sin(p.beta * vals), N)
        mean = coeffs[..., N]
        excess = np.maximum(0.0, np.abs(mean) - p.confining_threshold)
        out[..., N] -= np.sign(mean) * excess / math.pi
        return out

    def advance(self, coeffs: np.ndarray, xi: np.ndarray | None) -> np.ndarray:
        out = self.lin * coeffs + self.nl * self.drift(coeffs)
        if xi is not None and self.p.epsilon > 0:
            out += self.noise * xi
        return out


def step(u: FourierField, p: ModelParams, c: SimConfig, rng: np.random.Generator | None) -> FourierField:
    """One time step; ``rng=None`` or epsilon=0 gives the deterministic flow."""
    st = Stepper(p, c, u.N)
    xi = None if rng is None else rng.standard_normal(2 * u.N + 1)
    return FourierField(u.N, st.advance(u.coeffs, xi))


def trial_seed_sequence(seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(trial)])


def trial_seed(seed: int, trial: int) -> int:
    return int(trial_seed_sequence(seed, trial).generate_state(1, np.uint64)[0])


class _NoiseStreams:
    """Per-row generators, drawn in chunks to amortize Python overhead."""

    def __init__(self, seqs, dim: int, chunk: int = _NOISE_CHUNK):
        self.rngs = [np.random.Generator(np.random.PCG64(s)) for s in seqs]
        self.dim, self.chunk = dim, chunk
        self.pos = chunk
        self.buf = None

    def next(self) -> np.ndarray:
        if self.pos == self.chunk:
            self.buf = np.stack([r.standard_normal((self.chunk, self.dim)) for r in self.rngs])
            self.pos = 0
        xi = self.buf[:, self.pos, :]
        self.pos += 1
        return xi

    def keep(self, mask: np.ndarray):
        idx = np.flatnonzero(mask)
        self.rngs = [self.rngs[i] for i in idx]
        if self.buf is not None:
            self.buf = self.buf[idx]


def simulate_trajectory(u0: FourierField, p: ModelParams, c: SimConfig, t_final: float,
                        snapshot_every: int = 1, noise: bool = True, trial: int = 0):
    """Integrate one path; returns (times, coeffs[n_snap, 2N+1])."""
    st = Stepper(p, c, u0.N)
    streams = _NoiseStreams([trial_seed_sequence(c.seed, trial)], 2 * u0.N + 1)
    n_steps = int(round(t_final / c.dt))
    u = u0.coeffs[None, :].copy()
    times, snaps = [0.0], [u[0].copy()]
    for k in range(1, n_steps + 1):
        u = st.advance(u, streams.next() if noise else None)
        if k % snapshot_every == 0 or k == n_steps:
            times.append(k * c.dt)
            snaps.append(u[0].copy())
    return np.array(times), np.array(snaps)


# ---------------------------------------------------------------------------
# hitting sets
# ---------------------------------------------------------------------------

class HitSet:
    """Membership predicate; call with a FourierField or use ``batch`` on coefficient rows."""

    def __init__(self, name, fn):
        self.name = name
        self._fn = fn

    def batch(self, coeffs: np.ndarray) -> np.ndarray:
        return self._fn(np.atleast_2d(coeffs))

    def __call__(self, u: FourierField) -> bool:
        return bool(self.batch(u.coeffs)[0])

    def __repr__(self):
        return f"HitSet({self.name})"


def hitting_sets_super(p: ModelParams, c: SimConfig) -> tuple[HitSet, HitSet]:
    """Besov balls of radius delta around +-2pi/beta (A) and around 0 (B)."""
    s = 0.5 - c.kappa
    delta = c.delta_for(p)
    shift = p.well_spacing

    def centred(coeffs, centre):
        d = np.array(coeffs)
        d[..., (d.shape[-1] - 1) // 2] -= centre
        return besov_norm_coeffs(d, s)

    def in_A(coeffs):
        return (centred(coeffs, shift) < delta) | (centred(coeffs, -shift) < delta)

    def in_B(coeffs):
        return besov_norm_coeffs(coeffs, s) < delta

    return HitSet(f"A(delta={delta:g})", in_A), HitSet(f"B(delta={delta:g})", in_B)


def sub_margin(eps: float) -> float:
    if not (0 < eps < 1):
        raise ValueError(f"epsilon must lie in (0, 1) so that log(1/eps) > 0, got {eps}")
    return math.sqrt(eps) * math.log(1.0 / eps)


def hitting_sets_sub(p: ModelParams, c: SimConfig, epsilon: float) -> tuple[HitSet, HitSet]:
    """The epsilon-dependent strips A_eps and the small ball B_eps."""
    r = sub_margin(epsilon)
    osc_radius = math.sqrt(c.c0 * epsilon * math.log(1.0 / epsilon))
    threshold = p.well_spacing - r
    s = 0.5 - c.kappa

    def in_A(coeffs):
        N = (coeffs.shape[-1] - 1) // 2
        return np.abs(coeffs[..., N]) > threshold

    def in_B(coeffs):
        N = (coeffs.shape[-1] - 1) // 2
        osc = np.array(coeffs)
        osc[..., N] = 0.0
        return (np.abs(coeffs[..., N]) < r) & (besov_norm_coeffs(osc, s) < osc_radius)

    return HitSet(f"A_eps(|u0|>{threshold:.6g})", in_A), HitSet(f"B_eps(r={r:.6g})", in_B)


def _target_set(p: ModelParams, c: SimConfig) -> HitSet:
    if p.require_regime() == "sub":
        return hitting_sets_sub(p, c, p.epsilon)[0]
    return hitting_sets_super(p, c)[0]


# ---------------------------------------------------------------------------
# Monte Carlo of hitting times
# ---------------------------------------------------------------------------

@dataclass
class MCStats:
    mean: float
    stderr: float
    n_hit: int
    n_censored: int
    records: list = field(repr=False)

    def to_dict(self) -> dict:
        return dict(mean=self.mean, stderr=self.stderr, n_hit=self.n_hit,
                    n_censored=self.n_censored, records=[asdict(r) for r in self.records])


def _run_trials(p: ModelParams, c: SimConfig, trials: list[int], target: HitSet,
                u0: np.ndarray) -> list[HittingRecord]:
    st = Stepper(p, c)
    N = p.N
    streams = _NoiseStreams([trial_seed_sequence(c.seed, t) for t in trials], 2 * N + 1)
    active = np.array(trials)
    u = np.tile(u0, (len(trials), 1))
    max_steps = int(math.ceil(c.max_time / c.dt))
    out = {}
    k = 0
    while active.size and k < max_steps:
        u = st.advance(u, streams.next())
        k += 1
        if k % c.check_every == 0:
            hit = target.batch(u)
            if hit.any():
                for i in np.flatnonzero(hit):
                    t = int(active[i])
                    out[t] = HittingRecord(k * c.dt, "plus" if u[i, N] > 0 else "minus",
                                           trial_seed(c.seed, t), k)
                keep = ~hit
                active, u = active[keep], u[keep]
                streams.keep(keep)
    for t in active:
        out[int(t)] = HittingRecord(k * c.dt, None, trial_seed(c.seed, int(t)), k, censored=True)
    return [out[t] for t in trials]


def _worker_count() -> int:
    env = os.environ.get("SG_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, os.cpu_count() or 1))


def summarize(records: list[HittingRecord]) -> MCStats:
    times = sorted(r.hit_time for r in records if not r.censored)
    n = len(times)
    n_cens = len(records) - n
    if n == 0:
        raise RuntimeError(
            f"all {len(records)} trials censored at max_time; increase max_time or epsilon")
    mean = math.fsum(times) / n
    var = math.fsum((t - mean) ** 2 for t in times) / (n - 1) if n > 1 else float("nan")
    return MCStats(mean, math.sqrt(var / n) if n > 1 else float("nan"), n, n_cens, list(records))


def mc_transition_time(p: ModelParams, c: SimConfig, trials: int, *, target: HitSet | None = None,
                       u0: FourierField | None = None, batch_size: int = 512) -> MCStats:
    """Sample mean of the first hitting time of the neighbouring-well set, started at u = 0."""
    if trials < 1:
        raise ValueError("need at least one trial")
    target = _target_set(p, c) if target is None else target
    start = (FourierField.zeros(p.N) if u0 is None else u0).coeffs
    ids = list(range(trials))
    chunks = [ids[i:i + batch_size] for i in range(0, trials, batch_size)]
    workers = min(_worker_count(), len(chunks))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_trials, [p] * len(chunks), [c] * len(chunks), chunks,
                                [target] * len(chunks), [start] * len(chunks)))
    else:
        parts = [_run_trials(p, c, ch, target, start) for ch in chunks]
    records = [r for part in parts for r in part]
    return summarize(records)


# ---------------------------------------------------------------------------
# random walk between wells
# ---------------------------------------------------------------------------

@dataclass
class RandomWalkResult:
    jumps: list          # +1 / -1
    jump_times: list
    sojourn_times: list
    total_time: float

    @property
    def well_indices(self) -> list:
        return list(np.cumsum([0] + list(self.jumps)))

    def sojourn_cv(self) -> float:
        s = np.asarray(self.sojourn_times)
        return float(np.std(s, ddof=1) / np.mean(s))


def walk_threshold(p: ModelParams, c: SimConfig) -> float:
    """Mean-mode level past which the walk registers a jump (sub regime).

    The nominal strip margin sqrt(eps) log(1/eps) is capped at half the
    saddle distance so a recentred state never starts inside the opposite strip.
    """
    return p.well_spacing - min(sub_margin(p.epsilon), 0.25 * p.well_spacing)


def random_walk_experiment(p: ModelParams, c: SimConfig, total_time: float,
                           u0: FourierField | None = None) -> RandomWalkResult:
    """One long path; on entering a neighbouring well shift u_hat(0) by -+2pi/beta and continue."""
    st = Stepper(p, c)
    N = p.N
    if p.require_regime() == "sub":
        thr = walk_threshold(p, c)

        def jumped(row):
            return abs(row[N]) > thr
    else:
        A, _ = hitting_sets_super(p, c)

        def jumped(row):
            return bool(A.batch(row)[0])

    streams = _NoiseStreams([trial_seed_sequence(c.seed, 0)], 2 * N + 1, chunk=4096)
    u = (FourierField.zeros(N) if u0 is None else u0).coeffs[None, :].copy()
    n_steps = int(round(total_time / c.dt))
    jumps, times, sojourns = [], [], []
    last = 0.0
    for k in range(1, n_steps + 1):
        u = st.advance(u, streams.next())
        if k % c.check_every == 0 and jumped(u[0]):
            t = k * c.dt
            sgn = 1 if u[0, N] > 0 else -1
            u[0, N] -= sgn * p.well_spacing
            jumps.append(sgn)
            times.append(t)
            sojourns.append(t - last)
            last = t
    return RandomWalkResult(jumps, times, sojourns, n_steps * c.dt)


# ---------------------------------------------------------------------------
# Galerkin convergence
# ---------------------------------------------------------------------------

@dataclass
class GalerkinTable:
    N_list: list
    N_ref: int
    alpha: float
    gaps: list              # mean over realizations
    gaps_per_realization: np.ndarray = field(repr=False)
    exponent: float

    def rows(self):
        return list(zip(self.N_list, self.gaps))


def _calpha_norm(diff_coeffs: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 0.0:
        N = (diff_coeffs.shape[-1] - 1) // 2
        M = 1 << (8 * (2 * N + 1) - 1).bit_length()
        return np.max(np.abs(coeffs_to_grid(diff_coeffs, M)), axis=-1)
    return besov_norm_coeffs(diff_coeffs, alpha)


def galerkin_convergence_test(p: ModelParams, c: SimConfig, N_list, seed: int | None = None, *,
                              N_ref: int | None = None, t_final: float = 0.5,
                              realizations: int = 20, alpha: float = 0.0,
                              u0=None, noise: bool = True) -> GalerkinTable:
    """Gap ||u^(N)(T) - u^(N_ref)(T)||_{C^alpha} with shared mode-wise noise.

    Noise for mode n is column n of one (steps x (2 N_ref + 1)) Gaussian array,
    so every truncation sees the same increments on the modes it carries.
    ``u0`` is a callable on the torus (projected to each N) or None for u0 = 0.
    """
    seed = c.seed if seed is None else seed
    N_list = [int(n) for n in N_list]
    N_ref = max(N_list) if N_ref is None else int(N_ref)
    n_steps = int(round(t_final / c.dt))
    R = realizations
    rngs = [np.random.Generator(np.random.PCG64(trial_seed_sequence(seed, r))) for r in range(R)]
    d_ref = 2 * N_ref + 1

    def start(N):
        if u0 is None:
            return np.zeros((R, 2 * N + 1))
        return np.tile(FourierField.from_function(u0, N).coeffs, (R, 1))

    Ns = sorted(set(N_list) | {N_ref})
    steppers = {N: Stepper(p.with_(N=N), c) for N in Ns}
    state = {N: start(N) for N in Ns}
    chunk = 256
    for k0 in range(0, n_steps, chunk):
        m = min(chunk, n_steps - k0)
        xi = np.stack([r.standard_normal((m, d_ref)) for r in rngs], axis=1) if noise else None
        for i in range(m):
            for N in Ns:
                sl = None if xi is None else xi[i][:, N_ref - N:N_ref + N + 1]
                state[N] = steppers[N].advance(state[N], sl)
    ref = state[N_ref]
    per = np.empty((len(N_list), R))
    for a, N in enumerate(N_list):
        diff = ref.copy()
        diff[:, N_ref - N:N_ref + N + 1] -= state[N]
        per[a] = _calpha_norm(diff, alpha)
    gaps = per.mean(axis=1)
    fit = [(N, g) for N, g in zip(N_list, gaps) if N != N_ref and g > 0]
    exponent = float("nan")
    if len(fit) >= 2:
        x = np.log([f[0] for f in fit])
        y = np.log([f[1] for f in fit])
        exponent = float(np.polyfit(x, y, 1)[0])
    return GalerkinTable(N_list, N_ref, alpha, [float(g) for g in gaps], per, exponent)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_records_json(path, stats: MCStats, extra: dict | None = None):
    doc = {"schema_version": "1.0", "kind": "mc_transition_time", **(extra or {}), **stats.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def write_trajectory_csv(path, times: np.ndarray, coeffs: np.ndarray):
    N = (coeffs.shape[1] - 1) // 2
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"u({n})" for n in range(-N, N + 1)])
        for t, row in zip(times, coeffs):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
