"""Real fields on the 2*pi torus in the sine-cosine Fourier basis.

Coefficients are stored for wavenumbers n = -N..N against the basis

    e_0 = 1,   e_{-n} = sin(n x) / sqrt(pi),   e_n = cos(n x) / sqrt(pi),

so ``coeffs[N + n]`` is the coefficient of ``e_n``.  The zero mode is not
normalized: the constant field ``c`` has ``coeffs[N] == c``.  Whenever a true
orthonormal basis is needed (Hessians, noise) the zero coordinate is scaled by
``sqrt(2*pi)``; see :func:`to_orthonormal`.

The array-level helpers accept coefficient arrays with arbitrary leading batch
axes, which the simulator and the string method rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)
TWO_PI = 2.0 * math.pi


class UndersampledError(ValueError):
    """Grid too coarse to represent the requested wavenumbers."""


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Parameters of the truncated sine-Gordon gradient flow.

    ``confining_k`` is the integer k of the confining term; the term switches
    on when ``|u_hat(0)|`` exceeds ``k * 2*pi/beta``.  ``confining_k=0``
    disables it (only used for pure-noise checks).
    """

    gamma: float
    beta: float
    epsilon: float = 0.1
    N: int = 32
    confining_k: int = 1

    def __post_init__(self):
        if not (self.gamma > 0 and self.beta > 0 and self.epsilon > 0):
            raise ValueError("gamma, beta and epsilon must be strictly positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if int(self.confining_k) != self.confining_k or self.confining_k < 0:
            raise ValueError("confining_k must be a nonnegative integer")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "confining_k", int(self.confining_k))

    @property
    def gamma_beta(self) -> float:
        return self.gamma * self.beta

    @property
    def well_spacing(self) -> float:
        """Distance 2*pi/beta between neighbouring minima."""
        return TWO_PI / self.beta

    @property
    def confining_threshold(self) -> float:
        if self.confining_k == 0:
            return math.inf
        return self.confining_k * TWO_PI / self.beta

    def with_(self, **changes) -> "ModelParams":
        d = dict(gamma=self.gamma, beta=self.beta, epsilon=self.epsilon,
                 N=self.N, confining_k=self.confining_k)
        d.update(changes)
        return ModelParams(**d)

    def require_regime(self) -> str:
        """Return 'sub' or 'super'; reject the bifurcation point gamma*beta == 1."""
        gb = self.gamma_beta
        if gb == 1.0:
            raise ValueError("γβ = 1 bifurcation: gamma*beta = 1 has no regime (degenerate saddle)")
        return "sub" if gb < 1.0 else "super"

    def to_dict(self) -> dict:
        return dict(gamma=self.gamma, beta=self.beta, epsilon=self.epsilon,
                    N=self.N, confining_k=self.confining_k)


# ---------------------------------------------------------------------------
# the field type
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FourierField:
    N: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (2 * self.N + 1,):
            raise ValueError(f"expected {2 * self.N + 1} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, N: int) -> "FourierField":
        return cls(N, np.zeros(2 * N + 1))

    @classmethod
    def constant(cls, N: int, c: float) -> "FourierField":
        a = np.zeros(2 * N + 1)
        a[N] = c
        return cls(N, a)

    @classmethod
    def mode(cls, N: int, n: int, amplitude: float = 1.0) -> "FourierField":
        a = np.zeros(2 * N + 1)
        a[N + n] = amplitude
        return cls(N, a)

    @classmethod
    def from_function(cls, f, N: int, M: int | None = None) -> "FourierField":
        """Project a callable on the torus onto wavenumbers |n| <= N."""
        M = dealias_size(N) if M is None else M
        x = grid(M)
        return cls(N, grid_to_coeffs(np.asarray(f(x), dtype=float), N))

    def __getitem__(self, n: int) -> float:
        if abs(n) > self.N:
            return 0.0
        return float(self.coeffs[self.N + n])

    @property
    def mean(self) -> float:
        return float(self.coeffs[self.N])

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def is_constant(self, tol: float = 0.0) -> bool:
        osc = np.delete(self.coeffs, self.N)
        return bool(np.all(np.abs(osc) <= tol))

    def __add__(self, other):
        if isinstance(other, FourierField):
            _check_same_N(self, other)
            return FourierField(self.N, self.coeffs + other.coeffs)
        return FourierField(self.N, self.coeffs + _const_vec(self.N, other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, FourierField):
            _check_same_N(self, other)
            return FourierField(self.N, self.coeffs - other.coeffs)
        return FourierField(self.N, self.coeffs - _const_vec(self.N, other))

    def __neg__(self):
        return FourierField(self.N, -self.coeffs)

    def __mul__(self, scalar: float):
        return FourierField(self.N, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, FourierField) and self.N == other.N
                and np.array_equal(self.coeffs, other.coeffs))

    __hash__ = None

    def resize(self, N: int) -> "FourierField":
        """Zero-pad or truncate (projection) to a new N."""
        return FourierField(N, resize_coeffs(self.coeffs, N))

    def l2_norm(self) -> float:
        return math.sqrt(l2_norm_sq(self.coeffs))

    def derivative(self) -> "FourierField":
        return FourierField(self.N, derivative_coeffs(self.coeffs))

    def on_grid(self, M: int | None = None) -> np.ndarray:
        return evaluate_on_grid(self, dealias_size(self.N) if M is None else M)


def _check_same_N(a: FourierField, b: FourierField):
    if a.N != b.N:
        raise ValueError(f"fields have different truncations ({a.N} vs {b.N})")


def _const_vec(N, c):
    v = np.zeros(2 * N + 1)
    v[N] = float(c)
    return v


@dataclass(frozen=True)
class MeanOscSplit:
    mean: float
    osc: FourierField

    def recombine(self) -> FourierField:
        c = np.array(self.osc.coeffs)
        c[self.osc.N] = self.mean
        return FourierField(self.osc.N, c)


def split_mean_osc(u: FourierField) -> MeanOscSplit:
    c = np.array(u.coeffs)
    mean = float(c[u.N])
    c[u.N] = 0.0
    return MeanOscSplit(mean, FourierField(u.N, c))


# ---------------------------------------------------------------------------
# array-level transforms
# ---------------------------------------------------------------------------

def dealias_size(N: int) -> int:
    """Grid size used for nonlinear terms: 4(2N+1) rounded up to a power of two."""
    target = 4 * (2 * N + 1)
    return 1 << (target - 1).bit_length()


def grid(M: int) -> np.ndarray:
    return TWO_PI * np.arange(M) / M


def n_of(N: int) -> np.ndarray:
    return np.arange(-N, N + 1)


def coeffs_to_grid(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Values at x_j = 2*pi*j/M; works along the last axis."""
    coeffs = np.asarray(coeffs, dtype=float)
    N = (coeffs.shape[-1] - 1) // 2
    if M < 2 * N + 1:
        raise UndersampledError(f"undersampled: grid of {M} points cannot carry |n| <= {N}")
    spec = np.zeros(coeffs.shape[:-1] + (M // 2 + 1,), dtype=complex)
    spec[..., 0] = M * coeffs[..., N]
    if N > 0:
        a = coeffs[..., N + 1:]          # cosine coefficients, n = 1..N
        b = coeffs[..., N - 1::-1]       # sine coefficients, n = 1..N
        spec[..., 1:N + 1] = (M / (2.0 * SQRT_PI)) * (a - 1j * b)
    return np.fft.irfft(spec, n=M, axis=-1)


def grid_to_coeffs(values: np.ndarray, N: int) -> np.ndarray:
    """Fourier coefficients of grid samples, projected to |n| <= N."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    if M < 2 * N + 1:
        raise UndersampledError(f"undersampled: grid of {M} points cannot resolve |n| <= {N}")
    spec = np.fft.rfft(values, axis=-1) / M
    out = np.empty(values.shape[:-1] + (2 * N + 1,))
    out[..., N] = spec[..., 0].real
    if N > 0:
        c = spec[..., 1:N + 1]
        out[..., N + 1:] = 2.0 * SQRT_PI * c.real
        out[..., N - 1::-1] = -2.0 * SQRT_PI * c.imag
    return out


def resize_coeffs(coeffs: np.ndarray, N_new: int) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    N = (coeffs.shape[-1] - 1) // 2
    out = np.zeros(coeffs.shape[:-1] + (2 * N_new + 1,))
    k = min(N, N_new)
    out[..., N_new - k:N_new + k + 1] = coeffs[..., N - k:N + k + 1]
    return out


def l2_norm_sq(coeffs: np.ndarray) -> np.ndarray:
    """Parseval: 2*pi*u(0)^2 + sum_{n != 0} u(n)^2."""
    coeffs = np.asarray(coeffs, dtype=float)
    N = (coeffs.shape[-1] - 1) // 2
    total = np.sum(coeffs ** 2, axis=-1)
    return total + (TWO_PI - 1.0) * coeffs[..., N] ** 2


def inner(u: FourierField, v: FourierField) -> float:
    """L2(T) inner product."""
    _check_same_N(u, v)
    N = u.N
    return float(np.dot(u.coeffs, v.coeffs) + (TWO_PI - 1.0) * u.coeffs[N] * v.coeffs[N])


def derivative_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """d/dx in coefficient form: cos -> -n sin, sin -> n cos."""
    coeffs = np.asarray(coeffs, dtype=float)
    N = (coeffs.shape[-1] - 1) // 2
    n = n_of(N)
    return n * coeffs[..., ::-1]


def to_orthonormal(coeffs: np.ndarray) -> np.ndarray:
    w = np.array(coeffs, dtype=float)
    N = (w.shape[-1] - 1) // 2
    w[..., N] *= SQRT_2PI
    return w


def from_orthonormal(w: np.ndarray) -> np.ndarray:
    c = np.array(w, dtype=float)
    N = (c.shape[-1] - 1) // 2
    c[..., N] /= SQRT_2PI
    return c


# ---------------------------------------------------------------------------
# field-level operations
# ---------------------------------------------------------------------------

def evaluate_on_grid(u: FourierField, M: int) -> np.ndarray:
    return coeffs_to_grid(u.coeffs, M)


def grid_to_fourier(values: np.ndarray, N: int) -> FourierField:
    return FourierField(N, grid_to_coeffs(values, N))


def translate(u: FourierField, t: float) -> FourierField:
    """Coefficients of x -> u(x - t)."""
    return FourierField(u.N, translate_coeffs(u.coeffs, t))


def translate_coeffs(coeffs: np.ndarray, t: float) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    N = (coeffs.shape[-1] - 1) // 2
    n = n_of(N)
    return np.cos(n * t) * coeffs - np.sin(n * t) * coeffs[..., ::-1]


def project(u: FourierField, N: int) -> FourierField:
    return u.resize(N)


# ---------------------------------------------------------------------------
# potential, gradient, Hessian
# ---------------------------------------------------------------------------

def _confining_excess(mean, p: ModelParams):
    return np.maximum(0.0, np.abs(mean) - p.confining_threshold)


def potential_coeffs(coeffs: np.ndarray, p: ModelParams) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    N = (coeffs.shape[-1] - 1) // 2
    n = n_of(N)
    kinetic = 0.5 * np.sum(n ** 2 * coeffs ** 2, axis=-1)
    M = dealias_size(N)
    vals = coeffs_to_grid(coeffs, M)
    cos_term = -(p.gamma / p.beta) * (TWO_PI / M) * np.sum(np.cos(p.beta * vals), axis=-1)
    return kinetic + cos_term + _confining_excess(coeffs[..., N], p) ** 2


def gradient_coeffs(coeffs: np.ndarray, p: ModelParams) -> np.ndarray:
    """L2 gradient -u'' + gamma sin(beta u) + confining force, projected to |n| <= N."""
    coeffs = np.asarray(coeffs, dtype=float)
    N = (coeffs.shape[-1] - 1) // 2
    n = n_of(N)
    M = dealias_size(N)
    vals = coeffs_to_grid(coeffs, M)
    g = n ** 2 * coeffs + p.gamma * grid_to_coeffs(np.sin(p.beta * vals), N)
    mean = coeffs[..., N]
    # d/d(mean) of the confining term, divided by |T| = 2*pi to get an L2 gradient
    g[..., N] += np.sign(mean) * _confining_excess(mean, p) / math.pi
    return g


def potential(u: FourierField, p: ModelParams) -> float:
    return float(potential_coeffs(u.coeffs, p))


def gradient(u: FourierField, p: ModelParams) -> FourierField:
    return FourierField(u.N, gradient_coeffs(u.coeffs, p))


def hessian_matrix(u: FourierField, p: ModelParams) -> np.ndarray:
    """Matrix of v -> (Lambda v, v) with Lambda = -Laplacian + gamma*beta*cos(beta u).

    Rows and columns are ordered n = -N..N as in the coefficient vector, but
    the basis is orthonormal (zero mode 1/sqrt(2*pi)).
    """
    N = u.N
    M = max(dealias_size(N), 4 * N + 2)
    vals = evaluate_on_grid(u, M)
    c = p.gamma * p.beta * np.cos(p.beta * vals)
    # I_k = int c(x) exp(-i k x) dx for k = 0..2N
    I = (TWO_PI / M) * np.fft.rfft(c)[: 2 * N + 1]
    A = I.real                           # int c cos(kx)
    S = -I.imag                          # int c sin(kx)
    n = np.arange(1, N + 1)
    m_, n_ = np.meshgrid(n, n, indexing="ij")
    diff = np.abs(m_ - n_)
    summ = m_ + n_
    sgn = np.sign(n_ - m_)
    cc = 0.5 * (A[diff] + A[summ]) / math.pi
    ss = 0.5 * (A[diff] - A[summ]) / math.pi
    cs = 0.5 * (S[summ] + sgn * S[diff]) / math.pi   # int c cos(m x) sin(n x) / pi

    H = np.zeros((2 * N + 1, 2 * N + 1))
    cos_idx = N + n
    sin_idx = N - n
    H[np.ix_(cos_idx, cos_idx)] = cc
    H[np.ix_(sin_idx, sin_idx)] = ss
    H[np.ix_(cos_idx, sin_idx)] = cs
    H[np.ix_(sin_idx, cos_idx)] = cs.T
    H[N, N] = A[0] / TWO_PI
    H[N, cos_idx] = H[cos_idx, N] = A[n] / (math.pi * math.sqrt(2.0))
    H[N, sin_idx] = H[sin_idx, N] = S[n] / (math.pi * math.sqrt(2.0))
    H[np.arange(2 * N + 1), np.arange(2 * N + 1)] += n_of(N) ** 2
    if abs(u.mean) > p.confining_threshold:
        # second derivative 2 w.r.t. the mean, i.e. 2/(2*pi) in the orthonormal zero coordinate
        H[N, N] += 1.0 / math.pi
    return 0.5 * (H + H.T)


def hessian_apply(u: FourierField, v: FourierField, p: ModelParams) -> FourierField:
    """Lambda v as a field (no matrix assembly)."""
    _check_same_N(u, v)
    N = u.N
    M = dealias_size(N)
    cu = p.gamma * p.beta * np.cos(p.beta * evaluate_on_grid(u, M))
    out = n_of(N) ** 2 * v.coeffs + grid_to_coeffs(cu * evaluate_on_grid(v, M), N)
    if abs(u.mean) > p.confining_threshold:
        out[N] += v.coeffs[N] / math.pi
    return FourierField(N, out)


# ---------------------------------------------------------------------------
# Besov-Hoelder norm
# ---------------------------------------------------------------------------

def besov_norm(u: FourierField, s: float, M: int | None = None) -> float:
    return float(besov_norm_coeffs(u.coeffs, s, M))


def besov_norm_coeffs(coeffs: np.ndarray, s: float, M: int | None = None) -> np.ndarray:
    """B^s_{inf,inf} norm with sharp dyadic blocks; block -1 (the mean) has weight 1."""
    coeffs = np.asarray(coeffs, dtype=float)
    N = (coeffs.shape[-1] - 1) // 2
    if M is None:
        M = 1 << (8 * (2 * N + 1) - 1).bit_length()
    best = np.abs(coeffs[..., N])
    j = 0
    while (1 << j) <= N:
        lo, hi = 1 << j, min((1 << (j + 1)) - 1, N)
        block = np.zeros_like(coeffs)
        block[..., N + lo:N + hi + 1] = coeffs[..., N + lo:N + hi + 1]
        block[..., N - hi:N - lo + 1] = coeffs[..., N - hi:N - lo + 1]
        sup = np.max(np.abs(coeffs_to_grid(block, M)), axis=-1)
        best = np.maximum(best, 2.0 ** (j * s) * sup)
        j += 1
    return best
