"""One test per acceptance criterion; each records PASS/FAIL for the terminal summary."""
import math
import time

import numpy as np
import pytest
from scipy import special, stats

from conftest import ACCEPTANCE_RESULTS
from sgmeta.cli import main
from sgmeta.fields import FourierField, ModelParams, grid, grid_to_coeffs
from sgmeta.ldp import communication_height, distance_mod_translation, flow_path, action
from sgmeta.prefactor import finite_n_det_prime_ratio, mckane_tarlie, prefactor_sub
from sgmeta.simulate import SimConfig, galerkin_convergence_test, mc_transition_time, random_walk_experiment
from sgmeta.spectrum import constant_saddle_log_ratio, spectrum_at
from sgmeta.stationary import constant_saddle, elliptic_saddle, well_minimum

pytestmark = pytest.mark.acceptance


def record(k, ok, detail):
    ACCEPTANCE_RESULTS[k] = (bool(ok), detail)
    assert ok, detail


def test_criterion_01_product_identity():
    gb = 0.5
    t0 = time.perf_counter()
    val = math.exp(constant_saddle_log_ratio(gb, 10_000))
    elapsed = time.perf_counter() - t0
    closed = (math.sin(math.pi * math.sqrt(gb)) / math.sinh(math.pi * math.sqrt(gb))) ** 2
    rel = abs(val / closed - 1)
    record(1, rel < 1e-3 and elapsed < 1.0, f"rel err {rel:.2e} (< 1e-3), {elapsed:.3f} s (< 1 s)")


def test_criterion_02_constant_saddle_spectrum():
    worst = 0.0
    n = np.arange(-64, 65)
    for gb in (0.25, 0.5, 0.9):
        p = ModelParams(gb / 2.0, 2.0, N=64)
        ev = spectrum_at(FourierField.constant(64, math.pi / p.beta), p, keep_vectors=False).eigenvalues
        worst = max(worst, float(np.max(np.abs(ev - np.sort(n ** 2 - gb)))))
    record(2, worst < 1e-12, f"max |lambda - (n^2 - gamma*beta)| = {worst:.1e} (< 1e-12)")


def test_criterion_03_transition_state_signature():
    t0 = time.perf_counter()
    s = elliptic_saddle(ModelParams(1.0, 2.0, N=128))
    elapsed = time.perf_counter() - t0
    ev = s.spectrum.eigenvalues
    lam_max = float(np.max(np.abs(ev)))
    n_neg = int(np.sum(ev < -1e-8 * lam_max))
    n_zero = int(np.sum(np.abs(ev) < 1e-8 * lam_max))
    overlap = s.spectrum.zero_vector_overlap
    ok = n_neg == 1 and n_zero == 1 and overlap > 1 - 1e-6 and elapsed < 30
    record(3, ok, f"negative {n_neg}, zero {n_zero}, overlap {overlap:.12f}, {elapsed:.1f} s")


def _scipy_elliptic_field(gamma, beta, m, N, M=8192):
    """Independent evaluation of the closed-form kink-antikink profile via scipy.special.ellipj."""
    x = grid(M)
    _, cn, dn, _ = special.ellipj(math.sqrt(gamma * beta) * x, m)
    return FourierField(N, grid_to_coeffs((math.pi + 2 * np.arcsin(math.sqrt(m) * cn / dn)) / beta, N))


def test_criterion_04_newton_refinement_rate():
    floor = 1e-14          # double-precision floor of an O(1) field's L2 distance
    Ns = (16, 32, 64, 128)
    d = []
    for N in Ns:
        s = elliptic_saddle(ModelParams(1.0, 2.0, N=N), with_spectrum=False)
        d.append((s.field - _scipy_elliptic_field(1.0, 2.0, s.modulus, N)).l2_norm())
    ok = all(dN <= max(d[0] * (Ns[0] / N) ** 4, floor) for N, dN in zip(Ns, d))
    ok &= all(b / a <= (N1 / N2) ** 4 for (N1, a), (N2, b) in zip(zip(Ns, d), zip(Ns[1:], d[1:])) if a > floor)
    record(4, ok, "d(N) = " + ", ".join(f"{x:.1e}" for x in d) + " vs N^-4 (roundoff floor 1e-14)")


def test_criterion_05_mckane_tarlie():
    p = ModelParams(1.0, 2.0, N=512)
    s = elliptic_saddle(p)
    mt = mckane_tarlie(1.0, 2.0)
    gap = abs(finite_n_det_prime_ratio(p, s.spectrum) / mt.value - 1)
    dx_sq = float(np.sum(s.field.wavenumbers ** 2 * s.field.coeffs ** 2))
    y1 = abs(mt.hooks["y1_norm_sq"] / dx_sq - 1)
    record(5, gap < 1e-2 and y1 < 1e-6, f"det' gap {gap:.2e} (< 1e-2), ||y1||^2 rel {y1:.1e} (< 1e-6)")


def test_criterion_06_string_method():
    t0 = time.perf_counter()
    p = ModelParams(0.25, 2.0, N=64)
    sub = communication_height(FourierField.zeros(64), well_minimum(p, 1).field, p, K=64)
    sub_err = abs(sub.height - 4 * math.pi * p.gamma / p.beta)
    sub_dist = (sub.argmax_image - constant_saddle(p).field).l2_norm()
    q = ModelParams(1.0, 2.0, N=64)
    sup = communication_height(FourierField.zeros(64), well_minimum(q, 1).field, q, K=64)
    dist, _ = distance_mod_translation(sup.argmax_image, elliptic_saddle(q).field)
    elapsed = time.perf_counter() - t0
    ok = sub_err < 1e-4 and sub_dist < 1e-4 and sup.gradient_residual < 1e-4 and dist < 1e-3 and elapsed < 120
    record(6, ok, f"sub height err {sub_err:.1e}, super residual {sup.gradient_residual:.1e}, "
                  f"distance to saddle translate {dist:.1e}, {elapsed:.1f} s")


def test_criterion_07_action_identity():
    p = ModelParams(0.1, 5.0, N=16)
    start = constant_saddle(p).field - FourierField.constant(16, 0.01)
    fwd, rel = [], []
    for n_images in (501, 1001, 2001):
        down = flow_path(start, p, 60.0, n_images)
        E = down.energies(p)
        fwd.append(action(down, p))
        rel.append(abs(action(down.reversed(), p) / (2 * (E[0] - E[-1])) - 1))
    ok = max(fwd) < 1e-6 and max(rel) < 0.02
    record(7, ok, "reversed/2dF - 1 = " + ", ".join(f"{r:.1e}" for r in rel)
           + f"; forward action max {max(fwd):.1e}")


@pytest.fixture(scope="module")
def mc_runs():
    base = ModelParams(0.1, 5.0, N=16)
    c = SimConfig(dt=1e-3, seed=11, max_time=1e4)
    t0 = time.perf_counter()
    runs = {eps: mc_transition_time(base.with_(epsilon=eps), c, n)
            for eps, n in ((0.06, 200), (0.08, 200), (0.10, 400))}
    return base, runs, time.perf_counter() - t0


def test_criterion_08_eyring_kramers_desk_scale(mc_runs):
    base, runs, elapsed = mc_runs
    p = base.with_(epsilon=0.06)
    predicted = prefactor_sub(p)[0].expected_time(0.06)
    ratio = runs[0.06].mean / predicted
    eps = np.array(sorted(runs))
    slope = np.polyfit(1 / eps, np.log([runs[e].mean for e in eps]), 1)[0]
    barrier = 4 * math.pi * base.gamma / base.beta
    slope_rel = slope / barrier - 1
    ok = 0.5 <= ratio <= 2.0 and abs(slope_rel) <= 0.15 and elapsed < 1800
    record(8, ok, f"MC/predicted at eps=0.06: {ratio:.2f} (need within x2); "
                  f"slope {slope:.4f} vs barrier {barrier:.4f} ({slope_rel:+.1%}, need 15%); {elapsed:.0f} s")


def test_criterion_09_galerkin_rate():
    p = ModelParams(0.1, 5.0, epsilon=0.06, N=256)
    t0 = time.perf_counter()
    tab = galerkin_convergence_test(p, SimConfig(dt=1e-3, scheme="exponential", seed=0),
                                    [16, 32, 64, 128], N_ref=256, t_final=0.5, realizations=20, alpha=0.0)
    elapsed = time.perf_counter() - t0
    record(9, tab.exponent <= -0.4 and elapsed < 600,
           f"fitted exponent {tab.exponent:.3f} (<= -0.4), {elapsed:.1f} s")


def test_criterion_10_random_walk_symmetry(mc_runs):
    base, runs, _ = mc_runs
    recs = [r for r in runs[0.10].records if not r.censored]
    plus = sum(r.exit_side == "plus" for r in recs)
    pval = stats.binomtest(plus, len(recs), 0.5).pvalue
    walk = random_walk_experiment(base.with_(epsilon=0.10), SimConfig(dt=1e-3, seed=5), 6000.0)
    cv = walk.sojourn_cv()
    ok = len(recs) >= 400 and pval > 0.01 and len(walk.jumps) >= 100 and 0.7 <= cv <= 1.3
    record(10, ok, f"exit sides {plus}/{len(recs)} plus, binomial p = {pval:.3f} (> 0.01); "
                   f"sojourn CV {cv:.2f} over {len(walk.jumps)} jumps (in [0.7, 1.3])")


COMMANDS = [
    ["prefactor", "--gamma", "0.1", "--beta", "5", "--N", "64", "--eps", "0.05"],
    ["bifurcation", "--points", "12", "--N", "16"],
    ["simulate", "--gamma", "0.1", "--beta", "5", "--eps", "0.15", "--N", "8", "--trials", "20",
     "--seed", "7", "--snapshot-time", "0.2"],
    ["randomwalk", "--gamma", "0.1", "--beta", "5", "--eps", "0.2", "--N", "8", "--total-time", "20", "--seed", "3"],
    ["string", "--gamma", "1", "--beta", "2", "--N", "16", "--K", "16"],
    ["phase", "--gamma-beta", "2"],
    ["galerkin", "--gamma", "0.1", "--beta", "5", "--eps", "0.06", "--N-list", "4,8", "--N-ref", "16",
     "--t-final", "0.05", "--realizations", "2"],
]


def test_criterion_11_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    bad = []
    for i, argv in enumerate(COMMANDS):
        a, b = tmp_path / f"{i}a", tmp_path / f"{i}b"
        if main(argv + ["--out", str(a)]) != 0:
            bad.append(f"{argv[0]} failed")
            continue
        if main(["rerun", str(a / "manifest.json"), "--out", str(b)]) != 0:
            bad.append(f"{argv[0]} rerun mismatch")
        for f in sorted(x.name for x in a.iterdir()):
            if (a / f).read_bytes() != (b / f).read_bytes():
                bad.append(f"{argv[0]}/{f}")
    record(11, not bad, f"{len(COMMANDS)} commands replayed byte-identically" if not bad
           else f"differences: {bad}")
