import json
import math
import random

import numpy as np
import pytest

from conftest import random_field
from sgmeta.fields import FourierField, ModelParams, potential_coeffs
from sgmeta.simulate import (
    SimConfig,
    Stepper,
    _NoiseStreams,
    galerkin_convergence_test,
    hitting_sets_sub,
    hitting_sets_super,
    mc_transition_time,
    random_walk_experiment,
    simulate_trajectory,
    step,
    summarize,
    trial_seed_sequence,
    write_records_json,
    write_trajectory_csv,
)

FREE = dict(gamma=1e-300, beta=1.0, confining_k=0)     # effectively the stochastic heat equation


def test_config_validation():
    for kw in (dict(dt=0), dict(max_time=-1), dict(check_every=0), dict(scheme="rk4")):
        with pytest.raises(ValueError):
            SimConfig(**kw)


def test_zero_is_fixed_without_noise():
    p = ModelParams(1.0, 2.0, N=8)
    u = FourierField.zeros(8)
    for scheme in ("semi-implicit", "exponential"):
        assert step(u, p, SimConfig(scheme=scheme), None) == u


@pytest.mark.parametrize("scheme,factor", [("semi-implicit", lambda dt: 1 / (1 + 9 * dt)),
                                          ("exponential", lambda dt: math.exp(-9 * dt))])
def test_linear_mode_decay(scheme, factor):
    p = ModelParams(epsilon=0.1, N=5, **FREE)
    dt = 1e-2
    u = FourierField.mode(5, 3, 1.0)
    v = step(u, p, SimConfig(dt=dt, scheme=scheme), None)
    assert v[3] == pytest.approx(factor(dt), rel=1e-14)


def test_deterministic_flow_decreases_energy():
    p = ModelParams(1.0, 2.0, N=64)
    st = Stepper(p, SimConfig(dt=1e-3))
    rng = np.random.default_rng(1)
    u = random_field(rng, 64, scale=2.0).coeffs[None, :]
    E = float(potential_coeffs(u, p)[0])
    worst = -np.inf
    for _ in range(10_000):
        u = st.advance(u, None)
        E_new = float(potential_coeffs(u, p)[0])
        worst = max(worst, E_new - E)
        E = E_new
    assert worst <= 1e-10


def test_hitting_sets_super_examples():
    p = ModelParams(1.0, 2.0, N=8)
    A, B = hitting_sets_super(p, SimConfig())
    assert A(FourierField.constant(8, 2 * math.pi / p.beta))
    assert A(FourierField.constant(8, -2 * math.pi / p.beta))
    assert B(FourierField.zeros(8))
    mid = FourierField.constant(8, math.pi / p.beta)
    assert not A(mid) and not B(mid)


def test_hitting_sets_sub_examples():
    p = ModelParams(0.1, 5.0, N=8)
    eps = 0.05
    c = SimConfig(c0=1.0, kappa=0.05)
    A, B = hitting_sets_sub(p, c, eps)
    assert B(FourierField.zeros(8))
    assert A(FourierField.constant(8, 2 * math.pi / p.beta))
    radius = math.sqrt(c.c0 * eps * math.log(1 / eps))
    from sgmeta.fields import besov_norm
    shape = FourierField.mode(8, 1)
    unit = besov_norm(shape, 0.45)
    assert B(shape * (0.99 * radius / unit))
    assert not B(shape * (1.01 * radius / unit))
    for bad in (1.0, 2.0):
        with pytest.raises(ValueError):
            hitting_sets_sub(p, c, bad)


def test_noise_variance_per_mode():
    eps = 0.1
    p = ModelParams(epsilon=eps, N=4, **FREE)
    for scheme in ("semi-implicit", "exponential"):
        c = SimConfig(dt=1e-3, scheme=scheme)
        st = Stepper(p, c)
        rows = 512
        streams = _NoiseStreams([trial_seed_sequence(3, r) for r in range(rows)], 9)
        u = np.zeros((rows, 9))
        acc, count = np.zeros(9), 0
        for k in range(1, 20_001):         # 512 x 15000 post-burn-in samples ~ 10^6 per chunk
            u = st.advance(u, streams.next())
            if k > 5000 and k % 50 == 0:
                acc += np.sum(u ** 2, axis=0)
                count += rows
        var = acc / count
        for n in (1, 2, 4):
            for idx in (4 + n, 4 - n):
                assert var[idx] == pytest.approx(eps / n ** 2, rel=0.05)


def test_zero_mode_brownian_rate():
    eps = 0.2
    p = ModelParams(epsilon=eps, N=1, **FREE)
    c = SimConfig(dt=1e-3)
    st = Stepper(p, c)
    rows = 20_000
    rng = np.random.default_rng(9)
    u = np.zeros((rows, 3))
    T_steps = 200
    for _ in range(T_steps):
        u = st.advance(u, rng.standard_normal((rows, 3)))
    rate = np.var(u[:, 1]) / (T_steps * c.dt)
    assert rate == pytest.approx(2 * eps / (2 * math.pi), rel=0.05)


def test_mc_deterministic_and_batch_independent():
    p = ModelParams(0.1, 5.0, epsilon=0.15, N=8)
    c = SimConfig(seed=42, max_time=500)
    a = mc_transition_time(p, c, 12, batch_size=12)
    b = mc_transition_time(p, c, 12, batch_size=5)
    assert [r.hit_time for r in a.records] == [r.hit_time for r in b.records]
    assert a.mean == b.mean and a.stderr == b.stderr
    c2 = SimConfig(seed=43, max_time=500)
    assert [r.hit_time for r in mc_transition_time(p, c2, 12).records] != [r.hit_time for r in a.records]


def test_mc_mean_order_independent():
    p = ModelParams(0.1, 5.0, epsilon=0.15, N=8)
    stats = mc_transition_time(p, SimConfig(seed=1, max_time=500), 16)
    recs = list(stats.records)
    random.Random(0).shuffle(recs)
    again = summarize(recs)
    assert again.mean == stats.mean and again.stderr == stats.stderr


def test_mc_censoring():
    p = ModelParams(0.1, 5.0, epsilon=0.01, N=8)
    with pytest.raises(RuntimeError, match="censored"):
        mc_transition_time(p, SimConfig(max_time=0.5), 3)
    p = ModelParams(0.1, 5.0, epsilon=0.15, N=8)
    stats = mc_transition_time(p, SimConfig(seed=2, max_time=6.0), 20)
    for r in stats.records:
        assert r.censored or r.hit_time <= 6.0
        assert r.exit_side in (("plus", "minus") if not r.censored else (None,))
    assert stats.n_hit + stats.n_censored == 20 and stats.n_hit > 0 and stats.n_censored > 0


@pytest.mark.slow
def test_mc_mean_increases_as_eps_decreases():
    base = ModelParams(0.1, 5.0, N=16)
    c = SimConfig(seed=2024, max_time=5000)
    lo = mc_transition_time(base.with_(epsilon=0.05), c, 40).mean
    hi = mc_transition_time(base.with_(epsilon=0.08), c, 40).mean
    assert lo > hi


def test_random_walk_suppressed_at_tiny_eps():
    p = ModelParams(0.1, 5.0, epsilon=1e-6, N=8)
    r = random_walk_experiment(p, SimConfig(seed=0), 10.0)
    assert r.jumps == [] and r.sojourn_times == []


def test_random_walk_recentres():
    p = ModelParams(0.1, 5.0, epsilon=0.2, N=8)
    r = random_walk_experiment(p, SimConfig(seed=5), 100.0)
    assert len(r.jumps) > 0
    assert r.well_indices[-1] == sum(r.jumps)
    assert math.isclose(sum(r.sojourn_times), r.jump_times[-1])


def test_galerkin_same_N_gap_is_zero():
    p = ModelParams(0.1, 5.0, epsilon=0.06, N=32)
    tab = galerkin_convergence_test(p, SimConfig(dt=1e-3, scheme="exponential"), [16, 32],
                                    N_ref=32, t_final=0.1, realizations=3)
    assert tab.gaps[1] == 0.0 and tab.gaps[0] > 0


def test_galerkin_smooth_deterministic_is_spectral():
    p = ModelParams(0.1, 5.0, epsilon=0.06, N=64)
    tab = galerkin_convergence_test(p, SimConfig(dt=1e-3, scheme="exponential"), [4, 8, 16, 32],
                                    N_ref=64, t_final=0.5, realizations=1, noise=False,
                                    u0=lambda x: 0.3 * np.exp(np.cos(x)))
    g = tab.gaps
    # faster than any polynomial: the per-doubling reduction keeps growing
    assert g[1] / g[0] < 1e-3 and g[2] / g[1] < g[1] / g[0]
    assert g[3] < 1e-15


def test_outputs(tmp_path):
    p = ModelParams(0.1, 5.0, epsilon=0.15, N=4)
    c = SimConfig(seed=0, max_time=200)
    stats = mc_transition_time(p, c, 3)
    doc = write_records_json(tmp_path / "r.json", stats)
    assert json.loads((tmp_path / "r.json").read_text())["n_hit"] == doc["n_hit"]
    times, coeffs = simulate_trajectory(FourierField.zeros(4), p, c, 0.05, snapshot_every=10)
    write_trajectory_csv(tmp_path / "t.csv", times, coeffs)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["t", "u(-4)", "u(-3)"]
    assert len(lines) == len(times) + 1
