import math

import numpy as np
import pytest

from sgmeta.fields import FourierField, ModelParams, l2_norm_sq, potential, translate
from sgmeta.prefactor import (
    ClassificationError,
    RegimeError,
    closed_form_sub_prefactor,
    finite_n_det_prime_ratio,
    gelfand_yaglom_ratio,
    manifold_length,
    mckane_tarlie,
    prefactor_sub,
    prefactor_super,
    prefactor_super_closed,
)
from sgmeta.spectrum import spectrum_at
from sgmeta.stationary import constant_saddle, elliptic_saddle


def test_sub_closed_form_small_gb_limit():
    for gb in (1e-3, 1e-4):
        assert closed_form_sub_prefactor(gb) * 2 * gb == pytest.approx(1.0, abs=5 * gb)


def test_prefactor_sub_finite_vs_closed():
    p = ModelParams(0.1, 5.0, N=10_000)
    finite, closed = prefactor_sub(p)
    assert abs(finite.prefactor / closed.prefactor - 1) < 1e-3
    assert finite.barrier == pytest.approx(4 * math.pi * p.gamma / p.beta)


def test_sub_barrier_matches_potential():
    p = ModelParams(0.1, 5.0, N=16)
    dF = potential(constant_saddle(p).field, p) - potential(FourierField.zeros(16), p)
    assert prefactor_sub(p)[0].barrier == pytest.approx(dF, rel=1e-13)


def test_prefactor_sub_regime_error():
    with pytest.raises(RegimeError):
        prefactor_sub(ModelParams(1, 2))


def test_expected_time_monotone_and_asymptotics():
    est = prefactor_sub(ModelParams(0.1, 5.0, N=64))[1]
    eps = [0.1, 0.05, 0.025]
    times = [est.expected_time(e) for e in eps]
    assert times[0] < times[1] < times[2]
    for e in eps:
        assert est.log_expected_time(e) - est.barrier / e == pytest.approx(math.log(est.prefactor))
    assert est.rate(0.1) == pytest.approx(2 * est.one_sided_rate(0.1))


def test_manifold_length_examples():
    u = FourierField.mode(4, 1)
    assert manifold_length(u) == pytest.approx(2 * math.pi)
    assert manifold_length(u * 3.0) == pytest.approx(3 * manifold_length(u))
    with pytest.raises(ValueError):
        manifold_length(FourierField.constant(4, 1.0))


@pytest.fixture(scope="module")
def saddle128():
    p = ModelParams(1.0, 2.0, N=128)
    return p, elliptic_saddle(p)


def test_manifold_length_matches_discrete_arclength(saddle128):
    _, s = saddle128
    ts = np.linspace(0, 2 * math.pi, 4097)
    pts = np.array([translate(s.field, t).coeffs for t in ts])
    arc = float(np.sum(np.sqrt(l2_norm_sq(np.diff(pts, axis=0)))))
    assert arc == pytest.approx(manifold_length(s.field), rel=1e-6)


def test_gelfand_yaglom():
    assert gelfand_yaglom_ratio(0.25) == pytest.approx(-1 / math.sinh(math.pi / 2) ** 2, rel=1e-12)
    rng = np.random.default_rng(0)
    for gb in rng.uniform(0.01, 3.99, 10):
        if abs(gb - 1) < 1e-3:
            continue
        r = math.sqrt(gb)
        closed = -(math.sin(math.pi * r) / math.sinh(math.pi * r)) ** 2
        assert gelfand_yaglom_ratio(gb) == pytest.approx(closed, rel=1e-9)
    for gb in np.linspace(0.05, 0.95, 7):
        assert gelfand_yaglom_ratio(gb) < 0
    with pytest.raises(ValueError):
        gelfand_yaglom_ratio(4.0)


def test_mckane_tarlie_hooks(saddle128):
    p, s = saddle128
    mt = mckane_tarlie(1.0, 2.0)
    assert mt.value < 0 and mt.zero_removed
    dx_sq = float(np.sum(s.field.wavenumbers ** 2 * s.field.coeffs ** 2))
    assert mt.hooks["y1_norm_sq"] == pytest.approx(dx_sq, rel=1e-6)
    with pytest.raises(RegimeError):
        mckane_tarlie(0.5, 1.0)


def test_prefactor_super_consistency_across_N():
    """Finite-N prefactor at N=128 and N=256 should agree to 1e-3 at gamma*beta = 2."""
    vals = []
    for N in (128, 256):
        p = ModelParams(1.0, 2.0, N=N)
        vals.append(prefactor_super(p, elliptic_saddle(p)).prefactor)
    assert abs(vals[0] / vals[1] - 1) < 1e-3


def test_prefactor_super_translation_invariant(saddle128):
    p, s = saddle128
    base = prefactor_super(p, s)
    for t in (0.4, 2.2):
        u = translate(s.field, t)
        moved = prefactor_super(p, s, spectrum_at(u, p))
        assert moved.prefactor == pytest.approx(base.prefactor, rel=1e-8)
    assert manifold_length(translate(s.field, 1.0)) == pytest.approx(manifold_length(s.field), rel=1e-12)


def test_prefactor_super_barrier_is_numerical(saddle128):
    p, s = saddle128
    est = prefactor_super(p, s)
    assert est.barrier == pytest.approx(s.energy - potential(FourierField.zeros(128), p))
    assert est.barrier < est.extras["barrier_constant_saddle"]


def test_prefactor_super_requires_signature():
    p = ModelParams(1.0, 2.0, N=16)
    bad = constant_saddle(p)          # three negative eigenvalues at gamma*beta = 2
    with pytest.raises(ClassificationError):
        prefactor_super(p, bad)
    with pytest.raises(RegimeError):
        prefactor_super(ModelParams(0.1, 5, N=16), bad)


def test_finite_n_determinant_converges():
    mt = mckane_tarlie(1.0, 2.0).value
    gaps = []
    for N in (128, 256, 512):
        p = ModelParams(1.0, 2.0, N=N)
        gaps.append(abs(finite_n_det_prime_ratio(p, elliptic_saddle(p).spectrum) / mt - 1))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def test_closed_and_finite_super_agree(saddle128):
    p, s = saddle128
    a, b = prefactor_super(p, s), prefactor_super_closed(p, s)
    assert abs(a.prefactor / b.prefactor - 1) < 0.05
