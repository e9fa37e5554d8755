import math

import numpy as np
import pytest

from mobicell.ccdf import (CcdfCurve, Cell, FieldSamples, combined_ccdf,
                           curve_pmf, curves_to_csv, default_levels,
                           extract_classes, macro_ccdf, macro_only_ccdf,
                           small_ccdf)
from mobicell.geometry import CellLayout, PolarPoint
from mobicell.hotspot import CoverageRegion, HotspotSpec, sample_xy
from mobicell.radio import RadioParams, interference_factor, psi, shannon_rate

LAYOUT = CellLayout(delta=1.0, rings_for_oracle=30)
PARAMS = RadioParams.from_link_budget()
SPEC = HotspotSpec(R_h=0.5, theta_h=math.pi / 3, A=0.08)
LEVELS = default_levels(PARAMS.eta0)


def region_at(Ls, reach=0.2):
    return CoverageRegion(macro_radius=LAYOUT.R, small_center=Ls, small_reach=reach)


def curves_at(Ls, n=60_000, seed=0):
    region = region_at(Ls)
    samples = FieldSamples(SPEC, PARAMS, LAYOUT, n, seed)
    mc = macro_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples)
    sc = small_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples)
    return mc, sc, samples


def assert_curve_structure(curve: CcdfCurve, eta0=PARAMS.eta0):
    assert np.all(curve.values >= 0.0) and np.all(curve.values <= 1.0)
    assert np.all(np.diff(curve.values) <= 1e-12)          # nonincreasing
    assert np.all(curve.values[curve.levels > eta0] == 0.0)


def test_curve_structure_random_positions():
    rng = np.random.default_rng(0)
    for _ in range(5):
        Ls = PolarPoint(float(rng.uniform(-0.4, 0.4)), float(rng.uniform(-0.4, 0.4)))
        mc, sc, _ = curves_at(Ls, n=20_000, seed=int(rng.integers(1e6)))
        assert_curve_structure(mc)
        assert_curve_structure(sc)
        # value at the bottom of the grid is essentially 1 (almost no user
        # falls below 0.05 Mbps)
        assert mc.values[0] > 0.99


def test_levels_validation():
    Ls = SPEC.center
    with pytest.raises(ValueError):
        macro_ccdf(0.0, Ls, [3.0, 2.0, 1.0], SPEC, PARAMS, region_at(Ls), LAYOUT, n=100)


def test_zero_above_peak_rate():
    mc, sc, _ = curves_at(SPEC.center, n=20_000)
    grid = np.array([0.5, 10.0, 97.9, 98.0, 98.1, 150.0])
    c = macro_ccdf(0.0, SPEC.center, grid, SPEC, PARAMS, region_at(SPEC.center), LAYOUT,
                   n=20_000)
    assert c.values[grid > 98.0].max() == 0.0
    assert c.values[grid <= 98.0].min() >= 0.0


def test_association_partition():
    mc, sc, samples = curves_at(SPEC.center)
    region = region_at(SPEC.center)
    in_region, _, _ = samples.at(SPEC.center, region)
    m_star = float(np.count_nonzero(in_region)) / samples.n
    assert mc.mass + sc.mass == pytest.approx(m_star, abs=1e-15)


def test_simplified_and_direct_indicators_agree_bitwise():
    """Counting rate >= l directly and counting 1/gamma <= psi(l) give the
    same curve on the same draws."""
    Ls = SPEC.center
    region = region_at(Ls)
    samples = FieldSamples(SPEC, PARAMS, LAYOUT, 30_000, 3)
    in_region, macro_assoc, small_rx = samples.at(Ls, region)
    sel = in_region & macro_assoc
    inv_gamma = samples.g[sel] + small_rx[sel] * samples.r_pow[sel]
    with np.errstate(divide="ignore"):
        gamma = np.where(inv_gamma > 0, 1.0 / inv_gamma, np.inf)
    rates = shannon_rate(gamma, PARAMS)
    curve = macro_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples)
    direct = np.array([np.count_nonzero(rates >= l) for l in LEVELS]) / len(rates)
    direct[LEVELS > PARAMS.eta0] = 0.0
    assert np.array_equal(curve.values, direct)


def test_macro_kappa_zero_matches_closed_form():
    """Silent small cell: the sampled macro curve must match the closed-form
    quadrature within Monte Carlo error at every level."""
    p0 = RadioParams(**{**PARAMS.__dict__, "kappa": 0.0})
    Ls = PolarPoint.from_polar(2.0, 0.0)  # irrelevant when kappa = 0
    region = CoverageRegion(macro_radius=LAYOUT.R, small_center=Ls, small_reach=0.0)
    mc = macro_ccdf(0.0, Ls, LEVELS, SPEC, p0, region, LAYOUT, n=200_000, seed=11)
    ref = macro_only_ccdf(LEVELS, SPEC, p0, LAYOUT)
    se = np.maximum(mc.stderr, 1e-4)
    assert np.all(np.abs(mc.values - ref.values) <= 3.0 * se)


def test_macro_only_against_sampling_oracle():
    """Independent route: draw users, keep those in the disk, threshold g(r)
    against psi(l)."""
    ref = macro_only_ccdf(LEVELS[::10], SPEC, PARAMS, LAYOUT)
    xy = sample_xy(SPEC, 1_000_000, 99)
    r = np.hypot(xy[:, 0], xy[:, 1])
    keep = r <= LAYOUT.R
    g = interference_factor(r[keep], PARAMS, LAYOUT)
    n_in = int(keep.sum())
    for l, v in zip(ref.levels, ref.values):
        if l > PARAMS.eta0:
            continue
        hit = float(np.count_nonzero(g <= psi(float(l), PARAMS))) / n_in
        se = math.sqrt(max(hit * (1 - hit), 1e-8) / n_in)
        assert v == pytest.approx(hit, abs=max(3.0 * se, 2e-3))


def test_macro_only_centered_hotspot_rayleigh_reduction():
    """Hotspot at the origin: the offset-Gaussian radial mass collapses to the
    Rayleigh closed form (1 - exp(-Lambda^2/2A^2)) / (1 - exp(-R^2/2A^2))."""
    spec0 = HotspotSpec(R_h=0.0, theta_h=0.0, A=0.15)
    from mobicell.radio import inverse_interference_factor
    curve = macro_only_ccdf(LEVELS, spec0, PARAMS, LAYOUT)
    lam = inverse_interference_factor(psi(LEVELS, PARAMS), PARAMS, LAYOUT)
    expect = (1.0 - np.exp(-lam ** 2 / (2 * spec0.A ** 2))) \
        / (1.0 - math.exp(-LAYOUT.R ** 2 / (2 * spec0.A ** 2)))
    assert np.allclose(curve.values, expect, atol=1e-8)


def test_macro_only_limits():
    c = macro_only_ccdf(np.array([1e-4, 120.0]), SPEC, PARAMS, LAYOUT)
    assert c.values[0] == pytest.approx(1.0, abs=1e-9)   # Lambda -> R
    assert c.values[1] == 0.0
    with pytest.raises(ValueError):
        macro_only_ccdf(LEVELS, HotspotSpec(R_h=0.6, theta_h=0.0, A=0.1), PARAMS, LAYOUT)


def test_small_cell_on_hotspot_dominates_macro():
    """Small cell parked on a tight hotspot: its users' curve dominates the
    macro users' curve at every level."""
    spec = HotspotSpec(R_h=0.5, theta_h=math.pi / 3, A=0.05)
    Ls = spec.center
    region = region_at(Ls)
    samples = FieldSamples(spec, PARAMS, LAYOUT, 60_000, 21)
    mc = macro_ccdf(0.0, Ls, LEVELS, spec, PARAMS, region, LAYOUT, samples=samples)
    sc = small_ccdf(0.0, Ls, LEVELS, spec, PARAMS, region, LAYOUT, samples=samples)
    assert sc.mass > 0.3
    sel = LEVELS <= PARAMS.eta0
    assert np.all(sc.values[sel] >= mc.values[sel] - 3.0 * (mc.stderr[sel] + sc.stderr[sel]))
    assert sc.mean_throughput() > mc.mean_throughput()


def test_phase0_dominates_phase1_pointwise():
    Ls = SPEC.center
    region = region_at(Ls)
    samples = FieldSamples(SPEC, PARAMS, LAYOUT, 40_000, 8)
    m1 = macro_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples)
    m0 = macro_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples,
                    include_small_interference=False)
    s1 = small_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples)
    s0 = small_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples,
                    include_central_macro=False)
    assert np.all(m0.values >= m1.values)
    assert np.all(s0.values >= s1.values)
    assert m0.mass == m1.mass and s0.mass == s1.mass  # same association


def test_empty_small_curve_marker():
    p0 = RadioParams(**{**PARAMS.__dict__, "kappa": 0.0})
    Ls = SPEC.center
    sc = small_ccdf(0.0, Ls, LEVELS, SPEC, p0, region_at(Ls), LAYOUT, n=5000, seed=0)
    assert sc.empty and sc.mass == 0.0 and sc.values.max() == 0.0


def test_curve_pmf_sums_to_one_and_mean():
    mc, sc, _ = curves_at(SPEC.center, n=30_000)
    rates, masses = curve_pmf(mc)
    assert masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert mc.mean_throughput() == pytest.approx(float(np.dot(rates, masses)))


def synthetic_two_point_curve(lo=10.0, hi=90.0):
    levels = default_levels(98.0)
    values = np.where(levels <= lo, 1.0, np.where(levels <= hi, 0.5, 0.0))
    return CcdfCurve(levels, values, np.zeros_like(levels), Cell.MACRO, 0.0, 0.6, 1000)


def test_extract_classes_two_point_quartiles():
    """Half the mass at 10 Mbps, half at 90: four equal-mass classes must be
    {10, 10, 90, 90} up to the level-grid cell containing each atom."""
    curve = synthetic_two_point_curve()
    prof = extract_classes(curve, curve, curve, curve, K=4, L=1, lambda_tot=1.0)
    grid_step = np.diff(curve.levels).max()
    assert prof.eta_macro[0, 1] == pytest.approx(10.0, abs=grid_step)
    assert prof.eta_macro[1, 1] == pytest.approx(10.0, abs=grid_step)
    assert prof.eta_macro[2, 1] == pytest.approx(90.0, abs=grid_step)
    assert prof.eta_macro[3, 1] == pytest.approx(90.0, abs=grid_step)
    assert np.all(np.diff(prof.eta_macro[:, 1]) >= 0)  # sorted ascending


def test_extract_classes_single_class_mean():
    mc, sc, _ = curves_at(SPEC.center, n=30_000)
    prof = extract_classes(mc, sc, mc, sc, K=1, L=1, lambda_tot=2.0)
    assert prof.eta_macro[0, 1] == pytest.approx(mc.mean_throughput(), rel=1e-12)
    assert prof.lambda_macro.sum() + prof.lambda_small.sum() == pytest.approx(2.0)
    # arrival split proportional to coverage masses
    assert prof.lambda_macro.sum() / 2.0 == pytest.approx(mc.mass / (mc.mass + sc.mass))


def test_extract_classes_conserves_mean():
    mc, sc, _ = curves_at(SPEC.center, n=30_000)
    for k in (2, 4, 8):
        prof = extract_classes(mc, sc, mc, sc, K=k, L=k, lambda_tot=1.0)
        grid_step = np.diff(mc.levels).max()
        assert float(np.dot(prof.p_macro, prof.eta_macro[:, 1])) == pytest.approx(
            mc.mean_throughput(), abs=grid_step)


def test_extract_classes_phase_ordering_random_scenarios():
    rng = np.random.default_rng(17)
    for _ in range(5):
        Ls = PolarPoint(float(rng.uniform(-0.4, 0.4)), float(rng.uniform(-0.4, 0.4)))
        region = region_at(Ls)
        samples = FieldSamples(SPEC, PARAMS, LAYOUT, 20_000, int(rng.integers(1e6)))
        m1 = macro_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples)
        m0 = macro_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples,
                        include_small_interference=False)
        s1 = small_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples)
        s0 = small_ccdf(0.0, Ls, LEVELS, SPEC, PARAMS, region, LAYOUT, samples=samples,
                        include_central_macro=False)
        prof = extract_classes(m1, s1, m0, s0, K=4, L=4, lambda_tot=1.0)
        assert np.all(prof.eta_macro[:, 0] >= prof.eta_macro[:, 1] - 1e-12)
        assert np.all(prof.eta_small[:, 0] >= prof.eta_small[:, 1] - 1e-12)


def test_degenerate_curve_warns_single_rate():
    levels = default_levels(98.0)
    values = np.where(levels <= 50.0, 1.0, 0.0)  # all mass at one atom
    curve = CcdfCurve(levels, values, np.zeros_like(levels), Cell.MACRO, 0.0, 1.0, 100)
    with pytest.warns(UserWarning):
        prof = extract_classes(curve, curve, curve, curve, K=3, L=1, lambda_tot=1.0)
    assert np.allclose(prof.eta_macro[:, 1], prof.eta_macro[0, 1])


def test_combined_curve_is_mass_weighted_mixture():
    mc, sc, _ = curves_at(SPEC.center, n=30_000)
    both = combined_ccdf(mc, sc)
    i = 50
    expect = (mc.mass * mc.values[i] + sc.mass * sc.values[i]) / (mc.mass + sc.mass)
    assert both.values[i] == pytest.approx(expect, rel=1e-12)
    assert both.mass == pytest.approx(mc.mass + sc.mass)


def test_csv_export(tmp_path):
    mc, sc, _ = curves_at(SPEC.center, n=5000)
    path = tmp_path / "ccdf.csv"
    curves_to_csv(path, [mc, sc], extra_header_lines=("# config=x seed=1",))
    lines = path.read_text().strip().splitlines()
    assert lines[1] == "t_s,cell,level_mbps,ccdf,stderr"
    assert len(lines) == 2 + 2 * len(LEVELS)
    assert lines[2].split(",")[1] == "macro"
