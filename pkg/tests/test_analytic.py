import math

import numpy as np
import pytest

from conftest import coupled_chain_stationary, make_profile
from mobicell.analytic import (CoupledLoads, InstabilityError, UndefinedChainError,
                               class_membership, conservation_residual,
                               coupled_loads_fixed_point, effective_rate,
                               mean_flow_throughput, stationary_mobile,
                               stationary_static)
from mobicell.flowsim import TrafficSpec, TransitionRates, simulate


def rates_snapshot(t=0.0, nu_up=(0.0,), nu_down=(0.0,), tup=(0.0,), tdown=(0.0,),
                   m2s=1.0, s2m=1.0):
    return TransitionRates(t, np.asarray(nu_up, float), np.asarray(nu_down, float),
                           np.asarray(tup, float), np.asarray(tdown, float), m2s, s2m)


def test_fixed_point_decoupled_case():
    """Equal phase rates: the coupling cancels and rho is the plain sum of
    per-class loads."""
    prof = make_profile(lam_m=(1.0, 0.5), lam_s=(0.25,), eta_m0=(10.0, 20.0),
                        eta_s0=(10.0,))
    traffic = TrafficSpec(1.75, 2.0)
    loads = coupled_loads_fixed_point(prof, traffic)
    assert loads.converged
    assert loads.rho == pytest.approx(2.0 * (1.0 / 10.0 + 0.5 / 20.0), abs=1e-9)
    assert loads.rho_tilde == pytest.approx(2.0 * 0.25 / 10.0, abs=1e-9)


def test_fixed_point_zero_traffic():
    prof = make_profile(lam_m=(0.0,), lam_s=(0.0,))
    loads = coupled_loads_fixed_point(prof, TrafficSpec(0.0, 2.0))
    assert loads.rho == 0.0 and loads.rho_tilde == 0.0


def test_fixed_point_symmetric_toy_matches_scalar_bisection():
    """Symmetric cells: rho = rho_tilde solves the scalar equation
    rho = lam*sigma*(rho/eta1 + (1-rho)/eta0); cross-check by bisection."""
    eta0, eta1, lam, sigma0 = 10.0, 6.0, 1.6, 2.0
    prof = make_profile(lam_m=(lam,), lam_s=(lam,), eta_m0=(eta0,), eta_m1=(eta1,),
                        eta_s0=(eta0,), eta_s1=(eta1,))
    loads = coupled_loads_fixed_point(prof, TrafficSpec(2 * lam, sigma0))
    assert loads.rho == pytest.approx(loads.rho_tilde, abs=1e-9)
    f = lambda r: lam * sigma0 * (r / eta1 + (1 - r) / eta0) - r
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    assert loads.rho == pytest.approx(0.5 * (lo + hi), abs=1e-8)


def test_fixed_point_overload_clamps_for_formulas():
    prof = make_profile(lam_m=(100.0,), lam_s=(0.0,), eta_m0=(10.0,), eta_s0=(10.0,))
    loads = coupled_loads_fixed_point(prof, TrafficSpec(100.0, 2.0))
    assert loads.rho > 1.0            # overload is reported as-is
    assert loads.rho_clamped == 1.0   # formulas see the clamped value


def make_coupled_toy(rho_target=0.4, ratio=0.8, eta0=10.0, sigma0=2.0):
    eta1 = eta0 * ratio
    lam = rho_target / (sigma0 * (rho_target / eta1 + (1 - rho_target) / eta0))
    prof = make_profile(lam_m=(lam,), lam_s=(lam,), eta_m0=(eta0,), eta_m1=(eta1,),
                        eta_s0=(eta0,), eta_s1=(eta1,))
    return prof, TrafficSpec(2 * lam, sigma0), lam, eta0, eta1


def test_stationary_static_empty_state_and_reduction():
    prof, traffic, lam, eta0, eta1 = make_coupled_toy()
    loads = coupled_loads_fixed_point(prof, traffic)
    dist = stationary_static(prof, traffic, loads, n_max=40)
    # empty-state probability is the product of the idle probabilities,
    # up to the 1e-10 fixed-point residual
    assert dist.raw[dist.states.index(((0,), (0,)))] == pytest.approx(
        (1 - loads.rho) * (1 - loads.rho_tilde), rel=1e-8)
    assert dist.prob((0,), (0,)) == pytest.approx(
        (1 - loads.rho) * (1 - loads.rho_tilde), rel=1e-6)


def test_stationary_static_idle_partner_reduces_to_multiclass_ps():
    """No small-cell traffic: the macro marginal is the classic multiclass PS
    product form with the idle-phase rates."""
    prof = make_profile(lam_m=(0.8, 0.4), lam_s=(0.0,), eta_m0=(8.0, 16.0),
                        eta_m1=(4.0, 8.0), eta_s0=(10.0,))
    traffic = TrafficSpec(1.2, 2.0)
    loads = coupled_loads_fixed_point(prof, traffic)
    assert loads.rho_tilde == 0.0
    dist = stationary_static(prof, traffic, loads, n_max=30)
    a = np.array([0.8 * 2.0 / 8.0, 0.4 * 2.0 / 16.0])
    rho = a.sum()
    for n in ((0, 0), (1, 0), (0, 1), (2, 1), (3, 2)):
        tot = sum(n)
        expect = (1 - rho) * math.factorial(tot) * np.prod(a ** np.array(n)) \
            / np.prod([math.factorial(x) for x in n])
        assert dist.raw[dist.states.index((n, (0,)))] == pytest.approx(expect, rel=1e-9)


def test_stationary_static_truncated_mass_reaches_one():
    """Truncation at 40 per class captures all but < 1e-6 of the mass for
    loads up to 0.6 (geometric tail)."""
    for rho_t in (0.4, 0.6):
        prof, traffic, *_ = make_coupled_toy(rho_target=rho_t)
        loads = coupled_loads_fixed_point(prof, traffic)
        dist = stationary_static(prof, traffic, loads, n_max=40)
        assert dist.raw_total == pytest.approx(1.0, abs=1e-6)
        assert dist.deficit < 1e-6


def test_stationary_static_requires_stability():
    prof, traffic, *_ = make_coupled_toy()
    with pytest.raises(InstabilityError):
        stationary_static(prof, traffic, CoupledLoads(1.0, 0.4), n_max=10)


def test_stationary_static_printed_variant_overweights():
    """The unmarginalized phase-split spelling with Gamma factorials is kept
    selectable; its raw sum exceeds 1 for fractional loads, which is why it
    is not the default."""
    prof, traffic, *_ = make_coupled_toy()
    loads = coupled_loads_fixed_point(prof, traffic)
    printed = stationary_static(prof, traffic, loads, n_max=40, variant="as_printed")
    assert printed.raw_total > 1.1
    assert printed.raw[printed.states.index(((0,), (0,)))] == pytest.approx(
        (1 - loads.rho) * (1 - loads.rho_tilde), rel=1e-12)
    assert printed.probs.sum() == pytest.approx(1.0, rel=1e-12)


def test_stationary_static_matches_simulation_tv():
    """Flow simulation against the default stationary form on the coupled toy
    at rho = rho_tilde = 0.4: total-variation distance below 0.05."""
    prof, traffic, *_ = make_coupled_toy(rho_target=0.4, ratio=0.8)
    loads = coupled_loads_fixed_point(prof, traffic)
    assert loads.rho == pytest.approx(0.4, abs=1e-9)
    dist = stationary_static(prof, traffic, loads, n_max=60)
    tr = simulate(prof, None, traffic, 120_000.0, 41, track_states=True)
    sim = tr.state_frequencies()
    keys = set(sim) | {(tuple(n), tuple(m)) for n, m in dist.states}
    tv = 0.5 * sum(abs(sim.get(k, 0.0) - dist.prob(*k)) for k in keys)
    assert tv < 0.05


def test_class_membership_symmetric_two_state():
    q, qt = class_membership(rates_snapshot(m2s=0.7, s2m=0.7))
    assert q[0] == pytest.approx(0.5)
    assert qt[0] == pytest.approx(0.5)


def test_class_membership_three_state_chain_oracle():
    """K=2, L=1 with constant rates: the stationary vector of the explicit
    3-state chain (small_1 <-> macro_1 <-> macro_2) arbitrates between the
    two printed spellings; the detailed-balance form matches it."""
    nu12, nu21 = 0.6, 0.2
    m2s, s2m = 0.3, 1.5  # handover ratio differs from the migration ratio
    r = rates_snapshot(nu_up=(nu12, 0.0), nu_down=(0.0, nu21), m2s=m2s, s2m=s2m)
    # explicit chain: states (s1, m1, m2)
    Q = np.array([
        [-s2m, s2m, 0.0],
        [m2s, -m2s - nu12, nu12],
        [0.0, nu21, -nu21],
    ])
    A = np.vstack([Q.T, np.ones(3)])
    b = np.array([0.0, 0.0, 0.0, 1.0])
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    q, qt = class_membership(r, variant="detailed_balance")
    assert qt[0] == pytest.approx(pi[0], rel=1e-9)
    assert q[0] == pytest.approx(pi[1], rel=1e-9)
    assert q[1] == pytest.approx(pi[2], rel=1e-9)
    # the as-printed spelling disagrees whenever the handover rates differ
    q2, qt2 = class_membership(r, variant="as_printed")
    assert abs(q2[1] / qt2[0] - pi[2] / pi[0]) > 0.1 * pi[2] / pi[0]


def test_class_membership_normalization_and_errors():
    r = rates_snapshot(nu_up=(0.3, 0.0), nu_down=(0.0, 0.4), m2s=0.2, s2m=0.9)
    q, qt = class_membership(r)
    assert q.sum() + qt.sum() == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(UndefinedChainError):
        class_membership(rates_snapshot(m2s=0.0, s2m=1.0))
    with pytest.raises(UndefinedChainError):
        class_membership(rates_snapshot(nu_up=(0.3, 0.0), nu_down=(0.0, 0.0),
                                        m2s=1.0, s2m=1.0))


def test_class_membership_time_average():
    r1 = rates_snapshot(t=0.0, m2s=1.0, s2m=2.0)
    r2 = rates_snapshot(t=10.0, m2s=1.0, s2m=4.0)
    q, qt = class_membership([r1, r2])
    # trapezoid average of s2m/m2s is 3: q = 3/(3+1)
    assert q[0] == pytest.approx(0.75, rel=1e-12)


def test_effective_rate_phase_limits():
    prof = make_profile(lam_m=(1.0,), lam_s=(1.0,), eta_m0=(10.0,), eta_m1=(6.0,),
                        eta_s0=(8.0,), eta_s1=(4.0,))
    traffic = TrafficSpec(2.0, 2.0)
    q, qt = np.array([0.5]), np.array([0.5])
    eta_bar, rho_bar = effective_rate(prof, CoupledLoads(0.0, 0.0), q, qt, traffic)
    assert eta_bar == pytest.approx(0.5 * 10 + 0.5 * 8)
    eta_bar1, _ = effective_rate(prof, CoupledLoads(1.0, 1.0), q, qt, traffic)
    assert eta_bar1 == pytest.approx(0.5 * 6 + 0.5 * 4)
    eta_mid, _ = effective_rate(prof, CoupledLoads(0.5, 0.5), q, qt, traffic)
    assert min(4.0, 6.0) <= eta_mid <= max(8.0, 10.0)
    assert rho_bar == pytest.approx(2.0 * 2.0 / eta_bar)


def test_stationary_mobile_empty_state_and_geometric_reduction():
    # all mass on one class, loads zero: plain M/M/1-PS geometric law
    q, qt = np.array([1.0]), np.array([0.0])
    rho_bar = 0.55
    dist = stationary_mobile(q, qt, CoupledLoads(0.0, 0.0), rho_bar, n_max=60)
    assert dist.prob((0,), (0,)) * dist.raw_total == pytest.approx(1 - rho_bar, rel=1e-12)
    for n in range(10):
        assert dist.raw[dist.states.index(((n,), (0,)))] == pytest.approx(
            (1 - rho_bar) * rho_bar ** n, rel=1e-10)
    assert dist.raw_total == pytest.approx(1.0, abs=1e-9)


def test_stationary_mobile_clamped_loads_match_direct_evaluation():
    """Fully clamped per-cell loads: the form is the labelled geometric
    distribution (negative-multinomial in the class labels)."""
    q, qt = np.array([0.6]), np.array([0.4])
    rho_bar = 0.5
    dist = stationary_mobile(q, qt, CoupledLoads(1.0, 1.0), rho_bar, n_max=60)
    for n, m in (((0,), (0,)), ((2,), (1,)), ((3,), (3,)), ((5,), (0,))):
        tot = n[0] + m[0]
        expect = (1 - rho_bar) * rho_bar ** tot * math.factorial(tot) \
            * q[0] ** n[0] * qt[0] ** m[0] \
            / (math.factorial(n[0]) * math.factorial(m[0]))
        assert dist.raw[dist.states.index((n, m))] == pytest.approx(expect, rel=1e-9)
    assert dist.raw_total == pytest.approx(1.0, abs=1e-6)
    assert dist.deficit < 1e-6


def test_stationary_mobile_requires_system_stability():
    with pytest.raises(InstabilityError):
        stationary_mobile(np.array([1.0]), np.array([0.0]), CoupledLoads(1.0, 1.0),
                          1.01, n_max=10)
    # per-cell loads above 1 are fine as long as rho_bar < 1
    dist = stationary_mobile(np.array([1.0]), np.array([0.0]), CoupledLoads(1.0, 1.0),
                             0.3, n_max=30)
    assert dist.raw_total == pytest.approx(1.0, abs=1e-9)


def test_mean_flow_throughput_single_always_on_flow():
    """One permanent flow: R equals that flow's service rate."""
    prof = make_profile(lam_m=(0.05,), lam_s=(0.0,), eta_m0=(10.0,), eta_s0=(10.0,))
    tr = simulate(prof, None, TrafficSpec(0.05, 1e9), 2000.0, 3)
    # the single giant flow never finishes; occupancy is eventually 1+
    if sum(tr.mean_counts()[0]) > 0:
        R = mean_flow_throughput(tr)
        assert R <= 10.0 + 1e-9


def test_mean_flow_throughput_mm1_oracle():
    """Classical PS: R -> eta (1 - rho) at rho = 0.5."""
    eta, sigma0, rho = 10.0, 2.0, 0.5
    lam = rho * eta / sigma0
    prof = make_profile(lam_m=(lam,), lam_s=(0.0,), eta_m0=(eta,), eta_s0=(eta,))
    vals = []
    for seed in range(6):
        tr = simulate(prof, None, TrafficSpec(lam, sigma0), 30_000.0, seed)
        vals.append(mean_flow_throughput(tr))
    assert float(np.mean(vals)) == pytest.approx(eta * (1 - rho), rel=0.05)


def test_mean_flow_throughput_from_distribution():
    q, qt = np.array([1.0]), np.array([0.0])
    rho_bar = 0.5
    traffic = TrafficSpec(1.0, 2.0)
    dist = stationary_mobile(q, qt, CoupledLoads(0.0, 0.0), rho_bar, n_max=80)
    R = mean_flow_throughput(dist, traffic)
    # E[N] = rho/(1-rho) = 1 -> R = lam*sigma = eta_bar*(1-rho_bar) with
    # eta_bar = lam*sigma/rho_bar
    eta_bar = traffic.lambda_tot * traffic.sigma0 / rho_bar
    assert R == pytest.approx(eta_bar * (1 - rho_bar), rel=1e-6)


def test_mean_flow_throughput_never_exceeds_max_class_rate():
    prof, traffic, lam, eta0, eta1 = make_coupled_toy(rho_target=0.5)
    tr = simulate(prof, None, traffic, 20_000.0, 11)
    assert mean_flow_throughput(tr) <= eta0 + 1e-9


def test_conservation_residual():
    prof = make_profile(lam_m=(0.0,), lam_s=(0.0,))
    tr = simulate(prof, None, TrafficSpec(0.0, 2.0), 100.0, 1)
    assert conservation_residual(tr) == 0.0
    # stable run: residual within 2% of the offered rate
    eta, sigma0, rho = 10.0, 2.0, 0.5
    lam = rho * eta / sigma0
    prof = make_profile(lam_m=(lam,), lam_s=(0.0,), eta_m0=(eta,), eta_s0=(eta,))
    tr = simulate(prof, None, TrafficSpec(lam, sigma0), 50_000.0, 2)
    assert abs(conservation_residual(tr)) / (lam * sigma0) < 0.02
    # overload: strictly positive residual
    tr_hot = simulate(make_profile(lam_m=(10.0,), lam_s=(0.0,), eta_m0=(10.0,),
                                   eta_s0=(10.0,)), None,
                      TrafficSpec(10.0, 2.0), 5000.0, 3)
    assert conservation_residual(tr_hot) > 0.0


def test_static_stationary_tv_against_exact_chain():
    """The default stationary form against the exact chain solution (not the
    simulator): the decoupling error alone stays under 0.05 TV on the
    acceptance toy."""
    prof, traffic, lam, eta0, eta1 = make_coupled_toy(rho_target=0.4, ratio=0.8)
    loads = coupled_loads_fixed_point(prof, traffic)
    dist = stationary_static(prof, traffic, loads, n_max=80)
    exact = coupled_chain_stationary(lam, lam, traffic.sigma0, eta0, eta1, eta0, eta1)
    keys = set(exact) | {(n[0], m[0]) for n, m in dist.states}
    tv = 0.5 * sum(abs(exact.get(k, 0.0) - dist.prob((k[0],), (k[1],))) for k in keys)
    assert tv < 0.05
