"""Closed-form flow-level evaluation of the coupled cells: fixed-point loads,
stationary distributions of the static and mobility-averaged systems, class
membership probabilities of the single-user class chain, the equivalent
single-queue service rate, traffic conservation and mean flow throughput.

Phase mixing
------------
With the partner cell busy a fraction of the time equal to its load, each
class k is served at the interfered rate eta[k,1] for that fraction and at
eta[k,0] otherwise.  The per-class effective load is therefore

    a_k = lambda_k * sigma0 * (rho_partner / eta[k,1] + (1 - rho_partner) / eta[k,0])

and the pair (rho, rho_tilde) solves the two coupled sums; per-cell loads are
clamped to 1 wherever the formulas use them as probabilities.

The static-coupling stationary distribution is evaluated in two variants:

* ``subclass_marginal`` (default): multiclass PS product form with the
  phase-mixed per-class loads a_k.  This is the unique normalizable
  completion of the phase-split construction (thinning each class into a
  partner-idle and a partner-busy subclass and marginalizing); its truncated
  mass converges to 1 and it is the form validated against simulation.
* ``as_printed``: the phase-split bookkeeping kept unmarginalized, with the
  fractional-order factorials read as Gamma(x+1).  Its raw sum exceeds 1 for
  fractional loads, so it is normalized over the truncation and reported with
  its raw total; selectable for sensitivity only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from mobicell.ccdf import ClassProfile
from mobicell.flowsim import MACRO, QueueTrace, TrafficSpec, TransitionRates
from mobicell.special import log_factorial

STATIC_VARIANTS = ("subclass_marginal", "as_printed")
MEMBERSHIP_VARIANTS = ("detailed_balance", "as_printed")
_MAX_STATES = 2_000_000


class InstabilityError(RuntimeError):
    pass


class UndefinedChainError(ValueError):
    pass


@dataclass
class CoupledLoads:
    rho: float
    rho_tilde: float
    rho_bar: float = math.nan
    converged: bool = True
    iterations: int = 0

    @property
    def rho_clamped(self) -> float:
        return min(self.rho, 1.0)

    @property
    def rho_tilde_clamped(self) -> float:
        return min(self.rho_tilde, 1.0)


def _phase_mixed_loads(profile: ClassProfile, traffic: TrafficSpec,
                       rho: float, rho_tilde: float):
    """Per-class loads a_k, a~_l given the partner-busy fractions."""
    s = traffic.sigma0
    rt = min(rho_tilde, 1.0)
    r = min(rho, 1.0)
    a = profile.lambda_macro * s * (rt / profile.eta_macro[:, 1]
                                    + (1.0 - rt) / profile.eta_macro[:, 0])
    at = profile.lambda_small * s * (r / profile.eta_small[:, 1]
                                     + (1.0 - r) / profile.eta_small[:, 0])
    return a, at


def coupled_loads_fixed_point(profile: ClassProfile, traffic: TrafficSpec,
                              damping: float = 0.5, tol: float = 1e-10,
                              max_iter: int = 10_000) -> CoupledLoads:
    """Damped fixed-point solution of the coupled load pair, started at
    (0, 0).  Each cell's load enters the partner's phase mix clamped at 1, so
    the map is monotone and bounded and the iteration converges to the least
    fixed point; the returned loads themselves may exceed 1 (overload is
    informative), with the clamped values exposed as properties."""
    rho = rho_tilde = 0.0
    for it in range(1, max_iter + 1):
        a, at = _phase_mixed_loads(profile, traffic, rho, rho_tilde)
        new_rho = (1.0 - damping) * float(a.sum()) + damping * rho
        new_rho_tilde = (1.0 - damping) * float(at.sum()) + damping * rho_tilde
        if abs(new_rho - rho) < tol and abs(new_rho_tilde - rho_tilde) < tol:
            return CoupledLoads(new_rho, new_rho_tilde, converged=True, iterations=it)
        rho, rho_tilde = new_rho, new_rho_tilde
    return CoupledLoads(rho, rho_tilde, converged=False, iterations=max_iter)


@dataclass
class StationaryDistribution:
    """Truncated stationary distribution over states (n_1..n_K, m_1..m_L)."""

    states: list
    probs: np.ndarray          # normalized over the truncated space
    raw: np.ndarray            # formula values before truncation normalization
    raw_total: float
    deficit: float             # mass missing from the truncation
    K: int
    L: int
    n_max: int
    variant: str

    def prob(self, n, m) -> float:
        try:
            i = self._index[(tuple(n), tuple(m))]
        except AttributeError:
            self._index = {s: i for i, s in enumerate(self.states)}
            i = self._index[(tuple(n), tuple(m))]
        except KeyError:
            return 0.0
        return float(self.probs[i])

    def mean_counts(self) -> tuple[np.ndarray, np.ndarray]:
        em = np.zeros(self.K)
        es = np.zeros(self.L)
        for (n, m), p in zip(self.states, self.probs):
            em += p * np.asarray(n)
            es += p * np.asarray(m)
        return em, es

    def total_mean(self) -> float:
        em, es = self.mean_counts()
        return float(em.sum() + es.sum())


def _enumerate_states(K: int, L: int, n_max: int):
    if (n_max + 1) ** (K + L) > _MAX_STATES:
        raise ValueError(
            f"state space (n_max+1)^(K+L) = {(n_max + 1) ** (K + L)} too large to enumerate")
    for n in itertools.product(range(n_max + 1), repeat=K):
        for m in itertools.product(range(n_max + 1), repeat=L):
            yield n, m


def _shell_deficit(states, raw, cap: int) -> float:
    """Geometric extrapolation of the mass beyond the truncation shell."""
    shell = np.array([sum(n) + sum(m) for n, m in states])
    s_last = raw[shell == cap].sum()
    s_prev = raw[shell == cap - 1].sum()
    if s_prev <= 0 or s_last <= 0:
        return 0.0
    r = s_last / s_prev
    return float(s_last * r / (1.0 - r)) if r < 1.0 else math.inf


def stationary_static(profile: ClassProfile, traffic: TrafficSpec, loads: CoupledLoads,
                      n_max: int = 40, variant: str = "subclass_marginal") -> StationaryDistribution:
    """Stationary distribution of the static coupled pair (no mobility terms).

    Requires both per-cell loads < 1. The empty state carries probability
    (1 - rho)(1 - rho_tilde) before truncation normalization in both variants.
    """
    if variant not in STATIC_VARIANTS:
        raise ValueError(f"variant must be one of {STATIC_VARIANTS}")
    if loads.rho >= 1.0 or loads.rho_tilde >= 1.0:
        raise InstabilityError(
            f"static stationary form needs rho, rho_tilde < 1, got "
            f"({loads.rho:.4f}, {loads.rho_tilde:.4f})")
    K, L = profile.K, profile.L
    a, at = _phase_mixed_loads(profile, traffic, loads.rho, loads.rho_tilde)
    s = traffic.sigma0
    rho_m = float(a.sum())
    rho_s = float(at.sum())
    states = list(_enumerate_states(K, L, n_max))
    raw = np.empty(len(states))

    if variant == "subclass_marginal":
        with np.errstate(divide="ignore"):
            log_a = np.where(a > 0, np.log(np.maximum(a, 1e-300)), -math.inf)
            log_at = np.where(at > 0, np.log(np.maximum(at, 1e-300)), -math.inf)
        pref = math.log((1.0 - rho_m) * (1.0 - rho_s))
        for i, (n, m) in enumerate(states):
            lw = pref + log_factorial(sum(n)) + log_factorial(sum(m))
            for k in range(K):
                if n[k]:
                    if log_a[k] == -math.inf:
                        lw = -math.inf
                        break
                    lw += n[k] * log_a[k] - log_factorial(n[k])
            if lw > -math.inf:
                for l in range(L):
                    if m[l]:
                        if log_at[l] == -math.inf:
                            lw = -math.inf
                            break
                        lw += m[l] * log_at[l] - log_factorial(m[l])
            raw[i] = math.exp(lw) if lw > -math.inf else 0.0
        raw_total = float(raw.sum())
        deficit = max(0.0, 1.0 - raw_total)  # full-space total is exactly 1
    else:
        rt = loads.rho_tilde_clamped
        r = loads.rho_clamped
        lm0 = np.log(profile.lambda_macro * s / profile.eta_macro[:, 0])
        lm1 = np.log(profile.lambda_macro * s / profile.eta_macro[:, 1])
        ls0 = np.log(profile.lambda_small * s / profile.eta_small[:, 0])
        ls1 = np.log(profile.lambda_small * s / profile.eta_small[:, 1])
        pref = math.log((1.0 - loads.rho) * (1.0 - loads.rho_tilde))
        for i, (n, m) in enumerate(states):
            lw = pref + log_factorial(sum(n)) + log_factorial(sum(m))
            ok = True
            for k in range(K):
                if n[k]:
                    if not np.isfinite(lm0[k]) or not np.isfinite(lm1[k]):
                        ok = False
                        break
                    lw += ((1.0 - rt) * n[k] * lm0[k] + rt * n[k] * lm1[k]
                           - log_factorial(rt * n[k]) - log_factorial((1.0 - rt) * n[k]))
            if ok:
                for l in range(L):
                    if m[l]:
                        if not np.isfinite(ls0[l]) or not np.isfinite(ls1[l]):
                            ok = False
                            break
                        lw += ((1.0 - r) * m[l] * ls0[l] + r * m[l] * ls1[l]
                               - log_factorial(r * m[l]) - log_factorial((1.0 - r) * m[l]))
            raw[i] = math.exp(lw) if ok else 0.0
        raw_total = float(raw.sum())
        deficit = _shell_deficit(states, raw, n_max)

    probs = raw / raw_total if raw_total > 0 else raw
    return StationaryDistribution(states, probs, raw, raw_total, deficit, K, L, n_max, variant)


def class_membership(rates_series, variant: str = "detailed_balance"):
    """Long-run probability that a user sits in each flow class, from the
    single-user class chain (two migration ladders joined by the handover
    edge between the first classes).

    ``detailed_balance`` takes the stationary vector of that chain: relative
    to the small cell's first class, macro weights carry the handover ratio
    and the running product of macro up/down ratios, small weights the small
    ladder products. ``as_printed`` keeps the cross-cell ladder products
    inside both expressions; the two differ unless the handover rates are
    symmetric, and the explicit chain solution arbitrates in favour of
    ``detailed_balance`` (see the package tests). Ratios are averaged over
    the snapshot series before normalizing to a distribution.
    """
    if variant not in MEMBERSHIP_VARIANTS:
        raise ValueError(f"variant must be one of {MEMBERSHIP_VARIANTS}")
    series = [rates_series] if isinstance(rates_series, TransitionRates) else list(rates_series)
    if not series:
        raise ValueError("need at least one TransitionRates snapshot")
    K = len(series[0].nu_up)
    L = len(series[0].nu_tilde_up)

    def ladder(up, down, count, t):
        out = [1.0]
        for j in range(count - 1):
            if down[j + 1] == 0.0:
                raise UndefinedChainError(
                    f"down-rate out of class {j + 2} is zero at t={t}")
            out.append(out[-1] * up[j] / down[j + 1])
        return np.array(out)

    w_macro = np.zeros((len(series), K))
    w_small = np.zeros((len(series), L))
    times = np.array([r.t for r in series], dtype=np.float64)
    for i, r in enumerate(series):
        if r.nu_handover_m2s == 0.0:
            raise UndefinedChainError(f"macro-to-small handover rate is zero at t={r.t}")
        if r.nu_handover_s2m == 0.0:
            raise UndefinedChainError(f"small-to-macro handover rate is zero at t={r.t}")
        hm = r.nu_handover_s2m / r.nu_handover_m2s
        lad_m = ladder(r.nu_up, r.nu_down, K, r.t)
        lad_s = ladder(r.nu_tilde_up, r.nu_tilde_down, L, r.t)
        if variant == "detailed_balance":
            w_macro[i] = hm * lad_m
            w_small[i] = lad_s
        else:
            # full cross-cell ladder products kept inside both expressions
            w_macro[i] = hm * lad_m * np.prod(
                [r.nu_tilde_up[j] / r.nu_tilde_down[j + 1] for j in range(L - 1)] or [1.0])
            w_small[i] = (1.0 / hm) * lad_s * np.prod(
                [r.nu_up[j] / r.nu_down[j + 1] for j in range(K - 1)] or [1.0])

    if len(series) == 1:
        qm, qs = w_macro[0], w_small[0]
    else:
        span = times[-1] - times[0]
        qm = np.trapezoid(w_macro, times, axis=0) / span
        qs = np.trapezoid(w_small, times, axis=0) / span
    total = qm.sum() + qs.sum()
    return qm / total, qs / total


def effective_rate(profiles, loads_series, q: np.ndarray, q_tilde: np.ndarray,
                   traffic: TrafficSpec):
    """Service rate of the equivalent single PS queue and the matching load.

    Per snapshot the class rates are phase-mixed with the (clamped) partner
    loads and weighted by the class membership probabilities; the series is
    time-averaged with the trapezoidal rule.  Returns (eta_bar, rho_bar).
    """
    profs = [profiles] if isinstance(profiles, ClassProfile) else list(profiles)
    loads = [loads_series] if isinstance(loads_series, CoupledLoads) else list(loads_series)
    if len(profs) != len(loads):
        raise ValueError("profiles and loads series lengths differ")
    vals = np.empty(len(profs))
    for i, (p, ld) in enumerate(zip(profs, loads)):
        rt = ld.rho_tilde_clamped
        r = ld.rho_clamped
        macro = np.dot(q, rt * p.eta_macro[:, 1] + (1.0 - rt) * p.eta_macro[:, 0])
        small = np.dot(q_tilde, r * p.eta_small[:, 1] + (1.0 - r) * p.eta_small[:, 0])
        vals[i] = macro + small
    if len(profs) == 1:
        eta_bar = float(vals[0])
    else:
        times = np.array([p.t for p in profs])
        eta_bar = float(np.trapezoid(vals, times) / (times[-1] - times[0]))
    if eta_bar <= 0.0:
        raise AssertionError("effective service rate must be positive")
    return eta_bar, traffic.lambda_tot * traffic.sigma0 / eta_bar


def stationary_mobile(q: np.ndarray, q_tilde: np.ndarray, loads: CoupledLoads,
                      rho_bar: float, n_max: int = 60) -> StationaryDistribution:
    """Stationary distribution of the mobility-averaged system: one PS queue
    of load rho_bar whose flows carry class labels with probabilities
    (q, q_tilde), keeping the phase-split factorial bookkeeping of the static
    form (Gamma-extended).  The total-occupancy factor rho_bar^|n+m| makes the
    form normalizable; at clamped per-cell loads it is exactly the labelled
    geometric distribution and the empty state has probability 1 - rho_bar.
    """
    if rho_bar >= 1.0:
        raise InstabilityError(
            f"mobility-averaged form needs rho_bar < 1, got {rho_bar:.4f} "
            "(per-cell loads may exceed 1, the system-level load may not)")
    if rho_bar < 0.0:
        raise ValueError("rho_bar must be nonnegative")
    K, L = len(q), len(q_tilde)
    r = loads.rho_clamped
    rt = loads.rho_tilde_clamped
    states = list(_enumerate_states(K, L, n_max))
    raw = np.empty(len(states))
    log_rho = math.log(rho_bar) if rho_bar > 0 else -math.inf
    lq = np.where(np.asarray(q) > 0, np.log(np.maximum(q, 1e-300)), -math.inf)
    lqt = np.where(np.asarray(q_tilde) > 0, np.log(np.maximum(q_tilde, 1e-300)), -math.inf)
    pref = math.log(1.0 - rho_bar)
    for i, (n, m) in enumerate(states):
        tot = sum(n) + sum(m)
        lw = pref + (tot * log_rho if tot else 0.0) + log_factorial(tot)
        ok = True
        for k in range(K):
            if n[k]:
                if lq[k] == -math.inf:
                    ok = False
                    break
                lw += n[k] * lq[k] - log_factorial(rt * n[k]) - log_factorial((1.0 - rt) * n[k])
        if ok:
            for l in range(L):
                if m[l]:
                    if lqt[l] == -math.inf:
                        ok = False
                        break
                    lw += m[l] * lqt[l] - log_factorial(r * m[l]) - log_factorial((1.0 - r) * m[l])
        raw[i] = math.exp(lw) if ok else 0.0
    raw_total = float(raw.sum())
    deficit = _shell_deficit(states, raw, n_max)
    probs = raw / raw_total if raw_total > 0 else raw
    return StationaryDistribution(states, probs, raw, raw_total, deficit, K, L, n_max,
                                  "mobile")


def mean_flow_throughput(source, traffic: TrafficSpec | None = None) -> float:
    """Mean flow throughput R in Mbps.

    For a trace this is served bits over flow-time (identical to the
    class-membership-weighted per-class form: weighting each class's served
    rate by its occupancy share telescopes to this ratio).  For a stationary
    distribution it is the offered rate over the mean number of flows in
    system, which for a single PS queue equals eta_bar * (1 - rho_bar).
    """
    if isinstance(source, QueueTrace):
        int_total = float(sum(sum(c) for c in source.int_n))
        if int_total <= 0.0:
            raise ValueError("no flow was ever active; mean throughput undefined")
        return source.served_mbits() / int_total
    if isinstance(source, StationaryDistribution):
        if traffic is None:
            raise ValueError("traffic spec required with a stationary distribution")
        mean_n = source.total_mean()
        if mean_n <= 0.0:
            raise ValueError("empty system; mean throughput undefined")
        return traffic.lambda_tot * traffic.sigma0 / mean_n
    raise TypeError(f"unsupported source {type(source)!r}")


def conservation_residual(trace: QueueTrace, traffic: TrafficSpec | None = None) -> float:
    """Offered minus served traffic rate, Mbps; near 0 on stable runs and
    strictly positive when the system cannot drain what arrives."""
    tr = traffic if traffic is not None else trace.traffic
    return tr.lambda_tot * tr.sigma0 - trace.served_mbits() / trace.T
