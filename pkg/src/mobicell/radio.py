"""Link budget, macro-field interference factor and its inverse, SINR fields
for both cells, and the rate map.

Conventions
-----------
* Powers are linear mW and *effective*: transmit power, antenna gain, cable
  loss, UE antenna gain, body loss and the pathloss intercept of each link
  type are folded into ``P`` (macro) and ``kappa * P`` (small cell), so the
  received power at distance d Km is simply ``P * d**(-2b)`` per link.
* ``b_macro`` / ``b_small`` are *half* pathloss exponents: a slope of
  37.6 dB/decade corresponds to 2b = 3.76.
* The interference factor g(r) is the ratio of (all interfering macro cells +
  noise) to the serving macro power for a user at radius r inside the central
  cell of an infinite hexagonal network, with every interferer loaded at a
  fraction ``alpha``.  It uses the macro exponent; serving/interfering small
  cell links use their own exponent, which is what Table-style link budgets
  with per-link slopes require.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from mobicell.geometry import CellLayout, PolarPoint, distance, interferer_positions
from mobicell.special import hurwitz_zeta, riemann_zeta

OMEGA_VARIANTS = ("product", "sum")


@dataclass(frozen=True)
class RadioParams:
    """Effective link-budget and link-adaptation constants."""

    P: float                 # effective macro power at 1 Km (linear mW)
    kappa: float             # small/macro effective power ratio, in [0, 1]
    b_macro: float           # half pathloss exponent, macro links (> 1)
    b_small: float           # half pathloss exponent, small-cell links
    pl_const_macro: float    # pathloss intercept folded into P (dB at 1 Km), kept for record
    pl_const_small: float
    P_N: float               # noise power over the bandwidth (linear mW)
    alpha: float             # average load of interfering macro cells, in [0, 1]
    W: float                 # bandwidth (MHz)
    K1: float                # link-adaptation scale
    K2: float                # link-adaptation SINR scale
    eta0: float              # peak rate (Mbps)
    omega_variant: str = "product"

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must be in [0, 1], got {self.kappa}")
        if self.b_macro <= 1.0:
            raise ValueError(f"b_macro must exceed 1 (lattice sum diverges), got {self.b_macro}")
        if self.b_small <= 1.0:
            raise ValueError(f"b_small must exceed 1, got {self.b_small}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.P <= 0 or self.P_N < 0:
            raise ValueError("P must be positive and P_N nonnegative")
        if self.K1 <= 0 or self.K2 <= 0 or self.eta0 <= 0 or self.W <= 0:
            raise ValueError("K1, K2, W and eta0 must be positive")
        if self.omega_variant not in OMEGA_VARIANTS:
            raise ValueError(f"omega_variant must be one of {OMEGA_VARIANTS}")

    @classmethod
    def from_link_budget(
        cls,
        *,
        tx_macro_dbm: float = 46.0,
        tx_small_dbm: float = 30.0,
        ant_gain_macro_db: float = 18.0,
        ant_gain_small_db: float = 6.0,
        ue_gain_db: float = 0.0,
        body_loss_db: float = 2.0,
        pl_const_macro_db: float = 151.0,
        pl_exp_macro: float = 3.76,
        pl_const_small_db: float = 148.0,
        pl_exp_small: float = 3.67,
        noise_figure_db: float = 9.0,
        bandwidth_mhz: float = 20.0,
        k1: float = 0.85,
        k2: float = 1.9,
        eta0_mbps: float = 98.0,
        alpha: float = 1.0,
        omega_variant: str = "product",
    ) -> "RadioParams":
        """Fold a dB-domain link budget into effective linear powers."""
        p_macro = 10.0 ** ((tx_macro_dbm + ant_gain_macro_db + ue_gain_db
                            - body_loss_db - pl_const_macro_db) / 10.0)
        p_small = 10.0 ** ((tx_small_dbm + ant_gain_small_db + ue_gain_db
                            - body_loss_db - pl_const_small_db) / 10.0)
        # thermal noise -174 dBm/Hz plus receiver noise figure over the band
        p_noise = 10.0 ** ((-174.0 + noise_figure_db + 10.0 * math.log10(bandwidth_mhz * 1e6)) / 10.0)
        return cls(
            P=p_macro,
            kappa=p_small / p_macro,
            b_macro=pl_exp_macro / 2.0,
            b_small=pl_exp_small / 2.0,
            pl_const_macro=pl_const_macro_db,
            pl_const_small=pl_const_small_db,
            P_N=p_noise,
            alpha=alpha,
            W=bandwidth_mhz,
            K1=k1,
            K2=k2,
            eta0=eta0_mbps,
            omega_variant=omega_variant,
        )


class Serving(Enum):
    MACRO = "macro"
    SMALL = "small"


@dataclass(frozen=True)
class SinrSample:
    gamma: float
    serving: Serving


@functools.lru_cache(maxsize=None)
def omega(b: float, variant: str = "product") -> float:
    """Hexagonal-lattice interference constant.

    ``product`` evaluates 3^-b * zeta(b) * (zeta(b,1/3) - zeta(b,2/3)), which
    equals one sixth of the lattice sum over all sites of (|site|/delta)^-2b
    (the factor zeta(b,1/3)-zeta(b,2/3) scaled by 3^-b is the Dirichlet
    L-function L_-3(b)).  ``sum`` evaluates 3^-b * (zeta(b) + zeta(b,1/3) -
    zeta(b,2/3)); it is kept selectable because both spellings circulate, but
    the brute-force lattice sum singles out ``product``.
    """
    if b <= 1.0:
        raise ValueError(f"omega diverges for b <= 1, got b={b}")
    if variant not in OMEGA_VARIANTS:
        raise ValueError(f"unknown omega variant {variant!r}")
    z = riemann_zeta(b)
    dz = hurwitz_zeta(b, 1.0 / 3.0) - hurwitz_zeta(b, 2.0 / 3.0)
    if variant == "product":
        return 3.0 ** (-b) * z * dz
    return 3.0 ** (-b) * (z + dz)


def _bracket(x, b: float, om: float):
    """Bracket term of g: near-ring correction plus the lattice constant.
    ``x`` is r/delta (scalar or array), valid for x < 1."""
    return (1.0 + (1.0 - b) ** 2 * x * x) / (1.0 - x * x) ** (2.0 * b - 1.0) + om - 1.0


def _g_formula(r, params: RadioParams, layout: CellLayout):
    """Closed-form g(r); finite for any r < delta. Scalar or ndarray."""
    b = params.b_macro
    om = omega(b, params.omega_variant)
    x = np.asarray(r, dtype=np.float64) / layout.delta
    g = 6.0 * params.alpha * x ** (2.0 * b) * _bracket(x, b, om) \
        + (params.P_N / params.P) * np.asarray(r, dtype=np.float64) ** (2.0 * b)
    if np.ndim(r) == 0:
        return float(g)
    return g


def interference_factor(r, params: RadioParams, layout: CellLayout):
    """g(r) on [0, R]: (interference + noise) / serving macro power.

    Strictly increasing, g(0) = 0. Accepts a scalar or an ndarray.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0.0) or np.any(r_arr > layout.R):
        raise ValueError(f"r outside [0, R={layout.R:.6f}] Km")
    return _g_formula(r, params, layout)


def interference_factor_oracle(point: PolarPoint, params: RadioParams, layout: CellLayout) -> float:
    """Brute-force g at an explicit position: direct sum over the interferer
    lattice, (alpha * P * sum_i d_i^-2b + P_N) / (P * r^-2b).

    Unlike the closed form this depends on the azimuth; averaging it over
    azimuths is the validation oracle for the closed form.
    """
    r = point.r
    if r <= 0.0:
        raise ValueError("oracle undefined at r = 0 (serving power infinite)")
    if r > layout.R:
        raise ValueError(f"r outside (0, R={layout.R:.6f}] Km")
    b2 = 2.0 * params.b_macro
    acc = 0.0
    for site in interferer_positions(layout):
        acc += distance(point, site) ** (-b2)
    return (params.alpha * params.P * acc + params.P_N) / (params.P * r ** (-b2))


def _interference_oracle_grid(r_values, params: RadioParams, layout: CellLayout,
                              n_azimuths: int = 360) -> np.ndarray:
    """Azimuth-averaged lattice-sum g on an array of radii (vectorized)."""
    sites = interferer_positions(layout)
    sx = np.array([s.x for s in sites])
    sy = np.array([s.y for s in sites])
    b2 = 2.0 * params.b_macro
    theta = np.linspace(0.0, 2.0 * math.pi, n_azimuths, endpoint=False)
    out = np.empty(len(r_values))
    for i, r in enumerate(r_values):
        px = r * np.cos(theta)[:, None]
        py = r * np.sin(theta)[:, None]
        d = np.hypot(px - sx[None, :], py - sy[None, :])
        interf = params.alpha * params.P * np.sum(d ** (-b2), axis=1) + params.P_N
        out[i] = float(np.mean(interf / (params.P * r ** (-b2))))
    return out


def inverse_interference_factor(y, params: RadioParams, layout: CellLayout):
    """r in [0, R] with g(r) = y, saturating at R for y >= g(R).

    Bisection to |hi - lo| < 1e-9 Km; vectorized over y.
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if np.any(y_arr < 0.0):
        raise ValueError("inverse_interference_factor requires y >= 0")
    g_at_r = _g_formula(layout.R, params, layout)
    lo = np.zeros_like(y_arr)
    hi = np.full_like(y_arr, layout.R)
    saturated = y_arr >= g_at_r
    # bisect to floating-point exhaustion: the 1e-9 Km contract is easy, but
    # the relative round-trip accuracy of g near r = 0 needs the extra depth
    n_iter = 64
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        too_low = _g_formula(mid, params, layout) < y_arr
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
    out = np.where(saturated, layout.R, 0.5 * (lo + hi))
    # exact endpoint: g(0) = 0
    out = np.where(y_arr == 0.0, 0.0, out)
    if np.ndim(y) == 0:
        return float(out[0])
    return out


def sinr_macro(m: PolarPoint, Ls: PolarPoint, params: RadioParams, layout: CellLayout,
               include_small_interference: bool = True) -> float:
    """Linear SINR from the central macro cell at position ``m`` with the
    small cell transmitting from ``Ls``.

    1 / (g(r) + kappa * d^-2b_small * r^2b_macro); +inf at r = 0 and 0 when
    the user sits exactly on an interfering small cell.
    """
    r = m.r
    if r >= layout.delta:
        raise ValueError("macro SINR model is limited to r < delta")
    small = 0.0
    if include_small_interference and params.kappa > 0.0:
        d = distance(m, Ls)
        if d == 0.0:
            return 0.0  # infinite small-cell interference; documented, not an error
        small = params.kappa * d ** (-2.0 * params.b_small) * r ** (2.0 * params.b_macro)
    denom = _g_formula(r, params, layout) + small
    if denom == 0.0:
        return math.inf
    return 1.0 / denom


def sinr_small(m: PolarPoint, Ls: PolarPoint, params: RadioParams, layout: CellLayout,
               include_central_macro: bool = True) -> float:
    """Linear SINR from the small cell at ``Ls``.

    kappa * d^-2b_small * r^2b_macro / (g(r) + 1) with the central macro
    included; clearing the flag removes the central macro from the
    interference (the radio condition used for the small cell's
    no-macro-interference phase) so the denominator becomes g(r).
    """
    r = m.r
    if r >= layout.delta:
        raise ValueError("small-cell SINR model is limited to r < delta")
    d = distance(m, Ls)
    if d == 0.0:
        return math.inf
    serving = params.kappa * params.P * d ** (-2.0 * params.b_small)
    if r == 0.0:
        # power-domain evaluation: the macro-lattice interference stays finite
        # at the origin even though g(0) = 0 (serving macro power diverges)
        b = params.b_macro
        om = omega(b, params.omega_variant)
        lattice = 6.0 * params.alpha * params.P * layout.delta ** (-2.0 * b) * om + params.P_N
        central = math.inf if include_central_macro else 0.0
        denom = lattice + central
        return 0.0 if denom == math.inf else serving / denom
    denom = _g_formula(r, params, layout) + (1.0 if include_central_macro else 0.0)
    if denom == 0.0:
        return math.inf
    return serving / (denom * params.P * r ** (-2.0 * params.b_macro))


def macro_associated(m: PolarPoint, Ls: PolarPoint, params: RadioParams) -> bool:
    """Cell selection by received power, ties to the macro cell."""
    r = m.r
    d = distance(m, Ls)
    if params.kappa == 0.0:
        return True
    small_rx = math.inf if d == 0.0 else params.kappa * d ** (-2.0 * params.b_small)
    macro_rx = math.inf if r == 0.0 else r ** (-2.0 * params.b_macro)
    return small_rx <= macro_rx


def sinr_at(m: PolarPoint, Ls: PolarPoint, params: RadioParams, layout: CellLayout) -> SinrSample:
    """SINR from the serving cell picked by the association rule."""
    if macro_associated(m, Ls, params):
        return SinrSample(sinr_macro(m, Ls, params, layout), Serving.MACRO)
    return SinrSample(sinr_small(m, Ls, params, layout), Serving.SMALL)


def shannon_rate(gamma, params: RadioParams):
    """Modified Shannon rate map min(K1 * W * ln(1 + K2 * gamma), eta0) in Mbps.
    Scalar or ndarray."""
    g = np.asarray(gamma, dtype=np.float64)
    if np.any(g < 0.0):
        raise ValueError("SINR must be nonnegative")
    rate = np.minimum(params.K1 * params.W * np.log1p(params.K2 * g), params.eta0)
    if np.ndim(gamma) == 0:
        return float(rate)
    return rate


def psi(l, params: RadioParams):
    """Inverse-SINR threshold for rate level l (Mbps): the rate exceeds l iff
    1/gamma <= psi(l).  Strictly decreasing; diverges at l = 0."""
    l_arr = np.asarray(l, dtype=np.float64)
    if np.any(l_arr <= 0.0):
        raise ValueError("psi requires l > 0")
    with np.errstate(over="ignore"):  # exp overflow maps to psi = 0, correct limit
        val = params.K2 / np.expm1(l_arr / (params.K1 * params.W))
    if np.ndim(l) == 0:
        return float(val)
    return val
