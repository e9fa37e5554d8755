"""Scalar special-function kernels: Riemann/Hurwitz zeta, modified Bessel I0
and log-gamma.

These are the numerical primitives behind the interference constant, the
macro-only throughput CCDF and the coupled stationary distributions.  They are
implemented here rather than taken from a library so that every routine used
in the analysis has an explicit, testable error budget:

* zeta:       truncated series + Euler-Maclaurin tail, absolute error < 1e-10
              for s > 1 (the slowly convergent regime s ~ 1.8 matters here);
* bessel_i0:  all-positive power series below x = 30 (no cancellation),
              asymptotic series above, relative error < 1e-9;
* log_gamma:  Lanczos approximation (Godfrey g = 607/128 coefficient set),
              relative error < 1e-12 on [0.5, 200].
"""

from __future__ import annotations

import math

import numpy as np

_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Lanczos coefficients for g = 607/128, n = 15 (Godfrey's tableau).
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_C = (
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    if x <= 0.0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    if x < 0.5:
        # reflection keeps the Lanczos sum in its accurate range
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    z = x - 1.0
    acc = _LANCZOS_C[0]
    for i in range(1, len(_LANCZOS_C)):
        acc += _LANCZOS_C[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _LN_SQRT_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def log_factorial(x: float) -> float:
    """ln(x!) = ln Gamma(x+1), defined for x >= 0 including non-integers."""
    if x < 0.0:
        raise ValueError(f"log_factorial requires x >= 0, got {x}")
    return log_gamma(x + 1.0)


# Bernoulli-number prefactors B_{2j}/(2j)! for the Euler-Maclaurin tail.
_B2_FACT = 1.0 / 12.0      # B2/2!
_B4_FACT = -1.0 / 720.0    # B4/4!
_B6_FACT = 1.0 / 30240.0   # B6/6!


def hurwitz_zeta(s: float, a: float = 1.0, n_terms: int = 100_000) -> float:
    """Hurwitz zeta sum_{n>=0} (n+a)^-s for s > 1, a > 0.

    Direct series over ``n_terms`` terms plus the Euler-Maclaurin tail
    (integral term, half term and the first three Bernoulli corrections).
    """
    if s <= 1.0:
        raise ValueError(f"zeta series diverges for s <= 1 (got s={s})")
    if a <= 0.0:
        raise ValueError(f"hurwitz_zeta requires a > 0, got {a}")
    n = np.arange(n_terms, dtype=np.float64)
    head = float(np.sum((n + a) ** (-s)))
    m = n_terms + a
    tail = m ** (1.0 - s) / (s - 1.0) + 0.5 * m ** (-s)
    tail += _B2_FACT * s * m ** (-s - 1.0)
    tail += _B4_FACT * s * (s + 1.0) * (s + 2.0) * m ** (-s - 3.0)
    tail += _B6_FACT * s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * m ** (-s - 5.0)
    return head + tail


def riemann_zeta(s: float, n_terms: int = 100_000) -> float:
    """Riemann zeta for s > 1."""
    return hurwitz_zeta(s, 1.0, n_terms)


def bessel_i0(x: float) -> float:
    """Modified Bessel function of the first kind, order zero, for x >= 0."""
    if x < 0.0:
        raise ValueError(f"bessel_i0 is used on x >= 0 only, got {x}")
    if x < 30.0:
        # all terms positive: no cancellation, converges for any x
        q = 0.25 * x * x
        term = 1.0
        acc = 1.0
        k = 0
        while True:
            k += 1
            term *= q / (k * k)
            acc += term
            if term < acc * 1e-17:
                return acc
    return math.exp(log_bessel_i0(x))


def log_bessel_i0(x: float) -> float:
    """ln I0(x); stable for large x where I0 itself overflows."""
    if x < 0.0:
        raise ValueError(f"log_bessel_i0 is used on x >= 0 only, got {x}")
    if x < 30.0:
        return math.log(bessel_i0(x))
    # asymptotic series I0(x) ~ e^x / sqrt(2 pi x) * sum_k u_k, u_0 = 1,
    # u_k = u_{k-1} (2k-1)^2 / (8 k x); truncated where terms stop improving
    acc = 1.0
    u = 1.0
    for k in range(1, 14):
        u *= (2 * k - 1) ** 2 / (8.0 * k * x)
        acc += u
        if u < 1e-17 * acc:
            break
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(acc)
