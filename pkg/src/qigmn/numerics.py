"""Small numerical kernels used by the mixture model.

Chi-squared quantiles are computed from the regularized incomplete gamma
function (series / continued fraction) with a bracketed Newton solve, so the
model has no hard dependency on scipy. Matrix helpers work on dense arrays and
accept stacked ``(..., n, n)`` inputs where noted.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

__all__ = [
    "NotPositiveDefinite",
    "gamma_p",
    "gamma_q",
    "chi2_cdf",
    "chi2_sf",
    "chi2_quantile",
    "chi2_threshold",
    "rank_one_symmetric_update",
    "symmetrize",
    "invert_symmetric",
    "cholesky_logdet",
]

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000
PIVOT_MIN = 1e-12


class NotPositiveDefinite(ArithmeticError):
    """Raised when a Cholesky pivot falls at or below ``PIVOT_MIN``."""


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by its power series; converges fast for x < a + 1.
    ap = a
    term = total = 1.0 / a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a: float, x: float) -> float:
    # Q(a, x) by modified Lentz continued fraction; used for x >= a + 1.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cfrac(a, x)


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cfrac(a, x)


def chi2_cdf(dof: int, x: float) -> float:
    return gamma_p(0.5 * dof, 0.5 * x)


def chi2_sf(dof: int, x: float) -> float:
    return gamma_q(0.5 * dof, 0.5 * x)


def _chi2_logpdf(dof: int, x: float) -> float:
    k = 0.5 * dof
    return (k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k)


def _check_args(dof: int, p: float) -> None:
    if int(dof) != dof or dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof!r}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p!r}")


@lru_cache(maxsize=256)
def _solve_quantile(dof: int, prob: float, upper: bool) -> float:
    # Residual is monotone increasing in x for both tails once signed.
    if upper:
        def resid(x: float) -> float:
            return prob - chi2_sf(dof, x)
    else:
        def resid(x: float) -> float:
            return chi2_cdf(dof, x) - prob

    lo, hi = 0.0, max(1.0, float(dof))
    while resid(hi) < 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            break

    # Wilson-Hilferty starting point, clamped into the bracket.
    z_p = 1.0 - prob if upper else prob
    z = _normal_ppf(z_p)
    c = 2.0 / (9.0 * dof)
    x = dof * (1.0 - c + z * math.sqrt(c)) ** 3
    if not lo < x < hi:
        x = 0.5 * (lo + hi)

    for _ in range(200):
        r = resid(x)
        if r == 0.0:
            return x
        if r < 0.0:
            lo = x
        else:
            hi = x
        dens = math.exp(_chi2_logpdf(dof, x))
        x_new = x - r / dens if dens > 0.0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * abs(x) or hi - lo <= 1e-15 * hi:
            return x_new
        x = x_new
    return x


def _normal_ppf(p: float) -> float:
    # Acklam-style rational starting guess; only seeds the Newton iteration.
    if p <= 0.0:
        return -40.0
    if p >= 1.0:
        return 40.0
    t = math.sqrt(-2.0 * math.log(min(p, 1.0 - p)))
    z = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) / (
        1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t ** 3
    )
    return z if p > 0.5 else -z


def chi2_quantile(dof: int, p: float) -> float:
    """Return x with ``chi2_cdf(dof, x) == p`` (lower-tail quantile).

    Raises:
        ValueError: if ``dof < 1`` or ``p`` is outside (0, 1).
    """
    _check_args(dof, p)
    if p > 0.5:
        # 1 - p is exact here; the upper tail is better conditioned.
        return _solve_quantile(int(dof), 1.0 - float(p), True)
    return _solve_quantile(int(dof), float(p), False)


def chi2_threshold(dof: int, beta: float) -> float:
    """The ``1 - beta`` percentile of chi2(dof), solved on the upper tail.

    Equivalent to ``chi2_quantile(dof, 1 - beta)`` but keeps full precision when
    ``beta`` is tiny, where ``1 - beta`` would round to 1.
    """
    _check_args(dof, beta)
    return _solve_quantile(int(dof), float(beta), True)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def rank_one_symmetric_update(m: np.ndarray, v: np.ndarray, c: float) -> np.ndarray:
    """Return ``m + c * v v^T`` as a new, exactly symmetric matrix."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if v.shape != (m.shape[0],):
        raise ValueError(f"vector of length {v.shape} does not match order {m.shape[0]}")
    return symmetrize(m + c * np.outer(v, v))


def _cholesky(m: np.ndarray) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diagonal(chol, axis1=-2, axis2=-1) ** 2
    if not np.all(pivots > PIVOT_MIN):
        raise NotPositiveDefinite(f"Cholesky pivot {pivots.min():.3g} <= {PIVOT_MIN}")
    return chol


def invert_symmetric(m: np.ndarray) -> np.ndarray:
    """Invert a symmetric positive definite matrix (or a stack of them).

    Raises:
        NotPositiveDefinite: when any Cholesky pivot is ``<= 1e-12``.
    """
    m = np.asarray(m, dtype=float)
    chol = _cholesky(m)
    eye = np.broadcast_to(np.eye(m.shape[-1]), m.shape)
    linv = np.linalg.solve(chol, eye)
    return symmetrize(np.swapaxes(linv, -1, -2) @ linv)


def cholesky_logdet(m: np.ndarray) -> np.ndarray:
    """Log-determinant of SPD ``m`` (stack-aware) via its Cholesky factor."""
    chol = _cholesky(np.asarray(m, dtype=float))
    return 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
