"""Zero-noise extrapolation and bootstrap confidence intervals."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import ExtrapolationFailedError

C_INIT = 0.2
# an exponential whose decay over [0, lambda_min] exceeds e^3 would amplify
# noise in the first point by more than 20x; such fits count as degenerate
MAX_DECAY = 3.0


@dataclass(frozen=True)
class ZneEstimate:
    noise_factors: tuple[float, ...]
    raw_values: tuple[float, ...]
    extrapolated: float
    fit_kind: str
    ci_low: float
    ci_high: float
    raw_stderr: tuple[float, ...] = ()
    params: tuple[float, ...] = field(default=())


def _linear(lam: np.ndarray, y: np.ndarray) -> tuple[float, tuple[float, ...]]:
    design = np.vstack([np.ones_like(lam), lam]).T
    if np.linalg.matrix_rank(design) < 2:
        raise ExtrapolationFailedError("linear fit is singular")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise ExtrapolationFailedError("linear fit produced non-finite coefficients")
    return float(coef[0]), (float(coef[0]), float(coef[1]))


def _profile(lam: np.ndarray, y: np.ndarray, c: float) -> tuple[float, float, float]:
    """Best ``(a, b)`` for fixed ``c`` and the residual sum of squares."""
    e = np.exp(-c * lam)
    design = np.vstack([np.ones_like(lam), e]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    r = design @ coef - y
    return float(coef[0]), float(coef[1]), float(r @ r)


def _exponential(lam: np.ndarray, y: np.ndarray) -> tuple[float, tuple[float, ...]] | None:
    """Fit ``a + b exp(-c lam)`` with ``0 <= c <= MAX_DECAY / lambda_min``.

    For fixed ``c`` the model is linear in ``(a, b)``, so the least-squares
    problem reduces to a bounded search over ``c``: a grid that includes the
    starting value ``C_INIT``, then a bounded Brent refinement around the
    best grid point. Returns ``None`` when the fit is degenerate.
    """
    scale = max(1.0, float(np.max(np.abs(y))))
    c_max = MAX_DECAY / float(lam.min())
    grid = np.unique(np.concatenate([np.linspace(0.0, c_max, 61), [min(C_INIT, c_max)]]))
    sse = np.array([_profile(lam, y, c)[2] for c in grid])
    k = int(np.argmin(sse))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda c: _profile(lam, y, c)[2], bounds=(lo, hi), method="bounded", options={"xatol": 1e-13}
    )
    c = float(res.x) if res.fun <= sse[k] else float(grid[k])
    a, b, _ = _profile(lam, y, c)
    if not (math.isfinite(a + b) and math.isfinite(c)):
        return None
    if c < 1e-6 or c > c_max * (1 - 1e-6) or abs(b) <= 1e-12 * scale:
        return None
    return a + b, (a, b, c)


def zne_extrapolate(
    pairs: Sequence[tuple[float, float, float]],
    fit: str = "exponential",
    n_resamples: int = 0,
    seed: int = 0,
) -> ZneEstimate:
    """Extrapolate ``(lambda, value, stderr)`` triples to ``lambda = 0``.

    The exponential model needs three or more points; with two points, or
    when the exponential fit fails or degenerates (``c`` at its bound or
    too large to be determined), a straight line is used and ``fit_kind``
    says so. With ``n_resamples > 0`` the result carries a 95% bootstrap
    interval from resampling each value as ``N(value, stderr^2)``.

    Raises:
        ExtrapolationFailedError: the linear fallback is also unsolvable.
    """
    if fit not in ("exponential", "linear"):
        raise ValueError(f"unknown fit {fit!r}")
    if len(pairs) < 2:
        raise ValueError("need at least two noise factors")
    lam = np.array([float(p[0]) for p in pairs])
    y = np.array([float(p[1]) for p in pairs])
    err = tuple(float(p[2]) if len(p) > 2 else 0.0 for p in pairs)
    if len(set(lam.tolist())) != len(lam) or lam.min() < 1:
        raise ValueError("noise factors must be distinct and >= 1")
    if not np.all(np.isfinite(y)):
        raise ExtrapolationFailedError("non-finite input values")

    result = _exponential(lam, y) if fit == "exponential" and len(lam) >= 3 else None
    kind = "exponential"
    if result is None:
        kind = "linear"
        result = _linear(lam, y)
    value, params = result

    low = high = value
    if n_resamples > 0:

        def estimator(values: Sequence[float]) -> float:
            trial = [(l, v, e) for l, v, e in zip(lam, values, err)]
            return zne_extrapolate(trial, fit=fit).extrapolated

        low, high = bootstrap_ci(estimator, list(zip(y, err)), n_resamples=n_resamples, seed=seed)
    return ZneEstimate(
        noise_factors=tuple(lam.tolist()),
        raw_values=tuple(y.tolist()),
        extrapolated=value,
        fit_kind=kind,
        ci_low=low,
        ci_high=high,
        raw_stderr=err,
        params=params,
    )


def bootstrap_ci(
    estimator: Callable,
    data: Sequence,
    n_resamples: int = 1000,
    seed: int = 0,
    mode: str = "summary",
) -> tuple[float, float]:
    """2.5 / 97.5 percentile interval of ``estimator`` over resampled inputs.

    ``mode="summary"``: ``data`` is a list of ``(mu, sigma)`` and each
    resample calls ``estimator`` with one draw from ``N(mu, sigma^2)`` per
    entry. ``mode="samples"``: ``data`` is a list of 1-D sample arrays and
    each resample calls ``estimator`` with every array resampled with
    replacement.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100")
    rng = np.random.default_rng(seed)
    values = np.empty(n_resamples)
    if mode == "summary":
        mu = np.array([float(d[0]) for d in data])
        sigma = np.array([float(d[1]) for d in data])
        if np.any(sigma < 0):
            raise ValueError("sigma must be >= 0")
        draws = mu + sigma * rng.standard_normal((n_resamples, mu.shape[0]))
        for k in range(n_resamples):
            values[k] = estimator(draws[k])
    elif mode == "samples":
        arrays = [np.asarray(d) for d in data]
        for k in range(n_resamples):
            values[k] = estimator([a[rng.integers(0, a.shape[0], a.shape[0])] for a in arrays])
    else:
        raise ValueError(f"unknown bootstrap mode {mode!r}")
    low, high = np.percentile(values, [2.5, 97.5])
    return float(low), float(high)
