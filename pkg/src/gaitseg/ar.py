"""Sparse autoregressive models fitted under an ARD prior, and their spectra.

Model convention (used for JSON and everywhere else)::

    x[t] = mean + sum_{j=1..order} coeffs[j-1] * x[t-j] + e[t],   e[t] ~ N(0, noise_variance)

so ``mean`` is the regression intercept, not the process mean.

The first ``order`` samples of a window only condition the likelihood and
are never scored.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

DEFAULT_ORDER = 12
DEFAULT_PRIOR_SHAPE = 2.0
ARD_FLOOR = 1e-6
PRUNE_PRECISION = 1e6
MAX_CONDITION = 1e13
MIN_PRIOR_SCALE = 1e-12


class IllConditionedError(ValueError):
    """The regularised normal equations are too ill-conditioned to solve reliably."""

    def __init__(self, condition: float):
        super().__init__(f"AR design is ill-conditioned (condition estimate {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class ARParams:
    order: int
    coeffs: np.ndarray
    noise_variance: float
    mean: float = 0.0
    ard_precisions: np.ndarray | None = None

    def __post_init__(self):
        order = int(self.order)
        if order < 0:
            raise ValueError("order must be non-negative")
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if coeffs.size != order:
            raise ValueError(f"expected {order} coefficients, got {coeffs.size}")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        prec = self.ard_precisions
        prec = np.ones(order) if prec is None else np.asarray(prec, dtype=float).reshape(-1)
        if prec.size != order or np.any(prec <= 0):
            raise ValueError("ard_precisions must be positive with one entry per coefficient")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "ard_precisions", prec)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "coeffs": [float(c) for c in self.coeffs],
            "noise_variance": self.noise_variance,
            "mean": self.mean,
            "ard_precisions": [float(a) for a in self.ard_precisions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ARParams":
        return cls(
            order=d["order"],
            coeffs=np.asarray(d["coeffs"], dtype=float),
            noise_variance=d["noise_variance"],
            mean=d.get("mean", 0.0),
            ard_precisions=d.get("ard_precisions"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ARParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PSDEstimate:
    freqs: np.ndarray
    density: np.ndarray
    sample_rate: float

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if f.shape != d.shape or f.ndim != 1:
            raise ValueError("freqs and density must be 1-D arrays of equal length")
        if np.any(np.diff(f) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if np.any(d < 0):
            raise ValueError("density must be non-negative")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))


# -- regression building blocks shared with the switching model --------------


@dataclass
class ARStats:
    """Sufficient statistics of the lagged regression ``y ~ [1, lags] w``."""

    xtx: np.ndarray
    xty: np.ndarray
    yty: float
    n: int

    def __add__(self, other: "ARStats") -> "ARStats":
        return ARStats(self.xtx + other.xtx, self.xty + other.xty, self.yty + other.yty, self.n + other.n)


def lag_matrix(x: np.ndarray, order: int, centre: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Design ``[1, x[t-1]-c, ..., x[t-r]-c]`` and target ``x[t]-c`` for ``t >= order``."""
    xc = np.asarray(x, dtype=float) - centre
    n = xc.size - order
    design = np.empty((n, order + 1))
    design[:, 0] = 1.0
    for j in range(1, order + 1):
        design[:, j] = xc[order - j : order - j + n]
    return design, xc[order:]


def full_lag_matrix(x: np.ndarray, order: int, centre: float = 0.0) -> np.ndarray:
    """Design rows for every sample; rows ``t < order`` are zero-padded and unused."""
    xc = np.asarray(x, dtype=float) - centre
    design = np.zeros((xc.size, order + 1))
    design[:, 0] = 1.0
    for j in range(1, order + 1):
        design[j:, j] = xc[:-j] if j < xc.size else []
    return design


def stats_from_rows(design: np.ndarray, target: np.ndarray) -> ARStats:
    return ARStats(design.T @ design, design.T @ target, float(target @ target), int(target.size))


@dataclass
class ARDPosterior:
    """Gaussian posterior over ``[intercept, coeffs]`` with its hyperparameters."""

    weights: np.ndarray
    covariance: np.ndarray
    precisions: np.ndarray  # ARD precisions of the lag coefficients
    noise_variance: float
    objective: float
    trace: list = field(default_factory=list)
    iterations: int = 0


def _log_inv_gamma(v: float, shape: float, scale: float) -> float:
    return shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(v) - scale / v


def _posterior(stats: ARStats, prior_prec: np.ndarray, noise_var: float):
    precision = stats.xtx / noise_var + np.diag(prior_prec)
    eigval, eigvec = np.linalg.eigh(0.5 * (precision + precision.T))
    cond = eigval[-1] / eigval[0] if eigval[0] > 0 else np.inf
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditionedError(float(cond))
    cov = (eigvec / eigval) @ eigvec.T
    cov = 0.5 * (cov + cov.T)
    mean = cov @ stats.xty / noise_var
    logdet = float(np.sum(np.log(eigval)))
    rss = max(stats.yty - 2.0 * float(mean @ stats.xty) + float(mean @ stats.xtx @ mean), 0.0)
    return mean, cov, logdet, rss


def penalised_evidence(
    stats: ARStats, precisions: np.ndarray, noise_var: float, intercept_precision: float,
    prior_shape: float, prior_scale: float,
) -> float:
    """Log marginal likelihood of the regression plus the log inverse-gamma prior on the noise."""
    prior_prec = np.concatenate([[intercept_precision], precisions])
    mean, _, logdet, rss = _posterior(stats, prior_prec, noise_var)
    return _evidence_value(stats.n, prior_prec, noise_var, mean, logdet, rss) + _log_inv_gamma(
        noise_var, prior_shape, prior_scale
    )


def _evidence_value(n, prior_prec, noise_var, mean, logdet, rss):
    return (
        -0.5 * n * np.log(2.0 * np.pi * noise_var)
        + 0.5 * float(np.sum(np.log(prior_prec)))
        - 0.5 * logdet
        - 0.5 * (rss / noise_var + float(mean @ (prior_prec * mean)))
    )


def em_ard(
    stats: ARStats,
    prior_shape: float,
    prior_scale: float,
    ard_init: float = 1.0,
    intercept_precision: float | None = None,
    init: tuple[np.ndarray, float] | None = None,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> ARDPosterior:
    """EM on the ARD precisions and noise variance of a lagged regression.

    Every iteration raises (never lowers) the penalised evidence, so the
    returned ``trace`` is non-decreasing up to round-off. ``init`` warm
    starts from ``(precisions, noise_variance)``.
    """
    order = stats.xtx.shape[0] - 1
    if intercept_precision is None:
        intercept_precision = 1.0 / prior_scale
    if init is None:
        precisions = np.full(order, float(ard_init))
        noise_var = max(stats.yty / max(stats.n, 1), prior_scale / (prior_shape + 1.0))
    else:
        precisions = np.asarray(init[0], dtype=float).copy()
        noise_var = float(init[1])
    noise_var = max(noise_var, MIN_PRIOR_SCALE)

    trace = []
    prev_mean = None
    prev_var = noise_var
    it = 0
    for it in range(1, max_iter + 1):
        prior_prec = np.concatenate([[intercept_precision], precisions])
        mean, cov, logdet, rss = _posterior(stats, prior_prec, noise_var)
        trace.append(
            _evidence_value(stats.n, prior_prec, noise_var, mean, logdet, rss)
            + _log_inv_gamma(noise_var, prior_shape, prior_scale)
        )
        if prev_mean is not None:
            dm = np.linalg.norm(mean - prev_mean) / max(np.linalg.norm(prev_mean), 1e-12)
            dv = abs(noise_var - prev_var) / prev_var
            if max(dm, dv) <= tol:
                break
        prev_mean, prev_var = mean, noise_var

        spread = mean[1:] ** 2 + np.diag(cov)[1:]
        precisions = 1.0 / np.maximum(spread, ARD_FLOOR)
        expected_rss = rss + float(np.sum(stats.xtx * cov))
        noise_var = (prior_scale + 0.5 * expected_rss) / (prior_shape + 1.0 + 0.5 * stats.n)
        noise_var = max(noise_var, MIN_PRIOR_SCALE)

    prior_prec = np.concatenate([[intercept_precision], precisions])
    mean, cov, logdet, rss = _posterior(stats, prior_prec, noise_var)
    objective = _evidence_value(stats.n, prior_prec, noise_var, mean, logdet, rss) + _log_inv_gamma(
        noise_var, prior_shape, prior_scale
    )
    return ARDPosterior(mean, cov, precisions, noise_var, objective, trace, it)


def params_from_posterior(post: ARDPosterior, centre: float) -> ARParams:
    """Convert regression weights in centred coordinates into reported :class:`ARParams`."""
    coeffs = post.weights[1:].copy()
    coeffs[post.precisions >= PRUNE_PRECISION] = 0.0
    mean = post.weights[0] + centre * (1.0 - float(np.sum(coeffs)))
    return ARParams(
        order=coeffs.size,
        coeffs=coeffs,
        noise_variance=post.noise_variance,
        mean=mean,
        ard_precisions=post.precisions.copy(),
    )


def innovation_variance(data, order: int) -> float:
    """Mean squared one-step error of a least-squares AR fit; the plain variance for ``order == 0``."""
    x = np.asarray(data, dtype=float).reshape(-1)
    if order == 0 or x.size <= 2 * order + 1:
        return float(np.var(x))
    design, target = lag_matrix(x, order, float(np.mean(x)))
    w, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ w
    return float(np.mean(resid * resid))


def default_noise_prior(data, order: int = 0) -> tuple[float, float]:
    """Inverse-gamma ``(shape, scale)``: shape 2, scale the innovation variance of the whole series.

    For ``order == 0`` the scale is the sample variance.
    """
    return DEFAULT_PRIOR_SHAPE, max(innovation_variance(data, order), MIN_PRIOR_SCALE)


def fit_ar_ard(
    data,
    order: int = DEFAULT_ORDER,
    noise_prior: tuple[float, float] | None = None,
    ard_init: float = 1.0,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> ARParams:
    """MAP fit of an AR model with per-lag ARD shrinkage.

    Parameters
    ----------
    data : array_like
        Scalar series, longer than ``order + 2``.
    order : int
        Number of lags.
    noise_prior : (shape, scale), optional
        Inverse-gamma prior on the noise variance; defaults to
        :func:`default_noise_prior` of ``data``.
    ard_init : float
        Starting precision for every lag coefficient.

    Returns
    -------
    ARParams
        Coefficients whose ARD precision reached the pruning level are set
        to exactly zero.
    """
    x = np.asarray(data, dtype=float).reshape(-1)
    order = int(order)
    if order < 0:
        raise ValueError("order must be non-negative")
    if x.size <= order + 2:
        raise ValueError(f"need more than {order + 2} samples for an order-{order} fit, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data must be finite")
    shape, scale = default_noise_prior(x, order) if noise_prior is None else noise_prior
    scale = max(float(scale), MIN_PRIOR_SCALE)
    centre = float(np.mean(x))

    if np.ptp(x) == 0:
        return ARParams(order, np.zeros(order), scale / (shape + 1.0), centre, np.full(order, PRUNE_PRECISION))

    design, target = lag_matrix(x, order, centre)
    post = em_ard(stats_from_rows(design, target), shape, scale, ard_init, max_iter=max_iter, tol=tol)
    return params_from_posterior(post, centre)


def ar_residuals(data, params: ARParams) -> np.ndarray:
    """One-step prediction errors for ``t >= order``."""
    design, target = lag_matrix(np.asarray(data, dtype=float), params.order)
    return target - params.mean - design[:, 1:] @ params.coeffs


def ar_loglik_terms(data, params: ARParams) -> np.ndarray:
    """Per-sample conditional log densities; the first ``order`` entries are zero."""
    x = np.asarray(data, dtype=float)
    out = np.zeros(x.size)
    if x.size > params.order:
        e = ar_residuals(x, params)
        out[params.order :] = -0.5 * (np.log(2.0 * np.pi * params.noise_variance) + e * e / params.noise_variance)
    return out


def ar_log_likelihood(data, params: ARParams) -> float:
    """Conditional Gaussian log likelihood of ``data`` given its first ``order`` samples."""
    x = np.asarray(data, dtype=float)
    if x.size <= params.order:
        raise ValueError(f"need more than {params.order} samples, got {x.size}")
    return float(np.sum(ar_loglik_terms(x, params)))


def ar_psd(params: ARParams, fs: float, n_grid: int = 1024) -> PSDEstimate:
    """Parametric spectrum ``noise_variance / |1 - sum_j A_j exp(-2 pi i f j / fs)|^2`` on ``[0, fs/2]``."""
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    if not fs > 0:
        raise ValueError("fs must be positive")
    freqs = np.linspace(0.0, fs / 2.0, int(n_grid))
    lags = np.arange(1, params.order + 1)
    phase = np.exp(-2j * np.pi * np.outer(freqs / fs, lags))
    denom = np.abs(1.0 - phase @ params.coeffs) ** 2 if params.order else np.ones_like(freqs)
    bad = np.flatnonzero(denom <= 1e-14)
    if bad.size:
        raise ValueError(f"AR polynomial has a root on the unit circle near {freqs[bad[0]]:.6g} Hz")
    return PSDEstimate(freqs, params.noise_variance / denom, fs)


def psd_features(psd: PSDEstimate, band_lo: float, band_hi: float) -> dict:
    """Band energy (trapezoid), dominant peak position and peak height inside ``[band_lo, band_hi]``."""
    f, d = psd.freqs, psd.density
    if not (0 <= band_lo < band_hi):
        raise ValueError("band must satisfy 0 <= band_lo < band_hi")
    if band_lo < f[0] or band_hi > f[-1] * (1 + 1e-12):
        raise ValueError(f"band [{band_lo}, {band_hi}] Hz lies outside the grid [{f[0]}, {f[-1]}] Hz")
    band_hi = min(band_hi, f[-1])
    inside = (f > band_lo) & (f < band_hi)
    grid = np.concatenate([[band_lo], f[inside], [band_hi]])
    dens = np.concatenate([[np.interp(band_lo, f, d)], d[inside], [np.interp(band_hi, f, d)]])
    peak = int(np.argmax(dens))
    return {
        "band_energy": float(np.trapezoid(dens, grid)),
        "peak_position": float(grid[peak]),
        "peak_height": float(dens[peak]),
    }
