"""Resampling, orientation detrending and magnitude computation for tri-axial recordings."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cho_solve_banded, cholesky_banded, solveh_banded

DEFAULT_RATE = 50.0
DEFAULT_LAMBDA0 = 0.01
DEFAULT_MAX_GAP = 2.0


class TrendFilterError(RuntimeError):
    """Raised when the trend filter fails to reach the requested duality gap."""

    def __init__(self, message: str, gap: float, iterations: int):
        super().__init__(message)
        self.gap = gap
        self.iterations = iterations


@dataclass(frozen=True)
class RawRecording:
    """Tri-axial accelerometer samples on a (possibly irregular) time axis.

    ``sessions`` holds ``(start_s, end_s, label)`` tags such as
    ``"before"``/``"after"`` medication.
    """

    t: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray
    subject_id: str = ""
    sessions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (self.t, self.ax, self.ay, self.az)]
        for name, arr in zip(("t", "ax", "ay", "az"), arrays):
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            object.__setattr__(self, name, arr)
        n = arrays[0].size
        if any(a.size != n for a in arrays[1:]):
            raise ValueError("timestamps and axis arrays must have equal length")
        if n < 2:
            raise ValueError("a recording needs at least 2 samples")
        if not np.all(np.isfinite(self.t)):
            raise ValueError("timestamps must be finite")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "sessions", tuple(tuple(s) for s in self.sessions))

    def __len__(self) -> int:
        return self.t.size

    @property
    def axes(self) -> np.ndarray:
        return np.vstack([self.ax, self.ay, self.az])


@dataclass(frozen=True)
class PreprocessedSignal:
    """Uniformly sampled scalar series (magnitude of the detrended acceleration)."""

    values: np.ndarray
    sample_rate: float
    origin_time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("values must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "origin_time", float(self.origin_time))

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.origin_time + np.arange(self.values.size) / self.sample_rate

    @property
    def duration(self) -> float:
        return self.values.size / self.sample_rate


def uniform_grid(start: float, stop: float, rate: float) -> np.ndarray:
    """Arithmetic grid ``start + k / rate`` covering ``[start, stop]``."""
    n = int(np.floor((stop - start) * rate + 1e-9)) + 1
    return start + np.arange(n) / rate


def split_on_gaps(rec: RawRecording, max_gap: float = DEFAULT_MAX_GAP) -> list[RawRecording]:
    """Split a recording wherever consecutive timestamps are more than ``max_gap`` apart."""
    cuts = np.flatnonzero(np.diff(rec.t) > max_gap) + 1
    if cuts.size == 0:
        return [rec]
    bounds = np.concatenate([[0], cuts, [len(rec)]])
    blocks = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - lo < 2:
            continue
        blocks.append(replace(rec, t=rec.t[lo:hi], ax=rec.ax[lo:hi], ay=rec.ay[lo:hi], az=rec.az[lo:hi]))
    return blocks


def resample_uniform(rec: RawRecording, target_rate: float = DEFAULT_RATE) -> RawRecording:
    """Interpolate every axis onto a uniform grid with a natural cubic spline.

    The grid starts at the first timestamp and steps by ``1 / target_rate``
    up to the last timestamp.
    """
    if not target_rate > 0:
        raise ValueError("target_rate must be positive")
    if len(rec) < 4:
        raise ValueError(
            f"cubic spline resampling needs at least 4 samples, got {len(rec)}"
        )
    grid = uniform_grid(rec.t[0], rec.t[-1], target_rate)
    if grid.size == rec.t.size and np.array_equal(grid, rec.t):
        return rec
    spline = CubicSpline(rec.t, rec.axes, axis=1, bc_type="natural")
    ax, ay, az = spline(grid)
    return replace(rec, t=grid, ax=ax, ay=ay, az=az)


def _second_difference(x: np.ndarray) -> np.ndarray:
    return x[:-2] - 2.0 * x[1:-1] + x[2:]


def _second_difference_T(z: np.ndarray) -> np.ndarray:
    return np.convolve(z, [1.0, -2.0, 1.0])


def _ddt_banded(m: int) -> np.ndarray:
    ab = np.zeros((3, m))
    ab[0, 2:] = 1.0
    ab[1, 1:] = -4.0
    ab[2, :] = 6.0
    return ab


def trend_objective(x: np.ndarray, z: np.ndarray, lam: float) -> float:
    """``0.5 * ||x - z||^2 + lam * ||D z||_1`` with ``D`` the second difference."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    return 0.5 * float(np.sum((x - z) ** 2)) + lam * float(np.sum(np.abs(_second_difference(z))))


def _affine_fit(x: np.ndarray) -> np.ndarray:
    t = np.arange(x.size, dtype=float)
    t -= t.mean()
    slope = np.dot(t, x - x.mean()) / np.dot(t, t)
    return x.mean() + slope * t


def l1_trend_filter(
    x,
    lam: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    return_info: bool = False,
):
    """Piecewise-linear trend by l1 penalisation of second differences.

    Solves ``min_z 0.5*||x - z||^2 + lam*||D z||_1`` through its box
    constrained dual with a primal-dual interior point method. The
    pentadiagonal Newton systems are solved in banded form, so each
    iteration is linear in the series length.

    Parameters
    ----------
    x : array_like
        Finite scalar series.
    lam : float
        Non-negative penalty weight.
    tol : float
        Relative duality gap at which the solver stops.
    max_iter : int
        Iteration cap; exceeding it raises :class:`TrendFilterError`.
    return_info : bool
        Also return a dict with ``gap``, ``iterations`` and the per-iteration
        primal ``objective`` trace.

    Returns
    -------
    numpy.ndarray or (numpy.ndarray, dict)
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("l1_trend_filter expects a 1-D series")
    if not np.all(np.isfinite(x)):
        raise ValueError("series must be finite")
    if lam < 0:
        raise ValueError("lam must be non-negative")

    def done(z, gap=0.0, iters=0, trace=None):
        if return_info:
            if trace is None:
                trace = [trend_objective(x, z, lam)]
            return z, {"gap": gap, "iterations": iters, "objective": list(trace)}
        return z

    n = x.size
    if n < 3 or lam == 0:
        return done(x.copy())
    dy = _second_difference(x)
    if not np.any(dy):
        return done(x.copy())

    m = n - 2
    ddt = _ddt_banded(m)
    ddt_chol = cholesky_banded(ddt)
    lam_max = float(np.max(np.abs(cho_solve_banded((ddt_chol, False), dy))))
    if lam >= lam_max:
        return done(_affine_fit(x))

    # primal-dual interior point on the dual: min 0.5 z'DD'z - dy'z, |z| <= lam
    alpha_ls, beta_ls, mu_t, max_ls = 0.01, 0.5, 2.0, 20
    z = np.zeros(m)
    mu1 = np.ones(m)
    mu2 = np.ones(m)
    f1 = z - lam
    f2 = -z - lam
    t = 1e-10
    step = np.inf
    trace: list[float] = []
    best = (np.inf, None)
    gap = np.inf

    def apply_ddt(v):
        return _second_difference(_second_difference_T(v))

    for it in range(max_iter):
        dtz = _second_difference_T(z)
        ddtz = _second_difference(dtz)
        w = dy - (mu1 - mu2)
        ddt_inv_w = cho_solve_banded((ddt_chol, False), w)
        pobj1 = 0.5 * float(w @ ddt_inv_w) + lam * float(np.sum(np.abs(dy - w)))
        pobj2 = 0.5 * float(dtz @ dtz) + lam * float(np.sum(np.abs(dy - ddtz)))
        if pobj1 < pobj2:
            pobj, primal = pobj1, x - _second_difference_T(ddt_inv_w)
        else:
            pobj, primal = pobj2, x - dtz
        dobj = -0.5 * float(dtz @ dtz) + float(dy @ z)
        gap = pobj - dobj
        if pobj < best[0]:
            best = (pobj, primal)
        trace.append(best[0])
        if gap <= tol * max(abs(pobj), abs(dobj), np.finfo(float).tiny):
            return done(best[1], gap=gap, iters=it, trace=trace)

        if step >= 0.2:
            t = max(2.0 * m * mu_t / gap, 1.2 * t)

        rz = ddtz - w
        inv_t = 1.0 / t
        band = ddt.copy()
        band[2] = 6.0 - mu1 / f1 - mu2 / f2
        r = -ddtz + dy + inv_t / f1 - inv_t / f2
        dz = solveh_banded(band, r, check_finite=False)
        dmu1 = -(mu1 + (inv_t + dz * mu1) / f1)
        dmu2 = -(mu2 + (inv_t - dz * mu2) / f2)

        residual = np.concatenate([rz, -mu1 * f1 - inv_t, -mu2 * f2 - inv_t])
        res_norm = np.linalg.norm(residual)

        step = 1.0
        neg = dmu1 < 0
        if np.any(neg):
            step = min(step, 0.99 * float(np.min(-mu1[neg] / dmu1[neg])))
        neg = dmu2 < 0
        if np.any(neg):
            step = min(step, 0.99 * float(np.min(-mu2[neg] / dmu2[neg])))

        for _ in range(max_ls):
            new_z = z + step * dz
            new_mu1 = mu1 + step * dmu1
            new_mu2 = mu2 + step * dmu2
            new_f1 = new_z - lam
            new_f2 = -new_z - lam
            if max(new_f1.max(), new_f2.max()) < 0:
                new_res = np.concatenate(
                    [
                        apply_ddt(new_z) - dy + new_mu1 - new_mu2,
                        -new_mu1 * new_f1 - inv_t,
                        -new_mu2 * new_f2 - inv_t,
                    ]
                )
                if np.linalg.norm(new_res) <= (1.0 - alpha_ls * step) * res_norm:
                    break
            step *= beta_ls
        z, mu1, mu2, f1, f2 = new_z, new_mu1, new_mu2, new_f1, new_f2

    raise TrendFilterError(
        f"trend filter did not reach relative gap {tol:g} in {max_iter} iterations "
        f"(achieved gap {gap:.3e})",
        gap=gap,
        iterations=max_iter,
    )


def default_lambda(channel: np.ndarray, lambda0: float = DEFAULT_LAMBDA0) -> float:
    """Per-channel penalty ``lambda0 * n * var(channel)``."""
    channel = np.asarray(channel, dtype=float)
    return float(lambda0 * channel.size * np.var(channel))


def _detrended_magnitude(rec: RawRecording, lam: float | None, lambda0: float) -> np.ndarray:
    residuals = []
    for channel in (rec.ax, rec.ay, rec.az):
        weight = default_lambda(channel, lambda0) if lam is None else lam
        residuals.append(channel - l1_trend_filter(channel, weight))
    r = np.vstack(residuals)
    return np.sqrt(np.sum(r * r, axis=0))


def preprocess_recording(
    rec: RawRecording,
    target_rate: float = DEFAULT_RATE,
    lam: float | None = None,
    lambda0: float = DEFAULT_LAMBDA0,
    max_gap: float = DEFAULT_MAX_GAP,
) -> PreprocessedSignal:
    """Resample, remove each axis' l1 trend and take the magnitude of the residuals.

    ``lam=None`` selects the per-channel default ``lambda0 * n * var``.
    Recordings with gaps longer than ``max_gap`` must go through
    :func:`preprocess_blocks` instead.
    """
    blocks = split_on_gaps(rec, max_gap)
    if len(blocks) != 1 or len(blocks[0]) != len(rec):
        raise ValueError(
            f"recording has gaps longer than {max_gap} s; use preprocess_blocks"
        )
    uniform = resample_uniform(rec, target_rate)
    return PreprocessedSignal(
        _detrended_magnitude(uniform, lam, lambda0), target_rate, origin_time=uniform.t[0]
    )


def preprocess_blocks(
    rec: RawRecording,
    target_rate: float = DEFAULT_RATE,
    lam: float | None = None,
    lambda0: float = DEFAULT_LAMBDA0,
    max_gap: float = DEFAULT_MAX_GAP,
) -> list[PreprocessedSignal]:
    """Preprocess each gap-free block of a recording independently.

    Blocks with fewer than 4 samples cannot be spline-resampled and are skipped.
    """
    out = []
    for block in split_on_gaps(rec, max_gap):
        if len(block) < 4:
            continue
        out.append(preprocess_recording(block, target_rate, lam, lambda0, max_gap))
    return out
