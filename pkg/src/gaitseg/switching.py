"""Switching autoregressive segmentation with an open-ended number of regimes.

Inference is hard-assignment coordinate ascent:

1. a Viterbi pass labels every sample with one of the existing regimes or
   a fresh one,
2. each regime's AR model is refitted by ARD-EM (warm started),
3. transition probabilities are re-estimated under a sticky HDP-style
   prior,
4. once the labelling settles, redundant regimes are merged, or a regime
   whose runs fall into a low- and a high-variance group is split, when
   that raises the joint objective.

A sweep is kept only if it does not lower the joint objective, so the
recorded trace never decreases.
"""
from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from .ar import (
    ARDPosterior,
    ARParams,
    ARStats,
    DEFAULT_ORDER,
    DEFAULT_PRIOR_SHAPE,
    _log_inv_gamma,
    ar_loglik_terms,
    default_noise_prior,
    em_ard,
    full_lag_matrix,
    params_from_posterior,
)
from .signal_prep import PreprocessedSignal


@dataclass(frozen=True)
class TransitionModel:
    """Row-stochastic ``K x (K+1)`` matrix; the last column is the jump to a new regime.

    ``beta`` holds the top-level weights of the ``K`` regimes plus the
    reserved new-regime mass.
    """

    pi: np.ndarray
    alpha: float = 1.0
    gamma: float = 1.0
    kappa: float = 0.0
    beta: np.ndarray | None = None

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 2 or pi.shape[0] < 1 or pi.shape[1] != pi.shape[0] + 1:
            raise ValueError("pi must have K rows and K+1 columns with K >= 1")
        if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("rows of pi must be probability vectors")
        if not (self.alpha > 0 and self.gamma > 0 and self.kappa >= 0):
            raise ValueError("alpha and gamma must be positive, kappa non-negative")
        beta = self.beta
        k = pi.shape[0]
        beta = np.full(k + 1, 1.0 / (k + 1)) if beta is None else np.asarray(beta, dtype=float)
        if beta.shape != (k + 1,):
            raise ValueError("beta must have K+1 entries")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "beta", beta)

    @property
    def n_states(self) -> int:
        return self.pi.shape[0]

    def new_state_row(self) -> np.ndarray:
        """Outgoing probabilities of a just-created regime (prior only, no counts)."""
        row = self.alpha * self.beta.copy()
        row[-1] += self.kappa
        return row / (self.alpha + self.kappa)


@dataclass(frozen=True)
class HiddenStateSequence:
    labels: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.labels)
        if z.ndim != 1 or z.size == 0:
            raise ValueError("labels must be a non-empty 1-D array")
        if not np.issubdtype(z.dtype, np.integer):
            if np.any(z != np.round(z)):
                raise ValueError("labels must be integers")
            z = z.astype(np.int64)
        if z.min() < 1:
            raise ValueError("state ids start at 1")
        object.__setattr__(self, "labels", z.astype(np.int64))

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_states(self) -> int:
        return int(self.labels.max())


@dataclass(frozen=True)
class SegmentationConfig:
    order: int = DEFAULT_ORDER
    alpha: float = 1.0
    gamma: float = 1.0
    kappa: float | None = None  # None: sticky bias giving the expected dwell below
    expected_dwell_s: float = 1.0
    new_state_penalty: float = 0.0
    init_block_s: float = 2.0
    max_iter: int = 100
    tol: float = 1e-6
    min_duration_s: float = 0.5
    prior_shape: float = DEFAULT_PRIOR_SHAPE
    ard_init: float = 1.0
    em_max_iter: int = 200
    merge: bool = True
    split: bool = True
    seed: int = 0

    def resolved_kappa(self, fs: float) -> float:
        if self.kappa is not None:
            return float(self.kappa)
        return max(self.alpha * (self.expected_dwell_s * fs - 1.0), 0.0)


@dataclass(frozen=True)
class SegmentationResult:
    states: dict
    labels: HiddenStateSequence
    transition: TransitionModel
    objective_trace: list
    segments: list
    converged: bool
    iterations: int
    sample_rate: float
    config: SegmentationConfig = field(default_factory=SegmentationConfig)

    def to_dict(self) -> dict:
        return {
            "states": {str(k): v.to_dict() for k, v in sorted(self.states.items())},
            "labels_rle": run_length_encode(self.labels.labels),
            "objective_trace": [float(v) for v in self.objective_trace],
            "segments": [[int(a), int(b), int(s)] for a, b, s in self.segments],
            "transition": {
                "pi": self.transition.pi.tolist(),
                "beta": self.transition.beta.tolist(),
                "alpha": self.transition.alpha,
                "gamma": self.transition.gamma,
                "kappa": self.transition.kappa,
            },
            "converged": self.converged,
            "iterations": self.iterations,
            "sample_rate": self.sample_rate,
            "config": asdict(self.config),
            "seed": self.config.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationResult":
        tr = d["transition"]
        return cls(
            states={int(k): ARParams.from_dict(v) for k, v in d["states"].items()},
            labels=HiddenStateSequence(run_length_decode(d["labels_rle"])),
            transition=TransitionModel(np.asarray(tr["pi"]), tr["alpha"], tr["gamma"], tr["kappa"], np.asarray(tr["beta"])),
            objective_trace=list(d["objective_trace"]),
            segments=[tuple(s) for s in d["segments"]],
            converged=d["converged"],
            iterations=d["iterations"],
            sample_rate=d["sample_rate"],
            config=SegmentationConfig(**d["config"]),
        )


def run_length_encode(labels) -> list:
    """``[[value, count], ...]`` for consecutive runs."""
    z = np.asarray(labels)
    if z.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(z)) + 1
    starts = np.concatenate([[0], cuts])
    ends = np.concatenate([cuts, [z.size]])
    return [[int(z[a]), int(b - a)] for a, b in zip(starts, ends)]


def run_length_decode(rle) -> np.ndarray:
    if not rle:
        return np.zeros(0, dtype=np.int64)
    return np.repeat([v for v, _ in rle], [n for _, n in rle]).astype(np.int64)


def label_runs(labels) -> list[tuple[int, int, int]]:
    """Maximal constant runs as half-open ``(start, end, label)``."""
    out = []
    pos = 0
    for value, count in run_length_encode(labels):
        out.append((pos, pos + count, value))
        pos += count
    return out


# -- dynamic programming ------------------------------------------------------


def viterbi(loglik: np.ndarray, log_trans: np.ndarray, log_init: np.ndarray) -> np.ndarray:
    """Most probable path; ties resolve to the lowest index.

    ``loglik`` is ``T x S``, ``log_trans`` is ``S x S`` and ``log_init`` has
    length ``S``. Returns 0-based state indices.
    """
    T, S = loglik.shape
    back = np.zeros((T, S), dtype=np.int64)
    cols = np.arange(S)
    with np.errstate(invalid="ignore"):
        delta = log_init + loglik[0]
        for t in range(1, T):
            cand = delta[:, None] + log_trans
            best = cand.argmax(axis=0)
            back[t] = best
            delta = cand[best, cols]
            delta += loglik[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _safe_log(p) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(p, dtype=float))


def _extended_log_trans(trans: TransitionModel, penalty: float, allow_new: bool) -> np.ndarray:
    k = trans.n_states
    log_pi = _safe_log(trans.pi)
    out = np.full((k + 1, k + 1), -np.inf)
    out[:k, :k] = log_pi[:, :k]
    out[k, :] = _safe_log(trans.new_state_row())
    if allow_new:
        out[:k, k] = log_pi[:, k] + penalty
    return out


def _base_measure_loglik(x: np.ndarray, order: int, centre: float, variance: float) -> np.ndarray:
    ll = -0.5 * (np.log(2.0 * np.pi * variance) + (x - centre) ** 2 / variance)
    ll[:order] = 0.0
    return ll


def assign_states(
    signal: PreprocessedSignal,
    states: dict,
    trans: TransitionModel,
    new_state_penalty: float = -np.inf,
    initial=None,
    noise_prior: tuple[float, float] | None = None,
) -> HiddenStateSequence:
    """Viterbi labelling over the existing regimes plus an optional new one.

    ``states`` maps ids ``1..K`` to :class:`ARParams`; row ``i`` of
    ``trans.pi`` belongs to id ``i + 1``. A new regime (id ``K + 1``) is
    scored by an order-0 model at the global mean with the prior-mode noise
    variance; ``new_state_penalty = -inf`` disables it. ``initial`` is the
    start distribution over the ``K`` ids (default: the top-level weights).
    """
    if not states:
        raise ValueError("at least one state is required")
    ids = sorted(states)
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError("state ids must be 1..K")
    k = len(ids)
    if trans.n_states != k:
        raise ValueError(f"transition model has {trans.n_states} rows for {k} states")
    x = signal.values
    max_order = max(states[i].order for i in ids)
    if x.size < max_order + 2:
        raise ValueError(f"signal of {x.size} samples is shorter than order {max_order} + 2")

    allow_new = np.isfinite(new_state_penalty) or new_state_penalty == np.inf
    ll = np.zeros((x.size, k + 1))
    for col, i in enumerate(ids):
        ll[:, col] = ar_loglik_terms(x, states[i])
    if allow_new:
        shape, scale = noise_prior or default_noise_prior(x, max_order)
        ll[:, k] = _base_measure_loglik(x, max_order, float(np.mean(x)), scale / (shape + 1.0))
    log_trans = _extended_log_trans(trans, float(new_state_penalty), allow_new)

    if initial is None:
        start = trans.beta.copy()
    else:
        start = np.concatenate([np.asarray(initial, dtype=float), [0.0]])
    log_init = _safe_log(start)
    if allow_new:
        log_init[k] += new_state_penalty
    else:
        log_init[k] = -np.inf
    return HiddenStateSequence(viterbi(ll, log_trans, log_init) + 1)


# -- transitions ----------------------------------------------------------------


def _transition_counts(z: np.ndarray, k: int) -> np.ndarray:
    counts = np.zeros((k, k))
    np.add.at(counts, (z[:-1], z[1:]), 1.0)
    return counts


def _top_level_weights(z: np.ndarray, k: int, gamma: float) -> np.ndarray:
    runs = np.bincount(np.asarray([s for _, _, s in label_runs(z)], dtype=np.int64), minlength=k)[:k]
    total = runs.sum()
    return np.concatenate([runs, [gamma]]) / (total + gamma)


def _transitions_0based(z: np.ndarray, k: int, alpha: float, gamma: float, kappa: float) -> TransitionModel:
    beta = _top_level_weights(z, k, gamma)
    conc = np.tile(alpha * beta, (k, 1))
    conc[np.arange(k), np.arange(k)] += kappa
    pi = conc.copy()
    pi[:, :k] += _transition_counts(z, k)
    pi /= pi.sum(axis=1, keepdims=True)
    return TransitionModel(pi, alpha, gamma, kappa, beta)


def update_transitions(labels, alpha: float = 1.0, gamma: float = 1.0, kappa: float = 0.0) -> TransitionModel:
    """Sticky HDP-style MAP estimate ``pi_ij ~ n_ij + alpha*beta_j + kappa*[i == j]``.

    ``beta`` weights each regime by how many runs it owns and reserves
    ``gamma / (runs + gamma)`` for a new regime.
    """
    z = np.asarray(labels.labels if isinstance(labels, HiddenStateSequence) else labels, dtype=np.int64)
    if z.min() < 1:
        raise ValueError("state ids start at 1")
    return _transitions_0based(z - 1, int(z.max()), alpha, gamma, kappa)


def _transition_objective(z: np.ndarray, trans: TransitionModel) -> float:
    k = trans.n_states
    log_pi = _safe_log(trans.pi)
    counts = _transition_counts(z, k)
    conc = np.tile(trans.alpha * trans.beta, (k, 1))
    conc[np.arange(k), np.arange(k)] += trans.kappa
    total = math.log(trans.beta[z[0]])
    total += float(np.sum(counts * log_pi[:, :k]))
    total += float(np.sum(conc * log_pi))
    return total


# -- state fitting ----------------------------------------------------------------


class _Regression:
    """Whole-signal lagged design shared by every regime."""

    def __init__(self, x: np.ndarray, order: int, prior_shape: float, ard_init: float, em_max_iter: int):
        self.x = x
        self.order = order
        self.centre = float(np.mean(x))
        self.design = full_lag_matrix(x, order, self.centre)
        self.target = x - self.centre
        self.valid = np.arange(x.size) >= order
        self.prior_shape = prior_shape
        self.prior_scale = default_noise_prior(x, order)[1]
        self.mode_variance = self.prior_scale / (prior_shape + 1.0)
        self.log_prior_mode = _log_inv_gamma(self.mode_variance, prior_shape, self.prior_scale)
        self.ard_init = ard_init
        self.em_max_iter = em_max_iter
        self._fits: dict = {}

    def stats(self, mask: np.ndarray) -> ARStats:
        rows = mask & self.valid
        d = self.design[rows]
        y = self.target[rows]
        return ARStats(d.T @ d, d.T @ y, float(y @ y), int(y.size))

    def fit(self, stats: ARStats, warm: ARDPosterior | None = None) -> ARDPosterior:
        # identical sample sets recur across candidate moves; reuse their fits
        key = (stats.n, stats.xtx.tobytes(), stats.xty.tobytes())
        if key not in self._fits:
            init = None if warm is None else (warm.precisions, warm.noise_variance)
            self._fits[key] = em_ard(
                stats, self.prior_shape, self.prior_scale, self.ard_init, init=init, max_iter=self.em_max_iter
            )
        return self._fits[key]

    def expected_loglik(self, post: ARDPosterior) -> np.ndarray:
        resid = self.target - self.design @ post.weights
        quad = np.sum((self.design @ post.covariance) * self.design, axis=1)
        ll = -0.5 * (np.log(2.0 * np.pi * post.noise_variance) + (resid * resid + quad) / post.noise_variance)
        ll[~self.valid] = 0.0
        return ll

    def base_loglik(self) -> np.ndarray:
        return _base_measure_loglik(self.x, self.order, self.centre, self.mode_variance)

    def state_term(self, post: ARDPosterior) -> float:
        return post.objective - self.log_prior_mode

    def params(self, post: ARDPosterior) -> ARParams:
        return params_from_posterior(post, self.centre)


def _min_samples(order: int) -> int:
    return order + 3


def update_state_params(
    signal: PreprocessedSignal,
    labels,
    order: int = DEFAULT_ORDER,
    noise_prior_shape: float = DEFAULT_PRIOR_SHAPE,
    ard_init: float = 1.0,
) -> dict:
    """Refit every regime on its own samples.

    Lags are taken from the whole signal, so a regime's first samples after
    a switch condition on the preceding regime's values. Regimes owning
    fewer than ``order + 3`` scored samples are dropped from the result.
    """
    z = np.asarray(labels.labels if isinstance(labels, HiddenStateSequence) else labels, dtype=np.int64)
    reg = _Regression(signal.values, order, noise_prior_shape, ard_init, 200)
    out = {}
    for state in np.unique(z):
        mask = z == state
        if np.count_nonzero(mask & reg.valid) < _min_samples(order):
            continue
        out[int(state)] = reg.params(reg.fit(reg.stats(mask)))
    return out


@dataclass
class _Iterate:
    z: np.ndarray  # 0-based
    posts: list
    stats: list
    trans: TransitionModel
    objective: float


def _compact(z: np.ndarray, keep: list[int]) -> np.ndarray:
    """Renumber so the kept states become 0..len(keep)-1 in the listed order."""
    lut = np.full(int(z.max()) + 1, -1, dtype=np.int64)
    lut[keep] = np.arange(len(keep))
    return lut[z]


def _first_appearance_order(z: np.ndarray) -> list[int]:
    _, first = np.unique(z, return_index=True)
    states = np.unique(z)
    return [int(s) for s in states[np.argsort(first)]]


def _two_group_split(values: np.ndarray, weight: np.ndarray) -> np.ndarray | None:
    """Threshold maximising the weighted between-group variance; ``True`` marks the upper group."""
    order = np.argsort(values, kind="stable")
    v, w = values[order], weight[order]
    cw = np.cumsum(w)
    cm = np.cumsum(w * v)
    total_w, total_m = cw[-1], cm[-1]
    best, cut = 0.0, None
    for i in range(v.size - 1):
        if v[i + 1] == v[i]:
            continue
        w0, w1 = cw[i], total_w - cw[i]
        m0, m1 = cm[i] / w0, (total_m - cm[i]) / w1
        between = w0 * w1 * (m0 - m1) ** 2
        if between > best:
            best, cut = between, i
    if cut is None:
        return None
    upper = np.zeros(v.size, dtype=bool)
    upper[order[cut + 1:]] = True
    return upper


def _two_means(features: np.ndarray, max_iter: int = 50) -> np.ndarray | None:
    """Deterministic 2-means seeded from the two most distant rows; ``True`` marks the second cluster."""
    if features.shape[0] < 2:
        return None
    dist = np.sum((features[:, None, :] - features[None, :, :]) ** 2, axis=2)
    i, j = np.unravel_index(np.argmax(dist), dist.shape)
    if dist[i, j] == 0.0:
        return None
    centres = features[[i, j]]
    assign = None
    for _ in range(max_iter):
        d = np.sum((features[:, None, :] - centres[None, :, :]) ** 2, axis=2)
        new = d[:, 1] < d[:, 0]
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        if assign.all() or not assign.any():
            return None
        centres = np.stack([features[~assign].mean(axis=0), features[assign].mean(axis=0)])
    return assign


def _autocorrelation_shape(segment: np.ndarray, max_lag: int) -> np.ndarray:
    x = segment - segment.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return np.zeros(max_lag)
    return np.array([x[: x.size - m] @ x[m:] / denom for m in range(1, max_lag + 1)])


class _Inference:
    def __init__(self, signal: PreprocessedSignal, cfg: SegmentationConfig):
        self.cfg = cfg
        self.fs = signal.sample_rate
        self.kappa = cfg.resolved_kappa(self.fs)
        self.reg = _Regression(signal.values, cfg.order, cfg.prior_shape, cfg.ard_init, cfg.em_max_iter)
        self.base_ll = self.reg.base_loglik()

    def build(self, z: np.ndarray, warm: dict | None = None) -> _Iterate:
        """Fit regimes for labels ``z`` (0-based, compact) and score the result."""
        k = int(z.max()) + 1
        posts, stats = [], []
        for s in range(k):
            st = self.reg.stats(z == s)
            stats.append(st)
            posts.append(self.reg.fit(st, None if warm is None else warm.get(s)))
        trans = _transitions_0based(z, k, self.cfg.alpha, self.cfg.gamma, self.kappa)
        return _Iterate(z, posts, stats, trans, self._objective(z, posts, trans))

    def _objective(self, z, posts, trans) -> float:
        return sum(self.reg.state_term(p) for p in posts) + _transition_objective(z, trans)

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        x = self.reg.x
        block = max(int(round(self.cfg.init_block_s * self.fs)), 1)
        n_blocks = max(x.size // block, 1)
        edges = np.linspace(0, n_blocks * block, n_blocks + 1).astype(int)
        edges[-1] = x.size
        logvar = np.array([np.log(np.var(x[a:b]) + 1e-300) for a, b in zip(edges[:-1], edges[1:])])
        groups = min(int(math.ceil(math.sqrt(n_blocks))), np.unique(logvar).size)
        if groups <= 1:
            block_labels = np.zeros(n_blocks, dtype=np.int64)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                _, block_labels = kmeans2(logvar.reshape(-1, 1), groups, minit="++", seed=rng)
        z = np.repeat(block_labels, np.diff(edges))
        return _compact(z, _first_appearance_order(z))

    def _ll_matrix(self, posts: list, allow_new: bool) -> np.ndarray:
        cols = [self.reg.expected_loglik(p) for p in posts]
        cols.append(self.base_ll if allow_new else np.zeros_like(self.base_ll))
        return np.column_stack(cols)

    def sweep(self, cur: _Iterate, allow_new: bool) -> _Iterate:
        k = len(cur.posts)
        ll = self._ll_matrix(cur.posts, allow_new)
        log_trans = _extended_log_trans(cur.trans, self.cfg.new_state_penalty, allow_new)
        log_init = _safe_log(cur.trans.beta)
        log_init[k] = log_init[k] + self.cfg.new_state_penalty if allow_new else -np.inf

        banned = np.zeros(k + 1, dtype=bool)
        banned[k] = not allow_new
        while True:
            lt = log_trans.copy()
            lt[:, banned] = -np.inf
            li = log_init.copy()
            li[banned] = -np.inf
            z = viterbi(ll, lt, li)
            owned = np.bincount(z[self.reg.valid], minlength=k + 1)
            small = (owned < _min_samples(self.cfg.order)) & (owned > 0)
            small |= (owned == 0) & np.isin(np.arange(k + 1), z)
            if not small.any():
                break
            banned |= small
            if banned[:k].all():
                # nothing left to assign to; keep the current labels
                return cur

        keep = _first_appearance_order(z)
        warm = {new: cur.posts[old] for new, old in enumerate(keep) if old < k}
        return self.build(_compact(z, keep), warm)

    def try_merges(self, cur: _Iterate) -> _Iterate:
        while len(cur.posts) > 1:
            best = None
            k = len(cur.posts)
            for i in range(k):
                for j in range(i + 1, k):
                    cand = self._merged(cur, i, j)
                    if cand.objective > cur.objective and (best is None or cand.objective > best.objective):
                        best = cand
            if best is None:
                return cur
            cur = best
        return cur

    def _merged(self, cur: _Iterate, i: int, j: int) -> _Iterate:
        z = cur.z.copy()
        z[z == j] = i
        keep = _first_appearance_order(z)
        bigger = i if cur.stats[i].n >= cur.stats[j].n else j
        warm_src = {s: cur.posts[s] for s in range(len(cur.posts))}
        warm_src[i] = cur.posts[bigger]
        warm = {new: warm_src[old] for new, old in enumerate(keep)}
        return self.build(_compact(z, keep), warm)

    def try_splits(self, cur: _Iterate, max_states: int) -> _Iterate:
        """Best single split of one state's runs into a low- and a high-variance group, refined by sweeps."""
        if len(cur.posts) >= max_states:
            return cur
        best = cur
        for state in range(len(cur.posts)):
            for pieces in (self._variance_split(cur, state), self._shape_split(cur, state)):
                if pieces is None:
                    continue
                z = cur.z.copy()
                for a, b in pieces:
                    z[a:b] = len(cur.posts)
                cand = self._refine(self.build(_compact(z, _first_appearance_order(z))))
                if cand.objective > best.objective + self.cfg.tol * abs(best.objective):
                    best = cand
        return best

    def _refine(self, cand: _Iterate) -> _Iterate:
        for _ in range(self.cfg.max_iter):
            nxt = self.sweep(cand, False)
            if nxt.objective <= cand.objective or np.array_equal(nxt.z, cand.z):
                break
            cand = nxt
        return cand

    def _variance_split(self, cur: _Iterate, state: int) -> list | None:
        """Whole runs of ``state`` whose variance is in the upper of two groups."""
        x = self.reg.x
        need = _min_samples(self.cfg.order)
        mine = [(a, b) for a, b, st in label_runs(cur.z) if st == state and b - a >= need]
        if len(mine) < 2:
            return None
        logvar = np.array([np.log(np.var(x[a:b]) + 1e-300) for a, b in mine])
        high = _two_group_split(logvar, np.array([b - a for a, b in mine], dtype=float))
        if high is None:
            return None
        return [piece for piece, flag in zip(mine, high) if flag]

    def _shape_split(self, cur: _Iterate, state: int) -> list | None:
        """Fixed-length blocks of ``state`` grouped by autocorrelation shape, so one run can be cut."""
        x = self.reg.x
        block = max(int(round(self.cfg.init_block_s * self.fs)), 2 * _min_samples(self.cfg.order))
        max_lag = max(block // 2, 1)
        pieces = []
        for a, b, st in label_runs(cur.z):
            if st != state:
                continue
            n = (b - a) // block
            edges = [a + i * block for i in range(n)] + [b]
            if n == 0:
                continue
            pieces.extend(zip(edges[:-1], edges[1:]))
        if len(pieces) < 2:
            return None
        features = np.array([_autocorrelation_shape(x[a:b], max_lag) for a, b in pieces])
        second = _two_means(features)
        if second is None:
            return None
        return [piece for piece, flag in zip(pieces, second) if flag]

    def run(self) -> tuple[_Iterate, list, bool, int]:
        rng = np.random.default_rng(self.cfg.seed)
        z0 = self.initial(rng)
        max_states = len(label_runs(z0))
        cur = self.build(z0)
        trace = [cur.objective]
        converged = False
        it = 0
        for it in range(1, self.cfg.max_iter + 1):
            allow_new = len(cur.posts) < max_states and self.cfg.new_state_penalty > -np.inf
            cand = self.sweep(cur, allow_new)
            if cand.objective < cur.objective and allow_new:
                cand = self.sweep(cur, False)
            stalled = cand.objective < cur.objective
            if not stalled:
                unchanged = np.array_equal(cand.z, cur.z)
                gain = cand.objective - cur.objective
                cur = cand
                trace.append(cur.objective)
                stalled = unchanged or gain <= self.cfg.tol * abs(cur.objective)
            if stalled:
                # merges are only tried once the labelling has settled
                merged = self.try_merges(cur) if self.cfg.merge else cur
                if merged is cur and self.cfg.split:
                    # hard assignments cannot separate two regimes that one state already covers
                    merged = self.try_splits(cur, max_states)
                if merged is cur:
                    converged = True
                    break
                cur = merged
                trace.append(cur.objective)
        return cur, trace, converged, it

    def loglik_matrix(self, cur: _Iterate) -> np.ndarray:
        return np.column_stack([ar_loglik_terms(self.reg.x, self.reg.params(p)) for p in cur.posts])


def infer_segmentation(signal: PreprocessedSignal, cfg: SegmentationConfig | None = None) -> SegmentationResult:
    """Segment ``signal`` into AR regimes whose number is inferred from the data."""
    cfg = cfg or SegmentationConfig()
    need = max(cfg.order + 2, _min_samples(cfg.order) + cfg.order)
    if len(signal) < need:
        raise ValueError(f"signal has {len(signal)} samples; at least {need} are needed for order {cfg.order}")
    inf = _Inference(signal, cfg)
    final, trace, converged, iterations = inf.run()
    states = {s + 1: inf.reg.params(p) for s, p in enumerate(final.posts)}
    min_len = max(int(round(cfg.min_duration_s * signal.sample_rate)), 1)
    segments = extract_segments(final.z + 1, min_len, inf.loglik_matrix(final))
    return SegmentationResult(
        states=states,
        labels=HiddenStateSequence(final.z + 1),
        transition=final.trans,
        objective_trace=trace,
        segments=segments,
        converged=converged,
        iterations=iterations,
        sample_rate=signal.sample_rate,
        config=cfg,
    )


def extract_segments(labels, min_duration: int = 1, loglik: np.ndarray | None = None) -> list[tuple[int, int, int]]:
    """Maximal constant-label runs as half-open ``(start, end, state)`` sample ranges.

    Runs shorter than ``min_duration`` are absorbed, shortest first, into
    the neighbouring run whose state explains those samples better
    (``loglik[:, state - 1]``), or into the longer neighbour when no
    likelihoods are given.
    """
    z = np.asarray(labels.labels if isinstance(labels, HiddenStateSequence) else labels, dtype=np.int64)
    if min_duration < 1:
        raise ValueError("min_duration must be at least 1")
    runs = [list(r) for r in label_runs(z)]
    n = len(runs)
    if n == 0:
        return []
    prev = list(range(-1, n - 1))
    nxt = list(range(1, n + 1))
    nxt[-1] = -1
    alive = [True] * n
    heap = [(r[1] - r[0], r[0], idx) for idx, r in enumerate(runs)]
    heapq.heapify(heap)
    cum = None
    if loglik is not None:
        cum = np.vstack([np.zeros((1, loglik.shape[1])), np.cumsum(loglik, axis=0)])

    def absorb(dst: int, src: int):
        runs[dst][0] = min(runs[dst][0], runs[src][0])
        runs[dst][1] = max(runs[dst][1], runs[src][1])
        alive[src] = False
        p, q = prev[src], nxt[src]
        if p >= 0:
            nxt[p] = q
        if q >= 0:
            prev[q] = p

    remaining = n
    while heap and remaining > 1:
        length, start, idx = heapq.heappop(heap)
        if not alive[idx] or runs[idx][1] - runs[idx][0] != length or runs[idx][0] != start:
            continue
        if length >= min_duration:
            break
        left, right = prev[idx], nxt[idx]
        if left < 0:
            target = right
        elif right < 0:
            target = left
        elif cum is not None:
            a, b = runs[idx][0], runs[idx][1]
            score_l = cum[b, runs[left][2] - 1] - cum[a, runs[left][2] - 1]
            score_r = cum[b, runs[right][2] - 1] - cum[a, runs[right][2] - 1]
            target = left if score_l >= score_r else right
        else:
            len_l = runs[left][1] - runs[left][0]
            len_r = runs[right][1] - runs[right][0]
            target = left if len_l >= len_r else right
        runs[idx][2] = runs[target][2]
        absorb(target, idx)
        remaining -= 1
        # coalesce with the run on the far side when it carries the same state
        for other in (prev[target], nxt[target]):
            if other >= 0 and runs[other][2] == runs[target][2]:
                absorb(target, other)
                remaining -= 1
        heapq.heappush(heap, (runs[target][1] - runs[target][0], runs[target][0], target))

    out = [tuple(r) for idx, r in enumerate(runs) if alive[idx]]
    out.sort()
    return [(int(a), int(b), int(s)) for a, b, s in out]


def hyperparameter_grid(signal: PreprocessedSignal, base: SegmentationConfig, grid: dict) -> list[dict]:
    """Run the segmentation for every combination in ``grid`` and report the final objectives.

    ``grid`` maps config field names to candidate values. The caller picks
    the setting; nothing is selected automatically.
    """
    from dataclasses import replace
    from itertools import product

    keys = sorted(grid)
    out = []
    for values in product(*(grid[k] for k in keys)):
        cfg = replace(base, **dict(zip(keys, values)))
        res = infer_segmentation(signal, cfg)
        out.append(
            {
                "params": dict(zip(keys, values)),
                "objective": float(res.objective_trace[-1]),
                "n_states": len(res.states),
            }
        )
    return out
