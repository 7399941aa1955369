"""Independent reference computations the tests compare against.

Each oracle takes the slow, direct route (explicit loops, exhaustive
search, a general-purpose convex solver) so it shares no code path with
the package.
"""
import itertools
import math

import cvxpy as cp
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.signal import lfilter
from scipy.stats import norm

from gaitseg.ar import ARParams
from gaitseg.switching import TransitionModel


def reference_trend(x, lam):
    """Interior-point solve of the same trend-filtering program."""
    z = cp.Variable(x.size)
    problem = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(x - z) + lam * cp.norm1(cp.diff(z, 2))))
    problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return np.asarray(z.value), problem.value


def simulate_ar(coeffs, n, seed, noise_var=1.0, burn=2000):
    r = np.random.default_rng(seed)
    e = r.normal(scale=np.sqrt(noise_var), size=n + burn)
    return lfilter([1.0], np.concatenate([[1.0], -np.asarray(coeffs, dtype=float)]), e)[burn:]


def matched_accuracy(labels, truth):
    """Per-sample accuracy under the best one-to-one matching of label ids."""
    table = np.zeros((labels.max() + 1, truth.max() + 1))
    np.add.at(table, (labels, truth), 1)
    rows, cols = linear_sum_assignment(-table)
    return table[rows, cols].sum() / labels.size


def brute_force_path(x, states, trans, initial):
    """Exhaustive search over every labelling, scoring each sample directly."""
    k = len(states)
    ll = np.zeros((x.size, k))
    for s in range(k):
        p = states[s + 1]
        for t in range(p.order, x.size):
            pred = p.mean + sum(p.coeffs[j] * x[t - j - 1] for j in range(p.order))
            ll[t, s] = norm.logpdf(x[t], pred, np.sqrt(p.noise_variance))
    log_pi = np.log(trans.pi[:, :k])
    best, best_path = -np.inf, None
    for path in itertools.product(range(k), repeat=x.size):
        score = np.log(initial[path[0]]) + ll[0, path[0]]
        for t in range(1, x.size):
            score += log_pi[path[t - 1], path[t]] + ll[t, path[t]]
        if score > best:
            best, best_path = score, path
    return np.array(best_path) + 1


def random_viterbi_instance(seed):
    """Eight samples, two AR(1) states and random transitions."""
    r = np.random.default_rng(seed)
    x = r.normal(size=8) * r.uniform(0.5, 2.0)
    states = {i + 1: ARParams(1, [r.uniform(-0.9, 0.9)], r.uniform(0.3, 2.0), r.normal()) for i in range(2)}
    trans = TransitionModel(r.dirichlet(np.ones(3), size=2))
    initial = r.dirichlet(np.ones(2))
    return x, states, trans, initial


def two_pass_std(values):
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


def direct_dft_energy(values, fs, lo, hi):
    """``sum |X_k|^2 / n`` over in-band bins, with each X_k summed term by term."""
    n = len(values)
    total = 0.0
    for k in range(n // 2 + 1):
        f = k * fs / n
        if lo <= f <= hi:
            re = sum(values[j] * math.cos(2 * math.pi * k * j / n) for j in range(n))
            im = -sum(values[j] * math.sin(2 * math.pi * k * j / n) for j in range(n))
            total += re * re + im * im
    return total / n


def double_loop_nasc(values, lo, hi):
    n = len(values)
    best = -1.0
    for lag in range(lo, min(hi, n - 2) + 1):
        m = n - lag
        mu_a = sum(values[i] for i in range(m)) / m
        mu_b = sum(values[i + lag] for i in range(m)) / m
        num = sum((values[i] - mu_a) * (values[i + lag] - mu_b) for i in range(m))
        va = sum((values[i] - mu_a) ** 2 for i in range(m))
        vb = sum((values[i + lag] - mu_b) ** 2 for i in range(m))
        best = max(best, num / math.sqrt(va * vb) if va * vb > 0 else 0.0)
    return best


def brute_force_threshold(scores, labels):
    """Try every midpoint; the last best one wins, so ties go to the larger threshold."""
    pooled = sorted(set(np.concatenate(scores).tolist()))
    cands = [pooled[0]] if len(pooled) == 1 else [(a + b) / 2 for a, b in zip(pooled, pooled[1:])]
    best, best_value = None, -1.0
    for c in cands:
        bas = []
        for s, l in zip(scores, labels):
            if l.all() or not l.any():
                continue
            pred = s >= c
            sens = np.sum(pred & l) / np.sum(l)
            spec = np.sum(~pred & ~l) / np.sum(~l)
            bas.append((sens + spec) / 2)
        value = sum(bas) / len(bas)
        if value >= best_value:
            best, best_value = c, value
    return best, best_value


def loop_confusion(pred, truth):
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for p, t in zip(pred, truth):
        counts[("t" if bool(p) == bool(t) else "f") + ("p" if p else "n")] += 1
    return counts


def pairwise_auc(scores, truth):
    """Probability that a random positive outscores a random negative, ties counted half."""
    pos = [s for s, y in zip(scores, truth) if y]
    neg = [s for s, y in zip(scores, truth) if not y]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))
