"""McKean trees: leaf weights, the random sum V_t, and Monte Carlo checks.

The solution at time t is the law of ``V_t = sum_j pi_j v_j`` where the
``v_j`` are i.i.d. from the initial datum and the weights come from a
random binary tree with ``nu`` leaves, ``P{nu = n} = e^{-t}(1-e^{-t})^{n-1}``.
The tree is grown by splitting a uniformly chosen leaf ``w`` into
``(w cos th, w sin th)``, so ``sum pi_j^2 = 1`` holds samplewise.

Random numbers come from a counter-based SplitMix64 stream inside the
numba kernels. Work is cut into fixed-size shards, each with its own key,
so results do not depend on the number of threads.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from itertools import combinations

import numba as nb
import numpy as np
from scipy.special import gammaln

from .bounds import alpha_m
from .errors import ParameterError, UnsupportedOperationError

# skip the TBB layer probe (warns on old TBB builds) unless the user chose a layer
if "NUMBA_THREADING_LAYER" not in os.environ:
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

SHARD_TRIALS = 1 << 14
MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_TABLE_BITS = 10
_TABLE = 2.0 * np.pi * np.arange(1 << _TABLE_BITS) / (1 << _TABLE_BITS)
_TC = np.cos(_TABLE)
_TS = np.sin(_TABLE)


def mix64(z):
    """SplitMix64 finalizer on Python ints."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class RngStream:
    """Seedable, splittable random stream.

    ``(seed, stream_id)`` fixes the sequence. Each call that consumes
    randomness takes the next block of shard indices, so repeated calls
    give fresh draws and a fresh stream replays them exactly.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        self._key = mix64(mix64(self.seed + GOLDEN) ^ mix64(self.stream_id * 0xD1B54A32D192ED03 + 1))
        self._next_shard = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def take(self, n_shards):
        start = self._next_shard
        self._next_shard += int(n_shards)
        return start

    def shard_key(self, shard):
        return mix64(self._key ^ mix64((shard + 1) * GOLDEN))

    def shard_generator(self, shard):
        """numpy Generator for datum sampling in one shard."""
        return np.random.Generator(np.random.Philox(key=[self.shard_key(shard), 0x5EED]))

    def spawn(self, stream_id):
        return RngStream(self.seed, stream_id)


@dataclass
class WeightVector:
    nu: int
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.nu,):
            raise ValueError("weights must have length nu")

    def power_sum(self, m):
        return float(np.sum(np.abs(self.weights) ** m))


@dataclass
class TreeSampleStats:
    trials: int
    m: float
    t: float
    mean_power_sum: float
    std_error: float
    nu: int | None = None  # set when the leaf count was forced
    max_identity_error: float = 0.0  # max |sum pi^2 - 1| over the draws
    max_abs_weight: float = 0.0


@dataclass
class McKeanTree:
    """Explicit tree with node angles and leaf depths (documentation use)."""

    angles: list = field(default_factory=list)  # one angle per internal node, in split order
    leaves: list = field(default_factory=list)  # (weight, depth) per leaf

    @property
    def nu(self):
        return len(self.leaves)

    @property
    def weights(self):
        return np.array([w for w, _ in self.leaves])


# ---------------------------------------------------------------- kernels


@nb.njit(inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always", cache=True)
def _uniform(key, ctr):
    return np.int64(_mix(key + ctr * np.uint64(GOLDEN)) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(inline="always", cache=True)
def _draw_nu(key, ctr, log_r, forced):
    if forced > 0:
        return forced
    if log_r == 0.0:
        return 1
    u = _uniform(key, ctr)
    x = math.log1p(-u) / log_r
    if x > 4.0e18:
        return np.int64(4e18)
    return 1 + np.int64(x)


@nb.njit(inline="always", cache=True)
def _split(key, ctr, n, tc, ts):
    """Uniform index in [0, n) and (cos th, sin th) for th uniform on [0, 2pi).

    One 64-bit draw: the high word picks the leaf, the low word the angle
    (10 table bits plus a 22-bit remainder, resolution 2pi / 2^32).
    """
    r = _mix(key + ctr * np.uint64(GOLDEN))
    i = np.int64(((r >> np.uint64(32)) * np.uint64(n)) >> np.uint64(32))
    k = np.int64((r >> np.uint64(22)) & np.uint64(1023))
    d = np.int64(r & np.uint64((1 << 22) - 1)) * (6.283185307179586 / 4294967296.0)
    d2 = d * d
    cd = 1.0 - d2 * (0.5 - d2 * (1.0 / 24 - d2 * (1.0 / 720)))
    sd = d * (1.0 - d2 * (1.0 / 6 - d2 * (1.0 / 120 - d2 * (1.0 / 5040))))
    return i, tc[k] * cd - ts[k] * sd, ts[k] * cd + tc[k] * sd


@nb.njit(cache=True)
def _grow(buf, need):
    out = np.empty(max(2 * buf.size, need))
    out[: buf.size] = buf
    return out


@nb.njit(cache=True)
def _tree(key, ctr, log_r, forced, buf, tc, ts):
    """One tree into ``buf[:nu]``; returns (nu, next counter, buffer)."""
    nu = _draw_nu(key, ctr, log_r, forced)
    ctr += np.uint64(1)
    if nu > buf.size:
        buf = _grow(buf, nu)
    buf[0] = 1.0
    for n in range(1, nu):
        i, c, s = _split(key, ctr, n, tc, ts)
        ctr += np.uint64(1)
        w = buf[i]
        buf[i] = w * c
        buf[n] = w * s
    return nu, ctr, buf


@nb.njit(parallel=True, cache=True)
def _power_sum_shards(keys, counts, log_r, forced, m, tc, ts):
    n_shards = keys.size
    sums = np.zeros(n_shards)
    sumsq = np.zeros(n_shards)
    worst = np.zeros(n_shards)
    wmax = np.zeros(n_shards)
    for s in nb.prange(n_shards):
        key = keys[s]
        buf = np.empty(1 << 12)
        ctr = np.uint64(0)
        acc = 0.0
        acc2 = 0.0
        err = 0.0
        big = 0.0
        for _ in range(counts[s]):
            nu, ctr, buf = _tree(key, ctr, log_r, forced, buf, tc, ts)
            sq = 0.0
            ps = 0.0
            for j in range(nu):
                w = buf[j]
                w2 = w * w
                sq += w2
                if m == 4.0:
                    ps += w2 * w2
                elif m == 2.0:
                    ps += w2
                else:
                    ps += abs(w) ** m
                if abs(w) > big:
                    big = abs(w)
            e = abs(sq - 1.0)
            if e > err:
                err = e
            acc += ps
            acc2 += ps * ps
        sums[s] = acc
        sumsq[s] = acc2
        worst[s] = err
        wmax[s] = big
    return sums, sumsq, worst, wmax


@nb.njit(cache=True)
def _flat_trees(key, count, log_r, forced, tc, ts):
    nus = np.empty(count, dtype=np.int64)
    flat = np.empty(max(count * 4, 1024))
    buf = np.empty(1 << 12)
    ctr = np.uint64(0)
    pos = 0
    for k in range(count):
        nu, ctr, buf = _tree(key, ctr, log_r, forced, buf, tc, ts)
        nus[k] = nu
        if pos + nu > flat.size:
            flat = _grow(flat, pos + nu)
        flat[pos:pos + nu] = buf[:nu]
        pos += nu
    return nus, flat[:pos]


@nb.njit(parallel=True, cache=True)
def _ecf_sum(x, h, n_xi):
    """sum_j exp(i k h x_j) for k < n_xi by phase recurrence, resynced every 64 steps."""
    n_chunks = max(1, min(64, x.size // 4096))
    part_re = np.zeros((n_chunks, n_xi))
    part_im = np.zeros((n_chunks, n_xi))
    bounds = np.linspace(0, x.size, n_chunks + 1).astype(np.int64)
    for c in nb.prange(n_chunks):
        re = part_re[c]
        im = part_im[c]
        for j in range(bounds[c], bounds[c + 1]):
            xj = x[j]
            zr = math.cos(h * xj)
            zi = math.sin(h * xj)
            wr = 1.0
            wi = 0.0
            for k in range(n_xi):
                if k % 64 == 0 and k > 0:
                    wr = math.cos(k * h * xj)
                    wi = math.sin(k * h * xj)
                re[k] += wr
                im[k] += wi
                wr, wi = wr * zr - wi * zi, wr * zi + wi * zr
    return part_re.sum(axis=0), part_im.sum(axis=0)


# ------------------------------------------------------------- operations


def _log_r(t):
    if t < 0:
        raise ParameterError("t", "must be non-negative")
    return math.log1p(-math.exp(-t)) if t > 0 else 0.0


def _forced(nu):
    if nu is None:
        return 0
    if int(nu) < 1:
        raise ParameterError("nu", "must be at least 1")
    return int(nu)


def _shards(rng, trials):
    n = -(-trials // SHARD_TRIALS)
    start = rng.take(n)
    counts = np.full(n, SHARD_TRIALS, dtype=np.int64)
    counts[-1] = trials - SHARD_TRIALS * (n - 1)
    keys = np.array([rng.shard_key(start + i) for i in range(n)], dtype=np.uint64)
    return start, keys, counts


def sample_weights(t, rng, nu=None):
    """One leaf-weight vector; ``nu`` forces the leaf count."""
    shard = rng.take(1)
    nus, flat = _flat_trees(np.uint64(rng.shard_key(shard)), 1, _log_r(t), _forced(nu), _TC, _TS)
    return WeightVector(int(nus[0]), flat)


def sample_weight_batch(t, trials, rng, nu=None):
    """``trials`` weight vectors as (nu array, flat weights, offsets)."""
    _, keys, counts = _shards(rng, trials)
    parts = [_flat_trees(k, int(c), _log_r(t), _forced(nu), _TC, _TS) for k, c in zip(keys, counts)]
    nus = np.concatenate([p[0] for p in parts])
    flat = np.concatenate([p[1] for p in parts])
    offsets = np.concatenate([[0], np.cumsum(nus)])
    return nus, flat, offsets


def sample_tree(t, rng, nu=None):
    """Explicit McKean tree with the same law as :func:`sample_weights`."""
    gen = rng.shard_generator(rng.take(1))
    if nu is None:
        nu = 1 if t == 0 else int(gen.geometric(math.exp(-t)))
    tree = McKeanTree(leaves=[(1.0, 0)])
    for n in range(1, nu):
        i = int(gen.integers(n))
        th = gen.uniform(0.0, 2.0 * np.pi)
        w, depth = tree.leaves[i]
        tree.angles.append(th)
        tree.leaves[i] = (w * math.cos(th), depth + 1)
        tree.leaves.append((w * math.sin(th), depth + 1))
    return tree


def _check_sampler(datum):
    if not datum.has_density or datum.family == "cf_series":
        raise UnsupportedOperationError(f"datum family {datum.family!r} has no sampler")


def sample_velocities(datum, t, size, rng, nu=None, return_nu=False):
    """``size`` independent draws of ``V_t = sum pi_j v_j``."""
    _check_sampler(datum)
    start, keys, counts = _shards(rng, size)
    out = np.empty(size)
    nus_all = np.empty(size, dtype=np.int64)
    pos = 0
    for i, (key, count) in enumerate(zip(keys, counts)):
        nus, flat = _flat_trees(key, int(count), _log_r(t), _forced(nu), _TC, _TS)
        v = datum.sample(rng.shard_generator(start + i), flat.size)
        offsets = np.concatenate([[0], np.cumsum(nus)[:-1]])
        out[pos:pos + count] = np.add.reduceat(flat * v, offsets)
        nus_all[pos:pos + count] = nus
        pos += count
    return (out, nus_all) if return_nu else out


def sample_velocity(datum, t, rng):
    return float(sample_velocities(datum, t, 1, rng)[0])


def conditional_power_sum_mean(m, n):
    """``E[sum |pi_j|^m | nu = n] = Gamma(2a + n - 1) / (Gamma(2a) Gamma(n))``, ``a = alpha_m``."""
    if not m > 0:
        raise ParameterError("m", "must be positive")
    if int(n) < 1:
        raise ParameterError("n", "must be at least 1")
    a2 = 2.0 * alpha_m(m)
    return math.exp(gammaln(a2 + n - 1) - gammaln(a2) - gammaln(n))


def expected_power_sum(m, t):
    """``E[sum |pi_j|^m] = exp(-(1 - 2 alpha_m) t)``."""
    if not m > 0:
        raise ParameterError("m", "must be positive")
    if t < 0:
        raise ParameterError("t", "must be non-negative")
    return math.exp(-(1.0 - 2.0 * alpha_m(m)) * t)


def estimate_power_sum(m, t, trials, rng, nu=None):
    """Monte Carlo mean and standard error of ``sum |pi_j|^m``."""
    if trials < 100:
        raise ParameterError("trials", "need at least 100")
    if not m > 0:
        raise ParameterError("m", "must be positive")
    _, keys, counts = _shards(rng, trials)
    sums, sumsq, worst, wmax = _power_sum_shards(
        keys, counts, _log_r(t), _forced(nu), float(m), _TC, _TS
    )
    s = math.fsum(sums)
    s2 = math.fsum(sumsq)
    mean = s / trials
    var = max(0.0, (s2 - trials * mean * mean) / (trials - 1))
    se = math.sqrt(var / trials)
    if m == 2:
        # the identity holds samplewise; the spread is rounding noise
        mean, se = 1.0, 0.0
    return TreeSampleStats(
        trials, float(m), float(t), mean, se, nu,
        float(worst.max()), float(wmax.max()),
    )


def check_weight_identity(t, trials, rng):
    """Largest ``|sum pi_j^2 - 1|`` over ``trials`` sampled weight vectors."""
    return estimate_power_sum(2, t, trials, rng).max_identity_error


def power_sums(weights, h):
    """``M_j = sum pi^{2j}`` for ``j = 1..h``."""
    w2 = np.asarray(getattr(weights, "weights", weights), dtype=float) ** 2
    return np.array([np.sum(w2**j) for j in range(1, h + 1)])


def elementary_symmetric(weights, h):
    """``E_h(pi_1^2, ..., pi_nu^2)`` by Newton's identities."""
    w = np.asarray(getattr(weights, "weights", weights), dtype=float)
    if h < 0:
        raise ParameterError("h", "must be non-negative")
    if h > w.size:
        return 0.0
    M = power_sums(w, h)
    e = [1.0]
    for k in range(1, h + 1):
        e.append(sum((-1) ** (j - 1) * e[k - j] * M[j - 1] for j in range(1, k + 1)) / k)
    return float(e[h])


def elementary_symmetric_bruteforce(weights, h):
    w2 = np.asarray(getattr(weights, "weights", weights), dtype=float) ** 2
    return float(sum(np.prod(c) for c in combinations(w2, h))) if h else 1.0


def empirical_cf(samples, template):
    """``(1/n) sum_j exp(i xi_k x_j)`` on ``template``'s grid."""
    x = np.ascontiguousarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ParameterError("samples", "need at least one sample")
    re, im = _ecf_sum(x, template.step, template.n_points)
    return template.like((re + 1j * im) / x.size, hermitian_even=True)


def empirical_density(samples, template, v_max, n_v, datum=None, t=None):
    """Density estimate by inverting the empirical CF over ``template``'s grid.

    With ``datum`` and ``t`` the atom-free part ``e^{-t} f_0`` is removed
    from the CF and added back exactly, as for the solver density.
    """
    from .wild_solver import invert_to_density

    ecf = empirical_cf(samples, template)
    p = 0.0 if datum is None else math.exp(-t)
    if p:
        ecf = ecf.like(ecf.values - p * datum._cf_array(ecf.xi))
    dens = invert_to_density(ecf, v_max, n_v, decay_tol=None, mass_tol=None)
    if p:
        dens.values += p * datum.density(dens.v)
    dens.meta["samples"] = int(np.size(samples))
    return dens


def write_samples_csv(path, values, nus):
    with open(path, "w", newline="") as fh:
        fh.write("# kac-relax v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "nu", "value"])
        for k, (nu, val) in enumerate(zip(nus, values)):
            w.writerow([k, int(nu), f"{val:.17g}"])
