"""Vectorized Monte Carlo engines shared by the optimizer and the evaluation code.

The weight/threshold optimization evaluates the same trial population at many
(weight, threshold) combinations. Simulating from scratch per combination would
dominate the runtime, so the samplers here simulate each trial's weighted-score
trajectory once (lazily extending the horizon) and store only the running-max
increments of the score; a detection-step query for any threshold is then a
per-row staircase lookup. :class:`IndexProbeSampler` exploits that the score is
affine in the weight being probed at one index, so a single simulation pass
answers queries for every probe value at that index too.

Encounter bits are keyed by (source, block index): results do not depend on
query order, on how far the horizon happened to be extended, or on row
chunking.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .model import RandomSource

_DETECT_DOMAIN = 1
_QUAL_DOMAIN = 2

_BLOCK = 192
_ROW_CHUNK = 32768


class _Staircase:
    """Per-row running-max increments: (value, step) pairs, padded to a matrix."""

    def __init__(self, n: int, k0: int = 8):
        self.n = n
        self._vals = np.full((n, k0), -np.inf, dtype=np.float32)
        self._steps = np.zeros((n, k0), dtype=np.int32)
        self._counts = np.zeros(n, dtype=np.int64)

    def append(self, rows: np.ndarray, values: np.ndarray, steps: np.ndarray) -> None:
        """rows must be sorted (row-major nonzero order); values/steps aligned."""
        if len(rows) == 0:
            return
        cnt = np.bincount(rows, minlength=self.n)
        needed = int((self._counts + cnt).max())
        if needed > self._vals.shape[1]:
            k_new = max(needed, 2 * self._vals.shape[1])
            vals = np.full((self.n, k_new), -np.inf, dtype=np.float32)
            stps = np.zeros((self.n, k_new), dtype=np.int32)
            vals[:, : self._vals.shape[1]] = self._vals
            stps[:, : self._steps.shape[1]] = self._steps
            self._vals, self._steps = vals, stps
        start = np.zeros(self.n, dtype=np.int64)
        np.cumsum(cnt[:-1], out=start[1:])
        slot = self._counts[rows] + (np.arange(len(rows)) - start[rows])
        self._vals[rows, slot] = values
        self._steps[rows, slot] = steps
        self._counts += cnt

    def first_step_above(self, threshold: float) -> np.ndarray:
        """Per-row first step whose running max exceeds threshold; 0 = none yet."""
        hit = self._vals > np.float32(threshold) if np.isfinite(threshold) else self._vals > threshold
        any_hit = hit.any(axis=1)
        first = hit.argmax(axis=1)
        out = self._steps[np.arange(self.n), first].astype(np.int64)
        out[~any_hit] = 0
        return out


def _extract_increments(carried: np.ndarray, series: np.ndarray):
    """Running-max increments of `series` continuing from `carried`.

    Returns (new_carried, rows, cols, values) with rows in row-major order.
    """
    run = np.maximum.accumulate(series, axis=1)
    np.maximum(run, carried[:, None], out=run)
    prev = np.concatenate([carried[:, None], run[:, :-1]], axis=1)
    inc = run > prev
    rows, cols = np.nonzero(inc)
    return run[:, -1].copy(), rows, cols, run[inc]


class _SpoofedSimBase:
    """Lazy block simulation of the spoofed scenario for n independent trials.

    Each encounter yields v=1 with probability 1-p (a non-malicious peer
    contradicts the spoofed fix); the per-trial score D is the weighted sum
    over the last T outcomes, warm-up entries counting 0.
    """

    def __init__(
        self,
        weights: np.ndarray,
        p: float,
        n_trials: int,
        src: RandomSource,
        step_cap: int = 100_000,
        block: int = _BLOCK,
        row_chunk: int = _ROW_CHUNK,
    ):
        if not (0.0 <= p < 1.0):
            raise ValueError(f"p must satisfy 0 <= p < 1, got {p}")
        if n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        self.w = np.asarray(weights, dtype=np.float32)
        self.T = len(self.w)
        self.total_weight = float(np.asarray(weights, dtype=np.float64).sum())
        self.q_mismatch = 1.0 - p
        self.n = int(n_trials)
        self.src = src
        self.step_cap = int(step_cap)
        self.block = int(block)
        self.row_chunk = int(row_chunk)
        self.horizon = 0
        self._n_blocks = 0
        self._tail = np.zeros((self.n, max(self.T - 1, 0)), dtype=np.float32)

    def _block_bits(self, block_index: int) -> np.ndarray:
        seq = self.src._seed_seq(_DETECT_DOMAIN, block_index)
        rng = np.random.Generator(np.random.PCG64(seq))
        u = rng.random((self.n, self.block), dtype=np.float32)
        return (u < self.q_mismatch).astype(np.float32)

    def _chunk_scores(self, padded: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Windowed weighted sums for one row chunk; padded = [tail | block bits]."""
        T, B = self.T, self.block
        D = np.zeros((padded.shape[0], B), dtype=np.float32)
        scratch = np.empty_like(D)
        for lag in range(T):
            wl = weights[lag]
            if wl == 0.0:
                continue
            np.multiply(padded[:, T - 1 - lag : T - 1 - lag + B], wl, out=scratch)
            D += scratch
        return D

    def _extend_one_block(self) -> None:
        bits = self._block_bits(self._n_blocks)
        self._n_blocks += 1
        for lo in range(0, self.n, self.row_chunk):
            hi = min(lo + self.row_chunk, self.n)
            padded = np.concatenate([self._tail[lo:hi], bits[lo:hi]], axis=1)
            self._consume_chunk(lo, hi, padded)
            if self.T > 1:
                self._tail[lo:hi] = padded[:, -(self.T - 1) :]
        self.horizon += self.block

    def _consume_chunk(self, lo: int, hi: int, padded: np.ndarray) -> None:
        raise NotImplementedError

    def extend_to(self, horizon: int) -> None:
        horizon = min(horizon, self.step_cap)
        while self.horizon < horizon:
            self._extend_one_block()

    # -- resolution loops shared by subclasses ---------------------------------

    def _mean_full(self, first_steps: Callable[[], np.ndarray]) -> tuple[float, float]:
        """(mean, capped_fraction); capped trials contribute the cap value."""
        while True:
            steps = first_steps()
            undet = steps == 0
            if not undet.any():
                return float(steps.mean()), 0.0
            if self.horizon >= self.step_cap:
                mean = float(np.where(undet, self.step_cap, steps).mean())
                return mean, float(undet.mean())
            self._extend_one_block()

    def _mean_vs(
        self, first_steps: Callable[[], np.ndarray], target: float, eps: float
    ) -> tuple[float, bool]:
        """Mean-vs-target for the threshold search.

        (value, exact): when exact, value is the fully resolved mean; otherwise
        value is a lower bound already above target + eps (or a cap-censored
        mean), so the caller can branch without resolving slow trials.
        """
        while True:
            steps = first_steps()
            undet = steps == 0
            n_undet = int(undet.sum())
            if n_undet == 0:
                return float(steps.mean()), True
            lower = float((steps.sum() + n_undet * self.horizon) / self.n)
            if lower > target + eps:
                return lower, False
            if self.horizon >= self.step_cap:
                mean = float(np.where(undet, self.step_cap, steps).mean())
                return mean, False
            self._extend_one_block()


class DetectionSampler(_SpoofedSimBase):
    """First-passage sampler for a fixed weight function, many thresholds."""

    def __init__(self, weights, p, n_trials, src, **kw):
        super().__init__(weights, p, n_trials, src, **kw)
        self._carried = np.full(self.n, -np.inf, dtype=np.float32)
        self._stairs = _Staircase(self.n)

    def _consume_chunk(self, lo: int, hi: int, padded: np.ndarray) -> None:
        D = self._chunk_scores(padded, self.w)
        carried, rows, cols, values = _extract_increments(self._carried[lo:hi], D)
        self._carried[lo:hi] = carried
        self._stairs.append(rows + lo, values, self.horizon + cols + 1)

    def detection_steps(self, t: float) -> np.ndarray:
        """Per-trial detection step at threshold t within the current horizon (0 = none)."""
        return self._stairs.first_step_above(t)

    def frac_detected_by(self, t: float, steps_limit: int) -> np.ndarray:
        """Cumulative detection probability at steps 1..steps_limit."""
        self.extend_to(steps_limit)
        steps = self.detection_steps(t)
        detected = (steps > 0) & (steps <= steps_limit)
        hist = np.bincount(steps[detected], minlength=steps_limit + 1)[1:]
        return np.cumsum(hist) / self.n

    def mean_steps(self, t: float) -> tuple[float, float]:
        if t >= self.total_weight:
            return float(self.step_cap), 1.0
        return self._mean_full(lambda: self.detection_steps(t))

    def mean_vs(self, t: float, target: float, eps: float) -> tuple[float, bool]:
        if t >= self.total_weight:
            return float("inf"), False
        return self._mean_vs(lambda: self.detection_steps(t), target, eps)


class IndexProbeSampler(_SpoofedSimBase):
    """First-passage sampler where one index's weight is a free parameter.

    With the weight at (1-based) `index` set to x, the score decomposes as
    D_x(s) = D_base(s) + x * b(s), where D_base uses weight 0 at the index and
    b(s) is the outcome bit at that lag. Detection at threshold t is then the
    earlier of the first b=0 step with D_base > t and the first b=1 step with
    D_base > t - x, so two staircases answer queries for every (x, t) pair.
    """

    def __init__(self, base_weights, index: int, p, n_trials, src, **kw):
        base = np.asarray(base_weights, dtype=np.float64).copy()
        if not (1 <= index <= len(base)):
            raise ValueError(f"index must be in 1..{len(base)}, got {index}")
        base[index - 1] = 0.0
        super().__init__(base, p, n_trials, src, **kw)
        self.index = index
        self.base_total = float(base.sum())
        self._carried0 = np.full(self.n, -np.inf, dtype=np.float32)
        self._carried1 = np.full(self.n, -np.inf, dtype=np.float32)
        self._stairs0 = _Staircase(self.n)
        self._stairs1 = _Staircase(self.n)

    def _consume_chunk(self, lo: int, hi: int, padded: np.ndarray) -> None:
        T, B = self.T, self.block
        D = self._chunk_scores(padded, self.w)
        lag = self.index - 1
        lag_bits = padded[:, T - 1 - lag : T - 1 - lag + B]
        for stairs, carried_all, mask in (
            (self._stairs0, self._carried0, lag_bits == 0.0),
            (self._stairs1, self._carried1, lag_bits != 0.0),
        ):
            series = np.where(mask, D, np.float32(-np.inf))
            carried, rows, cols, values = _extract_increments(carried_all[lo:hi], series)
            carried_all[lo:hi] = carried
            stairs.append(rows + lo, values, self.horizon + cols + 1)

    def detection_steps(self, x: float, t: float) -> np.ndarray:
        s0 = self._stairs0.first_step_above(t)
        s1 = self._stairs1.first_step_above(t - x)
        out = np.where(s0 == 0, s1, np.where(s1 == 0, s0, np.minimum(s0, s1)))
        return out

    def total_weight_at(self, x: float) -> float:
        return self.base_total + x

    def mean_steps(self, x: float, t: float) -> tuple[float, float]:
        if t >= self.total_weight_at(x):
            return float(self.step_cap), 1.0
        return self._mean_full(lambda: self.detection_steps(x, t))

    def mean_vs(self, x: float, t: float, target: float, eps: float) -> tuple[float, bool]:
        if t >= self.total_weight_at(x):
            return float("inf"), False
        return self._mean_vs(lambda: self.detection_steps(x, t), target, eps)


class QualEstimator:
    """True-negative-rate estimator over a fixed population of unspoofed windows.

    Window bits (v=1 with probability p: a malicious peer in the unspoofed
    scenario) are drawn once per (src, T, p, n_trials), so qual comparisons
    across weight functions and thresholds use common random numbers.
    """

    def __init__(self, T: int, p: float, n_trials: int, src: RandomSource):
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"p must be in [0, 1], got {p}")
        seq = src._seed_seq(_QUAL_DOMAIN)
        rng = np.random.Generator(np.random.PCG64(seq))
        u = rng.random((n_trials, T), dtype=np.float32)
        self._windows = (u < p).astype(np.float64)
        self.n = int(n_trials)
        self.T = int(T)

    def qual(self, weights: np.ndarray, t: float) -> float:
        D = self._windows @ np.asarray(weights, dtype=np.float64)
        return float((D <= t).mean())

    def affine(self, base_weights: np.ndarray, index: int) -> tuple[np.ndarray, np.ndarray]:
        """(D_base, column) with the weight at 1-based `index` zeroed, so the
        qual at probe value x and threshold t is mean(D_base + x*column <= t)."""
        base = np.asarray(base_weights, dtype=np.float64).copy()
        base[index - 1] = 0.0
        return self._windows @ base, self._windows[:, index - 1].copy()


def qual_mc(weights, t: float, p: float, n_trials: int, src: RandomSource) -> float:
    """One-shot qual estimate: fraction of unspoofed windows with D <= t."""
    est = QualEstimator(len(weights), p, n_trials, src)
    return est.qual(np.asarray(weights, dtype=np.float64), t)
