"""Grid search with local refinement for low-dimensional maximisation."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CHUNK = 1 << 16


def thread_count() -> int:
    """Worker cap from ``SYSTOLICA_THREADS`` (default 1)."""
    raw = os.environ.get("SYSTOLICA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class ScanResult:
    best_x: np.ndarray
    best_value: float
    evaluations: int
    history: list[tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list, repr=False)


def _grid(lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _evaluate(f: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, threads: int) -> np.ndarray:
    chunks = [pts[i:i + CHUNK] for i in range(0, len(pts), CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(f, chunks))
    else:
        parts = [f(c) for c in chunks]
    vals = np.concatenate(parts).astype(float)
    return np.where(np.isnan(vals), -np.inf, vals)


def grid_refine_max(f: Callable[[np.ndarray], np.ndarray], lower, upper, grid: int = 64,
                    rounds: int = 3, shrink: float = 4.0, threads: int | None = None,
                    keep_history: bool = False) -> ScanResult:
    """Maximise a vectorised ``f`` over a box.

    A ``grid``-point-per-axis scan is followed by ``rounds`` rescans of a box
    ``shrink`` times smaller, centred on the incumbent and kept inside the
    original bounds.  Ties go to the lexicographically smallest point, so the
    result does not depend on chunking or thread count.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if grid < 2:
        raise ValueError("grid needs at least 2 points per axis")
    threads = thread_count() if threads is None else threads
    lo, hi = lower.copy(), upper.copy()
    best_x, best_v = None, -np.inf
    history = []
    evals = 0
    for r in range(rounds + 1):
        pts = _grid(lo, hi, grid)
        vals = _evaluate(f, pts, threads)
        evals += len(pts)
        if keep_history:
            history.append((r, pts, vals))
        i = int(np.argmax(vals))
        x, v = pts[i], float(vals[i])
        if best_x is None or v > best_v or (v == best_v and tuple(x) < tuple(best_x)):
            best_x, best_v = x.copy(), v
        half = (hi - lo) / (2 * shrink)
        # slide the box back inside the bounds rather than cropping it
        centre = np.clip(best_x, lower + half, upper - half)
        lo, hi = centre - half, centre + half
    return ScanResult(best_x, best_v, evals, history)
