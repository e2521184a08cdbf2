"""Timing the compiled kernels against their numpy reference twins."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .kernels import backends


@dataclass
class BenchRow:
    kernel: str
    ms: dict[str, float]       # backend name -> best-of-N milliseconds
    max_diff: float            # worst |a - b| across backend outputs


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def _flatten(out) -> list[np.ndarray]:
    if isinstance(out, (tuple, list)):
        return [np.asarray(o) for o in out]
    return [np.asarray(out)]


def _problems(seed: int):
    """(name, runner(backend) -> output) pairs at desk-scale shapes."""
    rng = np.random.default_rng(seed)

    n_ev = 20000
    surf_args = (rng.integers(0, 64, n_ev), rng.integers(0, 48, n_ev),
                 rng.integers(0, 2, n_ev),
                 np.sort(rng.random(n_ev)).astype(np.float32))

    def run_lnes(b):
        surface = np.zeros((48, 64, 2), np.float32)
        b.lnes_accumulate(surface, *surf_args)
        return surface

    x = rng.standard_normal((40, 8, 48, 64)).astype(np.float32)
    cols = rng.standard_normal((40, 72, 48 * 64)).astype(np.float32)
    maps = rng.standard_normal((80, 12, 16, 8)).astype(np.float32)
    ys = rng.uniform(-1, 13, (80, 768)).astype(np.float32)
    xs = rng.uniform(-1, 17, (80, 768)).astype(np.float32)
    grad3 = rng.standard_normal((80, 768, 8)).astype(np.float32)
    i_prev = rng.standard_normal((48, 64)).astype(np.float64)
    i_now = i_prev + rng.standard_normal((48, 64)) * 0.4

    yield "lnes_accumulate", run_lnes
    yield "im2col", lambda b: b.im2col(x, 3, 3, 1, 1)
    yield "col2im", lambda b: b.col2im(cols, 8, 48, 64, 3, 3, 1, 1)
    yield "bilinear_gather", lambda b: b.bilinear_gather(maps, ys, xs)
    yield "bilinear_scatter", lambda b: b.bilinear_scatter(grad3, ys, xs, 12, 16)
    yield "bilinear_coord_grads", \
        lambda b: b.bilinear_coord_grads(maps, ys, xs, grad3)
    yield "emit_events", \
        lambda b: b.emit_events(i_now, i_prev, i_prev.copy(), 0, 1000, 0.2)


def bench_kernels(repeats: int = 5, seed: int = 0) -> list[BenchRow]:
    """Best-of-N wall time per kernel per backend, plus output agreement."""
    impls = backends()
    rows = []
    for name, runner in _problems(seed):
        ms = {}
        outs = {}
        for bname, mod in impls.items():
            runner(mod)  # warm up (and JIT-free sanity run)
            ms[bname] = _time(lambda: runner(mod), repeats)
            outs[bname] = _flatten(runner(mod))
        diff = 0.0
        ref = outs["numpy"]
        for bname, got in outs.items():
            for a, b in zip(ref, got):
                diff = max(diff, float(np.abs(a.astype(np.float64)
                                              - b.astype(np.float64)).max())
                           if a.size else 0.0)
        rows.append(BenchRow(name, ms, diff))
    return rows


def format_table(rows: list[BenchRow]) -> str:
    names = sorted({b for r in rows for b in r.ms})
    head = f"{'kernel':<22}" + "".join(f"{n + ' (ms)':>14}" for n in names)
    if len(names) > 1:
        head += f"{'speedup':>10}"
    head += f"{'max diff':>12}"
    lines = [head]
    for r in rows:
        line = f"{r.kernel:<22}" + "".join(f"{r.ms.get(n, float('nan')):>14.3f}"
                                           for n in names)
        if len(names) > 1 and "cython" in r.ms and "numpy" in r.ms:
            line += f"{r.ms['numpy'] / r.ms['cython']:>10.2f}"
        elif len(names) > 1:
            line += f"{'-':>10}"
        line += f"{r.max_diff:>12.2e}"
        lines.append(line)
    return "\n".join(lines)
