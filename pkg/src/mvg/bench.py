"""Benchmark the compiled kernels against the pure-numpy fallback.

Covers the three hot paths: the LSTM cell step (training inner loop),
Levenshtein distance (exemplar mining), and tree edit distance (ST
metric). Exposed as `mvg bench`.
"""

import time

import numpy as np

from ._core import pure, compiled_available


def _timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _lstm_case(impl, bsz=64, hdim=64, steps=200):
    rng = np.random.default_rng(0)
    pre = np.ascontiguousarray(rng.standard_normal((bsz, 4 * hdim)))
    c = np.ascontiguousarray(rng.standard_normal((bsz, hdim)))

    def run():
        cc = c
        for _ in range(steps):
            h, cc, gates = impl.lstm_cell_forward(pre, cc)
            impl.lstm_cell_backward(h, cc, gates, c, cc)
    return run


def _lev_case(impl, n=200, length=24):
    rng = np.random.default_rng(1)
    seqs = rng.integers(0, 8, size=(n, length)).astype(np.int32)

    def run():
        for i in range(0, n - 1, 2):
            impl.levenshtein(seqs[i], seqs[i + 1])
    return run


def _ted_case(impl, n=40):
    from .trees import _annotate, strip_tokens
    from .corpus import SyntheticWorldConfig, SyntheticWorld
    world = SyntheticWorld(SyntheticWorldConfig(seed=0))
    rng = np.random.default_rng(2)
    trees = []
    for _ in range(n):
        lang = world.langs[int(rng.integers(0, 2))]
        t = int(rng.integers(0, len(world.config.templates[lang])))
        _, _, tree = world.render(lang, t, world.sample_frame(rng))
        codes = {}
        trees.append(_annotate(strip_tokens(tree),
                               lambda l: codes.setdefault(l, len(codes))))

    def run():
        for i in range(0, n - 1, 2):
            a, b = trees[i], trees[i + 1]
            impl.tree_edit_distance(a[0], a[1], a[2], b[0], b[1], b[2])
    return run


def run_bench(repeats=5):
    """Returns printable rows comparing backends; speedup > 1 means the
    compiled extension is faster."""
    impls = [("python", pure)]
    if compiled_available():
        from ._core import _ckernels
        impls.append(("compiled", _ckernels))
    cases = [("lstm_cell fwd+bwd (B=64,H=64) x200", _lstm_case),
             ("levenshtein (len 24) x100", _lev_case),
             ("tree_edit_distance x20", _ted_case)]
    rows = []
    for label, factory in cases:
        times = {}
        for name, impl in impls:
            times[name] = _timeit(factory(impl), repeats)
        line = f"{label}: " + "  ".join(
            f"{name}={t * 1000:.2f}ms" for name, t in times.items())
        if "compiled" in times:
            line += f"  speedup={times['python'] / times['compiled']:.1f}x"
        rows.append(line)
    return rows
