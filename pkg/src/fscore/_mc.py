"""Deterministic batched Monte-Carlo reduction.

Samples are produced in fixed batches of ``BATCH_SIZE``. Batch ``b`` of a run
with seed ``s`` draws from its own Philox stream keyed by ``(s, b)``, so a
batch's content never depends on which thread evaluates it. Batch summaries
(count, mean, sum of squared deviations) are merged in batch-index order, which
makes the result bit-identical for any worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BATCH_SIZE = 4096


def default_workers():
    env = os.environ.get("FSL_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"FSL_THREADS must be an integer >= 1, got {env!r}") from None
        if value < 1:
            raise ValueError(f"FSL_THREADS must be an integer >= 1, got {env!r}")
        return value
    return 1


def batch_rng(seed, batch):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(batch)])))


def batch_sizes(n):
    full, rest = divmod(int(n), BATCH_SIZE)
    return [BATCH_SIZE] * full + ([rest] if rest else [])


def _summarize(values):
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    m2 = ((values - mean) ** 2).sum(axis=0)
    return values.shape[0], mean, m2


def _merge(a, b):
    # Chan et al. pairwise update
    na, ma, m2a = a
    nb, mb, m2b = b
    n = na + nb
    delta = mb - ma
    mean = ma + delta * (nb / n)
    m2 = m2a + m2b + delta**2 * (na * nb / n)
    return n, mean, m2


def mc_reduce(batch_fn, n, seed, workers=None):
    """Run ``batch_fn(rng, size)`` over all batches and reduce.

    ``batch_fn`` returns a tuple of per-sample arrays, each with leading axis
    ``size``. Returns a list of ``(mean, std_error)`` pairs, one per stream.
    """
    sizes = batch_sizes(n)
    workers = default_workers() if workers is None else int(workers)

    def run(b):
        out = batch_fn(batch_rng(seed, b), sizes[b])
        if not isinstance(out, tuple):
            out = (out,)
        return [_summarize(v) for v in out]

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(run, range(len(sizes))))
    else:
        summaries = [run(b) for b in range(len(sizes))]

    acc = summaries[0]
    for s in summaries[1:]:
        acc = [_merge(a, b) for a, b in zip(acc, s)]
    result = []
    for count, mean, m2 in acc:
        var = m2 / max(count - 1, 1)
        result.append((mean, np.sqrt(var / count)))
    return result
