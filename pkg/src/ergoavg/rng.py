"""Counter-based randomness built on numpy's Philox generator.

Every random quantity in the package is a pure function of a 64-bit seed,
a small integer path (identifying the consumer), and a sample index.  Each
sample owns a fixed number of Philox counter blocks, so a batch can be
generated in one call or in arbitrary chunks with bitwise-identical results.
Philox counter blocks hold four float64 draws; strides are padded up to the
next multiple of four.
"""

import numpy as np

BLOCK = 4  # float64 draws per Philox counter block


def _bit_generator(seed, path):
    return np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(path)))


def uniform_block(seed, path, count, stride, start=0):
    """Per-sample uniforms on [0, 1) with counter-based indexing.

    Returns a ``(count, stride)`` array where row ``i`` depends only on
    ``(seed, path, start + i)``.  Generating ``[0, n)`` in one call or as
    chunks ``[0, m)`` and ``[m, n)`` yields identical rows.

    Parameters
    ----------
    seed : int
        Experiment seed.
    path : tuple of int
        Stream identifier, e.g. ``(operation_tag, entry_index)``.
    count, stride : int
        Number of samples and float64 draws consumed per sample.
    start : int
        Index of the first sample in the returned block.
    """
    if count < 0 or stride < 1:
        raise ValueError("count must be >= 0 and stride >= 1")
    blocks_per_sample = -(-stride // BLOCK)
    width = blocks_per_sample * BLOCK
    bg = _bit_generator(seed, path)
    if start:
        bg.advance(start * blocks_per_sample)
    out = np.random.Generator(bg).random(count * width)
    return out.reshape(count, width)[:, :stride]


def uniforms(seed, path, count, start=0):
    """One uniform per sample; shorthand for a stride-1 block."""
    return uniform_block(seed, path, count, 1, start=start)[:, 0]
