"""Deterministic RNG derivation, chunk iteration and float formatting.

Every stochastic operation in this package takes an integer seed and derives
independent generators from (seed, index, ...) tuples.  Work split into chunks
uses one generator per chunk index, so results never depend on scheduling,
thread count or chunk evaluation order.
"""

import numpy as np

# Upper bound on cells (trials x agents) materialized per chunk.
CHUNK_CELLS = 2_000_000


def check_seed(seed):
    """Validate and normalize a user-supplied seed."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    if seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    return int(seed)


def as_generator(seed_or_rng):
    """Accept an integer seed or a numpy Generator and return a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(check_seed(seed_or_rng))


def subseed_rng(seed, *path):
    """Generator derived deterministically from (seed, *path)."""
    entropy = [check_seed(seed)] + [int(p) for p in path]
    return np.random.default_rng(entropy)


def derive_seed(seed, *path):
    """Independent integer sub-seed for a named role under a master seed."""
    ss = np.random.SeedSequence([check_seed(seed)] + [int(p) for p in path])
    return int(ss.generate_state(1, np.uint64)[0])


def chunk_sizes(total, size):
    """Yield (chunk_index, count) pairs covering `total` items."""
    if total < 0:
        raise ValueError("total must be nonnegative")
    size = max(1, int(size))
    index = 0
    done = 0
    while done < total:
        count = min(size, total - done)
        yield index, count
        index += 1
        done += count


def trials_per_chunk(n_agents):
    """Chunk size (in trials) for simulations touching n_agents per trial."""
    return max(64, CHUNK_CELLS // max(1, int(n_agents)))


def fmt17(x):
    """Decimal formatting with 17 significant digits (lossless round trip)."""
    return format(float(x), ".17g")
