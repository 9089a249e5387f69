"""Deterministic 64-bit seed derivation.

Every stochastic choice in the harness (parameter init, dataset split,
per-epoch shuffles) is keyed by a seed derived here, so runs are
reproducible across processes and worker counts.
"""

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 scrambling round."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix64(seed: int, *tokens: int | str) -> int:
    """Fold integer or string tokens into a seed with splitmix64 rounds.

    Strings are absorbed as little-endian 8-byte chunks so the result does
    not depend on Python's salted hash().
    """
    state = splitmix64(seed & MASK64)
    for token in tokens:
        if isinstance(token, str):
            raw = token.encode("utf-8")
            for i in range(0, len(raw), 8):
                chunk = int.from_bytes(raw[i:i + 8], "little")
                state = splitmix64(state ^ chunk)
            state = splitmix64(state ^ len(raw))
        else:
            state = splitmix64(state ^ (int(token) & MASK64))
    return state


def trial_seed(global_seed: int, config_id: str, reusing: bool) -> int:
    """Per-trial seed: distinct per config and per arm, stable across runs."""
    return mix64(global_seed, config_id, int(reusing))
