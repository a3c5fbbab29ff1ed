"""Portable deterministic RNG for reproducible query subsampling.

Subsamples must be identical across machines, platforms, and language
runtimes, so the generator is pinned to a fixed, fully specified
algorithm instead of any standard library's (version-dependent) RNG:

* State seeding: one step of splitmix64 over the user seed (masked to 64
  bits). A zero result is replaced by the splitmix64 gamma constant, as
  xorshift requires nonzero state.
* Stream: xorshift64* — ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27``
  (64-bit wrapping), output ``x * 0x2545F4914F6CDD1D`` (64-bit wrapping).
* Bounded draws use unbiased rejection sampling: draw 64-bit values until
  one is below ``2**64 - (2**64 % m)``, then reduce modulo ``m``.
* Sampling without replacement is a partial Fisher–Yates shuffle of the
  index list (picking position ``i + next_below(n - i)`` at step i),
  after which the chosen indices are sorted ascending so the sample
  preserves the input's relative order.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (output, next_state)."""
    state = (state + _GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31), state


class Xorshift64Star:
    """xorshift64* stream seeded via one splitmix64 step."""

    def __init__(self, seed: int) -> None:
        value, _ = splitmix64(seed & _MASK)
        self._x = value if value != 0 else _GAMMA

    def next_u64(self) -> int:
        x = self._x
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self._x = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def next_below(self, m: int) -> int:
        """Uniform integer in [0, m) via rejection sampling (no modulo bias)."""
        if m < 1:
            raise ValueError("bound must be >= 1")
        limit = (_MASK + 1) - ((_MASK + 1) % m)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % m


def sample_without_replacement(n_total: int, n_pick: int, seed: int) -> list[int]:
    """Pick ``n_pick`` distinct indices from range(n_total), sorted ascending."""
    if n_pick > n_total:
        raise ValueError(f"cannot pick {n_pick} items from {n_total}")
    if n_pick < 0:
        raise ValueError("n_pick must be >= 0")
    rng = Xorshift64Star(seed)
    idx = list(range(n_total))
    for i in range(n_pick):
        j = i + rng.next_below(n_total - i)
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:n_pick])
