"""Seeded pseudo-random number generation.

All randomness in the package flows through `Xoshiro256` instances whose
seeds come from the run configuration, so single-threaded runs are
bit-reproducible. The generator is xoshiro256** with splitmix64 seeding;
bulk array fills step a bank of lanes in parallel with numpy so that
large parameter tensors initialize quickly.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state, returning (new_state, output)."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def derive_seed(master: int, *tags: int | str) -> int:
    """Derive an independent stream seed from a master seed and tags.

    Tags may be integers (stage/episode counters) or short strings
    (purpose labels); the derivation is a pure function of its inputs.
    """
    s = master & _MASK
    for tag in tags:
        if isinstance(tag, str):
            data = tag.encode("utf-8")
            # type and length markers keep tag boundaries unambiguous:
            # ("ab",) must not collide with ("a", "b")
            s, _ = _splitmix64(s ^ 1)
            s, _ = _splitmix64(s ^ len(data))
            for byte in data:
                s, _ = _splitmix64(s ^ byte)
        else:
            s, _ = _splitmix64(s ^ 2)
            s, _ = _splitmix64(s ^ (int(tag) & _MASK))
    _, out = _splitmix64(s)
    return out


class Xoshiro256:
    """xoshiro256** generator with scalar draws and vectorized fills."""

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        s = int(seed) & _MASK
        state = []
        for _ in range(4):
            s, v = _splitmix64(s)
            state.append(v)
        self._s = state

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s1 * 5) & _MASK
        result = ((((x << 7) | (x >> 57)) & _MASK) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n), rejection-sampled to avoid modulo bias."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        bound = _MASK + 1 - ((_MASK + 1) % n)
        while True:
            u = self.next_u64()
            if u < bound:
                return u % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, population: int, k: int) -> list[int]:
        """k distinct integers from range(population), order random."""
        if k > population:
            raise ValueError(f"cannot sample {k} items from {population}")
        if k * 3 >= population:
            pool = list(range(population))
            self.shuffle(pool)
            return pool[:k]
        seen: set[int] = set()
        out: list[int] = []
        while len(out) < k:
            v = self.randint(population)
            if v not in seen:
                seen.add(v)
                out.append(v)
        return out

    def spawn(self) -> "Xoshiro256":
        """Child generator seeded from this stream."""
        return Xoshiro256(self.next_u64())

    # -- vectorized fills -------------------------------------------------

    _LANES = 512

    def _lane_states(self, lane_seed: int) -> list[np.ndarray]:
        base = np.arange(self._LANES, dtype=np.uint64)
        s = (np.uint64(lane_seed) + base * np.uint64(_GOLDEN)) & np.uint64(_MASK)
        states = []
        for _ in range(4):
            s = s + np.uint64(_GOLDEN)
            z = s.copy()
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            states.append(z ^ (z >> np.uint64(31)))
        return states

    def _bulk_u64(self, n: int) -> np.ndarray:
        """n raw uint64 draws from a lane bank seeded off this stream."""
        s0, s1, s2, s3 = self._lane_states(self.next_u64())
        steps = -(-n // self._LANES)
        out = np.empty((steps, self._LANES), dtype=np.uint64)
        c7, c57, c17, c45, c19 = (np.uint64(k) for k in (7, 57, 17, 45, 19))
        five, nine = np.uint64(5), np.uint64(9)
        for i in range(steps):
            x = s1 * five
            out[i] = ((x << c7) | (x >> c57)) * nine
            t = s1 << c17
            s2 = s2 ^ s0
            s3 = s3 ^ s1
            s1 = s1 ^ s2
            s0 = s0 ^ s3
            s2 = s2 ^ t
            s3 = (s3 << c45) | (s3 >> c19)
        return out.reshape(-1)[:n]

    def uniform_array(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        shape = tuple(int(d) for d in np.atleast_1d(shape)) if not np.isscalar(shape) else (int(shape),)
        n = int(np.prod(shape)) if shape else 1
        u = (self._bulk_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)

    def normal_array(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Box-Muller on bulk uniforms; u1 shifted into (0, 1] so log is safe."""
        shape = tuple(int(d) for d in np.atleast_1d(shape)) if not np.isscalar(shape) else (int(shape),)
        n = int(np.prod(shape)) if shape else 1
        m = -(-n // 2)
        raw = self._bulk_u64(2 * m)
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (mean + std * z).reshape(shape)
