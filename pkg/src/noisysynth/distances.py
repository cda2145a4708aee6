"""Distance metrics between equal-length output vectors.

All metrics return nonnegative integers.  ``dl_metric`` is the restricted
Damerau-Levenshtein distance (optimal string alignment): insertions,
deletions, substitutions and transpositions of adjacent characters, with no
substring edited twice.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

from noisysynth.errors import ConfigError


def _same_length(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise ConfigError(f"vectors have different lengths {len(a)} and {len(b)}")


def _is_str(v) -> None:
    if not isinstance(v, str):
        raise ConfigError(f"expected a string, got {v!r}")


def counting_distance(z: Sequence, z2: Sequence) -> int:
    _same_length(z, z2)
    return sum(1 for a, b in zip(z, z2) if type(a) is not type(b) or a != b)


def length_distance(z: Sequence[str], z2: Sequence[str]) -> int:
    _same_length(z, z2)
    for v in (*z, *z2):
        _is_str(v)
    return sum(1 for a, b in zip(z, z2) if len(a) != len(b))


def dl_metric(a: str, b: str) -> int:
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    # three rolling rows: i-2, i-1, i
    before = None
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        ca = a[i - 1]
        for j in range(1, lb + 1):
            cb = b[j - 1]
            cost = 0 if ca == cb else 1
            best = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and ca == b[j - 2] and a[i - 2] == cb:
                best = min(best, before[j - 2] + 1)
            cur[j] = best
        before, prev = prev, cur
    return prev[lb]


def dl_k_distance(k: int, z: Sequence[str], z2: Sequence[str]) -> int:
    if k < 1:
        raise ConfigError(f"DL-k needs k >= 1, got {k}")
    _same_length(z, z2)
    for v in (*z, *z2):
        _is_str(v)
    return sum(1 for a, b in zip(z, z2) if dl_metric(a, b) >= k)


@dataclass(frozen=True)
class DistanceFn:
    """A named vector metric, as selected in experiment configs."""

    kind: str
    k: int = 2

    def __call__(self, z: Sequence, z2: Sequence) -> int:
        if self.kind == "counting":
            return counting_distance(z, z2)
        if self.kind == "length":
            return length_distance(z, z2)
        if self.kind == "dl_k":
            return dl_k_distance(self.k, z, z2)
        raise ConfigError(f"unknown distance {self.kind!r}")

    @classmethod
    def from_config(cls, spec) -> DistanceFn:
        """Accepts ``"counting"``, ``"length"``, ``"dl2"``/``"dl_k"`` or a dict with ``kind`` and ``k``."""
        if isinstance(spec, str):
            if spec in ("counting", "length"):
                return cls(spec)
            if spec.startswith("dl") and spec[2:].isdigit():
                return cls("dl_k", int(spec[2:]))
            raise ConfigError(f"unknown distance {spec!r}")
        kind = spec.get("kind")
        if kind not in ("counting", "length", "dl_k"):
            raise ConfigError(f"unknown distance {kind!r}")
        k = int(spec.get("k", 2))
        if k < 1:
            raise ConfigError(f"DL-k needs k >= 1, got {k}")
        return cls(kind, k)

    def to_config(self) -> dict:
        return {"kind": self.kind, "k": self.k} if self.kind == "dl_k" else {"kind": self.kind}


def per_example_sum(d_i: Callable[[object, object], float]) -> Callable[[Sequence, Sequence], float]:
    """Lift a per-example metric to vectors by summing over positions."""
    def d(z, z2):
        _same_length(z, z2)
        return sum(d_i(a, b) for a, b in zip(z, z2))
    return d
