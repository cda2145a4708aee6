"""Noise sources: samplers with exact probability mass functions.

The three string sources corrupt each example independently, so their
vector pmf is a product of per-example terms.  A mixture picks one component
for the whole vector.

Seeds: ``corrupt`` accepts an int or a tuple of ints.  Example ``i`` draws
from a generator seeded with ``(*seed, i)``, so example ``i`` is corrupted the
same way whatever the vector length.
"""
from __future__ import annotations

import itertools
import math
import string
from collections import defaultdict
from collections.abc import Sequence

import numpy as np

from noisysynth.errors import ConfigError

DEFAULT_ALPHABET = string.ascii_lowercase
SUPPORT_CAP = 100_000
_MIX_TAG = 2**32 - 1


def as_entropy(seed) -> tuple[int, ...]:
    if seed is None:
        raise ConfigError("a seed is required")
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def _require_strings(z: Sequence, who: str) -> None:
    for v in z:
        if not isinstance(v, str):
            raise ConfigError(f"{who} noise needs string outputs, got {v!r}")


class NoiseModel:
    kind = "abstract"

    def corrupt(self, z: Sequence, seed) -> tuple:
        entropy = as_entropy(seed)
        self._check(z)
        return tuple(self.sample_one(v, np.random.default_rng([*entropy, i])) for i, v in enumerate(z))

    def pmf(self, y: Sequence, z: Sequence) -> float:
        if len(y) != len(z):
            return 0.0
        self._check(z)
        p = 1.0
        for a, b in zip(y, z):
            p *= self.pmf_one(a, b)
            if p == 0.0:
                return 0.0
        return p

    def log_pmf(self, y: Sequence, z: Sequence) -> float:
        """Sum of per-example log terms; avoids underflow on long vectors."""
        if len(y) != len(z):
            return -math.inf
        self._check(z)
        total = 0.0
        for a, b in zip(y, z):
            p = self.pmf_one(a, b)
            if p == 0.0:
                return -math.inf
            total += math.log(p)
        return total

    def exhaustive_support(self, z: Sequence, cap: int = SUPPORT_CAP) -> list[tuple[tuple, float]]:
        self._check(z)
        per = [self.support_one(v, cap) for v in z]
        size = math.prod(len(s) for s in per)
        if size > cap:
            raise ConfigError(f"support of {self.kind} on {list(z)} has {size} points, above the cap {cap}")
        out = []
        for combo in itertools.product(*per):
            out.append((tuple(y for y, _ in combo), math.prod(p for _, p in combo)))
        return out

    def _check(self, z: Sequence) -> None:
        pass

    # per-example kernel
    def sample_one(self, z, rng: np.random.Generator):
        raise NotImplementedError

    def pmf_one(self, y, z) -> float:
        raise NotImplementedError

    def support_one(self, z, cap: int) -> list[tuple[object, float]]:
        raise NotImplementedError

    def to_config(self) -> dict:
        return {"kind": self.kind}


class Identity(NoiseModel):
    kind = "identity"

    def sample_one(self, z, rng):
        return z

    def pmf_one(self, y, z):
        return 1.0 if type(y) is type(z) and y == z else 0.0

    def support_one(self, z, cap):
        return [(z, 1.0)]


class FirstCharDelete(NoiseModel):
    """Drops the first character of every output, always."""

    kind = "first_char_delete"

    def _check(self, z):
        _require_strings(z, self.kind)

    def sample_one(self, z, rng):
        return z[1:]

    def pmf_one(self, y, z):
        return 1.0 if y == z[1:] else 0.0

    def support_one(self, z, cap):
        return [(z[1:], 1.0)]


def _check_delta(delta: float, who: str) -> float:
    delta = float(delta)
    if not 0.0 < delta <= 1.0:
        raise ConfigError(f"{who}: delta must lie in (0, 1], got {delta}")
    return delta


class OneDelete(NoiseModel):
    """With probability delta, delete one uniformly chosen character.

    Deletions at different positions that give the same string are summed in
    the pmf.  The empty string is never corrupted.
    """

    kind = "one_delete"

    def __init__(self, delta: float):
        self.delta = _check_delta(delta, self.kind)

    def _check(self, z):
        _require_strings(z, self.kind)

    def sample_one(self, z, rng):
        if not z or rng.random() >= self.delta:
            return z
        i = int(rng.integers(len(z)))
        return z[:i] + z[i + 1:]

    def pmf_one(self, y, z):
        if not z:
            return 1.0 if y == z else 0.0
        p = (1.0 - self.delta) if y == z else 0.0
        if len(y) == len(z) - 1:
            hits = sum(1 for i in range(len(z)) if z[:i] + z[i + 1:] == y)
            p += self.delta * hits / len(z)
        return p

    def support_one(self, z, cap):
        if not z:
            return [(z, 1.0)]
        acc: dict[str, float] = defaultdict(float)
        if self.delta < 1.0:
            acc[z] += 1.0 - self.delta
        for i in range(len(z)):
            acc[z[:i] + z[i + 1:]] += self.delta / len(z)
        return list(acc.items())

    def to_config(self):
        return {"kind": self.kind, "delta": self.delta}


class NSubstitution(NoiseModel):
    """Each character is independently replaced, with probability delta, by a
    uniformly chosen different character of the alphabet.

    ``delta`` is a constant or a per-position list (position within the string).
    """

    kind = "n_substitution"

    def __init__(self, delta, alphabet: str = DEFAULT_ALPHABET):
        if isinstance(delta, (list, tuple)):
            self.delta = tuple(_check_delta(d, self.kind) for d in delta)
        else:
            self.delta = _check_delta(delta, self.kind)
        alphabet = "".join(dict.fromkeys(alphabet))
        if len(alphabet) < 2:
            raise ConfigError("n_substitution needs an alphabet of at least two characters")
        self.alphabet = alphabet
        self._alpha_set = frozenset(alphabet)

    def delta_at(self, j: int) -> float:
        if isinstance(self.delta, tuple):
            if j >= len(self.delta):
                raise ConfigError(f"no substitution rate for position {j}")
            return self.delta[j]
        return self.delta

    def _check(self, z):
        _require_strings(z, self.kind)
        for v in z:
            bad = set(v) - self._alpha_set
            if bad:
                raise ConfigError(f"characters {sorted(bad)} of {v!r} are not in the alphabet")

    def sample_one(self, z, rng):
        out = []
        for j, c in enumerate(z):
            if rng.random() < self.delta_at(j):
                others = [a for a in self.alphabet if a != c]
                c = others[int(rng.integers(len(others)))]
            out.append(c)
        return "".join(out)

    def pmf_one(self, y, z):
        if len(y) != len(z):
            return 0.0
        k = len(self.alphabet) - 1
        p = 1.0
        for j, (a, c) in enumerate(zip(y, z)):
            dj = self.delta_at(j)
            if a == c:
                p *= 1.0 - dj
            elif a in self._alpha_set:
                p *= dj / k
            else:
                return 0.0
        return p

    def support_one(self, z, cap):
        if len(self.alphabet) ** len(z) > cap:
            raise ConfigError(f"support of {self.kind} on {z!r} exceeds the cap {cap}")
        out = []
        for chars in itertools.product(self.alphabet, repeat=len(z)):
            y = "".join(chars)
            p = self.pmf_one(y, z)
            if p > 0:
                out.append((y, p))
        return out

    def to_config(self):
        d = list(self.delta) if isinstance(self.delta, tuple) else self.delta
        return {"kind": self.kind, "delta": d, "alphabet": self.alphabet}


class Mixture(NoiseModel):
    """Pick one component (for the whole vector) with the given probability, then corrupt."""

    kind = "mixture"

    def __init__(self, components: Sequence[tuple[NoiseModel, float]]):
        if not components:
            raise ConfigError("mixture needs at least one component")
        total = math.fsum(w for _, w in components)
        if any(w < 0 for _, w in components) or abs(total - 1.0) > 1e-9:
            raise ConfigError(f"mixture weights must be nonnegative and sum to 1, got {total}")
        self.components = tuple((m, float(w)) for m, w in components)

    def corrupt(self, z, seed):
        entropy = as_entropy(seed)
        rng = np.random.default_rng([*entropy, _MIX_TAG])
        weights = np.array([w for _, w in self.components])
        j = int(rng.choice(len(self.components), p=weights / weights.sum()))
        return self.components[j][0].corrupt(z, seed)

    def pmf(self, y, z):
        return math.fsum(w * m.pmf(y, z) for m, w in self.components if w > 0)

    def log_pmf(self, y, z):
        p = self.pmf(y, z)
        return math.log(p) if p > 0 else -math.inf

    def exhaustive_support(self, z, cap=SUPPORT_CAP):
        acc: dict[tuple, float] = defaultdict(float)
        for m, w in self.components:
            if w == 0:
                continue
            for y, p in m.exhaustive_support(z, cap):
                acc[y] += w * p
        return list(acc.items())

    def to_config(self):
        return {"kind": self.kind,
                "components": [{"model": m.to_config(), "prob": w} for m, w in self.components]}


def from_config(spec) -> NoiseModel:
    """Build a noise model from ``{kind, delta, alphabet, components}`` (or a bare kind string)."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    if kind == "identity":
        return Identity()
    if kind == "first_char_delete":
        return FirstCharDelete()
    if kind == "one_delete":
        if "delta" not in spec:
            raise ConfigError("one_delete needs delta")
        return OneDelete(spec["delta"])
    if kind == "n_substitution":
        if "delta" not in spec:
            raise ConfigError("n_substitution needs delta")
        return NSubstitution(spec["delta"], spec.get("alphabet", DEFAULT_ALPHABET))
    if kind == "mixture":
        comps = spec.get("components") or []
        return Mixture([(from_config(c["model"]), c["prob"]) for c in comps])
    raise ConfigError(f"unknown noise kind {kind!r}")
