"""Loss functions over (candidate outputs, noisy outputs).

Values are extended nonnegative reals: ``math.inf`` is allowed and absorbing.
Piecewise losses implement ``one(z, y)`` and sum it over examples.
"""
from __future__ import annotations

import json
import math
from collections.abc import Sequence

from noisysynth.distances import dl_metric
from noisysynth.errors import ConfigError
from noisysynth.noise import Mixture, NoiseModel
from noisysynth.noise import from_config as noise_from_config
from noisysynth.numeric import INF, log_sum_exp


def _open_unit(delta: float, who: str) -> float:
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"{who}: delta must lie in (0, 1), got {delta}")
    return delta


class LossFn:
    name = "abstract"

    def __call__(self, z: Sequence, y: Sequence) -> float:
        if len(z) != len(y):
            raise ConfigError(f"loss needs equal-length vectors, got {len(z)} and {len(y)}")
        total = 0.0
        for i, (a, b) in enumerate(zip(z, y)):
            v = self.one(a, b, i)
            if v == INF:
                return INF
            total += v
        return total

    def one(self, z, y, i: int = 0) -> float:
        raise NotImplementedError

    def to_config(self) -> dict:
        return {"kind": self.name}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_config()})"


class ZeroOne(LossFn):
    name = "zero_one"

    def one(self, z, y, i=0):
        return 0.0 if type(z) is type(y) and z == y else 1.0


class ZeroInfty(LossFn):
    name = "zero_infty"

    def one(self, z, y, i=0):
        return 0.0 if type(z) is type(y) and z == y else INF


def _strings(z, y, who):
    if not isinstance(z, str) or not isinstance(y, str):
        raise ConfigError(f"{who} loss needs strings, got {z!r} and {y!r}")


class NSubstitutionLoss(LossFn):
    """inf on a length mismatch, otherwise -log delta_j per mismatched and
    -log(1 - delta_j) per matched character position j."""

    name = "n_substitution"

    def __init__(self, delta):
        if isinstance(delta, (list, tuple)):
            self.delta = tuple(_open_unit(d, self.name) for d in delta)
        else:
            self.delta = _open_unit(delta, self.name)

    def _d(self, j):
        if isinstance(self.delta, tuple):
            if j >= len(self.delta):
                raise ConfigError(f"no substitution rate for position {j}")
            return self.delta[j]
        return self.delta

    def one(self, z, y, i=0):
        _strings(z, y, self.name)
        if len(z) != len(y):
            return INF
        return math.fsum(-math.log(self._d(j)) if a != b else -math.log(1.0 - self._d(j))
                         for j, (a, b) in enumerate(zip(z, y)))

    def to_config(self):
        d = list(self.delta) if isinstance(self.delta, tuple) else self.delta
        return {"kind": self.name, "delta": d}


def is_one_deletion(z: str, y: str) -> bool:
    """True when deleting exactly one character of ``z`` gives ``y``."""
    if len(y) != len(z) - 1:
        return False
    i = 0
    while i < len(y) and y[i] == z[i]:
        i += 1
    return z[i + 1:] == y[i:]


class OneDeleteLoss(LossFn):
    """-log(1 - delta_i) on an exact match, -log delta_i when one deletion from
    the candidate gives the noisy output, inf otherwise.  ``delta`` is a constant
    or a per-example list."""

    name = "one_delete"

    def __init__(self, delta):
        if isinstance(delta, (list, tuple)):
            self.delta = tuple(_open_unit(d, self.name) for d in delta)
        else:
            self.delta = _open_unit(delta, self.name)

    def _d(self, i):
        if isinstance(self.delta, tuple):
            if i >= len(self.delta):
                raise ConfigError(f"no deletion rate for example {i}")
            return self.delta[i]
        return self.delta

    def one(self, z, y, i=0):
        _strings(z, y, self.name)
        if z == y:
            return -math.log(1.0 - self._d(i))
        if is_one_deletion(z, y):
            return -math.log(self._d(i))
        return INF

    def to_config(self):
        d = list(self.delta) if isinstance(self.delta, tuple) else self.delta
        return {"kind": self.name, "delta": d}


class DLLoss(LossFn):
    name = "dl"

    def one(self, z, y, i=0):
        _strings(z, y, self.name)
        return float(dl_metric(z, y))


class LossAB(LossFn):
    """0 when the noisy output is the candidate with its first character
    removed, inf otherwise.

    On the conditional grammar a candidate is ``c + x`` with c one of
    "a", "aa", "b", "bb"; dropping the leading character leaves the rest of
    the prefix, so a noisy ``"b" + x`` rules out the "aa" branch and vice versa.
    """

    name = "l_ab"

    def one(self, z, y, i=0):
        _strings(z, y, self.name)
        return 0.0 if y == z[1:] else INF


class OptimalLoss(LossFn):
    """-log rho_N(y | z) for a known noise source (the additive constant is 0)."""

    name = "optimal"

    def __init__(self, noise: NoiseModel):
        self.noise = noise

    def __call__(self, z, y):
        if len(z) != len(y):
            raise ConfigError(f"loss needs equal-length vectors, got {len(z)} and {len(y)}")
        lp = self.noise.log_pmf(y, z)
        return INF if lp == -INF else -lp

    def to_config(self):
        return {"kind": self.name, "noise": self.noise.to_config()}


class MixtureOptimalLoss(LossFn):
    """-log of the expected noise probability under a prior over noise sources."""

    name = "mixture_optimal"

    def __init__(self, components: Sequence[tuple[NoiseModel, float]]):
        # Mixture validates that the weights are a distribution
        self.mixture = Mixture(components)

    def __call__(self, z, y):
        if len(z) != len(y):
            raise ConfigError(f"loss needs equal-length vectors, got {len(z)} and {len(y)}")
        terms = [math.log(w) + m.log_pmf(y, z) for m, w in self.mixture.components if w > 0]
        lp = log_sum_exp(terms)
        return INF if lp == -INF else -lp

    def to_config(self):
        return {"kind": self.name,
                "components": [{"model": m.to_config(), "prob": w} for m, w in self.mixture.components]}


class Shifted(LossFn):
    """``loss + offset``; the synthesizer's choice must not depend on the offset."""

    name = "shifted"

    def __init__(self, base: LossFn, offset: float):
        self.base = base
        self.offset = float(offset)

    def __call__(self, z, y):
        v = self.base(z, y)
        return INF if v == INF else v + self.offset

    def to_config(self):
        return {"kind": self.name, "base": self.base.to_config(), "offset": self.offset}


def zero_one(z, y):
    return ZeroOne()(z, y)


def zero_infty(z, y):
    return ZeroInfty()(z, y)


def loss_n_substitution(delta, z, y):
    return NSubstitutionLoss(delta)(z, y)


def loss_one_delete(delta, z, y):
    return OneDeleteLoss(delta)(z, y)


def loss_dl(z, y):
    return DLLoss()(z, y)


def loss_ab(z, y):
    return LossAB()(z, y)


def optimal_loss(model: NoiseModel, z, y):
    return OptimalLoss(model)(z, y)


def mixture_optimal_loss(components, z, y):
    return MixtureOptimalLoss(components)(z, y)


_SIMPLE = {"zero_one": ZeroOne, "zero_infty": ZeroInfty, "dl": DLLoss, "l_ab": LossAB}


def from_config(spec) -> LossFn:
    """Build a loss from a name or ``{kind, delta, noise, components, base, offset}``."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    if kind in _SIMPLE:
        return _SIMPLE[kind]()
    if kind == "n_substitution":
        return NSubstitutionLoss(_need(spec, "delta", kind))
    if kind == "one_delete":
        return OneDeleteLoss(_need(spec, "delta", kind))
    if kind == "optimal":
        return OptimalLoss(noise_from_config(_need(spec, "noise", kind)))
    if kind == "mixture_optimal":
        comps = _need(spec, "components", kind)
        return MixtureOptimalLoss([(noise_from_config(c["model"]), c["prob"]) for c in comps])
    if kind == "shifted":
        return Shifted(from_config(_need(spec, "base", kind)), spec.get("offset", 0.0))
    raise ConfigError(f"unknown loss {kind!r}")


def _need(spec, key, kind):
    if key not in spec:
        raise ConfigError(f"loss {kind} needs {key!r}")
    return spec[key]


def parse_loss_arg(text: str) -> LossFn:
    """CLI form: ``name`` or ``name:delta`` (e.g. ``one_delete:0.1``) or inline JSON."""
    text = text.strip()
    if text.startswith("{"):
        return from_config(json.loads(text))
    name, _, param = text.partition(":")
    if param:
        return from_config({"kind": name, "delta": float(param)})
    return from_config(name)
