"""Generative process, convergence estimates and differentiating-source checks.

Every random draw comes from ``numpy.random.default_rng(entropy)`` where the
entropy tuple is built from the master seed plus indices (dataset size,
trial, purpose tag).  Trials therefore do not depend on scheduling, and
``--jobs`` only changes wall time.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from noisysynth.distances import DistanceFn
from noisysynth.dsl import Grammar, Program, evaluate_vec, load_inputs
from noisysynth.errors import ConfigError, EvaluationError, SynthError
from noisysynth.loss import LossFn
from noisysynth.loss import from_config as loss_from_config
from noisysynth.noise import NoiseModel, as_entropy
from noisysynth.noise import from_config as noise_from_config
from noisysynth.numeric import INF, log_sum_exp
from noisysynth.prior import Prior
from noisysynth.synthesizer import SynthesisProblem, synthesize

# purpose tags mixed into seeds
TAG_PROGRAM, TAG_INPUTS, TAG_NOISE = 1, 2, 3
AUDIT_SEED = 20_200_521
PROBE_POINTS = 1000
EXHAUSTIVE_CAP = 20_000
WILSON_Z = 1.959963984540054


# -- input sources ---------------------------------------------------------

class ValueSampler:
    """One input variable, drawn i.i.d. per example."""

    def __init__(self, spec: Mapping[str, Any]):
        self.spec = dict(spec)
        kind = spec.get("kind")
        self.kind = kind
        if kind == "int_uniform":
            self.lo, self.hi = int(spec["lo"]), int(spec["hi"])
            if self.lo > self.hi:
                raise ConfigError(f"int_uniform: lo {self.lo} > hi {self.hi}")
        elif kind == "str_random":
            self.alphabet = spec["alphabet"]
            self.min_len = int(spec.get("min_len", 0))
            self.max_len = int(spec.get("max_len", self.min_len))
            if not self.alphabet or self.min_len < 0 or self.max_len < self.min_len:
                raise ConfigError(f"str_random: bad parameters {spec}")
        elif kind == "bool_bernoulli":
            self.p = float(spec["p"])
            if not 0.0 <= self.p <= 1.0:
                raise ConfigError(f"bool_bernoulli: p must be in [0, 1], got {self.p}")
        elif kind == "choice":
            self.values = list(spec["values"])
            probs = spec.get("probs")
            self.probs = _normalized(probs, len(self.values), "choice")
        elif kind == "const":
            self.value = spec["value"]
        else:
            raise ConfigError(f"unknown input sampler {kind!r}")

    def sample(self, rng: np.random.Generator):
        k = self.kind
        if k == "int_uniform":
            return int(rng.integers(self.lo, self.hi + 1))
        if k == "str_random":
            length = int(rng.integers(self.min_len, self.max_len + 1))
            idx = rng.integers(len(self.alphabet), size=length)
            return "".join(self.alphabet[i] for i in idx)
        if k == "bool_bernoulli":
            return bool(rng.random() < self.p)
        if k == "choice":
            return self.values[int(rng.choice(len(self.values), p=self.probs))]
        return self.value

    def support_size(self) -> int:
        k = self.kind
        if k == "int_uniform":
            return self.hi - self.lo + 1
        if k == "str_random":
            a = len(self.alphabet)
            return sum(a**L for L in range(self.min_len, self.max_len + 1))
        if k == "bool_bernoulli":
            return int(self.p > 0) + int(self.p < 1)
        if k == "choice":
            return sum(1 for p in self.probs if p > 0)
        return 1

    def support(self) -> list:
        k = self.kind
        if k == "int_uniform":
            return list(range(self.lo, self.hi + 1))
        if k == "str_random":
            return ["".join(t) for L in range(self.min_len, self.max_len + 1)
                    for t in itertools.product(self.alphabet, repeat=L)]
        if k == "bool_bernoulli":
            return [v for v, ok in ((False, self.p < 1), (True, self.p > 0)) if ok]
        if k == "choice":
            return [v for v, p in zip(self.values, self.probs) if p > 0]
        return [self.value]


def _normalized(probs, n, who):
    if probs is None:
        return [1.0 / n] * n
    if len(probs) != n or any(p < 0 for p in probs) or sum(probs) <= 0:
        raise ConfigError(f"{who}: bad probabilities {probs}")
    s = float(sum(probs))
    return [p / s for p in probs]


class InputSource:
    """Distribution over input vectors of a requested length."""

    def sample(self, n: int, rng: np.random.Generator) -> list[dict]:
        raise NotImplementedError

    def support_size(self) -> int:
        raise NotImplementedError

    def support(self) -> list[dict]:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


class ProductSource(InputSource):
    """Each example binds every variable independently; examples are i.i.d."""

    def __init__(self, variables: Mapping[str, ValueSampler]):
        if not variables:
            raise ConfigError("product input source needs at least one variable")
        self.variables = dict(sorted(variables.items()))

    def sample(self, n, rng):
        return [{v: s.sample(rng) for v, s in self.variables.items()} for _ in range(n)]

    def support_size(self):
        return math.prod(s.support_size() for s in self.variables.values())

    def support(self):
        names = list(self.variables)
        return [dict(zip(names, combo))
                for combo in itertools.product(*(self.variables[v].support() for v in names))]

    def to_config(self):
        return {"kind": "product", "vars": {v: s.spec for v, s in self.variables.items()}}


class CategoricalSource(InputSource):
    """i.i.d. draws from a finite list of input environments."""

    def __init__(self, inputs: Sequence[dict], probs=None):
        if not inputs:
            raise ConfigError("categorical input source needs inputs")
        self.inputs = [dict(e) for e in inputs]
        self.probs = _normalized(probs, len(self.inputs), "categorical")

    def sample(self, n, rng):
        idx = rng.choice(len(self.inputs), size=n, p=self.probs)
        return [dict(self.inputs[i]) for i in idx]

    def support_size(self):
        return sum(1 for p in self.probs if p > 0)

    def support(self):
        return [dict(e) for e, p in zip(self.inputs, self.probs) if p > 0]

    def to_config(self):
        return {"kind": "categorical", "inputs": self.inputs, "probs": self.probs}


class MixtureSource(InputSource):
    """Chooses one component for the whole vector, so examples are exchangeable
    rather than independent.  Used to cap the chance of ever seeing an input."""

    def __init__(self, components: Sequence[tuple[InputSource, float]]):
        if not components:
            raise ConfigError("mixture input source needs components")
        self.components = list(components)
        self.probs = _normalized([w for _, w in components], len(components), "mixture")

    def sample(self, n, rng):
        j = int(rng.choice(len(self.components), p=self.probs))
        return self.components[j][0].sample(n, rng)

    def support_size(self):
        return sum(c.support_size() for c, _ in self.components)

    def support(self):
        seen, out = set(), []
        for c, _ in self.components:
            for e in c.support():
                key = json.dumps(e, sort_keys=True)
                if key not in seen:
                    seen.add(key)
                    out.append(e)
        return out

    def to_config(self):
        return {"kind": "mixture",
                "components": [{"source": c.to_config(), "prob": p}
                               for (c, _), p in zip(self.components, self.probs)]}


def input_source_from_config(spec: Mapping[str, Any], grammar: Grammar | None = None) -> InputSource:
    kind = spec.get("kind")
    if kind == "product":
        return ProductSource({v: ValueSampler(s) for v, s in spec["vars"].items()})
    if kind == "categorical":
        inputs = spec["inputs"]
        if grammar is not None:
            inputs = load_inputs(inputs, grammar)
        return CategoricalSource(inputs, spec.get("probs"))
    if kind == "mixture":
        return MixtureSource([(input_source_from_config(c["source"], grammar), c["prob"])
                              for c in spec["components"]])
    # a bare sampler binds the grammar's only variable
    if grammar is not None and len(grammar.variables) == 1:
        return ProductSource({grammar.variables[0]: ValueSampler(spec)})
    raise ConfigError(f"unknown input source {kind!r}")


# -- equivalence -----------------------------------------------------------

class EquivalenceChecker:
    """Decides p ~ q by comparing outputs on a domain of inputs.

    ``exhaustive`` means the domain is the whole (finite) input space, so the
    answer is exact; ``probe`` means a sampled subset, an approximation.
    """

    def __init__(self, domain: Sequence[dict], mode: str):
        if not domain:
            raise ConfigError("equivalence domain is empty")
        self.domain = [dict(e) for e in domain]
        self.mode = mode
        self._cache: dict[Program, tuple] = {}

    @classmethod
    def for_source(cls, source: InputSource, cap: int = EXHAUSTIVE_CAP,
                   probes: int = PROBE_POINTS, seed: int = AUDIT_SEED) -> EquivalenceChecker:
        if source.support_size() <= cap:
            return cls(source.support(), "exhaustive")
        rng = np.random.default_rng([seed])
        return cls(source.sample(probes, rng), "probe")

    def signature(self, p: Program) -> tuple:
        sig = self._cache.get(p)
        if sig is None:
            out = []
            for env in self.domain:
                try:
                    out.append(evaluate_vec(p, [env])[0])
                except EvaluationError:
                    out.append(None)
            sig = tuple((type(v).__name__, v) for v in out)
            self._cache[p] = sig
        return sig

    def equivalent(self, p: Program, q: Program) -> bool:
        return p == q or self.signature(p) == self.signature(q)


# -- generative process ----------------------------------------------------

@dataclass
class Dataset:
    hidden: Program
    xs: list[dict]
    zs: tuple
    ys: tuple

    def to_dict(self) -> dict:
        return {"hidden": self.hidden.to_sexpr(), "inputs": self.xs,
                "outputs": list(self.ys), "clean_outputs": list(self.zs)}


def generate_dataset(prior: Prior, source: InputSource, noise: NoiseModel, n: int, seed,
                     hidden: Program | None = None) -> Dataset:
    """Hidden program from the prior (unless given), i.i.d. inputs, clean outputs, noisy outputs."""
    if n < 1:
        raise ConfigError("dataset size must be >= 1")
    entropy = as_entropy(seed)
    if hidden is None:
        hidden = prior.sample_program(rng=np.random.default_rng([*entropy, TAG_PROGRAM]))
    xs = source.sample(n, np.random.default_rng([*entropy, TAG_INPUTS]))
    zs = evaluate_vec(hidden, xs)
    ys = noise.corrupt(zs, (*entropy, TAG_NOISE))
    return Dataset(hidden, xs, zs, tuple(ys))


# -- statistics ------------------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return (lo, hi)


@dataclass(frozen=True)
class Estimate:
    successes: int
    trials: int
    errors: int = 0

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)


@dataclass(frozen=True)
class Row:
    n: int
    trials: int
    successes: int
    errors: int = 0

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)


@dataclass
class ConvergenceReport:
    rows: list[Row] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def row(self, n: int) -> Row:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)


CSV_HEADER = ["n", "trials", "successes", "p_hat", "ci_lo", "ci_hi"]


def report_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.rows:
        lo, hi = r.ci
        w.writerow([r.n, r.trials, r.successes, repr(r.p_hat), repr(lo), repr(hi)])
    return buf.getvalue()


def export_report(report: ConvergenceReport, path: str | Path) -> Path:
    """Write ``path`` (CSV) and a JSON sidecar next to it; returns the sidecar path."""
    path = Path(path)
    path.write_text(report_csv(report))
    meta = dict(report.metadata)
    meta["errors"] = {str(r.n): r.errors for r in report.rows}
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def read_report(path: str | Path) -> ConvergenceReport:
    path = Path(path)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    errors = {int(k): v for k, v in meta.pop("errors", {}).items()}
    rows = []
    with path.open(newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            n = int(rec["n"])
            rows.append(Row(n, int(rec["trials"]), int(rec["successes"]), errors.get(n, 0)))
    return ConvergenceReport(rows, meta)


# -- convergence -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    grammar: Grammar
    d: int
    source: InputSource
    noise: NoiseModel
    loss: LossFn
    n_grid: list[int]
    trials: int
    seed: int = 0
    hidden: Program | None = None
    costs: Mapping[str, float] | None = None
    equivalence_domain: list[dict] | None = None
    name: str = ""

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if any(n < 1 for n in self.n_grid):
            raise ConfigError(f"dataset sizes must be >= 1, got {self.n_grid}")
        if self.hidden is not None:
            self.grammar.check(self.hidden)
            if self.hidden.height > self.d or self.hidden.symbol != self.grammar.start:
                raise ConfigError(f"hidden program {self.hidden} is outside the program space")

    def checker(self) -> EquivalenceChecker:
        if self.equivalence_domain is not None:
            return EquivalenceChecker(self.equivalence_domain, "exhaustive")
        return EquivalenceChecker.for_source(self.source)

    def metadata(self) -> dict:
        return {
            "name": self.name,
            "grammar": self.grammar.name,
            "d": self.d,
            "input_source": self.source.to_config(),
            "noise": self.noise.to_config(),
            "loss": self.loss.to_config(),
            "n_grid": list(self.n_grid),
            "trials": self.trials,
            "seed": self.seed,
            "hidden": self.hidden.to_sexpr() if self.hidden is not None else "prior",
            "equivalence": self.checker().mode,
        }


def load_experiment(spec: Mapping[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
    """Experiment JSON: grammar path, d, input_source, noise, loss, n_grid, trials, seed, hidden."""
    base_dir = Path(base_dir)
    for key in ("grammar", "d", "input_source", "noise", "loss", "n_grid", "trials"):
        if key not in spec:
            raise ConfigError(f"experiment config is missing {key!r}")
    gpath = Path(spec["grammar"])
    if not gpath.is_absolute():
        gpath = base_dir / gpath
    g = Grammar.load(gpath)
    weights = spec.get("weights")
    if weights:
        g = reweighted(g, weights)
    hidden = spec.get("hidden")
    domain = spec.get("equivalence_domain")
    return ExperimentConfig(
        grammar=g,
        d=int(spec["d"]),
        source=input_source_from_config(spec["input_source"], g),
        noise=noise_from_config(spec["noise"]),
        loss=loss_from_config(spec["loss"]),
        n_grid=[int(n) for n in spec["n_grid"]],
        trials=int(spec["trials"]),
        seed=int(spec.get("seed", 0)),
        hidden=g.parse(hidden) if hidden and hidden != "prior" else None,
        costs=spec.get("costs"),
        equivalence_domain=load_inputs(domain, g) if domain else None,
        name=spec.get("name", ""),
    )


def reweighted(g: Grammar, weights: Mapping[str, Any]) -> Grammar:
    pw = {g.production(label).index: float(w) for label, w in weights.get("productions", {}).items()}
    return g.with_weights(weights.get("terminals", {}), pw)


# worker-process cache: one prior and checker per config
_WORKER: dict[str, Any] = {}


def _cache_key(cfg: ExperimentConfig) -> str:
    # stable across pickling, unlike id()
    return json.dumps([cfg.grammar.to_dict(), cfg.d, cfg.source.to_config(),
                       cfg.equivalence_domain], sort_keys=True, default=str)


def _setup(cfg: ExperimentConfig):
    key = _cache_key(cfg)
    if _WORKER.get("key") != key:
        _WORKER.clear()
        _WORKER["key"] = key
        _WORKER["prior"] = Prior(cfg.grammar, cfg.d)
        _WORKER["checker"] = cfg.checker()
    return _WORKER["prior"], _WORKER["checker"]


def run_trial(cfg: ExperimentConfig, n: int, trial: int) -> bool:
    """One generate -> synthesize round; True when a program equivalent to the
    hidden one wins outright (no tie, finite objective)."""
    prior, checker = _setup(cfg)
    data = generate_dataset(prior, cfg.source, cfg.noise, n, (cfg.seed, n, trial), cfg.hidden)
    res = synthesize(SynthesisProblem(cfg.grammar, cfg.d, cfg.loss, data.xs, data.ys, cfg.costs))
    if not res.unique or res.all_infinite:
        return False
    return res.outputs == data.zs and checker.equivalent(res.program, data.hidden)


def _run_chunk(args) -> list[int]:
    cfg, n, trials = args
    out = []
    for t in trials:
        try:
            out.append(1 if run_trial(cfg, n, t) else 0)
        except SynthError:
            out.append(-1)
    return out


def estimate_convergence(cfg: ExperimentConfig, jobs: int = 1) -> ConvergenceReport:
    tasks = []
    chunk = max(1, cfg.trials // max(1, jobs * 4))
    for n in cfg.n_grid:
        for start in range(0, cfg.trials, chunk):
            tasks.append((cfg, n, list(range(start, min(cfg.trials, start + chunk)))))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]
    outcomes: dict[int, list[int]] = {n: [] for n in cfg.n_grid}
    for (_, n, _), res in zip(tasks, results):
        outcomes[n].extend(res)
    rows = []
    for n in cfg.n_grid:
        res = outcomes[n]
        errors = sum(1 for r in res if r < 0)
        rows.append(Row(n, len(res) - errors, sum(1 for r in res if r > 0), errors))
    return ConvergenceReport(rows, cfg.metadata())


def convergence_by_program(cfg: ExperimentConfig, jobs: int = 1) -> tuple[dict[str, ConvergenceReport], ConvergenceReport]:
    """One curve per hidden program class (cheapest representative of each
    equivalence class), plus the pointwise worst case over them."""
    prior = Prior(cfg.grammar, cfg.d)
    checker = cfg.checker()
    costs = cfg.costs or cfg.grammar.default_costs()
    from noisysynth.fta import program_key
    reps: dict[tuple, Program] = {}
    for p in prior.programs:
        sig = checker.signature(p)
        if sig not in reps or program_key(p, costs) < program_key(reps[sig], costs):
            reps[sig] = p
    per = {}
    for p in sorted(reps.values(), key=lambda q: program_key(q, costs)):
        sub = ExperimentConfig(cfg.grammar, cfg.d, cfg.source, cfg.noise, cfg.loss, cfg.n_grid,
                               cfg.trials, cfg.seed, p, cfg.costs, cfg.equivalence_domain, cfg.name)
        per[p.to_sexpr()] = estimate_convergence(sub, jobs)
    worst = []
    for i, n in enumerate(cfg.n_grid):
        worst.append(min((rep.rows[i] for rep in per.values()), key=lambda r: (r.p_hat, r.successes)))
    meta = cfg.metadata()
    meta["hidden"] = "worst-case"
    return per, ConvergenceReport(worst, meta)


# -- differentiating checks ------------------------------------------------

def _outputs_or_none(p: Program, xs):
    try:
        return evaluate_vec(p, xs)
    except EvaluationError:
        return None


def check_input_differentiating(grammar: Grammar, d: int, source: InputSource, distance: DistanceFn,
                                hidden: Program, n: int, eps: float, trials: int, seed,
                                checker: EquivalenceChecker | None = None) -> Estimate:
    """Fraction of sampled input vectors on which every program not equivalent
    to ``hidden`` lands at distance >= eps from it."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    prior = Prior(grammar, d)
    checker = checker or EquivalenceChecker.for_source(source)
    others = [p for p in prior.programs if not checker.equivalent(p, hidden)]
    entropy = as_entropy(seed)
    hits = errors = 0
    for t in range(trials):
        xs = source.sample(n, np.random.default_rng([*entropy, t, TAG_INPUTS]))
        zh = _outputs_or_none(hidden, xs)
        if zh is None:
            errors += 1
            continue
        ok = True
        for p in others:
            z = _outputs_or_none(p, xs)
            if z is not None and distance(zh, z) < eps:
                ok = False
                break
        hits += ok
    return Estimate(hits, trials - errors, errors)


def _gap(lz: float, lh: float) -> float:
    # inf - inf: the true outputs are no better than z, so no gap
    if lz == INF and lh == INF:
        return 0.0
    return lz - lh


def check_noise_differentiating(grammar: Grammar, d: int, xs, noise: NoiseModel, loss: LossFn,
                                distance: DistanceFn, z_h, gamma: float, eps: float,
                                trials: int, seed) -> Estimate:
    """Fraction of noise draws y for which every candidate z in G[x] whose loss
    is within gamma of the true outputs' loss lies closer than eps to them."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    prior = Prior(grammar, d)
    z_h = tuple(z_h)
    candidates = set()
    for p in prior.programs:
        z = _outputs_or_none(p, xs)
        if z is not None:
            candidates.add(z)
    candidates = sorted(candidates, key=lambda z: json.dumps(list(z)))
    far = [z for z in candidates if distance(z, z_h) >= eps]
    entropy = as_entropy(seed)
    hits = 0
    for t in range(trials):
        y = noise.corrupt(z_h, (*entropy, t, TAG_NOISE))
        lh = loss(z_h, y)
        hits += all(_gap(loss(z, y), lh) > gamma for z in far)
    return Estimate(hits, trials)


def expected_reward(prior: Prior, noise: NoiseModel, xs, ys, c) -> float:
    """Posterior probability that the hidden program's outputs on xs are c, given ys."""
    classes = prior.class_probabilities(xs)
    logs = {}
    for z, mass in classes.items():
        lp = noise.log_pmf(ys, z)
        if lp > -INF:
            logs[z] = math.log(mass) + lp
    if not logs:
        raise ConfigError("the observed outputs have probability 0 under every class")
    norm = log_sum_exp(logs.values())
    c = tuple(c)
    return math.exp(logs[c] - norm) if c in logs else 0.0
