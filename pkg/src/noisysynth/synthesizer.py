"""The synthesis algorithm and a brute-force reference.

Both pick the output class minimizing ``loss(c, y) - log pi(c)`` and then
the cheapest program in that class.  Near-equal objectives (relative 1e-9)
count as ties, broken by the JSON serialization of the output vector, and
programs of equal cost are ordered by ``fta.program_key``.  The two paths
share these rules so their answers can be compared exactly.
"""
from __future__ import annotations

import json
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from noisysynth.dsl import Grammar, Program, evaluate_vec
from noisysynth.errors import ConfigError, EvaluationError
from noisysynth.fta import build, min_complexity_programs, program_key, weights
from noisysynth.loss import LossFn
from noisysynth.numeric import INF, log_sum_exp, objective_close
from noisysynth.prior import Prior, log_program_weight


@dataclass
class SynthesisProblem:
    grammar: Grammar
    d: int
    loss: LossFn
    xs: Sequence[Mapping[str, Any]]
    ys: Sequence[Any]
    costs: Mapping[str, float] | None = None

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise ConfigError(f"{len(self.xs)} inputs but {len(self.ys)} outputs")
        if len(self.xs) < 1:
            raise ConfigError("the dataset needs at least one example")


@dataclass
class SynthesisResult:
    program: Program
    objective: float
    outputs: tuple
    loss: float
    log_pi: float
    # no other class within the tie tolerance
    unique: bool
    # every class scored inf; the returned program is only a tie-break
    all_infinite: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "program": self.program.to_sexpr(),
            "pretty": self.program.pretty(),
            "objective": _json_float(self.objective),
            "loss": _json_float(self.loss),
            "log_pi": self.log_pi,
            "outputs": list(self.outputs),
            "unique": self.unique,
            "all_infinite": self.all_infinite,
            "diagnostics": self.diagnostics,
        }


def _json_float(v: float):
    return "inf" if v == INF else v


def serialize_outputs(values) -> str:
    return json.dumps(list(values))


def select_class(scored: Sequence[tuple[float, tuple]]) -> tuple[int, bool]:
    """Index of the winning (objective, outputs) entry and whether it won outright."""
    if not scored:
        raise ConfigError("no candidate output classes")
    best = min(obj for obj, _ in scored)
    tied = [i for i, (obj, _) in enumerate(scored) if objective_close(obj, best)]
    winner = min(tied, key=lambda i: serialize_outputs(scored[i][1]))
    return winner, len(tied) == 1


def _objective(loss_value: float, log_pi: float) -> float:
    return INF if loss_value == INF else loss_value - log_pi


def synthesize(problem: SynthesisProblem) -> SynthesisResult:
    t0 = time.perf_counter()
    g = problem.grammar
    fta = build(g, problem.xs, problem.d)
    accepting = fta.accepting
    if not accepting:
        raise ConfigError(f"no program of height <= {problem.d} evaluates on these inputs")
    table = weights(fta)
    t1 = time.perf_counter()
    scored = []
    extra = []
    for q in accepting:
        values = fta.states[q].values
        lv = problem.loss(values, problem.ys)
        lp = table.log_pi(q)
        scored.append((_objective(lv, lp), values))
        extra.append((q, lv, lp))
    i, unique = select_class(scored)
    q, lv, lp = extra[i]
    program = min_complexity_programs(fta, problem.costs, targets=[q])[q]
    t2 = time.perf_counter()
    diagnostics = {
        "states": len(fta.states),
        "accepting": len(accepting),
        "transitions": len(fta.transitions),
        "pruned": len(fta.diagnostics),
        "build_seconds": round(t1 - t0, 6),
        "search_seconds": round(t2 - t1, 6),
    }
    obj = scored[i][0]
    return SynthesisResult(program, obj, scored[i][1], lv, lp, unique, obj == INF, diagnostics)


def oracle_synthesize(problem: SynthesisProblem) -> SynthesisResult:
    """Enumerate every program of height <= d, group by outputs, score each class."""
    g = problem.grammar
    prior = Prior(g, problem.d)
    costs = g.default_costs() if problem.costs is None else problem.costs
    classes: dict[tuple, list] = {}
    for p in prior.programs:
        try:
            z = evaluate_vec(p, problem.xs)
        except EvaluationError:
            continue
        entry = classes.setdefault(z, [[], None])
        entry[0].append(log_program_weight(g, p))
        k = program_key(p, costs)
        if entry[1] is None or k < entry[1][0]:
            entry[1] = (k, p)
    if not classes:
        raise ConfigError(f"no program of height <= {problem.d} evaluates on these inputs")
    class_log = {z: log_sum_exp(e[0]) for z, e in classes.items()}
    log_norm = log_sum_exp(class_log.values())
    scored, extra = [], []
    for z in classes:
        lp = class_log[z] - log_norm
        lv = problem.loss(z, problem.ys)
        scored.append((_objective(lv, lp), z))
        extra.append((lv, lp))
    i, unique = select_class(scored)
    z = scored[i][1]
    lv, lp = extra[i]
    obj = scored[i][0]
    return SynthesisResult(classes[z][1][1], obj, z, lv, lp, unique, obj == INF,
                           {"programs": len(prior.programs), "classes": len(classes)})
