"""Values-indexed finite tree automata over an input vector.

States pair a grammar symbol with the vector of values a partial program
computes on every input.  Programs of height <= d land in exactly one
accepting state, so accepting states are the observational-equivalence
classes of the bounded program space.
"""
from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, NamedTuple

from noisysynth.dsl import BUILTINS, Grammar, Production, Program, value_type
from noisysynth.errors import ConfigError, EvaluationError
from noisysynth.numeric import log_sum_exp


class State(NamedTuple):
    symbol: str
    values: tuple


@dataclass(frozen=True)
class Transition:
    prod: Production
    args: tuple[int, ...]
    dst: int

    @property
    def fn(self) -> str:
        return self.prod.fn


@dataclass
class Fta:
    grammar: Grammar
    xs: tuple
    d: int
    states: list[State] = field(default_factory=list)
    # smallest height of a program reaching each state
    heights: list[int] = field(default_factory=list)
    transitions: list[Transition] = field(default_factory=list)
    # (leaf production, state id): the Term rule
    leaves: list[tuple[Production, int]] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    _index: dict[State, int] = field(default_factory=dict, repr=False)

    def state_id(self, state: State) -> int:
        return self._index[state]

    def find(self, symbol: str, values) -> int | None:
        return self._index.get(State(symbol, tuple(values)))

    @property
    def accepting(self) -> list[int]:
        start = self.grammar.start
        return [i for i, s in enumerate(self.states) if s.symbol == start]

    def _add_state(self, state: State, height: int) -> int:
        i = self._index.get(state)
        if i is None:
            i = len(self.states)
            self._index[state] = i
            self.states.append(state)
            self.heights.append(height)
        return i

    def incoming(self) -> list[list[Transition]]:
        out: list[list[Transition]] = [[] for _ in self.states]
        for t in self.transitions:
            out[t.dst].append(t)
        return out

    def to_dict(self, table: StateWeightTable | None = None) -> dict:
        acc = set(self.accepting)
        states = []
        for i, s in enumerate(self.states):
            entry = {"id": i, "symbol": s.symbol, "values": list(s.values),
                     "height": self.heights[i], "accepting": i in acc}
            if table is not None and i in acc:
                entry["pi"] = table.pi(i)
            states.append(entry)
        return {
            "d": self.d,
            "inputs": list(self.xs),
            "states": states,
            "leaves": [{"terminal": p.rhs[0], "dst": q} for p, q in self.leaves],
            "transitions": [{"fn": t.fn, "production": t.prod.label, "args": list(t.args), "dst": t.dst}
                            for t in self.transitions],
            "diagnostics": list(self.diagnostics),
        }


def build(g: Grammar, xs: Sequence[Mapping[str, Any]], d: int) -> Fta:
    """Least fixpoint of the Term and Prod rules, keeping states reachable at height <= d.

    A Prod application whose evaluation fails (overflow, type error) is
    skipped and noted in ``fta.diagnostics``.
    """
    if len(xs) < 1:
        raise ConfigError("need at least one input")
    if d < 0:
        raise ConfigError("height bound must be >= 0")
    fta = Fta(g, tuple(xs), d)
    for p in g.productions:
        if p.is_leaf:
            term = g.terminals[p.rhs[0]]
            values = tuple(term.value(env) for env in xs)
            for j, v in enumerate(values):
                if value_type(v) != term.type:
                    raise EvaluationError(f"{term.name} should be {term.type}, got {v!r}", index=j)
            q = fta._add_state(State(p.lhs, values), 0)
            fta.leaves.append((p, q))

    by_symbol_height: dict[str, list[list[int]]] = {s: [[] for _ in range(d + 1)] for s in g.nonterminals}
    for i, s in enumerate(fta.states):
        by_symbol_height[s.symbol][0].append(i)

    n = len(xs)
    for h in range(1, d + 1):
        fresh = []
        for p in g.productions:
            if p.is_leaf:
                continue
            fn = BUILTINS[p.fn].fn
            older = [[q for k in range(h) for q in by_symbol_height[s][k]] for s in p.rhs]
            for args in _combos(older, [set(by_symbol_height[s][h - 1]) for s in p.rhs]):
                arg_vals = [fta.states[a].values for a in args]
                try:
                    values = tuple(fn(*(v[j] for v in arg_vals)) for j in range(n))
                except (OverflowError, EvaluationError, TypeError, ValueError) as e:
                    fta.diagnostics.append(f"pruned {p.label} on states {list(args)}: {e}")
                    continue
                known = len(fta.states)
                q = fta._add_state(State(p.lhs, values), h)
                if q >= known:
                    fresh.append(q)
                fta.transitions.append(Transition(p, args, q))
        for q in fresh:
            by_symbol_height[fta.states[q].symbol][h].append(q)
    return fta


def _combos(older, newest):
    """Argument tuples drawn from ``older`` that use at least one state from ``newest``."""
    def rec(i, used_new):
        if i == len(older):
            if used_new:
                yield ()
            return
        for q in older[i]:
            for rest in rec(i + 1, used_new or q in newest[i]):
                yield (q,) + rest
    yield from rec(0, False)


class StateWeightTable:
    """log w(q, m): log total weight of programs of height <= m accepted at q."""

    def __init__(self, fta: Fta, log_w: list[list[float]]):
        self.fta = fta
        self.log_w = log_w
        acc = fta.accepting
        self.log_norm = log_sum_exp(log_w[q][fta.d] for q in acc)

    def w(self, q: int, m: int) -> float:
        return math.exp(self.log_w[q][m])

    def log_pi(self, q: int) -> float:
        if self.fta.states[q].symbol != self.fta.grammar.start:
            raise ConfigError(f"state {q} {self.fta.states[q]} is not accepting")
        return self.log_w[q][self.fta.d] - self.log_norm

    def pi(self, q: int) -> float:
        return math.exp(self.log_pi(q))


def weights(fta: Fta, grammar: Grammar | None = None) -> StateWeightTable:
    """Propagate grammar weights bottom-up for m = 0..d in log space.

    ``grammar`` defaults to the FTA's own; pass a reweighted copy of the same
    grammar to reuse one automaton under a different prior.
    """
    g = grammar or fta.grammar
    d = fta.d
    leaf_terms: list[list[float]] = [[] for _ in fta.states]
    for p, q in fta.leaves:
        leaf_terms[q].append(math.log(g.weight_of(p)))
    leaf_log = [log_sum_exp(ts) for ts in leaf_terms]
    incoming = fta.incoming()
    log_w = [[-math.inf] * (d + 1) for _ in fta.states]
    for q in range(len(fta.states)):
        log_w[q][0] = leaf_log[q]
    for m in range(1, d + 1):
        for q in range(len(fta.states)):
            terms = [leaf_log[q]]
            for t in incoming[q]:
                terms.append(math.log(g.weight_of(t.prod)) + sum(log_w[a][m - 1] for a in t.args))
            log_w[q][m] = log_sum_exp(terms)
    return StateWeightTable(fta, log_w)


def pi(fta: Fta, table: StateWeightTable, q: int) -> float:
    return table.pi(q)


def program_key(p: Program, costs: Mapping[str, float]) -> tuple:
    """Total order used to break complexity ties: (cost, production index, children keys...)."""
    child_keys = tuple(program_key(c, costs) for c in p.children)
    own = costs[p.terminal.name] if p.is_leaf else costs[p.prod.fn]
    return (own + sum(k[0] for k in child_keys), p.prod.index) + child_keys


def extract_min_complexity(fta: Fta, q: int, costs: Mapping[str, float] | None = None) -> Program:
    return min_complexity_programs(fta, costs, targets=[q])[q]


def min_complexity_programs(fta: Fta, costs: Mapping[str, float] | None = None,
                            targets: Sequence[int] | None = None) -> dict[int, Program]:
    """Cheapest program of height <= d at each target state.

    Dynamic programming over heights: best(q, m) is the least ``program_key``
    among programs of height <= m accepted at q.  Layering by height keeps the
    answer inside the bounded program space even when a taller tree is cheaper.
    """
    g = fta.grammar
    costs = g.default_costs() if costs is None else costs
    for p in g.productions:
        key = p.rhs[0] if p.is_leaf else p.fn
        if key not in costs:
            raise ConfigError(f"no cost for {key!r}")
    n_states = len(fta.states)
    best: list[tuple | None] = [None] * n_states
    tree: list[Program | None] = [None] * n_states
    for p, q in fta.leaves:
        prog = g.leaf(p)
        k = program_key(prog, costs)
        if best[q] is None or k < best[q]:
            best[q], tree[q] = k, prog
    incoming = fta.incoming()
    for _ in range(1, fta.d + 1):
        prev_best, prev_tree = list(best), list(tree)
        for q in range(n_states):
            for t in incoming[q]:
                child = [prev_best[a] for a in t.args]
                if any(c is None for c in child):
                    continue
                k = (costs[t.fn] + sum(c[0] for c in child), t.prod.index) + tuple(child)
                if best[q] is None or k < best[q]:
                    best[q] = k
                    tree[q] = Program(t.prod, tuple(prev_tree[a] for a in t.args))
    wanted = range(n_states) if targets is None else targets
    out = {}
    for q in wanted:
        if tree[q] is None:
            raise ConfigError(f"state {q} accepts no program of height <= {fta.d}")
        out[q] = tree[q]
    return out


def dump(fta: Fta, table: StateWeightTable | None = None) -> str:
    return json.dumps(fta.to_dict(table), indent=2, sort_keys=True)
