"""Prior over programs of bounded height, from grammar weights.

The weight of a program is the product of the weights of the terminals and
productions in its (unique) derivation; the prior normalizes those weights over
every program of height <= d.
"""
from __future__ import annotations

import math
from functools import cached_property

import numpy as np

from noisysynth.dsl import Grammar, Program, evaluate_vec
from noisysynth.errors import ConfigError, EvaluationError
from noisysynth.numeric import log_sum_exp

ENUMERATION_CAP = 10**6


def log_program_weight(g: Grammar, p: Program) -> float:
    total = math.log(g.weight_of(p.prod))
    for c in p.children:
        total += log_program_weight(g, c)
    return total


class Prior:
    def __init__(self, grammar: Grammar, d: int):
        if d < 0:
            raise ConfigError("height bound must be >= 0")
        self.grammar = grammar
        self.d = d
        self.log_total_weight = self._log_partition()[grammar.start]
        if self.log_total_weight == -math.inf:
            raise ConfigError(f"grammar {grammar.name!r} derives no program of height <= {d}")

    def _log_partition(self) -> dict[str, float]:
        # W(s, m): total weight of programs of height <= m rooted at s
        g = self.grammar
        prev = {s: -math.inf for s in g.nonterminals}
        for _ in range(self.d + 1):
            cur = {}
            for s in g.nonterminals:
                terms = []
                for p in g.by_lhs[s]:
                    lw = math.log(g.weight_of(p))
                    if p.is_leaf:
                        terms.append(lw)
                    else:
                        terms.append(lw + sum(prev[c] for c in p.rhs))
                cur[s] = log_sum_exp(terms)
            prev = cur
        return prev

    @property
    def total_weight(self) -> float:
        return math.exp(self.log_total_weight)

    def program_weight(self, p: Program) -> float:
        self.grammar.check(p)
        return math.exp(log_program_weight(self.grammar, p))

    def log_rho(self, p: Program) -> float:
        self.grammar.check(p)
        if p.symbol != self.grammar.start:
            raise ConfigError(f"{p} is not rooted at the start symbol")
        if p.height > self.d:
            raise ConfigError(f"{p} has height {p.height} > {self.d}")
        return log_program_weight(self.grammar, p) - self.log_total_weight

    def rho(self, p: Program) -> float:
        return math.exp(self.log_rho(p))

    @cached_property
    def programs(self) -> list[Program]:
        out = []
        for p in self.grammar.enumerate_programs(self.d):
            out.append(p)
            if len(out) > ENUMERATION_CAP:
                raise ConfigError(f"more than {ENUMERATION_CAP} programs of height <= {self.d}")
        return out

    @cached_property
    def _cdf(self) -> np.ndarray:
        logs = np.array([log_program_weight(self.grammar, p) for p in self.programs])
        w = np.exp(logs - logs.max())
        cdf = np.cumsum(w)
        return cdf / cdf[-1]

    def sample_program(self, seed=None, rng: np.random.Generator | None = None) -> Program:
        """Draw one program with probability rho(p).  Pass a seed or a generator."""
        if rng is None:
            rng = np.random.default_rng(seed)
        i = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return self.programs[min(i, len(self.programs) - 1)]

    def class_probabilities(self, xs) -> dict[tuple, float]:
        """Brute force: prior mass of each output vector on ``xs``.

        Programs whose evaluation fails are dropped and the rest renormalized,
        matching the FTA, which prunes them.
        """
        groups: dict[tuple, list[float]] = {}
        for p in self.programs:
            try:
                z = evaluate_vec(p, xs)
            except EvaluationError:
                continue
            groups.setdefault(z, []).append(log_program_weight(self.grammar, p))
        class_logs = {z: log_sum_exp(ls) for z, ls in groups.items()}
        log_norm = log_sum_exp(class_logs.values())
        return {z: math.exp(l - log_norm) for z, l in class_logs.items()}
