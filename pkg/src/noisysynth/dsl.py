"""Grammars, parse trees, execution semantics and complexity measures.

A grammar is a set of terminals (constants or input variables), nonterminals
and productions.  A production either derives a terminal directly (a *leaf*
production, e.g. ``n -> x``) or applies a builtin to nonterminals
(``n -> add(n, t)``).  Programs are parse trees whose nodes remember the
production that built them, so every tree has exactly one derivation.

Heights: leaves have height 0, a node is one taller than its tallest child.
"""
from __future__ import annotations

import itertools
import json
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from noisysynth.errors import ConfigError, EvaluationError, GrammarError

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

TYPES = ("int", "bool", "str")


def value_type(v) -> str:
    # bool before int: bool is an int subclass in Python
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, str):
        return "str"
    raise EvaluationError(f"unsupported value {v!r} of type {type(v).__name__}")


def values_equal(a, b) -> bool:
    """Structural equality; values with different tags are never equal."""
    return type(a) is type(b) and a == b


def _check_int(v: int) -> int:
    if not INT64_MIN <= v <= INT64_MAX:
        raise OverflowError(f"64-bit overflow: {v}")
    return v


@dataclass(frozen=True)
class Builtin:
    name: str
    arg_types: tuple[str, ...]
    result_type: str
    fn: Callable[..., Any]

    @property
    def arity(self) -> int:
        return len(self.arg_types)


BUILTINS: dict[str, Builtin] = {}


def register_builtin(name: str, arg_types: Sequence[str], result_type: str, fn: Callable[..., Any]) -> Builtin:
    for t in (*arg_types, result_type):
        if t not in TYPES:
            raise GrammarError(f"builtin {name}: unknown type {t!r}")
    if not arg_types:
        raise GrammarError(f"builtin {name}: 0-arity builtins are not supported, use a constant terminal")
    b = Builtin(name, tuple(arg_types), result_type, fn)
    BUILTINS[name] = b
    return b


register_builtin("add", ("int", "int"), "int", lambda a, b: _check_int(a + b))
register_builtin("mul", ("int", "int"), "int", lambda a, b: _check_int(a * b))
register_builtin("concat", ("str", "str"), "str", lambda a, b: a + b)
# append(c, s) puts c in front of s
register_builtin("append", ("str", "str"), "str", lambda c, s: c + s)
register_builtin("ite", ("bool", "str", "str"), "str", lambda b, t, e: t if b else e)
register_builtin("ite_int", ("bool", "int", "int"), "int", lambda b, t, e: t if b else e)

_INFIX = {"add": "+", "mul": "*"}


@dataclass(frozen=True)
class Terminal:
    """A constant value or an input variable."""

    name: str
    type: str
    const: Any = None
    var: str | None = None

    @property
    def is_var(self) -> bool:
        return self.var is not None

    def value(self, env: Mapping[str, Any]):
        if self.var is None:
            return self.const
        try:
            return env[self.var]
        except KeyError:
            raise EvaluationError(f"unbound variable {self.var!r}") from None

    def to_sexpr(self) -> str:
        return self.var if self.var is not None else json.dumps(self.const)


@dataclass(frozen=True)
class Production:
    index: int
    lhs: str
    fn: str | None
    rhs: tuple[str, ...]

    @property
    def is_leaf(self) -> bool:
        return self.fn is None

    @property
    def label(self) -> str:
        if self.fn is None:
            return f"{self.lhs} -> {self.rhs[0]}"
        return f"{self.lhs} -> {self.fn}({', '.join(self.rhs)})"


@dataclass(frozen=True)
class Program:
    """Parse tree node; ``terminal`` is set on leaves, ``children`` on function nodes."""

    prod: Production
    children: tuple[Program, ...] = ()
    terminal: Terminal | None = None
    height: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        h = 0 if not self.children else 1 + max(c.height for c in self.children)
        object.__setattr__(self, "height", h)

    @property
    def symbol(self) -> str:
        return self.prod.lhs

    @property
    def is_leaf(self) -> bool:
        return self.terminal is not None

    @property
    def size(self) -> int:
        return 1 + sum(c.size for c in self.children)

    def to_sexpr(self) -> str:
        if self.is_leaf:
            return self.terminal.to_sexpr()
        return "(" + " ".join([self.prod.fn] + [c.to_sexpr() for c in self.children]) + ")"

    def pretty(self) -> str:
        """Infix rendering for arithmetic, s-expressions otherwise."""
        if self.is_leaf:
            return self.terminal.to_sexpr()
        if self.prod.fn in _INFIX and len(self.children) == 2:
            a, b = (c.pretty() for c in self.children)
            return f"({a} {_INFIX[self.prod.fn]} {b})"
        return f"{self.prod.fn}({', '.join(c.pretty() for c in self.children)})"

    def __str__(self) -> str:
        return self.to_sexpr()

    def __repr__(self) -> str:
        return f"Program({self.to_sexpr()})"


def evaluate(p: Program, env: Mapping[str, Any]):
    if p.is_leaf:
        return p.terminal.value(env)
    args = [evaluate(c, env) for c in p.children]
    return apply_builtin(p.prod.fn, args, node=p)


def apply_builtin(name: str, args: Sequence[Any], node=None):
    b = BUILTINS[name]
    for a, t in zip(args, b.arg_types):
        if value_type(a) != t:
            raise EvaluationError(
                f"{name} expects {t}, got {value_type(a)} {a!r}", node=node)
    try:
        return b.fn(*args)
    except OverflowError as e:
        raise EvaluationError(str(e), node=node) from None


def evaluate_vec(p: Program, xs: Sequence[Mapping[str, Any]]) -> tuple:
    out = []
    for i, env in enumerate(xs):
        try:
            out.append(evaluate(p, env))
        except EvaluationError as e:
            raise EvaluationError(str(e), node=e.node, index=i) from None
    return tuple(out)


def complexity(p: Program, costs: Mapping[str, float] | None = None) -> float:
    """Recursive node-cost sum; with ``costs=None`` every node costs 1 (program size)."""
    if costs is None:
        return float(p.size)
    key = p.terminal.name if p.is_leaf else p.prod.fn
    try:
        own = costs[key]
    except KeyError:
        raise ConfigError(f"no cost for {key!r}") from None
    return own + sum(complexity(c, costs) for c in p.children)


@dataclass
class Grammar:
    terminals: dict[str, Terminal]
    nonterminals: tuple[str, ...]
    productions: tuple[Production, ...]
    start: str
    terminal_weights: dict[str, float] = field(default_factory=dict)
    production_weights: dict[int, float] = field(default_factory=dict)
    costs: dict[str, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self._validate()
        self.symbol_types = self._infer_types()
        self.by_lhs = {s: tuple(p for p in self.productions if p.lhs == s) for s in self.nonterminals}
        for t in self.terminals:
            self.terminal_weights.setdefault(t, 1.0)
        for p in self.productions:
            if not p.is_leaf:
                self.production_weights.setdefault(p.index, 1.0)
        for key in list(self.terminals) + [p.fn for p in self.productions if p.fn]:
            self.costs.setdefault(key, 1.0)
        for name, w in list(self.terminal_weights.items()) + list(self.production_weights.items()):
            if not w > 0:
                raise GrammarError(f"weight of {name} must be strictly positive, got {w}")
        for name, c in self.costs.items():
            if not c > 0:
                raise GrammarError(f"cost of {name} must be strictly positive, got {c}")

    def _validate(self):
        nts = set(self.nonterminals)
        if self.start not in nts:
            raise GrammarError(f"start symbol {self.start!r} is not a nonterminal")
        clash = nts & set(self.terminals)
        if clash:
            raise GrammarError(f"names used as both terminal and nonterminal: {sorted(clash)}")
        seen = set()
        for i, p in enumerate(self.productions):
            if p.index != i:
                raise GrammarError(f"production {p.label} has index {p.index}, expected {i}")
            if p.lhs not in nts:
                raise GrammarError(f"production {p.label}: lhs is not a nonterminal")
            if p.is_leaf:
                if len(p.rhs) != 1 or p.rhs[0] not in self.terminals:
                    raise GrammarError(f"leaf production {p.label} must derive exactly one terminal")
            else:
                if p.fn not in BUILTINS:
                    raise GrammarError(f"production {p.label}: unknown builtin {p.fn!r}")
                if BUILTINS[p.fn].arity != len(p.rhs):
                    raise GrammarError(
                        f"production {p.label}: {p.fn} takes {BUILTINS[p.fn].arity} arguments")
                for s in p.rhs:
                    if s not in nts:
                        raise GrammarError(
                            f"production {p.label}: argument {s!r} must be a nonterminal "
                            "(derive terminals through leaf productions)")
            key = (p.lhs, p.fn, p.rhs)
            if key in seen:
                raise GrammarError(f"duplicate production {p.label}")
            seen.add(key)

    def _infer_types(self) -> dict[str, str]:
        types: dict[str, str] = {}

        def assign(sym, t, why):
            old = types.get(sym)
            if old is None:
                types[sym] = t
                return True
            if old != t:
                raise GrammarError(f"{sym!r} would have type {old} and {t} ({why})")
            return False

        changed = True
        while changed:
            changed = False
            for p in self.productions:
                if p.is_leaf:
                    changed |= assign(p.lhs, self.terminals[p.rhs[0]].type, p.label)
                else:
                    changed |= assign(p.lhs, BUILTINS[p.fn].result_type, p.label)
                    for s, t in zip(p.rhs, BUILTINS[p.fn].arg_types):
                        changed |= assign(s, t, p.label)
        return types

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(sorted({t.var for t in self.terminals.values() if t.is_var}))

    @property
    def variable_types(self) -> dict[str, str]:
        return {t.var: t.type for t in self.terminals.values() if t.is_var}

    def weight_of(self, prod: Production) -> float:
        if prod.is_leaf:
            return self.terminal_weights[prod.rhs[0]]
        return self.production_weights[prod.index]

    def cost_of(self, prod: Production) -> float:
        return self.costs[prod.rhs[0] if prod.is_leaf else prod.fn]

    def leaf(self, prod: Production) -> Program:
        return Program(prod, terminal=self.terminals[prod.rhs[0]])

    def production(self, label: str) -> Production:
        for p in self.productions:
            if p.label == label:
                return p
        raise GrammarError(f"no production {label!r}")

    def check(self, p: Program) -> None:
        """Raise GrammarError unless ``p`` is a parse tree of this grammar."""
        if p.prod.index >= len(self.productions) or self.productions[p.prod.index] != p.prod:
            raise GrammarError(f"{p}: production {p.prod.label} is not in the grammar")
        if p.is_leaf:
            if not p.prod.is_leaf or self.terminals.get(p.prod.rhs[0]) != p.terminal:
                raise GrammarError(f"{p}: leaf does not match {p.prod.label}")
            return
        if p.prod.is_leaf or len(p.children) != len(p.prod.rhs):
            raise GrammarError(f"{p}: node does not match {p.prod.label}")
        for c, s in zip(p.children, p.prod.rhs):
            if c.symbol != s:
                raise GrammarError(f"{p}: child {c} derives {c.symbol}, expected {s}")
            self.check(c)

    def parse(self, text: str) -> Program:
        """Parse an s-expression against this grammar, rooted at the start symbol."""
        tokens = _tokenize(text)
        pos, tree = _read(tokens, 0)
        if pos != len(tokens):
            raise GrammarError(f"trailing input in {text!r}")
        return self._resolve(tree, self.start)

    def _resolve(self, tree, symbol: str) -> Program:
        if isinstance(tree, list):
            fn, args = tree[0], tree[1:]
            for p in self.by_lhs[symbol]:
                if p.fn == fn and len(p.rhs) == len(args):
                    try:
                        return Program(p, tuple(self._resolve(a, s) for a, s in zip(args, p.rhs)))
                    except GrammarError:
                        continue
            raise GrammarError(f"cannot derive ({fn} ...) from {symbol!r}")
        for p in self.by_lhs[symbol]:
            if p.is_leaf and self.terminals[p.rhs[0]].to_sexpr() == tree:
                return self.leaf(p)
        raise GrammarError(f"cannot derive {tree} from {symbol!r}")

    def enumerate_programs(self, d: int, symbol: str | None = None) -> Iterator[Program]:
        """Every program of height <= d rooted at ``symbol`` (default: start), each once.

        Order: by height, then by production index, then by the children's order.
        """
        if d < 0:
            raise ValueError("height bound must be >= 0")
        by_height = self._by_height(d)
        root = symbol or self.start
        for h in range(d + 1):
            yield from by_height[h][root]

    def _by_height(self, d: int) -> list[dict[str, list[Program]]]:
        levels: list[dict[str, list[Program]]] = []
        for h in range(d + 1):
            level = {s: [] for s in self.nonterminals}
            for p in self.productions:
                if p.is_leaf:
                    if h == 0:
                        level[p.lhs].append(self.leaf(p))
                    continue
                if h == 0:
                    continue
                below = [[q for k in range(h) for q in levels[k][s]] for s in p.rhs]
                for combo in itertools.product(*below):
                    # the tallest child must sit exactly at h-1
                    if max(c.height for c in combo) == h - 1:
                        level[p.lhs].append(Program(p, tuple(combo)))
            levels.append(level)
        return levels

    def default_costs(self) -> dict[str, float]:
        return dict(self.costs)

    # -- serialization -------------------------------------------------

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], name: str = "") -> Grammar:
        for key in ("terminals", "nonterminals", "productions", "start"):
            if key not in data:
                raise GrammarError(f"grammar is missing field {key!r}")
        terminals = {}
        for tname, spec in data["terminals"].items():
            if "var" in spec:
                if spec.get("type") not in TYPES:
                    raise GrammarError(f"variable terminal {tname!r} needs a type in {TYPES}")
                terminals[tname] = Terminal(tname, spec["type"], var=spec["var"])
            elif "const" in spec:
                c = spec["const"]
                try:
                    t = value_type(c)
                except EvaluationError as e:
                    raise GrammarError(f"terminal {tname!r}: {e}") from None
                terminals[tname] = Terminal(tname, t, const=c)
            else:
                raise GrammarError(f"terminal {tname!r} needs 'var' or 'const'")
        prods = []
        for i, spec in enumerate(data["productions"]):
            prods.append(Production(i, spec["lhs"], spec.get("fn"), tuple(spec["rhs"])))
        weights = data.get("weights", {})
        labels = {p.label: p for p in prods}
        pw = {}
        for label, w in weights.get("productions", {}).items():
            if label not in labels:
                raise GrammarError(f"weight given for unknown production {label!r}")
            if labels[label].is_leaf:
                raise GrammarError(f"{label!r}: leaf productions use the terminal's weight")
            pw[labels[label].index] = float(w)
        tw = {}
        for tname, w in weights.get("terminals", {}).items():
            if tname not in terminals:
                raise GrammarError(f"weight given for unknown terminal {tname!r}")
            tw[tname] = float(w)
        costs = {k: float(v) for k, v in data.get("costs", {}).items()}
        return cls(terminals, tuple(data["nonterminals"]), tuple(prods), data["start"],
                   tw, pw, costs, name=name or data.get("name", ""))

    def to_dict(self) -> dict:
        terms = {}
        for t in self.terminals.values():
            terms[t.name] = {"var": t.var, "type": t.type} if t.is_var else {"const": t.const}
        prods = []
        for p in self.productions:
            entry = {"lhs": p.lhs, "rhs": list(p.rhs)}
            if p.fn is not None:
                entry["fn"] = p.fn
            prods.append(entry)
        return {
            "name": self.name,
            "terminals": terms,
            "nonterminals": list(self.nonterminals),
            "productions": prods,
            "start": self.start,
            "weights": {
                "terminals": dict(self.terminal_weights),
                "productions": {self.productions[i].label: w for i, w in self.production_weights.items()},
            },
            "costs": dict(self.costs),
        }

    @classmethod
    def load(cls, path: str | Path) -> Grammar:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise GrammarError(f"grammar file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise GrammarError(f"{path}: invalid JSON: {e}") from None
        return cls.from_dict(data, name=data.get("name", path.stem))

    def with_weights(self, terminal_weights=None, production_weights=None) -> Grammar:
        """Copy with some weights replaced (production weights keyed by index)."""
        tw = dict(self.terminal_weights)
        tw.update(terminal_weights or {})
        pw = dict(self.production_weights)
        pw.update(production_weights or {})
        return Grammar(dict(self.terminals), self.nonterminals, self.productions, self.start,
                       tw, pw, dict(self.costs), name=self.name)


def _tokenize(text: str) -> list[str]:
    tokens, i = [], 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == '"':
            j = i + 1
            while j < len(text) and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            tokens.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def _read(tokens, pos):
    if pos >= len(tokens):
        raise GrammarError("unexpected end of program text")
    tok = tokens[pos]
    if tok == "(":
        out = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            pos, item = _read(tokens, pos)
            out.append(item)
        if pos >= len(tokens):
            raise GrammarError("unbalanced parentheses")
        return pos + 1, out
    if tok == ")":
        raise GrammarError("unexpected ')'")
    return pos + 1, tok


def load_inputs(raw, grammar: Grammar) -> list[dict]:
    """Normalize JSON inputs: dicts pass through, scalars bind the grammar's only variable."""
    vars_ = grammar.variables
    out = []
    for item in raw:
        if isinstance(item, dict):
            env = dict(item)
        elif len(vars_) == 1:
            env = {vars_[0]: item}
        else:
            raise GrammarError(f"input {item!r} must be an object binding {list(vars_)}")
        missing = [v for v in vars_ if v not in env]
        if missing:
            raise GrammarError(f"input {item!r} does not bind {missing}")
        out.append(env)
    return out
