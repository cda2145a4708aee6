import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisysynth import Grammar, complexity, evaluate, evaluate_vec
from noisysynth.dsl import register_builtin, values_equal
from noisysynth.errors import ConfigError, EvaluationError, GrammarError


def test_evaluate_variable(arith):
    assert evaluate(arith.parse("x"), {"x": 1}) == 1


def test_evaluate_nested(arith):
    assert evaluate(arith.parse("(mul (add x 3) 3)"), {"x": 1}) == 12


def test_append(prefix_ab):
    assert evaluate(prefix_ab.parse('(append "a" x)'), {"x": "bc"}) == "abc"


def test_evaluate_vec(arith):
    assert evaluate_vec(arith.parse("(mul x 2)"), [{"x": 1}, {"x": 2}]) == (2, 4)
    assert evaluate_vec(arith.parse("x"), []) == ()
    assert evaluate_vec(arith.parse("(add x 2)"), [{"x": 1}]) == (3,)


def test_unbound_variable(arith):
    with pytest.raises(EvaluationError):
        evaluate(arith.parse("x"), {})


def test_type_mismatch_reports_index(arith):
    p = arith.parse("(add x 2)")
    with pytest.raises(EvaluationError) as e:
        evaluate_vec(p, [{"x": 1}, {"x": "s"}])
    assert e.value.index == 1
    assert "example 1" in str(e.value)


def test_overflow_is_an_error(arith):
    with pytest.raises(EvaluationError):
        evaluate(arith.parse("(mul x 3)"), {"x": 2**62})


def test_values_of_different_tags_differ():
    assert not values_equal(1, True)
    assert not values_equal(0, False)
    assert values_equal("a", "a")


def test_complexity(arith):
    assert complexity(arith.parse("x")) == 1
    p = arith.parse("(mul (add x 3) 3)")
    assert complexity(p) == 5
    assert complexity(p, {"x": 1, "2": 1, "3": 1, "add": 1, "mul": 2}) == 6
    with pytest.raises(ConfigError):
        complexity(p, {"x": 1})


def test_height_convention(arith):
    assert arith.parse("x").height == 0
    assert arith.parse("(mul (add x 3) 3)").height == 2


def test_enumerate_counts(arith):
    assert [p.to_sexpr() for p in arith.enumerate_programs(0)] == ["x"]
    progs = list(arith.enumerate_programs(2))
    assert len(progs) == 21
    assert sum(p.height == 1 for p in progs) == 4
    assert sum(p.height == 2 for p in progs) == 16
    assert len({p.to_sexpr() for p in progs}) == 21


def test_enumerate_outputs_at_x1(arith):
    outs = {evaluate(p, {"x": 1}) for p in arith.enumerate_programs(2)}
    assert outs == {1, 2, 3, 4, 5, 6, 7, 8, 9, 12}


@pytest.mark.parametrize("d", [0, 1, 2, 3])
def test_enumeration_is_monotone_in_d(arith, d):
    small = list(arith.enumerate_programs(d))
    big = set(arith.enumerate_programs(d + 1))
    assert set(small) <= big
    assert all(p.height <= d for p in small)
    heights = [p.height for p in small]
    assert heights == sorted(heights)


def test_size_counts_nodes(strings):
    for p in strings.enumerate_programs(2):
        assert complexity(p) == p.size


def test_parse_roundtrip(strings, strings_ab):
    for g in (strings, strings_ab):
        for p in g.enumerate_programs(2):
            q = g.parse(p.to_sexpr())
            assert q == p
            g.check(q)


def test_parse_rejects_bad_trees(arith):
    for bad in ["(add 2 x)", "(add x)", "(mul x x", "y", "(concat x 2)"]:
        with pytest.raises(GrammarError):
            arith.parse(bad)


def test_grammar_validation():
    base = {
        "terminals": {"x": {"var": "x", "type": "int"}},
        "nonterminals": ["n"],
        "productions": [{"lhs": "n", "rhs": ["x"]}],
        "start": "n",
    }
    Grammar.from_dict(base)
    with pytest.raises(GrammarError):
        Grammar.from_dict({**base, "start": "m"})
    with pytest.raises(GrammarError):
        Grammar.from_dict({**base, "weights": {"terminals": {"x": 0}}})
    with pytest.raises(GrammarError):
        Grammar.from_dict({**base, "productions": [{"lhs": "n", "rhs": ["zz"]}]})
    with pytest.raises(GrammarError):
        Grammar.from_dict({**base, "productions": [{"lhs": "n", "fn": "nope", "rhs": ["n"]}]})
    with pytest.raises(GrammarError):
        Grammar.from_dict({**base, "productions": base["productions"] + [
            {"lhs": "n", "fn": "concat", "rhs": ["n", "n"]}]})


def test_duplicate_productions_rejected():
    spec = {
        "terminals": {"x": {"var": "x", "type": "int"}, "2": {"const": 2}},
        "nonterminals": ["n", "t"],
        "productions": [{"lhs": "n", "rhs": ["x"]}, {"lhs": "t", "rhs": ["2"]},
                        {"lhs": "n", "fn": "add", "rhs": ["n", "t"]},
                        {"lhs": "n", "fn": "add", "rhs": ["n", "t"]}],
        "start": "n",
    }
    with pytest.raises(GrammarError):
        Grammar.from_dict(spec)


def test_missing_file(tmp_path):
    with pytest.raises(GrammarError, match="not found"):
        Grammar.load(tmp_path / "nope.json")


def test_dict_roundtrip(strings_ab):
    g2 = Grammar.from_dict(strings_ab.to_dict())
    assert g2.to_dict() == strings_ab.to_dict()


def test_register_builtin():
    register_builtin("neg_test", ("int",), "int", lambda a: -a)
    g = Grammar.from_dict({
        "terminals": {"x": {"var": "x", "type": "int"}},
        "nonterminals": ["n"],
        "productions": [{"lhs": "n", "rhs": ["x"]}, {"lhs": "n", "fn": "neg_test", "rhs": ["n"]}],
        "start": "n",
    })
    assert evaluate(g.parse("(neg_test (neg_test x))"), {"x": 4}) == 4
    with pytest.raises(GrammarError):
        register_builtin("zero_arity", (), "int", lambda: 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=5))
def test_evaluate_vec_is_elementwise(arith, xs):
    envs = [{"x": v} for v in xs]
    for p in arith.enumerate_programs(2):
        vec = evaluate_vec(p, envs)
        assert len(vec) == len(xs)
        assert vec == tuple(evaluate(p, e) for e in envs)
