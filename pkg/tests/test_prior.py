import math
from collections import Counter

import numpy as np
import pytest

from noisysynth import Grammar, Prior, evaluate_vec
from noisysynth.errors import ConfigError
from noisysynth.experiments import reweighted


def test_uniform_program_weight(arith):
    prior = Prior(arith, 2)
    assert all(prior.program_weight(p) == 1.0 for p in prior.programs)
    assert prior.total_weight == pytest.approx(21)


def test_weight_is_product_along_derivation(arith):
    g = reweighted(arith, {"terminals": {"x": 2, "2": 5}, "productions": {"n -> add(n, t)": 3}})
    prior = Prior(g, 2)
    assert prior.program_weight(g.parse("(add x 2)")) == pytest.approx(30)
    assert prior.program_weight(g.parse("x")) == pytest.approx(2)


def test_total_weight_matches_enumeration(arith, strings, strings_ab):
    rng = np.random.default_rng(5)
    for g in (arith, strings, strings_ab):
        tw = {t: float(rng.uniform(0.1, 4)) for t in g.terminals}
        pw = {p.index: float(rng.uniform(0.1, 4)) for p in g.productions if not p.is_leaf}
        g2 = g.with_weights(tw, pw)
        for d in range(g is strings_ab and 2 or 0, 4):
            prior = Prior(g2, d)
            brute = math.fsum(prior.program_weight(p) for p in prior.programs)
            assert prior.total_weight == pytest.approx(brute, rel=1e-12)
            assert math.fsum(prior.rho(p) for p in prior.programs) == pytest.approx(1.0, abs=1e-9)
            assert all(prior.rho(p) > 0 for p in prior.programs)


def test_uniform_rho(arith):
    prior = Prior(arith, 2)
    for p in prior.programs:
        assert prior.rho(p) == pytest.approx(1 / 21)


def test_rho_rejects_tall_programs(arith):
    prior = Prior(arith, 1)
    with pytest.raises(ConfigError):
        prior.rho(arith.parse("(add (add x 2) 2)"))


def test_single_program_grammar():
    g = Grammar.from_dict({"terminals": {"x": {"var": "x", "type": "int"}}, "nonterminals": ["n"],
                           "productions": [{"lhs": "n", "rhs": ["x"]}], "start": "n"})
    prior = Prior(g, 3)
    assert prior.rho(g.parse("x")) == 1.0


def test_class_probability_sums_members(arith):
    prior = Prior(arith, 2)
    xs = [{"x": 1}]
    classes = prior.class_probabilities(xs)
    assert math.fsum(classes.values()) == pytest.approx(1.0)
    members = Counter(evaluate_vec(p, xs) for p in prior.programs)
    for z, c in members.items():
        assert classes[z] == pytest.approx(c / 21)


def test_sampling_frequencies(arith):
    prior = Prior(arith, 2)
    rng = np.random.default_rng(123)
    n = 100_000
    counts = Counter(prior.sample_program(rng=rng) for _ in range(n))
    p = 1 / 21
    sigma = math.sqrt(n * p * (1 - p))
    assert len(counts) == 21
    for c in counts.values():
        assert abs(c - n * p) <= 3 * sigma + 1


def test_point_mass_sampling(arith):
    g = reweighted(arith, {"productions": {"n -> add(n, t)": 1e-9, "n -> mul(n, t)": 1e-9}})
    prior = Prior(g, 1)
    rng = np.random.default_rng(0)
    hits = sum(prior.sample_program(rng=rng).to_sexpr() == "x" for _ in range(5000))
    assert hits / 5000 >= 0.999


def test_sampling_is_seeded(strings):
    prior = Prior(strings, 2)
    assert [prior.sample_program(seed=s) for s in range(20)] == [prior.sample_program(seed=s) for s in range(20)]


def test_deep_prior_is_stable(arith):
    # log-space partition avoids overflow with large weights
    g = reweighted(arith, {"terminals": {"x": 1e200}})
    prior = Prior(g, 4)
    assert math.isfinite(prior.log_total_weight)
