"""Noisy programming-by-example synthesis over finite tree automata."""

from noisysynth.dsl import Grammar, Program, complexity, evaluate, evaluate_vec
from noisysynth.errors import (
    ConfigError,
    EvaluationError,
    GrammarError,
    SynthError,
)
from noisysynth.fta import Fta, build
from noisysynth.prior import Prior
from noisysynth.synthesizer import (
    SynthesisProblem,
    SynthesisResult,
    oracle_synthesize,
    synthesize,
)

__all__ = [
    "ConfigError",
    "EvaluationError",
    "Fta",
    "Grammar",
    "GrammarError",
    "Prior",
    "Program",
    "SynthError",
    "SynthesisProblem",
    "SynthesisResult",
    "build",
    "complexity",
    "evaluate",
    "evaluate_vec",
    "oracle_synthesize",
    "synthesize",
]
