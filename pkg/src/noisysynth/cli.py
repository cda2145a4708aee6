"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (bad flags, missing or malformed
files), 2 failure while computing.  Results go to stdout or ``--out``;
diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from noisysynth.distances import DistanceFn
from noisysynth.dsl import Grammar, evaluate_vec, load_inputs
from noisysynth.errors import EvaluationError, SynthError
from noisysynth.experiments import (
    EquivalenceChecker,
    check_input_differentiating,
    check_noise_differentiating,
    convergence_by_program,
    estimate_convergence,
    export_report,
    generate_dataset,
    input_source_from_config,
    load_experiment,
    read_report,
    report_csv,
    reweighted,
)
from noisysynth.fta import build, dump, weights
from noisysynth.loss import from_config as loss_from_config
from noisysynth.loss import parse_loss_arg
from noisysynth.noise import NoiseModel
from noisysynth.noise import from_config as noise_from_config
from noisysynth.prior import Prior
from noisysynth.synthesizer import SynthesisProblem, synthesize


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def parse_noise_arg(text: str) -> NoiseModel:
    """``name``, ``name:delta`` or inline JSON."""
    text = text.strip()
    if text.startswith("{"):
        return noise_from_config(json.loads(text))
    name, _, param = text.partition(":")
    if param:
        return noise_from_config({"kind": name, "delta": float(param)})
    return noise_from_config(name)


def _read_json(path: str) -> Any:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{p}: invalid JSON: {e}") from None


def _json_or_file(text: str) -> Any:
    s = text.strip()
    if s[:1] in "[{" or s[:1].isdigit() or s[:1] in '-"':
        return json.loads(s)
    return _read_json(s)


def _load_grammar(path: str) -> Grammar:
    if not Path(path).is_file():
        raise ValidationError(f"grammar file not found: {path}")
    return Grammar.load(path)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- subcommands: each returns a thunk so validation finishes before work starts

def cmd_synth(a):
    g = _load_grammar(a.grammar)
    data = _read_json(a.data)
    if not isinstance(data, dict) or "inputs" not in data or "outputs" not in data:
        raise ValidationError(f"{a.data}: expected an object with 'inputs' and 'outputs'")
    xs = load_inputs(data["inputs"], g)
    d = a.depth if a.depth is not None else data.get("depth")
    if d is None:
        raise ValidationError("no height bound: pass --depth or set 'depth' in the data file")
    loss = parse_loss_arg(a.loss) if a.loss else loss_from_config(data.get("loss", "zero_one"))
    costs = _json_or_file(a.costs) if a.costs else data.get("costs")
    problem = SynthesisProblem(g, int(d), loss, xs, data["outputs"], costs)

    def run():
        res = synthesize(problem)
        out = res.to_dict()
        # timings vary run to run; keep stdout byte-stable
        out["diagnostics"] = {k: v for k, v in out["diagnostics"].items() if not k.endswith("_seconds")}
        out["seed"] = a.seed
        out["depth"] = int(d)
        out["loss_config"] = loss.to_config()
        _emit(_dumps(out), a.out)
    return run


def _experiment(a):
    spec = _read_json(a.config)
    if not isinstance(spec, dict):
        raise ValidationError(f"{a.config}: expected a JSON object")
    spec = dict(spec)
    if getattr(a, "depth", None) is not None:
        spec["d"] = a.depth
    if getattr(a, "trials", None) is not None:
        spec["trials"] = a.trials
    if a.seed is not None:
        spec["seed"] = a.seed
    cfg = load_experiment(spec, Path(a.config).parent)
    if getattr(a, "loss", None):
        cfg.loss = parse_loss_arg(a.loss)
    if getattr(a, "noise", None):
        cfg.noise = parse_noise_arg(a.noise)
    return cfg


def cmd_gen_data(a):
    cfg = _experiment(a)
    if a.n < 1:
        raise ValidationError(f"--n must be >= 1, got {a.n}")

    def run():
        prior = Prior(cfg.grammar, cfg.d)
        data = generate_dataset(prior, cfg.source, cfg.noise, a.n, (cfg.seed,), cfg.hidden)
        out = data.to_dict()
        out["depth"] = cfg.d
        out["loss"] = cfg.loss.to_config()
        out["seed"] = cfg.seed
        _emit(_dumps(out), a.out)
    return run


def cmd_converge(a):
    cfg = _experiment(a)
    if a.jobs < 1:
        raise ValidationError(f"--jobs must be >= 1, got {a.jobs}")

    def run():
        if a.by_program:
            per, worst = convergence_by_program(cfg, a.jobs)
            worst.metadata["per_program"] = {
                k: [[r.n, r.trials, r.successes, r.errors] for r in rep.rows] for k, rep in per.items()
            }
            report = worst
        else:
            report = estimate_convergence(cfg, a.jobs)
        if a.out:
            export_report(report, a.out)
        else:
            sys.stdout.write(report_csv(report))
        errs = sum(r.errors for r in report.rows)
        if errs:
            print(f"{errs} trial(s) aborted with errors; see the JSON sidecar", file=sys.stderr)
    return run


def _check_common(a, need):
    spec = _read_json(a.config)
    if not isinstance(spec, dict):
        raise ValidationError(f"{a.config}: expected a JSON object")
    for key in need:
        if key not in spec:
            raise ValidationError(f"{a.config}: missing {key!r}")
    gpath = Path(spec["grammar"])
    if not gpath.is_absolute():
        gpath = Path(a.config).parent / gpath
    g = _load_grammar(str(gpath))
    if spec.get("weights"):
        g = reweighted(g, spec["weights"])
    d = a.depth if a.depth is not None else int(spec["d"])
    trials = a.trials if a.trials is not None else int(spec.get("trials", 100))
    seed = a.seed if a.seed is not None else int(spec.get("seed", 0))
    return spec, g, d, trials, seed


def _estimate_json(est, extra) -> str:
    lo, hi = est.ci
    out = {"successes": est.successes, "trials": est.trials, "errors": est.errors,
           "p_hat": est.p_hat, "ci_lo": lo, "ci_hi": hi}
    out.update(extra)
    return _dumps(out)


def cmd_check_input_diff(a):
    spec, g, d, trials, seed = _check_common(
        a, ("grammar", "d", "input_source", "distance", "hidden", "n", "eps"))
    source = input_source_from_config(spec["input_source"], g)
    distance = DistanceFn.from_config(spec["distance"])
    hidden = g.parse(spec["hidden"])
    n, eps = int(spec["n"]), float(spec["eps"])
    domain = spec.get("equivalence_domain")
    checker = EquivalenceChecker(load_inputs(domain, g), "exhaustive") if domain else None

    def run():
        est = check_input_differentiating(g, d, source, distance, hidden, n, eps, trials, seed, checker)
        _emit(_estimate_json(est, {"seed": seed, "n": n, "eps": eps, "hidden": hidden.to_sexpr(),
                                   "distance": distance.to_config()}), a.out)
    return run


def cmd_check_noise_diff(a):
    spec, g, d, trials, seed = _check_common(
        a, ("grammar", "d", "inputs", "noise", "loss", "distance", "gamma", "eps"))
    xs = load_inputs(spec["inputs"], g)
    noise = parse_noise_arg(a.noise) if a.noise else noise_from_config(spec["noise"])
    loss = parse_loss_arg(a.loss) if a.loss else loss_from_config(spec["loss"])
    distance = DistanceFn.from_config(spec["distance"])
    if "clean_outputs" in spec:
        z_h = tuple(spec["clean_outputs"])
    elif "hidden" in spec:
        z_h = evaluate_vec(g.parse(spec["hidden"]), xs)
    else:
        raise ValidationError(f"{a.config}: give 'hidden' or 'clean_outputs'")
    gamma, eps = float(spec["gamma"]), float(spec["eps"])

    def run():
        est = check_noise_differentiating(g, d, xs, noise, loss, distance, z_h, gamma, eps, trials, seed)
        _emit(_estimate_json(est, {"seed": seed, "gamma": gamma, "eps": eps,
                                   "clean_outputs": list(z_h)}), a.out)
    return run


def cmd_enumerate(a):
    g = _load_grammar(a.grammar)
    if a.depth is None:
        raise ValidationError("--depth is required")
    xs = load_inputs(_json_or_file(a.inputs), g) if a.inputs else None

    def run():
        prior = Prior(g, a.depth)
        rows = []
        for p in prior.programs:
            entry = {"program": p.to_sexpr(), "height": p.height,
                     "rho": prior.rho(p), "weight": prior.program_weight(p)}
            if xs is not None:
                try:
                    entry["outputs"] = list(evaluate_vec(p, xs))
                except EvaluationError as e:
                    entry["error"] = str(e)
            rows.append(entry)
        _emit(_dumps({"depth": a.depth, "count": len(rows), "programs": rows, "seed": a.seed}), a.out)
    return run


def cmd_dump_fta(a):
    g = _load_grammar(a.grammar)
    if a.depth is None:
        raise ValidationError("--depth is required")
    xs = load_inputs(_json_or_file(a.inputs), g)

    def run():
        fta = build(g, xs, a.depth)
        _emit(dump(fta, weights(fta)) + "\n", a.out)
    return run


def cmd_plot(a):
    if not Path(a.csv).is_file():
        raise ValidationError(f"file not found: {a.csv}")
    report = read_report(a.csv)

    def run():
        _emit(render_svg(report, a.title or report.metadata.get("name", "")), a.out)
    return run


def render_svg(report, title: str = "", width: int = 480, height: int = 320) -> str:
    """p_hat against n with Wilson intervals, as a standalone SVG."""
    ml, mr, mt, mb = 50, 20, 30, 40
    pw, ph = width - ml - mr, height - mt - mb
    ns = [r.n for r in report.rows]
    lo_n, hi_n = (min(ns), max(ns)) if ns else (0, 1)
    span = (hi_n - lo_n) or 1

    def sx(n):
        return ml + pw * (n - lo_n) / span

    def sy(p):
        return mt + ph * (1 - p)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>']
    for p in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{ml - 6}" y="{sy(p) + 4:.1f}" font-size="10" text-anchor="end">{p}</text>')
    for n in ns:
        parts.append(f'<text x="{sx(n):.1f}" y="{mt + ph + 14}" font-size="10" text-anchor="middle">{n}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="{height - 6}" font-size="11" text-anchor="middle">n</text>')
    if title:
        parts.append(f'<text x="{ml + pw / 2}" y="16" font-size="12" text-anchor="middle">{_xml(title)}</text>')
    pts = []
    for r in report.rows:
        lo, hi = r.ci
        x = sx(r.n)
        parts.append(f'<line x1="{x:.1f}" y1="{sy(lo):.1f}" x2="{x:.1f}" y2="{sy(hi):.1f}" stroke="gray"/>')
        pts.append(f"{x:.1f},{sy(r.p_hat):.1f}")
    if pts:
        parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="steelblue" stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _xml(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="noisysynth", description="Noisy programming-by-example synthesis.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed_default=0):
        p.add_argument("--seed", type=int, default=seed_default,
                       help="master seed (default %(default)s)")
        p.add_argument("--out", help="write the result here instead of stdout")

    p = sub.add_parser("synth", help="synthesize a program from a noisy dataset")
    p.add_argument("--grammar", required=True, help="grammar JSON file")
    p.add_argument("--data", required=True, help="dataset JSON: {inputs, outputs, depth?, loss?, costs?}")
    p.add_argument("--depth", type=int, help="height bound d")
    p.add_argument("--loss", help="loss: name, name:delta or inline JSON")
    p.add_argument("--costs", help="complexity costs as JSON or a file (default: size)")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gen-data", help="sample a noisy dataset from an experiment config")
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--n", type=int, required=True, help="number of examples")
    p.add_argument("--depth", type=int, help="override the height bound")
    p.add_argument("--noise", help="override the noise source: name, name:delta or JSON")
    common(p, None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("converge", help="estimate the probability of recovering the hidden program")
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--trials", type=int, help="override trials per dataset size")
    p.add_argument("--depth", type=int, help="override the height bound")
    p.add_argument("--loss", help="override the loss")
    p.add_argument("--noise", help="override the noise source")
    p.add_argument("--by-program", action="store_true",
                   help="one curve per hidden program class; the CSV holds the worst case")
    common(p, None)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("check-input-diff", help="estimate how often an input source separates programs")
    p.add_argument("--config", required=True, help="check JSON file")
    p.add_argument("--trials", type=int, help="override the number of sampled input vectors")
    p.add_argument("--depth", type=int, help="override the height bound")
    common(p, None)
    p.set_defaults(func=cmd_check_input_diff)

    p = sub.add_parser("check-noise-diff", help="estimate how often noise keeps far outputs well separated in loss")
    p.add_argument("--config", required=True, help="check JSON file")
    p.add_argument("--trials", type=int, help="override the number of noise draws")
    p.add_argument("--depth", type=int, help="override the height bound")
    p.add_argument("--loss", help="override the loss")
    p.add_argument("--noise", help="override the noise source")
    common(p, None)
    p.set_defaults(func=cmd_check_noise_diff)

    p = sub.add_parser("enumerate", help="list programs up to a height with their prior probability")
    p.add_argument("--grammar", required=True, help="grammar JSON file")
    p.add_argument("--depth", type=int, help="height bound d")
    p.add_argument("--inputs", help="optional inputs (JSON list or file) to evaluate on")
    common(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("dump-fta", help="print the automaton built on some inputs")
    p.add_argument("--grammar", required=True, help="grammar JSON file")
    p.add_argument("--depth", type=int, help="height bound d")
    p.add_argument("--inputs", required=True, help="inputs as a JSON list or a file")
    common(p)
    p.set_defaults(func=cmd_dump_fta)

    p = sub.add_parser("plot", help="render a convergence CSV as SVG")
    p.add_argument("--csv", required=True, help="CSV written by converge")
    p.add_argument("--title", help="plot title")
    common(p)
    p.set_defaults(func=cmd_plot)
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        job = args.func(args)
    except (ValidationError, SynthError, ValueError, KeyError, TypeError) as e:
        print(f"error: {_msg(e)}", file=sys.stderr)
        return 1
    try:
        job()
    except (SynthError, OSError, ValueError, ArithmeticError) as e:
        print(f"error: {_msg(e)}", file=sys.stderr)
        return 2
    return 0


def _msg(e: Exception) -> str:
    if isinstance(e, KeyError):
        return f"missing field {e.args[0]!r}"
    return str(e)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
