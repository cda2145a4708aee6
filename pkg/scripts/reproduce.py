#!/usr/bin/env python3
"""Regenerate the statistical artifacts behind each acceptance criterion.

    python3 scripts/reproduce.py            # everything
    python3 scripts/reproduce.py 5 8        # just criteria 5 and 8
    python3 scripts/reproduce.py --jobs 4 --out results

Every step is a plain CLI call, printed before it runs, so any line can be
copied to a shell.  Outputs land in ``--out`` (default ``results/``).
"""
from __future__ import annotations

import argparse
import shlex
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
CFG = ROOT / "configs"

STRINGS = [f"strings_{v}_{d}" for v in ("nsub_lns", "onedel_l1d", "onedel_ldl") for d in ("d01", "d04")]


def steps(crit: int, out: Path, jobs: str) -> list[list[str]]:
    def converge(name):
        return [["converge", "--config", str(CFG / f"{name}.json"), "--jobs", jobs,
                 "--out", str(out / f"{name}.csv")],
                ["plot", "--csv", str(out / f"{name}.csv"), "--title", name, "--out", str(out / f"{name}.svg")]]

    def check(cmd, name):
        return [[cmd, "--config", str(CFG / f"{name}.json"), "--out", str(out / f"{name}.json")]]

    if crit == 1:
        return [["dump-fta", "--grammar", str(ROOT / "grammars/arith.json"), "--depth", "2",
                 "--inputs", str(CFG / "arith_x1_inputs.json"), "--out", str(out / "arith_x1_fta.json")]]
    if crit in (2, 3, 4):
        return []  # in-process property checks; see tests/test_acceptance.py
    if crit in (5, 8):
        return [s for name in STRINGS for s in converge(name)]
    if crit == 6:
        return converge("strings_onedel_lns_d03")
    if crit == 7:
        return [s for name in ("prefix_fcd_pa", "prefix_fcd_pb", "prefix_lab_pa", "prefix_lab_pb")
                for s in converge(name)]
    if crit == 9:
        return (check("check-noise-diff", "ab_noise_diff_dl2")
                + check("check-noise-diff", "ab_noise_diff_dl2_bfalse")
                + check("check-noise-diff", "ab_noise_diff_counting")
                + check("check-input-diff", "ab_input_diff_counting")
                + [s for name in ("ab_btrue_pa", "ab_btrue_pb", "ab_bfalse_pa", "ab_bfalse_pb",
                                  "prefix_lab_pa", "prefix_lab_pb") for s in converge(name)])
    if crit == 10:
        return []  # run twice with different --jobs and diff the output directories
    raise SystemExit(f"no criterion {crit}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("criteria", nargs="*", type=int, default=list(range(1, 11)))
    ap.add_argument("--out", default="results")
    ap.add_argument("--jobs", default="1")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    seen = set()
    for crit in a.criteria:
        for argv in steps(crit, out, a.jobs):
            key = tuple(argv)
            if key in seen:
                continue
            seen.add(key)
            cmd = [sys.executable, "-m", "noisysynth.cli", *argv]
            print("noisysynth " + shlex.join(argv), flush=True)
            subprocess.run(cmd, check=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
