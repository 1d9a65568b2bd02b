#!/usr/bin/env python3
"""Differential fuzzing campaign over randomly generated programs.

Exercises the four properties the package checks: backward-compatible
correctness of the hardening pass, safety preservation, relative security of
hardened programs, and lock-step agreement of the linearized machine code.

    python3 scripts/fuzz_campaign.py --seed 0 --runs 200
"""

import argparse
import pathlib
import random
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).parent.parent / "src"))

from specibt.checks import (
    check_bcc_linearize,
    check_bcc_specibt,
    check_relative_security,
    check_safety_preservation,
)
from specibt.explore import ExploreBudget
from specibt.gen import gen_program, gen_safe_input, gen_seq_equiv_pair, gen_state, spec_of


def campaign(name, runs, one):
    counts = {}
    t0 = time.time()
    for i in range(runs):
        v = one(i)
        counts[v.status] = counts.get(v.status, 0) + 1
        if v.status == "counterexample":
            print(f"  !! {name} #{i}: {v.reason}")
            print(f"     directives: {v.directives}")
    dt = time.time() - t0
    print(f"{name:12s} {runs} runs in {dt:5.1f} s  {counts}")
    return counts.get("counterexample", 0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--sequences", type=int, default=100)
    ap.add_argument("--fuel", type=int, default=300)
    args = ap.parse_args()

    budget = ExploreBudget(args.depth, args.sequences, args.fuel)
    rng = random.Random(args.seed)
    failures = 0

    def bcc(i):
        return check_bcc_specibt(gen_program(rng), gen_state(rng), budget)

    def safety(i):
        while True:
            p = gen_program(rng)
            s = gen_safe_input(rng, p, fuel=2000)
            if s is not None:
                return check_safety_preservation(p, s, budget)

    def rs(i):
        pair = gen_seq_equiv_pair(rng, fuel=2000)
        return check_relative_security(pair.program, pair.s1, pair.s2, budget)

    def lin(i):
        while True:
            p = gen_program(rng)
            s = gen_safe_input(rng, p, fuel=2000)
            if s is not None:
                return check_bcc_linearize(p, spec_of(s), len(s.mem), budget)

    failures += campaign("bcc", args.runs, bcc)
    failures += campaign("safety", args.runs, safety)
    failures += campaign("rs", args.runs, rs)
    failures += campaign("linearize", args.runs, lin)

    print("no counterexamples" if failures == 0 else f"{failures} counterexamples")
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
