"""Bounded enumeration of attacker directive sequences.

Exploration forks every prediction point (branch outcome, call target)
within the first `depth` predictions; beyond the depth, the correct
prediction is supplied so runs still finish. Call-target candidates are
every block head plus one mid-block offset per multi-instruction block:
correct calls, wrong-function calls and mid-function injection are all
covered without exponential blowup.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .ir import Branch, Call, FP, PC, Program, fetch
from .interp import (
    DBranch,
    DCallMc,
    DCallMir,
    Directive,
    Fault,
    IdealState,
    Next,
    Obs,
    Outcome,
    OutOfDirectives,
    RunResult,
    SpecState,
    _terminal,
    eval_expr,
    is_nat,
    step_ideal,
    step_spec,
)
from .machine import LayoutMap, McProgram, McState, eval_mc, step_mc


@dataclass(frozen=True)
class ExploreBudget:
    depth: int = 3
    max_sequences: int = 200
    fuel: int = 1000


class SpecDriver:
    """Speculative block-structured execution of `p`."""

    def __init__(self, p: Program, cet: bool = True):
        self.p = p
        self.cet = cet
        self._call_candidates = _mir_call_candidates(p)

    def step(self, s: SpecState, d: Optional[Directive]) -> Outcome:
        return step_spec(self.p, s, d, cet=self.cet)

    def candidates(self, s: SpecState) -> list[Directive]:
        inst = fetch(self.p, s.pc)
        if isinstance(inst, Branch):
            return [DBranch(True), DBranch(False)]
        assert isinstance(inst, Call)
        return list(self._call_candidates)

    def correct(self, s: SpecState) -> Directive:
        inst = fetch(self.p, s.pc)
        if isinstance(inst, Branch):
            v = eval_expr(inst.cond, s.regs)
            return DBranch(is_nat(v) and v != 0)
        assert isinstance(inst, Call)
        v = eval_expr(inst.target, s.regs)
        assert isinstance(v, FP)
        return DCallMir(PC(v.label, 0))


class IdealDriver:
    """Ideal-semantics execution, with masking applied when predicting."""

    def __init__(self, p: Program):
        self.p = p
        self._call_candidates = _mir_call_candidates(p)

    def step(self, s: IdealState, d: Optional[Directive]) -> Outcome:
        return step_ideal(self.p, s, d)

    def candidates(self, s: IdealState) -> list[Directive]:
        inst = fetch(self.p, s.pc)
        if isinstance(inst, Branch):
            return [DBranch(True), DBranch(False)]
        assert isinstance(inst, Call)
        return list(self._call_candidates)

    def correct(self, s: IdealState) -> Directive:
        inst = fetch(self.p, s.pc)
        if isinstance(inst, Branch):
            if s.ms:
                return DBranch(False)
            v = eval_expr(inst.cond, s.regs)
            return DBranch(is_nat(v) and v != 0)
        assert isinstance(inst, Call)
        if s.ms:
            return DCallMir(PC(0, 0))
        v = eval_expr(inst.target, s.regs)
        assert isinstance(v, FP)
        return DCallMir(PC(v.label, 0))


class McDriver:
    """Speculative flat-machine execution."""

    def __init__(self, mc: McProgram, lay: LayoutMap):
        self.mc = mc
        self.lay = lay
        cands: list[Directive] = [DCallMc(lay.addr(l)) for l in range(len(lay.starts))]
        cands.extend(
            DCallMc(lay.addr(l) + 1)
            for l in range(len(lay.starts))
            if lay.sizes[l] > 1
        )
        self._call_candidates = cands

    def step(self, s: McState, d: Optional[Directive]) -> Outcome:
        return step_mc(self.mc, self.lay, s, d)

    def candidates(self, s: McState) -> list[Directive]:
        inst = self.mc.code[s.pc - self.lay.data_len]
        if isinstance(inst, Branch):
            return [DBranch(True), DBranch(False)]
        assert isinstance(inst, Call)
        return list(self._call_candidates)

    def correct(self, s: McState) -> Directive:
        inst = self.mc.code[s.pc - self.lay.data_len]
        if isinstance(inst, Branch):
            return DBranch(eval_mc(inst.cond, s.regs) != 0)
        assert isinstance(inst, Call)
        return DCallMc(eval_mc(inst.target, s.regs))


def _mir_call_candidates(p: Program) -> list[Directive]:
    cands: list[Directive] = [DCallMir(PC(l, 0)) for l in range(len(p.blocks))]
    cands.extend(
        DCallMir(PC(l, 1)) for l, b in enumerate(p.blocks) if len(b.insts) > 1
    )
    return cands


def explore(
    driver, s0, budget: ExploreBudget
) -> Iterator[tuple[tuple[Directive, ...], RunResult]]:
    """All bounded runs from `s0`, as (directive sequence, result) pairs, in
    deterministic depth-first order. Stops after max_sequences results."""
    emitted = 0

    def finish(
        out: Outcome, s, dirs: tuple[Directive, ...], trace: tuple[Obs, ...]
    ) -> RunResult:
        if isinstance(out, Fault) and out.obs is not None:
            trace = trace + (out.obs,)
        status, reason = _terminal(out)
        return RunResult(
            list(trace),
            status,
            reason,
            state=s,
            directives_used=len(dirs),
            final_ms=getattr(s, "ms", None),
        )

    def walk(
        s, dirs: tuple[Directive, ...], trace: tuple[Obs, ...], fuel: int, forks: int
    ) -> Iterator[tuple[tuple[Directive, ...], RunResult]]:
        nonlocal emitted
        while True:
            if emitted >= budget.max_sequences:
                return
            if fuel <= 0:
                emitted += 1
                yield dirs, RunResult(
                    list(trace),
                    "fuel",
                    state=s,
                    directives_used=len(dirs),
                    final_ms=getattr(s, "ms", None),
                )
                return
            out = driver.step(s, None)
            if isinstance(out, OutOfDirectives):
                if forks < budget.depth:
                    for d in driver.candidates(s):
                        if emitted >= budget.max_sequences:
                            return
                        out2 = driver.step(s, d)
                        if isinstance(out2, Next):
                            t2 = (
                                trace + (out2.obs,) if out2.obs is not None else trace
                            )
                            yield from walk(
                                out2.state, dirs + (d,), t2, fuel - 1, forks + 1
                            )
                        else:
                            emitted += 1
                            yield dirs + (d,), finish(out2, s, dirs + (d,), trace)
                    return
                d = driver.correct(s)
                out = driver.step(s, d)
                dirs = dirs + (d,)
            if isinstance(out, Next):
                if out.obs is not None:
                    trace = trace + (out.obs,)
                s = out.state
                fuel -= 1
                continue
            emitted += 1
            yield dirs, finish(out, s, dirs, trace)
            return

    yield from walk(s0, (), (), budget.fuel, 0)
