"""Expression evaluation and the three block-structured semantics:
sequential, speculative with a CET-style ctarget model, and ideal
(masking enforced in the semantics).

All step functions are pure; states are immutable snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

from .ir import (
    UV,
    Asgn,
    BinOp,
    Branch,
    Call,
    Cond,
    Const,
    CTarget,
    Expr,
    FP,
    FpConst,
    Jump,
    Load,
    PC,
    Program,
    Reg,
    Ret,
    Skip,
    Store,
    Value,
    fetch,
    is_nat,
)

# --------------------------------------------------------------------------
# Observations and directives


@dataclass(frozen=True, slots=True)
class OLoad:
    addr: int


@dataclass(frozen=True, slots=True)
class OStore:
    addr: int


@dataclass(frozen=True, slots=True)
class OBranch:
    taken: bool


@dataclass(frozen=True, slots=True)
class OCall:
    # Block label in MiniMIR observations, absolute address in machine ones.
    target: int


Obs = Union[OLoad, OStore, OBranch, OCall]


@dataclass(frozen=True, slots=True)
class DBranch:
    taken: bool


@dataclass(frozen=True, slots=True)
class DCallMir:
    target: PC


@dataclass(frozen=True, slots=True)
class DCallMc:
    addr: int


Directive = Union[DBranch, DCallMir, DCallMc]


# --------------------------------------------------------------------------
# States and step outcomes


@dataclass(frozen=True)
class SeqState:
    pc: PC
    regs: dict[str, Value]
    mem: tuple[Value, ...]
    stk: tuple[PC, ...] = ()


@dataclass(frozen=True)
class SpecState(SeqState):
    ct: bool = False
    ms: bool = False


@dataclass(frozen=True)
class IdealState(SeqState):
    ms: bool = False


@dataclass(frozen=True, slots=True)
class Next:
    state: SeqState
    obs: Optional[Obs] = None


@dataclass(frozen=True, slots=True)
class Term:
    pass


@dataclass(frozen=True, slots=True)
class Fault:
    # Ideal call faults carry the call observation of the faulting step.
    obs: Optional[Obs] = None


@dataclass(frozen=True, slots=True)
class Stuck:
    reason: str


@dataclass(frozen=True, slots=True)
class OutOfDirectives:
    pass


@dataclass(frozen=True, slots=True)
class DirectiveMismatch:
    # Harness-level error: the supplied directive kind has no rule for the
    # fetched instruction. Distinct from undefined behavior (Stuck).
    reason: str


Outcome = Union[Next, Term, Fault, Stuck, OutOfDirectives, DirectiveMismatch]

TERM = Term()
OUT_OF_DIRECTIVES = OutOfDirectives()


# --------------------------------------------------------------------------
# Expression evaluation


def _binop(op: str, v1: Value, v2: Value) -> Value:
    if isinstance(v1, FP) and isinstance(v2, FP) and op == "=":
        return 1 if v1.label == v2.label else 0
    if is_nat(v1) and is_nat(v2):
        if op == "+":
            return v1 + v2
        if op == "-":
            # Truncated subtraction: naturals never go below zero.
            return v1 - v2 if v1 >= v2 else 0
        if op == "*":
            return v1 * v2
        if op == "=":
            return 1 if v1 == v2 else 0
        if op == "<=":
            return 1 if v1 <= v2 else 0
        if op == "&&":
            return 1 if v1 != 0 and v2 != 0 else 0
        if op == "->":
            return 1 if v1 == 0 or v2 != 0 else 0
        raise ValueError(f"unknown operator {op!r}")
    return UV


def eval_expr(e: Expr, regs: dict[str, Value]) -> Value:
    """Total evaluation; never fails, unresolvable results are UV."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, FpConst):
        return FP(e.label)
    if isinstance(e, Reg):
        return regs.get(e.name, UV)
    if isinstance(e, BinOp):
        return _binop(e.op, eval_expr(e.lhs, regs), eval_expr(e.rhs, regs))
    if isinstance(e, Cond):
        c = eval_expr(e.cond, regs)
        if not is_nat(c):
            return UV
        return eval_expr(e.then if c != 0 else e.els, regs)
    raise TypeError(f"not an expression: {e!r}")


def _with_reg(regs: dict[str, Value], name: str, v: Value) -> dict[str, Value]:
    out = dict(regs)
    out[name] = v
    return out


def _nat_addr(v: Value, mem: tuple[Value, ...], what: str) -> Union[int, Stuck]:
    if not is_nat(v):
        return Stuck(f"{what} address is not a number")
    if not 0 <= v < len(mem):
        return Stuck(f"{what} address {v} out of bounds")
    return v


# --------------------------------------------------------------------------
# Sequential semantics


def step_seq(p: Program, s: SeqState) -> Outcome:
    inst = fetch(p, s.pc)
    if inst is None:
        return Stuck("pc out of range")
    if isinstance(inst, (Skip, CTarget)):
        return Next(replace(s, pc=s.pc.next()))
    if isinstance(inst, Asgn):
        v = eval_expr(inst.expr, s.regs)
        return Next(replace(s, pc=s.pc.next(), regs=_with_reg(s.regs, inst.reg, v)))
    if isinstance(inst, Branch):
        v = eval_expr(inst.cond, s.regs)
        if not is_nat(v):
            return Stuck("branch condition is not a number")
        b = v != 0
        pc2 = PC(inst.target, 0) if b else s.pc.next()
        return Next(replace(s, pc=pc2), OBranch(b))
    if isinstance(inst, Jump):
        return Next(replace(s, pc=PC(inst.target, 0)))
    if isinstance(inst, Load):
        a = _nat_addr(eval_expr(inst.addr, s.regs), s.mem, "load")
        if isinstance(a, Stuck):
            return a
        regs = _with_reg(s.regs, inst.reg, s.mem[a])
        return Next(replace(s, pc=s.pc.next(), regs=regs), OLoad(a))
    if isinstance(inst, Store):
        a = _nat_addr(eval_expr(inst.addr, s.regs), s.mem, "store")
        if isinstance(a, Stuck):
            return a
        v = eval_expr(inst.value, s.regs)
        mem = s.mem[:a] + (v,) + s.mem[a + 1 :]
        return Next(replace(s, pc=s.pc.next(), mem=mem), OStore(a))
    if isinstance(inst, Call):
        v = eval_expr(inst.target, s.regs)
        if not isinstance(v, FP):
            return Stuck("call target is not a function pointer")
        if not (0 <= v.label < len(p.blocks) and p.blocks[v.label].is_entry):
            return Stuck(f"call target &{v.label} is not a function entry")
        stk = (s.pc.next(),) + s.stk
        return Next(replace(s, pc=PC(v.label, 0), stk=stk), OCall(v.label))
    if isinstance(inst, Ret):
        if not s.stk:
            return TERM
        return Next(replace(s, pc=s.stk[0], stk=s.stk[1:]))
    raise TypeError(f"not an instruction: {inst!r}")


# --------------------------------------------------------------------------
# Speculative semantics with the ctarget model


def step_spec(
    p: Program,
    s: SpecState,
    d: Optional[Directive] = None,
    cet: bool = True,
) -> Outcome:
    """One speculative step. A directive is consumed only at branch and call
    instructions. With `cet` disabled, calls do not arm the ctarget check,
    modeling hardware without indirect-branch tracking.
    """
    inst = fetch(p, s.pc)
    if inst is None:
        return Stuck("pc out of range")
    if cet and s.ct and not isinstance(inst, CTarget):
        return Fault()
    if isinstance(inst, CTarget):
        return Next(replace(s, pc=s.pc.next(), ct=False))
    if isinstance(inst, Skip):
        return Next(replace(s, pc=s.pc.next()))
    if isinstance(inst, Asgn):
        v = eval_expr(inst.expr, s.regs)
        return Next(replace(s, pc=s.pc.next(), regs=_with_reg(s.regs, inst.reg, v)))
    if isinstance(inst, Branch):
        v = eval_expr(inst.cond, s.regs)
        if not is_nat(v):
            return Stuck("branch condition is not a number")
        if d is None:
            return OUT_OF_DIRECTIVES
        if not isinstance(d, DBranch):
            return DirectiveMismatch("branch instruction needs a branch directive")
        b = v != 0
        pc2 = PC(inst.target, 0) if d.taken else s.pc.next()
        return Next(replace(s, pc=pc2, ms=s.ms or b != d.taken), OBranch(b))
    if isinstance(inst, Jump):
        return Next(replace(s, pc=PC(inst.target, 0)))
    if isinstance(inst, Load):
        a = _nat_addr(eval_expr(inst.addr, s.regs), s.mem, "load")
        if isinstance(a, Stuck):
            return a
        regs = _with_reg(s.regs, inst.reg, s.mem[a])
        return Next(replace(s, pc=s.pc.next(), regs=regs), OLoad(a))
    if isinstance(inst, Store):
        a = _nat_addr(eval_expr(inst.addr, s.regs), s.mem, "store")
        if isinstance(a, Stuck):
            return a
        v = eval_expr(inst.value, s.regs)
        mem = s.mem[:a] + (v,) + s.mem[a + 1 :]
        return Next(replace(s, pc=s.pc.next(), mem=mem), OStore(a))
    if isinstance(inst, Call):
        v = eval_expr(inst.target, s.regs)
        if not isinstance(v, FP):
            return Stuck("call target is not a function pointer")
        if d is None:
            return OUT_OF_DIRECTIVES
        if not isinstance(d, DCallMir):
            return DirectiveMismatch("call instruction needs a call directive")
        pc2 = d.target
        ms2 = s.ms or pc2 != PC(v.label, 0)
        stk = (s.pc.next(),) + s.stk
        return Next(replace(s, pc=pc2, stk=stk, ct=cet, ms=ms2), OCall(v.label))
    if isinstance(inst, Ret):
        if not s.stk:
            return TERM
        return Next(replace(s, pc=s.stk[0], stk=s.stk[1:]))
    raise TypeError(f"not an instruction: {inst!r}")


# --------------------------------------------------------------------------
# Ideal semantics (masking and call-target validation built in)


def step_ideal(p: Program, s: IdealState, d: Optional[Directive] = None) -> Outcome:
    inst = fetch(p, s.pc)
    if inst is None:
        return Stuck("pc out of range")
    if isinstance(inst, (Skip, CTarget)):
        return Next(replace(s, pc=s.pc.next()))
    if isinstance(inst, Asgn):
        v = eval_expr(inst.expr, s.regs)
        return Next(replace(s, pc=s.pc.next(), regs=_with_reg(s.regs, inst.reg, v)))
    if isinstance(inst, Branch):
        v: Value = 0 if s.ms else eval_expr(inst.cond, s.regs)
        if not is_nat(v):
            return Stuck("branch condition is not a number")
        if d is None:
            return OUT_OF_DIRECTIVES
        if not isinstance(d, DBranch):
            return DirectiveMismatch("branch instruction needs a branch directive")
        b = v != 0
        pc2 = PC(inst.target, 0) if d.taken else s.pc.next()
        return Next(replace(s, pc=pc2, ms=s.ms or b != d.taken), OBranch(b))
    if isinstance(inst, Jump):
        return Next(replace(s, pc=PC(inst.target, 0)))
    if isinstance(inst, Load):
        av: Value = 0 if s.ms else eval_expr(inst.addr, s.regs)
        a = _nat_addr(av, s.mem, "load")
        if isinstance(a, Stuck):
            return a
        regs = _with_reg(s.regs, inst.reg, s.mem[a])
        return Next(replace(s, pc=s.pc.next(), regs=regs), OLoad(a))
    if isinstance(inst, Store):
        av = 0 if s.ms else eval_expr(inst.addr, s.regs)
        a = _nat_addr(av, s.mem, "store")
        if isinstance(a, Stuck):
            return a
        v = eval_expr(inst.value, s.regs)
        mem = s.mem[:a] + (v,) + s.mem[a + 1 :]
        return Next(replace(s, pc=s.pc.next(), mem=mem), OStore(a))
    if isinstance(inst, Call):
        tv: Value = FP(0) if s.ms else eval_expr(inst.target, s.regs)
        if not isinstance(tv, FP):
            return Stuck("call target is not a function pointer")
        if d is None:
            return OUT_OF_DIRECTIVES
        if not isinstance(d, DCallMir):
            return DirectiveMismatch("call instruction needs a call directive")
        obs = OCall(tv.label)
        l2, o2 = d.target.label, d.target.offset
        valid = (
            o2 == 0
            and 0 <= l2 < len(p.blocks)
            and len(p.blocks[l2].insts) > 0
            and p.blocks[l2].is_entry
        )
        if not valid:
            return Fault(obs)
        stk = (s.pc.next(),) + s.stk
        ms2 = s.ms or l2 != tv.label
        return Next(replace(s, pc=PC(l2, 0), stk=stk, ms=ms2), obs)
    if isinstance(inst, Ret):
        if not s.stk:
            return TERM
        return Next(replace(s, pc=s.stk[0], stk=s.stk[1:]))
    raise TypeError(f"not an instruction: {inst!r}")


# --------------------------------------------------------------------------
# Bounded multi-step execution


@dataclass
class RunResult:
    trace: list[Obs]
    # One of: term, fault, stuck, out-of-directives, directive-mismatch, fuel
    status: str
    reason: Optional[str] = None
    state: Optional[SeqState] = None
    directives_used: int = 0
    final_ms: Optional[bool] = None


def _terminal(out: Outcome) -> tuple[str, Optional[str]]:
    if isinstance(out, Term):
        return "term", None
    if isinstance(out, Fault):
        return "fault", None
    if isinstance(out, Stuck):
        return "stuck", out.reason
    if isinstance(out, OutOfDirectives):
        return "out-of-directives", None
    if isinstance(out, DirectiveMismatch):
        return "directive-mismatch", out.reason
    raise TypeError(f"not a terminal outcome: {out!r}")


def run_seq(p: Program, s: SeqState, fuel: int) -> RunResult:
    trace: list[Obs] = []
    for _ in range(fuel):
        out = step_seq(p, s)
        if isinstance(out, Next):
            if out.obs is not None:
                trace.append(out.obs)
            s = out.state
            continue
        status, reason = _terminal(out)
        return RunResult(trace, status, reason, state=s)
    return RunResult(trace, "fuel", state=s)


def _run_directed(step, p, s, directives: Sequence[Directive], fuel: int) -> RunResult:
    trace: list[Obs] = []
    used = 0
    for _ in range(fuel):
        out = step(p, s, None)
        if isinstance(out, OutOfDirectives):
            if used >= len(directives):
                return RunResult(
                    trace,
                    "out-of-directives",
                    state=s,
                    directives_used=used,
                    final_ms=getattr(s, "ms", None),
                )
            out = step(p, s, directives[used])
            used += 1
        if isinstance(out, Next):
            if out.obs is not None:
                trace.append(out.obs)
            s = out.state
            continue
        if isinstance(out, Fault) and out.obs is not None:
            trace.append(out.obs)
        status, reason = _terminal(out)
        return RunResult(
            trace,
            status,
            reason,
            state=s,
            directives_used=used,
            final_ms=getattr(s, "ms", None),
        )
    return RunResult(
        trace, "fuel", state=s, directives_used=used, final_ms=getattr(s, "ms", None)
    )


def run_spec(
    p: Program,
    s: SpecState,
    directives: Sequence[Directive],
    fuel: int,
    cet: bool = True,
) -> RunResult:
    def step(p_, s_, d_):
        return step_spec(p_, s_, d_, cet=cet)

    return _run_directed(step, p, s, directives, fuel)


def run_ideal(
    p: Program, s: IdealState, directives: Sequence[Directive], fuel: int
) -> RunResult:
    return _run_directed(step_ideal, p, s, directives, fuel)


def wf_directives_mir(p: Program, directives: Sequence[Directive]) -> bool:
    """Call directives use valid labels and in-range offsets; no machine-level
    call directives appear."""
    for d in directives:
        if isinstance(d, DCallMc):
            return False
        if isinstance(d, DCallMir):
            t = d.target
            if not 0 <= t.label < len(p.blocks):
                return False
            if not 0 <= t.offset < len(p.blocks[t.label].insts):
                return False
    return True
