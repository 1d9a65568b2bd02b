"""Relations between executions and languages: trace prefix-equivalence,
register-file agreement modulo reserved registers, the value/state
refinement relation across linearization, and directive/observation
mappings between the block-structured and flat machine levels.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

from .ir import UV, FP, PC, Value
from .interp import (
    DBranch,
    DCallMc,
    DCallMir,
    Directive,
    Obs,
    OCall,
    SpecState,
)
from .machine import LayoutMap, McState


def trace_cmp(o1: Sequence[Obs], o2: Sequence[Obs]) -> bool:
    """True iff one trace is a prefix of the other. Reflexive and symmetric,
    not transitive."""
    n = min(len(o1), len(o2))
    return list(o1[:n]) == list(o2[:n])


def regs_agree(
    r1: dict[str, Value], r2: dict[str, Value], reserved: Iterable[str]
) -> bool:
    """Agreement on every register except the reserved ones. Register files
    are total with default UV."""
    skip = set(reserved)
    names = (set(r1) | set(r2)) - skip
    return all(r1.get(n, UV) == r2.get(n, UV) for n in names)


def value_rel(v: Value, n: int, lay: LayoutMap) -> bool:
    """Naturals relate to themselves, function pointers to their code
    addresses, UV to every natural."""
    if v is UV:
        return True
    if isinstance(v, FP):
        return lay.addr(v.label) == n
    return v == n


def pc_rel(pc: PC, a: int, lay: LayoutMap) -> bool:
    return lay.addr(pc.label) + pc.offset == a


def state_rel(
    s_mir: SpecState,
    s_mc: McState,
    lay: LayoutMap,
    exclude: Iterable[str] = (),
) -> bool:
    """Pointwise value relation over pc, registers, memory and return stack,
    plus equality of the ct/ms flags. `exclude` names registers left out of
    the comparison."""
    if s_mir.ct != s_mc.ct or s_mir.ms != s_mc.ms:
        return False
    if not pc_rel(s_mir.pc, s_mc.pc, lay):
        return False
    if len(s_mir.stk) != len(s_mc.stk):
        return False
    if not all(pc_rel(pc, a, lay) for pc, a in zip(s_mir.stk, s_mc.stk)):
        return False
    if len(s_mir.mem) != len(s_mc.mem):
        return False
    if not all(value_rel(v, n, lay) for v, n in zip(s_mir.mem, s_mc.mem)):
        return False
    skip = set(exclude)
    names = (set(s_mir.regs) | set(s_mc.regs)) - skip
    return all(
        value_rel(s_mir.regs.get(n, UV), s_mc.regs.get(n, 0), lay) for n in names
    )


def map_directive_mc_to_mir(d: Directive, lay: LayoutMap) -> Optional[Directive]:
    """Machine directives to block-structured directives. Call addresses
    outside the code section are unmappable."""
    if isinstance(d, DBranch):
        return d
    if isinstance(d, DCallMc):
        pc = lay.addr_to_pc(d.addr)
        return DCallMir(pc) if pc is not None else None
    raise TypeError(f"not a machine-level directive: {d!r}")


def map_obs_mir_to_mc(o: Obs, lay: LayoutMap) -> Obs:
    """Call observations carry labels at the block level and addresses at
    the machine level; data accesses and branch outcomes are unchanged."""
    if isinstance(o, OCall):
        return OCall(lay.addr(o.target))
    return o
