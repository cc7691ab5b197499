"""Copy elimination through access-map reversal and composition.

A load/store pair that moves data unchanged from tensor ``src`` to tensor
``dst`` can be removed when the store map is a bijection from the nest box
onto the whole index space of ``dst``: every downstream read of ``dst`` is
rewritten to read ``src`` through the composed map
``load_map . reverse(store_map) . downstream_map``, after which the copy
statements and the ``dst`` declaration are deleted.  The pass repeats until
no pair can be eliminated.

Failures never throw: each considered pair yields a record that is either
an elimination or a named skip reason.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .affine import (
    AffineError,
    NotInvertible,
    TabulatedInverse,
    compose,
    reverse,
)
from .ir import (
    CopyPair,
    Load,
    Memcopy,
    OperatorNest,
    Origin,
    Program,
    Store,
    find_copy_pairs,
)


class SkipReason(Enum):
    NOT_INVERTIBLE = "NotInvertible"
    NOT_TOTAL_COVER = "NotTotalCover"
    ESCAPING_OUTPUT = "EscapingOutput"
    COMPOSITION_UNREPRESENTABLE = "CompositionUnrepresentable"


@dataclass(frozen=True)
class EliminationRecord:
    """Outcome for one considered pair: eliminated or skipped with a reason."""

    tensor: str
    bytes: int
    rewritten_loads: int = 0
    skipped: SkipReason | None = None
    detail: str = ""

    @property
    def eliminated(self) -> bool:
        return self.skipped is None


def try_eliminate_pair(program: Program, pair: CopyPair) -> tuple[Program, EliminationRecord]:
    """Attempt one elimination; on failure the program is returned unchanged."""
    nest = program.nest(pair.nest)
    dst = program.tensor(pair.store.tensor)
    src_name = pair.load.tensor

    def skip(reason: SkipReason, detail: str = "") -> tuple[Program, EliminationRecord]:
        return program, EliminationRecord(dst.name, dst.footprint_bytes, 0, reason, detail)

    if dst.origin is not Origin.INTERMEDIATE:
        return skip(SkipReason.ESCAPING_OUTPUT, f"'{dst.name}' is a model {dst.origin.value}")
    # the pair's store must be the sole definition of dst
    other_defs = [
        s
        for n in program.nests
        for s in n.body
        if (isinstance(s, Store) and s.tensor == dst.name and s is not pair.store)
        or (isinstance(s, Memcopy) and s.dst == dst.name)
    ]
    if other_defs:
        return skip(SkipReason.NOT_TOTAL_COVER, f"'{dst.name}' has other defining statements")
    # memcopy reads cannot be retargeted through a different access map
    if any(isinstance(s, Memcopy) and s.src == dst.name for n in program.nests for s in n.body):
        return skip(SkipReason.COMPOSITION_UNREPRESENTABLE, f"'{dst.name}' feeds a memcopy")

    inv = reverse(pair.store.access)
    if isinstance(inv, NotInvertible):
        return skip(SkipReason.NOT_INVERTIBLE, inv.reason)
    if isinstance(inv, TabulatedInverse):
        return skip(
            SkipReason.COMPOSITION_UNREPRESENTABLE,
            "store map is invertible only by tabulation",
        )
    if not inv.image.equals_box(dst.index_box):
        return skip(
            SkipReason.NOT_TOTAL_COVER,
            f"store covers {inv.image.cardinality} of {dst.index_box.cardinality} cells",
        )

    try:
        dst_to_src = compose(pair.load.access, inv.map)
    except AffineError as exc:
        return skip(SkipReason.COMPOSITION_UNREPRESENTABLE, str(exc))
    if not dst_to_src.is_symbolic:
        return skip(SkipReason.COMPOSITION_UNREPRESENTABLE, "store-to-load map left the expression language")

    # plan every downstream rewrite before committing anything
    rewrites: dict[tuple[str, int], Load] = {}
    count = 0
    for n in program.nests:
        if n.name == nest.name:
            continue
        for si, stmt in enumerate(n.body):
            if isinstance(stmt, Load) and stmt.tensor == dst.name:
                try:
                    routed = compose(dst_to_src, stmt.access)
                except AffineError as exc:
                    return skip(SkipReason.COMPOSITION_UNREPRESENTABLE, str(exc))
                if not routed.is_symbolic:
                    return skip(
                        SkipReason.COMPOSITION_UNREPRESENTABLE,
                        f"rewritten load in nest '{n.name}' left the expression language",
                    )
                rewrites[(n.name, si)] = Load(stmt.result, src_name, routed)
                count += 1

    new_nests: list[OperatorNest] = []
    for n in program.nests:
        if n.name == nest.name:
            body = tuple(
                s
                for s in n.body
                if s is not pair.store
                and not (s is pair.load and not _load_has_other_uses(n, pair))
            )
            if body:
                new_nests.append(replace(n, body=body))
            continue
        if any(key[0] == n.name for key in rewrites):
            body = tuple(
                rewrites.get((n.name, si), stmt) for si, stmt in enumerate(n.body)
            )
            new_nests.append(replace(n, body=body))
        else:
            new_nests.append(n)
    new_tensors = tuple(t for t in program.tensors if t.name != dst.name)
    out = Program(new_tensors, tuple(new_nests))
    return out, EliminationRecord(dst.name, dst.footprint_bytes, count)


def _load_has_other_uses(nest: OperatorNest, pair: CopyPair) -> bool:
    for s in nest.body:
        if s is pair.store:
            continue
        if isinstance(s, Store) and s.value == pair.load.result:
            return True
        if hasattr(s, "operands") and pair.load.result in s.operands:
            return True
    return False


@dataclass(frozen=True)
class DmeResult:
    program: Program
    records: tuple[EliminationRecord, ...]
    sweeps: int

    @property
    def eliminated(self) -> tuple[EliminationRecord, ...]:
        return tuple(r for r in self.records if r.eliminated)

    @property
    def skipped(self) -> tuple[EliminationRecord, ...]:
        return tuple(r for r in self.records if not r.eliminated)

    @property
    def eliminated_bytes(self) -> int:
        return sum(r.bytes for r in self.eliminated)


def run_dme(program: Program) -> DmeResult:
    """Eliminate pairs in program order, restarting after each success,
    until a full sweep changes nothing.

    Records hold one entry per eliminated tensor plus the final sweep's
    skip reasons (earlier skips may become stale as loads are rewritten).
    """
    records: list[EliminationRecord] = []
    current = program
    sweeps = 0
    while True:
        sweeps += 1
        progressed = False
        sweep_skips: list[EliminationRecord] = []
        for pair in find_copy_pairs(current):
            updated, record = try_eliminate_pair(current, pair)
            if record.eliminated:
                current = updated
                records.append(record)
                progressed = True
                break
            sweep_skips.append(record)
        if not progressed:
            records.extend(sweep_skips)
            return DmeResult(current, tuple(records), sweeps)
