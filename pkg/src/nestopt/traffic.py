"""Byte-level accounting of memory movement.

Each statement moves loop-box-cardinality x element-size bytes per touched
tensor; traffic counts executions, not unique addresses (the model has no
cache).  Copies are classified by the locations of the tensors they
connect: the payload of a memcopy or a pure load/store copy nest between
on-chip tensors is an on-chip copy; any statement side touching an
off-chip tensor is off-chip traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import (
    Load,
    Memcopy,
    OnChip,
    Origin,
    Program,
    Store,
    find_copy_pairs,
    is_pure_copy_nest,
)


@dataclass(frozen=True)
class NestTraffic:
    nest: str
    off_chip_bytes: int
    on_chip_copy_bytes: int


@dataclass(frozen=True)
class TrafficReport:
    off_chip_bytes: int
    on_chip_copy_bytes: int
    intermediate_tensor_bytes: int
    copy_pairs_total: int
    copy_pairs_eliminated: int
    memcopies_inserted: int
    per_nest: tuple[NestTraffic, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "off_chip_bytes": self.off_chip_bytes,
            "on_chip_copy_bytes": self.on_chip_copy_bytes,
            "intermediate_tensor_bytes": self.intermediate_tensor_bytes,
            "copy_pairs_total": self.copy_pairs_total,
            "copy_pairs_eliminated": self.copy_pairs_eliminated,
            "memcopies_inserted": self.memcopies_inserted,
            "per_nest": [
                {
                    "nest": n.nest,
                    "off_chip_bytes": n.off_chip_bytes,
                    "on_chip_copy_bytes": n.on_chip_copy_bytes,
                }
                for n in self.per_nest
            ],
        }


def account(
    program: Program,
    *,
    count_all_onchip: bool = False,
    interbank_via_dram: bool = False,
    copy_pairs_eliminated: int = 0,
) -> TrafficReport:
    """Classify every statement's traffic.

    count_all_onchip widens the on-chip counter from copy payloads to all
    on-chip statement traffic; interbank_via_dram reclassifies memcopy
    payloads between on-chip tensors as off-chip (for targets whose banks
    exchange data through main memory).
    """
    decls = program.tensor_map
    per_nest: list[NestTraffic] = []
    total_off = 0
    total_on = 0
    memcopies = 0

    def on_chip(name: str) -> bool:
        return isinstance(decls[name].location, OnChip)

    for nest in program.nests:
        card = nest.box.cardinality
        off = 0
        on = 0
        pure_copy = is_pure_copy_nest(nest)
        for stmt in nest.body:
            if isinstance(stmt, (Load, Store)):
                size = card * decls[stmt.tensor].elem_size
                if not on_chip(stmt.tensor):
                    off += size
                elif count_all_onchip:
                    on += size
            elif isinstance(stmt, Memcopy):
                memcopies += 1
                src_size = card * decls[stmt.src].elem_size
                dst_size = card * decls[stmt.dst].elem_size
                if not on_chip(stmt.src):
                    off += src_size
                if not on_chip(stmt.dst):
                    off += dst_size
                if on_chip(stmt.src) and on_chip(stmt.dst):
                    if interbank_via_dram:
                        off += dst_size
                    elif count_all_onchip:
                        on += src_size + dst_size
                    else:
                        on += dst_size
        if pure_copy and not count_all_onchip:
            load, store = nest.body[0], nest.body[1]
            if on_chip(load.tensor) and on_chip(store.tensor):
                on += card * decls[store.tensor].elem_size
        per_nest.append(NestTraffic(nest.name, off, on))
        total_off += off
        total_on += on

    intermediate = sum(
        t.footprint_bytes for t in program.tensors if t.origin is Origin.INTERMEDIATE
    )
    return TrafficReport(
        total_off,
        total_on,
        intermediate,
        len(find_copy_pairs(program)),
        copy_pairs_eliminated,
        memcopies,
        tuple(per_nest),
    )


@dataclass(frozen=True)
class FieldDelta:
    before: int
    after: int
    delta: int
    pct_change: float | None

    def to_json(self) -> dict:
        return {
            "before": self.before,
            "after": self.after,
            "delta": self.delta,
            "pct_change": self.pct_change,
        }


@dataclass(frozen=True)
class CompareReport:
    fields: dict[str, FieldDelta]

    def to_json(self) -> dict:
        return {name: d.to_json() for name, d in self.fields.items()}


_COMPARED = (
    "off_chip_bytes",
    "on_chip_copy_bytes",
    "intermediate_tensor_bytes",
    "copy_pairs_total",
    "copy_pairs_eliminated",
    "memcopies_inserted",
)


def compare(before: TrafficReport, after: TrafficReport) -> CompareReport:
    """Per-field deltas; percentage is null when the baseline field is 0."""
    fields = {}
    for name in _COMPARED:
        b = getattr(before, name)
        a = getattr(after, name)
        pct = None if b == 0 else 100.0 * (a - b) / b
        fields[name] = FieldDelta(b, a, a - b, pct)
    return CompareReport(fields)
