"""Scratchpad bank-mapping assignment.

Operators with hardware placement requirements (conv-like, matmul,
pooling) seed bank mappings on their tensors from a registry of
templates.  A fixed-point pass then pushes mappings across dependence
edges through unconstrained operators, forward and backward, over the
three-level lattice unknown -> exact -> conflict.  Conflicting tensors are
resolved by materializing a re-banked twin plus an inter-bank memcopy in
front of the first consumer that needs it.

A local baseline assigns templates/defaults per operator with no
propagation and pays a memcopy on every mismatched dependence edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Sequence, Union

from .affine import QuasiAffineMap, affine_map, variables
from .ir import (
    BankMapping,
    BankPolicy,
    Load,
    Memcopy,
    OperatorNest,
    OffChip,
    OnChip,
    Program,
    Statement,
    Store,
    TensorDecl,
    dependence_edges,
)


class RankMismatchError(Exception):
    pass


DEFAULT_BANKS = 8


def default_mapping(banks: int) -> BankMapping:
    """Mapping used for tensors nothing constrains: outermost axis, cyclic."""
    return BankMapping(0, banks, BankPolicy.CYCLIC)


# ---------------------------------------------------------------------------
# Anchor registry


@dataclass(frozen=True)
class AnchorTemplate:
    operands: tuple[BankMapping | None, ...]
    results: tuple[BankMapping | None, ...]


@dataclass(frozen=True)
class AnchorRegistry:
    """Per-operator-kind required mappings for each operand/result slot."""

    templates: dict[str, AnchorTemplate]
    banks: int

    @staticmethod
    def from_dict(doc: dict, banks: int | None = None) -> "AnchorRegistry":
        bank_count = banks if banks is not None else int(doc.get("banks", DEFAULT_BANKS))

        def slot(entry) -> BankMapping | None:
            if entry is None:
                return None
            return BankMapping(int(entry["axis"]), bank_count, BankPolicy(entry.get("policy", "cyclic")))

        templates = {}
        for kind, spec in doc.get("operators", {}).items():
            templates[kind] = AnchorTemplate(
                tuple(slot(e) for e in spec.get("operands", [])),
                tuple(slot(e) for e in spec.get("results", [])),
            )
        return AnchorRegistry(templates, bank_count)

    @staticmethod
    def from_file(path, banks: int | None = None) -> "AnchorRegistry":
        with open(path, "r", encoding="utf-8") as fh:
            return AnchorRegistry.from_dict(json.load(fh), banks)

    @staticmethod
    def default(banks: int | None = None) -> "AnchorRegistry":
        text = resources.files("nestopt").joinpath("data/anchors.json").read_text("utf-8")
        return AnchorRegistry.from_dict(json.loads(text), banks)


# ---------------------------------------------------------------------------
# Lattice


@dataclass(frozen=True)
class Unknown:
    pass


@dataclass(frozen=True)
class Exactly:
    mapping: BankMapping


@dataclass(frozen=True)
class Conflict:
    mappings: frozenset
    sources: frozenset

    def pair(self) -> tuple[BankMapping, ...]:
        return tuple(sorted(self.mappings, key=lambda m: (m.axis, m.banks, m.policy.value)))


LatticeValue = Union[Unknown, Exactly, Conflict]

UNKNOWN = Unknown()


def join(value: LatticeValue, mapping: BankMapping, source: str) -> LatticeValue:
    """Commutative/associative/idempotent join of one contribution."""
    if isinstance(value, Unknown):
        return Exactly(mapping)
    if isinstance(value, Exactly):
        if value.mapping == mapping:
            return value
        return Conflict(frozenset({value.mapping, mapping}), frozenset({source}))
    return Conflict(value.mappings | {mapping}, value.sources | {source})


@dataclass(frozen=True)
class MappingState:
    """Per-tensor lattice values plus the seeding facts materialize needs."""

    values: dict[str, LatticeValue]
    anchored: frozenset[str]
    requirements: dict[tuple[str, str], BankMapping]
    default_banks: int
    updates: int = field(default=0, compare=False)

    def conflicts(self) -> tuple[str, ...]:
        return tuple(sorted(t for t, v in self.values.items() if isinstance(v, Conflict)))


# ---------------------------------------------------------------------------
# Seeding


def seed_anchors(program: Program, registry: AnchorRegistry) -> MappingState:
    """Assign template mappings to every tensor of every anchored nest."""
    values: dict[str, LatticeValue] = {t.name: UNKNOWN for t in program.tensors}
    requirements: dict[tuple[str, str], BankMapping] = {}
    anchored = set()
    for nest in program.nests:
        template = registry.templates.get(nest.kind)
        if template is None:
            continue
        anchored.add(nest.name)
        slots = list(zip(nest.read_tensors(), template.operands)) + list(
            zip(nest.written_tensors(), template.results)
        )
        for tname, mapping in slots:
            if mapping is None:
                continue
            decl = program.tensor_map.get(tname)
            if decl is not None and mapping.axis >= decl.rank:
                raise RankMismatchError(
                    f"nest '{nest.name}': template banks axis {mapping.axis} of rank-{decl.rank} '{tname}'"
                )
            requirements[(nest.name, tname)] = mapping
            values[tname] = join(values[tname], mapping, f"anchor:{nest.name}")
    return MappingState(values, frozenset(anchored), requirements, registry.banks)


# ---------------------------------------------------------------------------
# Transfer


@dataclass(frozen=True)
class Blocked:
    reason: str


def _axis_driver(m: QuasiAffineMap, axis: int) -> int | None:
    """Loop dimension driving a tensor axis with unit stride, if unique."""
    if m.exprs is None or axis >= len(m.exprs):
        return None
    e = m.exprs[axis]
    if e.terms:
        return None
    nz = [(j, c) for j, c in enumerate(e.coeffs) if c != 0]
    if len(nz) != 1 or abs(nz[0][1]) != 1:
        return None
    return nz[0][0]


def _axes_driven_by(m: QuasiAffineMap, dim: int) -> list[int]:
    if m.exprs is None:
        return []
    return [k for k in range(len(m.exprs)) if _axis_driver(m, k) == dim]


def transfer(
    mapping: BankMapping,
    load_map: QuasiAffineMap,
    store_map: QuasiAffineMap,
    direction: str,
) -> BankMapping | Blocked:
    """Carry a banked axis through an unconstrained nest.

    forward: banked axis of the loaded tensor -> axis of the stored tensor;
    backward: the reverse.  Requires the axis to be driven by one loop
    dimension with coefficient +-1 on both sides, uniquely.
    """
    src_map, dst_map = (load_map, store_map) if direction == "forward" else (store_map, load_map)
    dim = _axis_driver(src_map, mapping.axis)
    if dim is None:
        return Blocked(f"axis {mapping.axis} is not driven by a single unit-stride loop dim")
    axes = _axes_driven_by(dst_map, dim)
    if len(axes) != 1:
        return Blocked(f"loop dim i{dim} drives {len(axes)} destination axes, need exactly 1")
    return BankMapping(axes[0], mapping.banks, mapping.policy)


def _read_maps(nest: OperatorNest, tensor: str) -> list[QuasiAffineMap]:
    maps = [s.access for s in nest.body if isinstance(s, Load) and s.tensor == tensor]
    maps += [s.element_map for s in nest.body if isinstance(s, Memcopy) and s.src == tensor]
    return maps


def _write_maps(nest: OperatorNest, tensor: str) -> list[QuasiAffineMap]:
    maps = [s.access for s in nest.body if isinstance(s, Store) and s.tensor == tensor]
    maps += [s.element_map for s in nest.body if isinstance(s, Memcopy) and s.dst == tensor]
    return maps


def _nest_transfer(
    nest: OperatorNest, operand: str, result: str, mapping: BankMapping, direction: str
) -> BankMapping | None:
    """Transfer through a whole nest; None when blocked or ambiguous."""
    results = set()
    for lm in _read_maps(nest, operand):
        for sm in _write_maps(nest, result):
            r = transfer(mapping, lm, sm, direction)
            if isinstance(r, Blocked):
                return None
            results.add(r)
    if len(results) != 1:
        return None
    return results.pop()


# ---------------------------------------------------------------------------
# Propagation (synchronous rounds: result independent of task order)


def propagate(
    program: Program, seeded: MappingState, task_order: Sequence[int] | None = None
) -> MappingState:
    """Push mappings across dependence edges until nothing changes.

    Each round computes every transfer from the previous state and joins
    the contributions; the join is commutative/associative/idempotent, so
    any task permutation yields the same fixpoint.
    """
    tasks: list[tuple[OperatorNest, str, str, str]] = []
    for nest in program.nests:
        if nest.name in seeded.anchored:
            continue
        for u in nest.read_tensors():
            for w in nest.written_tensors():
                tasks.append((nest, "forward", u, w))
                tasks.append((nest, "backward", u, w))
    if task_order is not None:
        tasks = [tasks[i] for i in task_order]

    values = dict(seeded.values)
    updates = seeded.updates
    while True:
        contributions: list[tuple[str, BankMapping, str]] = []
        for nest, direction, u, w in tasks:
            src, dst = (u, w) if direction == "forward" else (w, u)
            val = values.get(src, UNKNOWN)
            if not isinstance(val, Exactly):
                continue
            carried = _nest_transfer(nest, u, w, val.mapping, direction)
            if carried is not None:
                contributions.append((dst, carried, f"{nest.name}:{direction}:{src}"))
        new_values = dict(values)
        for tname, mapping, source in contributions:
            new_values[tname] = join(new_values.get(tname, UNKNOWN), mapping, source)
        if new_values == values:
            return MappingState(
                values, seeded.anchored, seeded.requirements, seeded.default_banks, updates
            )
        for tname, v in new_values.items():
            if type(v) is not type(values.get(tname, UNKNOWN)):
                updates += 1
        values = new_values


# ---------------------------------------------------------------------------
# Materialization


@dataclass(frozen=True)
class InsertedCopy:
    tensor: str
    new_tensor: str
    nest: str
    mapping_from: BankMapping
    mapping_to: BankMapping
    consumers: tuple[str, ...]
    bytes: int


@dataclass(frozen=True)
class MappingReport:
    mode: str
    inserted: tuple[InsertedCopy, ...]
    assignments: dict[str, BankMapping]
    defaulted: tuple[str, ...]
    conflicts: tuple[str, ...]
    ignored_offchip: tuple[str, ...]

    @property
    def inserted_bytes(self) -> int:
        return sum(c.bytes for c in self.inserted)


def _consumer_requirement(
    program: Program, state: MappingState, consumer: OperatorNest, tensor: str
) -> BankMapping | None:
    req = state.requirements.get((consumer.name, tensor))
    if req is not None:
        return req
    if consumer.name in state.anchored:
        return None
    for w in consumer.written_tensors():
        val = state.values.get(w, UNKNOWN)
        if isinstance(val, Exactly):
            r = _nest_transfer(consumer, tensor, w, val.mapping, "backward")
            if r is not None:
                return r
    return None


def _producer_mapping(
    program: Program, state: MappingState, producer: OperatorNest | None, tensor: str
) -> BankMapping | None:
    if producer is None:
        return None
    req = state.requirements.get((producer.name, tensor))
    if req is not None:
        return req
    if producer.name in state.anchored:
        return None
    for u in producer.read_tensors():
        val = state.values.get(u, UNKNOWN)
        if isinstance(val, Exactly):
            r = _nest_transfer(producer, u, tensor, val.mapping, "forward")
            if r is not None:
                return r
    return None


def _identity_copy_nest(name: str, dst: str, src: str, decl: TensorDecl) -> OperatorNest:
    box = decl.index_box
    ident = affine_map(box, variables(box.ndim))
    return OperatorNest(name, "copy", box, (Memcopy(dst, src, ident),))


def _retarget_reads(nest: OperatorNest, old: str, new: str) -> OperatorNest:
    body: list[Statement] = []
    for s in nest.body:
        if isinstance(s, Load) and s.tensor == old:
            body.append(Load(s.result, new, s.access))
        elif isinstance(s, Memcopy) and s.src == old:
            body.append(Memcopy(s.dst, new, s.element_map))
        else:
            body.append(s)
    return replace(nest, body=tuple(body))


def materialize(program: Program, state: MappingState) -> tuple[Program, MappingReport]:
    """Annotate final mappings and insert memcopies for conflicting tensors."""
    default = default_mapping(state.default_banks)
    producer_of: dict[str, OperatorNest] = {}
    for nest in program.nests:
        for t in nest.written_tensors():
            producer_of.setdefault(t, nest)

    final: dict[str, BankMapping] = {}
    defaulted: list[str] = []
    ignored_offchip: list[str] = []
    plans = []  # (insert_index, tensor, new_name, to_mapping, consumer nest names)
    counter = 0
    existing = {t.name for t in program.tensors}

    for decl in program.tensors:
        value = state.values.get(decl.name, UNKNOWN)
        if isinstance(value, Unknown):
            final[decl.name] = default
            if isinstance(decl.location, OnChip):
                defaulted.append(decl.name)
            continue
        if isinstance(value, Exactly):
            final[decl.name] = value.mapping
            continue
        keeper = _producer_mapping(program, state, producer_of.get(decl.name), decl.name)
        groups: dict[BankMapping, list[int]] = {}
        for ni, nest in enumerate(program.nests):
            if decl.name not in nest.read_tensors():
                continue
            req = _consumer_requirement(program, state, nest, decl.name)
            if req is None:
                continue
            if keeper is None:
                keeper = req
            if req != keeper:
                groups.setdefault(req, []).append(ni)
        final[decl.name] = keeper if keeper is not None else default
        if isinstance(decl.location, OffChip):
            if groups:
                ignored_offchip.append(decl.name)
            continue
        for req, consumer_idxs in sorted(
            groups.items(), key=lambda kv: (min(kv[1]), kv[0].axis, kv[0].policy.value)
        ):
            new_name = f"{decl.name}__r{counter}"
            while new_name in existing:
                counter += 1
                new_name = f"{decl.name}__r{counter}"
            existing.add(new_name)
            counter += 1
            plans.append((min(consumer_idxs), decl.name, new_name, req, consumer_idxs))

    new_tensors = []
    for decl in program.tensors:
        if isinstance(decl.location, OnChip):
            new_tensors.append(replace(decl, location=OnChip(final[decl.name])))
        else:
            new_tensors.append(decl)

    inserted: list[InsertedCopy] = []
    nest_replacements: dict[int, OperatorNest] = {}
    inserts_at: dict[int, list[OperatorNest]] = {}
    for insert_idx, tensor, new_name, req, consumer_idxs in plans:
        decl = program.tensor(tensor)
        new_tensors.append(TensorDecl(new_name, decl.elem_size, decl.shape, OnChip(req)))
        copy_nest = _identity_copy_nest(f"bankfix_{new_name}", new_name, tensor, decl)
        inserts_at.setdefault(insert_idx, []).append(copy_nest)
        for ni in consumer_idxs:
            base = nest_replacements.get(ni, program.nests[ni])
            nest_replacements[ni] = _retarget_reads(base, tensor, new_name)
        inserted.append(
            InsertedCopy(
                tensor,
                new_name,
                copy_nest.name,
                final[tensor],
                req,
                tuple(program.nests[ni].name for ni in consumer_idxs),
                decl.footprint_bytes,
            )
        )

    new_nests: list[OperatorNest] = []
    for ni, nest in enumerate(program.nests):
        new_nests.extend(inserts_at.get(ni, ()))
        new_nests.append(nest_replacements.get(ni, nest))
    out = Program(tuple(new_tensors), tuple(new_nests))
    report = MappingReport(
        "global",
        tuple(inserted),
        {t: m for t, m in final.items() if isinstance(program.tensor(t).location, OnChip)},
        tuple(defaulted),
        state.conflicts(),
        tuple(ignored_offchip),
    )
    return out, report


def run_global_mapping(
    program: Program, registry: AnchorRegistry | None = None
) -> tuple[Program, MappingState, MappingReport]:
    registry = registry or AnchorRegistry.default()
    state = propagate(program, seed_anchors(program, registry))
    out, report = materialize(program, state)
    return out, state, report


# ---------------------------------------------------------------------------
# Local baseline


def run_local_baseline(
    program: Program, registry: AnchorRegistry | None = None
) -> tuple[Program, MappingReport]:
    """Per-operator template/default assignment, memcopy on every mismatched
    dependence edge, no propagation."""
    registry = registry or AnchorRegistry.default()
    default = default_mapping(registry.banks)

    def slot_mapping(nest: OperatorNest, tensor: str, reads: bool) -> BankMapping:
        template = registry.templates.get(nest.kind)
        if template is None:
            return default
        names = nest.read_tensors() if reads else nest.written_tensors()
        slots = template.operands if reads else template.results
        idx = names.index(tensor)
        if idx < len(slots) and slots[idx] is not None:
            return slots[idx]
        return default

    producer_nest: dict[str, OperatorNest] = {}
    for nest in program.nests:
        for t in nest.written_tensors():
            producer_nest.setdefault(t, nest)

    final: dict[str, BankMapping] = {}
    for decl in program.tensors:
        p = producer_nest.get(decl.name)
        final[decl.name] = slot_mapping(p, decl.name, reads=False) if p else default

    nest_index = {n.name: i for i, n in enumerate(program.nests)}
    new_tensors = []
    for decl in program.tensors:
        if isinstance(decl.location, OnChip):
            new_tensors.append(replace(decl, location=OnChip(final[decl.name])))
        else:
            new_tensors.append(decl)

    inserted: list[InsertedCopy] = []
    nest_replacements: dict[int, OperatorNest] = {}
    inserts_at: dict[int, list[OperatorNest]] = {}
    existing = {t.name for t in program.tensors}
    counter = 0
    for edge in dependence_edges(program):
        decl = program.tensor(edge.tensor)
        if not isinstance(decl.location, OnChip):
            continue
        consumer = program.nest(edge.consumer)
        needed = slot_mapping(consumer, edge.tensor, reads=True)
        if needed == final[edge.tensor]:
            continue
        new_name = f"{edge.tensor}__l{counter}"
        while new_name in existing:
            counter += 1
            new_name = f"{edge.tensor}__l{counter}"
        existing.add(new_name)
        counter += 1
        new_tensors.append(TensorDecl(new_name, decl.elem_size, decl.shape, OnChip(needed)))
        copy_nest = _identity_copy_nest(f"bankfix_{new_name}", new_name, edge.tensor, decl)
        ci = nest_index[edge.consumer]
        inserts_at.setdefault(ci, []).append(copy_nest)
        base = nest_replacements.get(ci, program.nests[ci])
        nest_replacements[ci] = _retarget_reads(base, edge.tensor, new_name)
        inserted.append(
            InsertedCopy(
                edge.tensor,
                new_name,
                copy_nest.name,
                final[edge.tensor],
                needed,
                (edge.consumer,),
                decl.footprint_bytes,
            )
        )

    new_nests: list[OperatorNest] = []
    for ni, nest in enumerate(program.nests):
        new_nests.extend(inserts_at.get(ni, ()))
        new_nests.append(nest_replacements.get(ni, nest))
    out = Program(tuple(new_tensors), tuple(new_nests))
    report = MappingReport(
        "local",
        tuple(inserted),
        {t: m for t, m in final.items() if isinstance(program.tensor(t).location, OnChip)},
        (),
        (),
        (),
    )
    return out, report
