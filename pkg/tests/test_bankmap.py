"""Bank-mapping pass: seeding, transfer, propagation, materialization."""

import random

import pytest

from nestopt.affine import affine_map, variables
from nestopt.bankmap import (
    AnchorRegistry,
    Blocked,
    Conflict,
    Exactly,
    RankMismatchError,
    Unknown,
    default_mapping,
    materialize,
    propagate,
    run_global_mapping,
    run_local_baseline,
    seed_anchors,
    transfer,
)
from nestopt.generators import generate_resnet_analog, generate_wavenet_analog
from nestopt.interp import equivalent
from nestopt.ir import BankMapping, BankPolicy, IntBox, validate
from nestopt.textual import parse

B8 = 8


def cyclic(axis, banks=B8):
    return BankMapping(axis, banks, BankPolicy.CYCLIC)


MATCHING_REGISTRY = AnchorRegistry.from_dict(
    {
        "banks": 8,
        "operators": {
            "conv2d": {
                "operands": [{"axis": 0, "policy": "cyclic"}, {"axis": 0, "policy": "cyclic"}],
                "results": [{"axis": 0, "policy": "cyclic"}],
            },
            "matmul": {
                "operands": [{"axis": 0, "policy": "cyclic"}, {"axis": 0, "policy": "cyclic"}],
                "results": [{"axis": 0, "policy": "cyclic"}],
            },
            "pooling": {
                "operands": [{"axis": 0, "policy": "cyclic"}],
                "results": [{"axis": 0, "policy": "cyclic"}],
            },
        },
    }
)


CONV_ONLY = """\
tensor %x : 4x[4, 4] @dram input
tensor %w : 4x[4, 4] @dram input
tensor %u : 4x[4, 4] @sbuf
tensor %y : 4x[4, 4] @dram output

nest conv kind=conv2d (i0 in 0..4, i1 in 0..4) {
  %a = load %x[i0, i1]
  %b = load %w[i0, i1]
  %c = mul %a %b
  store %u[i0, i1] = %c
}

nest out kind=elementwise (i0 in 0..4, i1 in 0..4) {
  %a = load %u[i0, i1]
  %b = neg %a
  store %y[i0, i1] = %b
}
"""


def test_seed_single_conv():
    program = parse(CONV_ONLY)
    state = seed_anchors(program, AnchorRegistry.default())
    assert state.values["x"] == Exactly(cyclic(1))
    assert state.values["w"] == Exactly(cyclic(0))
    assert state.values["u"] == Exactly(cyclic(0))
    assert state.values["y"] == Unknown()


def test_seed_elementwise_only_everything_unknown():
    src = """\
tensor %a : 4x[4] @dram input
tensor %y : 4x[4] @dram output

nest n kind=elementwise (i0 in 0..4) {
  %v = load %a[i0]
  %w = neg %v
  store %y[i0] = %w
}
"""
    state = seed_anchors(parse(src), AnchorRegistry.default())
    assert all(isinstance(v, Unknown) for v in state.values.values())


def test_seed_shared_weight_identical_templates_join_cleanly():
    src = """\
tensor %a : 4x[4, 4] @dram input
tensor %b : 4x[4, 4] @dram input
tensor %w : 4x[4, 4] @dram input
tensor %m1 : 4x[4, 4] @sbuf
tensor %m2 : 4x[4, 4] @sbuf

nest mm1 kind=matmul (i0 in 0..4, i1 in 0..4) {
  %p = load %a[i0, i1]
  %q = load %w[i0, i1]
  %r = mul %p %q
  store %m1[i0, i1] = %r
}

nest mm2 kind=matmul (i0 in 0..4, i1 in 0..4) {
  %p = load %b[i0, i1]
  %q = load %w[i0, i1]
  %r = mul %p %q
  store %m2[i0, i1] = %r
}
"""
    state = seed_anchors(parse(src), AnchorRegistry.default())
    assert state.values["w"] == Exactly(cyclic(0))


def test_seed_rank_mismatch_raises():
    src = """\
tensor %x : 4x[4] @dram input
tensor %w : 4x[4] @dram input
tensor %u : 4x[4] @sbuf

nest conv kind=conv2d (i0 in 0..4) {
  %a = load %x[i0]
  %b = load %w[i0]
  %c = mul %a %b
  store %u[i0] = %c
}
"""
    with pytest.raises(RankMismatchError) as err:
        seed_anchors(parse(src), AnchorRegistry.default())
    assert "conv" in str(err.value)


def test_transfer_identity_elementwise():
    box = IntBox.from_extents(4, 4)
    ident = affine_map(box, variables(2))
    carried = transfer(cyclic(1), ident, ident, "forward")
    assert carried == cyclic(1)


def test_transfer_through_transpose():
    box = IntBox.from_extents(4, 4)
    i0, i1 = variables(2)
    load = affine_map(box, (i0, i1))
    store = affine_map(box, (i1, i0))
    # axis 0 of the input is driven by i0, which drives axis 1 of the output
    assert transfer(cyclic(0), load, store, "forward") == cyclic(1)
    # and the requirement flows back the same way
    assert transfer(cyclic(1), load, store, "backward") == cyclic(0)


def test_transfer_blocked_on_flatten():
    box = IntBox.from_extents(4, 4)
    i0, i1 = variables(2)
    load = affine_map(box, (i0, i1))
    store = affine_map(box, (4 * i0 + i1,))
    res = transfer(cyclic(0), load, store, "forward")
    assert isinstance(res, Blocked)


def test_propagate_matching_chain_has_no_conflicts():
    src = """\
tensor %x : 4x[4, 4] @dram input
tensor %w1 : 4x[4, 4] @dram input
tensor %w2 : 4x[4, 4] @dram input
tensor %u : 4x[4, 4] @sbuf
tensor %e : 4x[4, 4] @sbuf
tensor %z : 4x[4, 4] @sbuf

nest conv1 kind=conv2d (i0 in 0..4, i1 in 0..4) {
  %a = load %x[i0, i1]
  %b = load %w1[i0, i1]
  %c = mul %a %b
  store %u[i0, i1] = %c
}

nest mid kind=elementwise (i0 in 0..4, i1 in 0..4) {
  %a = load %u[i0, i1]
  %b = neg %a
  store %e[i0, i1] = %b
}

nest conv2 kind=conv2d (i0 in 0..4, i1 in 0..4) {
  %a = load %e[i0, i1]
  %b = load %w2[i0, i1]
  %c = mul %a %b
  store %z[i0, i1] = %c
}
"""
    program = parse(src)
    state = propagate(program, seed_anchors(program, MATCHING_REGISTRY))
    assert state.conflicts() == ()
    assert state.values["u"] == Exactly(cyclic(0))
    assert state.values["e"] == Exactly(cyclic(0))


def test_propagate_conflicting_anchors():
    # conv output template (axis 0) collides with matmul input template (axis 1)
    src = """\
tensor %x : 4x[4, 4] @dram input
tensor %w1 : 4x[4, 4] @dram input
tensor %w2 : 4x[4, 4] @dram input
tensor %u : 4x[4, 4] @sbuf
tensor %z : 4x[4, 4] @sbuf

nest conv kind=conv2d (i0 in 0..4, i1 in 0..4) {
  %a = load %x[i0, i1]
  %b = load %w1[i0, i1]
  %c = mul %a %b
  store %u[i0, i1] = %c
}

nest mm kind=matmul (i0 in 0..4, i1 in 0..4) {
  %a = load %u[i0, i1]
  %b = load %w2[i0, i1]
  %c = mul %a %b
  store %z[i0, i1] = %c
}
"""
    program = parse(src)
    state = propagate(program, seed_anchors(program, AnchorRegistry.default()))
    assert state.conflicts() == ("u",)
    conflict = state.values["u"]
    assert isinstance(conflict, Conflict)
    assert conflict.mappings == frozenset({cyclic(0), cyclic(1)})


def test_propagate_isolated_island_stays_unknown():
    src = """\
tensor %a : 4x[4] @dram input
tensor %b : 4x[4] @sbuf
tensor %y : 4x[4] @dram output

nest n1 kind=elementwise (i0 in 0..4) {
  %v = load %a[i0]
  %w = neg %v
  store %b[i0] = %w
}

nest n2 kind=elementwise (i0 in 0..4) {
  %v = load %b[i0]
  %w = neg %v
  store %y[i0] = %w
}
"""
    program = parse(src)
    state = propagate(program, seed_anchors(program, AnchorRegistry.default()))
    assert all(isinstance(v, Unknown) for v in state.values.values())


def test_materialize_no_conflicts_only_annotates():
    program = parse(CONV_ONLY)
    out, report = materialize(program, propagate(program, seed_anchors(program, AnchorRegistry.default())))
    assert report.inserted == ()
    assert [n.name for n in out.nests] == [n.name for n in program.nests]
    assert out.tensor("u").location.mapping == cyclic(0)
    assert validate(out) == []


def test_materialize_conflict_inserts_sized_memcopy():
    # 32x32 x 4 bytes = 4096-byte re-banked twin
    src = """\
tensor %x : 4x[32, 32] @dram input
tensor %w1 : 4x[32, 32] @dram input
tensor %w2 : 4x[32, 32] @dram input
tensor %u : 4x[32, 32] @sbuf
tensor %z : 4x[32, 32] @sbuf

nest conv kind=conv2d (i0 in 0..32, i1 in 0..32) {
  %a = load %x[i0, i1]
  %b = load %w1[i0, i1]
  %c = mul %a %b
  store %u[i0, i1] = %c
}

nest mm kind=matmul (i0 in 0..32, i1 in 0..32) {
  %a = load %u[i0, i1]
  %b = load %w2[i0, i1]
  %c = mul %a %b
  store %z[i0, i1] = %c
}
"""
    program = parse(src)
    out, report = materialize(program, propagate(program, seed_anchors(program, AnchorRegistry.default())))
    assert len(report.inserted) == 1
    copy = report.inserted[0]
    assert copy.tensor == "u"
    assert copy.bytes == 32 * 32 * 4
    assert copy.mapping_from == cyclic(0)
    assert copy.mapping_to == cyclic(1)
    # anchor preservation: producer keeps its template, consumer reads the twin
    assert out.tensor("u").location.mapping == cyclic(0)
    assert out.tensor(copy.new_tensor).location.mapping == cyclic(1)
    assert validate(out) == []
    assert equivalent(program, out, trials=2, seed=0).equivalent


def test_materialize_dedups_equal_requirements():
    # two matmul consumers demand the same remapping: one twin, one memcopy
    src = """\
tensor %x : 4x[4, 4] @dram input
tensor %w1 : 4x[4, 4] @dram input
tensor %w2 : 4x[4, 4] @dram input
tensor %w3 : 4x[4, 4] @dram input
tensor %u : 4x[4, 4] @sbuf
tensor %z1 : 4x[4, 4] @sbuf
tensor %z2 : 4x[4, 4] @sbuf

nest conv kind=conv2d (i0 in 0..4, i1 in 0..4) {
  %a = load %x[i0, i1]
  %b = load %w1[i0, i1]
  %c = mul %a %b
  store %u[i0, i1] = %c
}

nest mm1 kind=matmul (i0 in 0..4, i1 in 0..4) {
  %a = load %u[i0, i1]
  %b = load %w2[i0, i1]
  %c = mul %a %b
  store %z1[i0, i1] = %c
}

nest mm2 kind=matmul (i0 in 0..4, i1 in 0..4) {
  %a = load %u[i0, i1]
  %b = load %w3[i0, i1]
  %c = mul %a %b
  store %z2[i0, i1] = %c
}
"""
    program = parse(src)
    out, report = materialize(program, propagate(program, seed_anchors(program, AnchorRegistry.default())))
    assert len(report.inserted) == 1
    assert report.inserted[0].consumers == ("mm1", "mm2")
    assert validate(out) == []
    assert equivalent(program, out, trials=2, seed=1).equivalent


def test_local_coincidental_match_inserts_nothing():
    program = parse(CONV_ONLY)
    out, report = run_local_baseline(program)
    # conv output template is axis 0, the elementwise default is axis 0
    assert report.inserted == ()
    assert validate(out) == []


def test_headline_transpose_between_convs():
    src = """\
tensor %x : 4x[4, 4] @dram input
tensor %w1 : 4x[4, 4] @dram input
tensor %w2 : 4x[4, 4] @dram input
tensor %u : 4x[4, 4] @sbuf
tensor %v : 4x[4, 4] @sbuf
tensor %z : 4x[4, 4] @sbuf

nest conv1 kind=conv2d (i0 in 0..4, i1 in 0..4) {
  %a = load %x[i0, i1]
  %b = load %w1[i0, i1]
  %c = mul %a %b
  store %u[i0, i1] = %c
}

nest tr kind=transpose (i0 in 0..4, i1 in 0..4) {
  %a = load %u[i0, i1]
  store %v[i1, i0] = %a
}

nest conv2 kind=conv2d (i0 in 0..4, i1 in 0..4) {
  %a = load %v[i0, i1]
  %b = load %w2[i0, i1]
  %c = mul %a %b
  store %z[i0, i1] = %c
}
"""
    program = parse(src)
    _, _, g_report = run_global_mapping(program)
    _, l_report = run_local_baseline(program)
    # backward transfer through the transpose reconciles what local must copy
    assert g_report.inserted_bytes == 0
    assert l_report.inserted_bytes == 4 * 4 * 4


def test_local_empty_program():
    out, report = run_local_baseline(parse(""))
    assert report.inserted == ()
    assert out.nests == ()


def test_fixpoint_independent_of_task_order():
    program = generate_resnet_analog(3, 2, seed=7)
    seeded = seed_anchors(program, AnchorRegistry.default())
    baseline = propagate(program, seeded)
    ntasks = sum(
        2 * len(n.read_tensors()) * len(n.written_tensors())
        for n in program.nests
        if n.name not in seeded.anchored
    )
    rng = random.Random(0)
    for _ in range(20):
        order = list(range(ntasks))
        rng.shuffle(order)
        assert propagate(program, seeded, task_order=order) == baseline


def test_update_count_bounded():
    program = generate_resnet_analog(4, 2, seed=3)
    state = propagate(program, seed_anchors(program, AnchorRegistry.default()))
    assert state.updates <= 2 * len(program.tensors)


@pytest.mark.parametrize("blocks,transposes", [(1, 0), (1, 2), (2, 1), (3, 0), (3, 3)])
def test_global_never_worse_than_local(blocks, transposes):
    program = generate_resnet_analog(blocks, transposes, seed=11)
    _, _, g_report = run_global_mapping(program)
    _, l_report = run_local_baseline(program)
    assert g_report.inserted_bytes <= l_report.inserted_bytes
    if transposes >= 1:
        assert g_report.inserted_bytes < l_report.inserted_bytes


@pytest.mark.parametrize("seed", range(6))
def test_passes_preserve_semantics(seed):
    program = generate_resnet_analog(1 + seed % 3, seed % 4, seed=seed)
    g_prog, _, _ = run_global_mapping(program)
    l_prog, _ = run_local_baseline(program)
    assert validate(g_prog) == []
    assert validate(l_prog) == []
    assert equivalent(program, g_prog, trials=3, seed=seed).equivalent
    assert equivalent(program, l_prog, trials=3, seed=seed).equivalent


@pytest.mark.parametrize("blocks,transposes", [(2, 0), (2, 2), (3, 1)])
def test_anchor_preservation_after_materialize(blocks, transposes):
    registry = AnchorRegistry.default()
    program = generate_resnet_analog(blocks, transposes, seed=5)
    out, _, _ = run_global_mapping(program, registry)
    from nestopt.ir import OnChip

    for nest in out.nests:
        template = registry.templates.get(nest.kind)
        if template is None:
            continue
        slots = list(zip(nest.read_tensors(), template.operands)) + list(
            zip(nest.written_tensors(), template.results)
        )
        for tname, required in slots:
            if required is None:
                continue
            decl = out.tensor(tname)
            if isinstance(decl.location, OnChip):
                assert decl.location.mapping == required, (nest.name, tname)


def test_bankmap_on_unanchored_chain_defaults_everything():
    program = generate_wavenet_analog(4, 0, seed=2)
    out, state, report = run_global_mapping(program)
    assert report.inserted == ()
    from nestopt.ir import OnChip

    for t in out.tensors:
        if isinstance(t.location, OnChip):
            assert t.location.mapping == default_mapping(8)
