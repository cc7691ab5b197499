"""Benchmark generators: determinism, structure, pass interplay."""

import pytest

from nestopt.bankmap import run_global_mapping, run_local_baseline
from nestopt.dme import run_dme
from nestopt.generators import generate_resnet_analog, generate_wavenet_analog
from nestopt.ir import find_copy_pairs, validate
from nestopt.textual import parse, print_program

from test_bankmap import MATCHING_REGISTRY


@pytest.mark.parametrize("pairs,noninv,seed", [(0, 0, 0), (5, 5, 1), (12, 2, 7), (24, 1, 3)])
def test_wavenet_analog_wellformed(pairs, noninv, seed):
    program = generate_wavenet_analog(pairs, noninv, seed)
    assert validate(program) == []
    assert len(find_copy_pairs(program)) == pairs
    result = run_dme(program)
    assert len(result.eliminated) == pairs - noninv
    assert len(result.skipped) == noninv


def test_wavenet_analog_deterministic():
    a = print_program(generate_wavenet_analog(16, 2, seed=42))
    b = print_program(generate_wavenet_analog(16, 2, seed=42))
    assert a == b
    c = print_program(generate_wavenet_analog(16, 2, seed=43))
    assert a != c


def test_wavenet_zero_pairs_is_pure_compute():
    program = generate_wavenet_analog(0, 0, seed=5)
    assert find_copy_pairs(program) == []
    result = run_dme(program)
    assert result.program == program


def test_wavenet_reparses():
    program = generate_wavenet_analog(20, 3, seed=11)
    text = print_program(program)
    assert parse(text) == program


def test_resnet_analog_deterministic():
    a = print_program(generate_resnet_analog(4, 2, seed=9))
    b = print_program(generate_resnet_analog(4, 2, seed=9))
    assert a == b


@pytest.mark.parametrize("blocks,transposes", [(1, 0), (1, 3), (2, 0), (4, 1), (5, 2)])
def test_resnet_analog_wellformed(blocks, transposes):
    program = generate_resnet_analog(blocks, transposes, seed=1)
    assert validate(program) == []
    convs = [n for n in program.nests if n.kind == "conv2d"]
    assert len(convs) == blocks
    trs = [n for n in program.nests if n.kind == "transpose"]
    if blocks == 1 and transposes == 0:
        assert trs == []
    else:
        assert len(trs) == blocks * transposes


def test_resnet_single_block_no_transposes_inserts_nothing():
    program = generate_resnet_analog(1, 0, seed=2)
    assert len(program.nests) == 1
    _, _, g_report = run_global_mapping(program)
    _, l_report = run_local_baseline(program)
    assert g_report.inserted == ()
    assert l_report.inserted == ()


def test_resnet_local_pays_every_boundary_global_none():
    program = generate_resnet_analog(4, 1, seed=2)
    _, _, g_report = run_global_mapping(program)
    _, l_report = run_local_baseline(program)
    assert len(l_report.inserted) >= 4
    assert g_report.inserted_bytes < l_report.inserted_bytes


def test_resnet_matching_registry_propagates_cleanly():
    # with agreeing templates the whole two-block chain settles with no copies
    program = generate_resnet_analog(2, 0, seed=4)
    _, state, g_report = run_global_mapping(program, MATCHING_REGISTRY)
    assert state.conflicts() == ()
    assert g_report.inserted == ()
