"""Parser / printer round-trips and diagnostics."""

import pytest

from nestopt.affine import variables
from nestopt.ir import validate
from nestopt.textual import ParseError, parse, parse_expr, print_expr, print_program

MINIMAL = """\
tensor %t0 : 4x[2, 3] @dram input
tensor %t1 : 4x[3, 2] @sbuf

nest tr kind=transpose (i0 in 0..2, i1 in 0..3) {
  %v = load %t0[i0, i1]
  store %t1[i1, i0] = %v
}
"""


def test_parse_minimal_transpose():
    p = parse(MINIMAL)
    assert len(p.nests) == 1
    assert len(p.tensors) == 2
    assert p.nests[0].kind == "transpose"


def test_print_is_canonical_fixed_point():
    p = parse(MINIMAL)
    text = print_program(p)
    assert text == MINIMAL
    assert parse(text) == p


FULL = """\
tensor %x : 4x[4, 8] @dram input
tensor %w : 2x[32] @sbuf banked(axis=0, banks=8, policy=cyclic)
tensor %acc : 4x[4, 8] @sbuf banked(axis=1, banks=4, policy=blocked)
tensor %z : 2x[32] @sbuf
tensor %y : 4x[32] @dram output

nest flat kind=reshape (i0 in 0..4, i1 in 0..8) {
  %v = load %x[i0, i1]
  store %w[8*i0 + i1] = %v
}

nest unflat kind=reshape (i0 in 0..32) {
  %v = load %w[i0]
  store %acc[(i0) floordiv 8, (i0) mod 8] = %v
}

nest fold kind=elementwise (i0 in 0..4, i1 in 0..8) {
  %a = load %acc[i0, i1]
  %b = load %x[i0, i1]
  %c = add %a %b
  %d = neg %c
  store %y[8*i0 + i1] = %d
}

nest fill kind=copy (i0 in 0..32) {
  memcopy %z <- %w
}
"""


def test_full_round_trip():
    p = parse(FULL)
    text = print_program(p)
    assert parse(text) == p
    # a second print is byte-stable
    assert print_program(parse(text)) == text


def test_expr_round_trips():
    cases = [
        "0",
        "i0",
        "-i1 + 4",
        "3*i0 + i2 - 7",
        "(i0 + i1) floordiv 4",
        "(2*i0 - 3) mod 5",
        "2*((i0) floordiv 4) - i1",
    ]
    for text in cases:
        e = parse_expr(text, 3)
        printed = print_expr(e)
        assert parse_expr(printed, 3) == e


def test_expr_canonical_mod_expansion():
    # mod is canonicalized through the floor/mod law
    e = parse_expr("(i0) mod 4", 1)
    (x,) = variables(1)
    assert e == x - 4 * x.floordiv(4)


def test_parse_error_unbalanced_brace():
    src = MINIMAL.replace("}\n", "")
    with pytest.raises(ParseError) as err:
        parse(src)
    assert "never closed" in str(err.value)


def test_parse_error_bad_statement_line_number():
    src = MINIMAL.replace("  store %t1[i1, i0] = %v", "  blam %t1")
    with pytest.raises(ParseError) as err:
        parse(src)
    assert err.value.line == 6


def test_parse_error_unknown_variable():
    with pytest.raises(ParseError) as err:
        parse_expr("i5", 2)
    assert "unknown loop variable" in str(err.value)


def test_parse_error_depth_two():
    with pytest.raises(ParseError):
        parse_expr("((i0) floordiv 2) floordiv 3", 1)


def test_parse_error_junk_token():
    with pytest.raises(ParseError):
        parse_expr("i0 $ 3", 1)


def test_comments_and_blank_lines_ignored():
    src = "# header\n\n" + MINIMAL.replace("  %v = load", "  # body comment\n  %v = load")
    assert parse(src) == parse(MINIMAL)


def test_parsed_program_validates():
    assert validate(parse(FULL)) == []


def test_golden_corpus_round_trips_byte_exact():
    import pathlib

    golden = pathlib.Path(__file__).parent / "golden"
    files = sorted(golden.glob("*.ir"))
    assert len(files) >= 5
    for path in files:
        text = path.read_text()
        program = parse(text)
        assert print_program(program) == text, path.name
        assert parse(print_program(program)) == program, path.name
