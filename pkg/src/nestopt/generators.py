"""Synthetic benchmark programs.

Two structural analogs of real networks, sized for desk-scale runs:

* a long chain interleaving elementwise compute with data-movement nests
  (transpose / reshape / repeat / slice / split), a configurable number of
  which use colliding store maps that no pass can eliminate;
* a chain of anchored blocks (conv-like, pooling, matmul-like) separated by
  transposes, shaped so that propagating bank mappings across operators
  beats purely local assignment.

Generation is deterministic per seed: identical arguments produce
byte-identical printed programs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .affine import IntBox, affine_map, variables
from .ir import (
    Compute,
    Load,
    OffChip,
    OnChip,
    OperatorNest,
    Origin,
    Program,
    Store,
    TensorDecl,
)

ELEM_SIZE = 4


@dataclass
class _Builder:
    tensors: list[TensorDecl]
    nests: list[OperatorNest]
    counter: int = 0

    def fresh(self, prefix: str = "t") -> str:
        name = f"{prefix}{self.counter}"
        self.counter += 1
        return name

    def declare(self, name: str, shape, location, origin=Origin.INTERMEDIATE) -> str:
        self.tensors.append(TensorDecl(name, ELEM_SIZE, tuple(shape), location, origin))
        return name

    def program(self) -> Program:
        return Program(tuple(self.tensors), tuple(self.nests))


def _identity(box: IntBox):
    return affine_map(box, variables(box.ndim))


# ---------------------------------------------------------------------------
# copy-chain analog


def _emit_compute(b: _Builder, idx: int, src: str, shape, opcode: str, out_decl=None) -> str:
    box = IntBox.from_extents(*shape)
    if out_decl is None:
        out = b.declare(b.fresh(), shape, OnChip())
    else:
        out = out_decl
    body = [Load("v", src, _identity(box))]
    if opcode == "neg":
        body.append(Compute("w", "neg", ("v",)))
    elif opcode == "add":
        body.append(Compute("w", "add", ("v", "v")))
    else:
        body.append(Compute("w", "max", ("v", "v")))
    body.append(Store(out, _identity(box), "w"))
    b.nests.append(OperatorNest(f"ew{idx}", "elementwise", box, tuple(body)))
    return out


def _legal_kinds(shape, collider: bool) -> list[str]:
    if collider:
        return ["collide2" if len(shape) == 2 else "collide1"]
    if len(shape) == 2:
        return ["transpose", "flatten"]
    (n,) = shape
    kinds = ["reverse"]
    if n <= 64:
        kinds.append("repeat")
    if n % 2 == 0 and n >= 8:
        kinds += ["slice", "split"]
        if n % 4 == 0:
            kinds.append("unflatten")
    return kinds


def _emit_copy(b: _Builder, idx: int, src: str, shape, kind: str, rng: random.Random):
    """One data-movement nest: returns (new tensor, new shape)."""
    if kind == "transpose":
        a, c = shape
        box = IntBox.from_extents(a, c)
        i0, i1 = variables(2)
        dst_shape = (c, a)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, _identity(box)),
            Store(dst, affine_map(box, (i1, i0)), "v"),
        )
    elif kind == "flatten":
        a, c = shape
        box = IntBox.from_extents(a, c)
        i0, i1 = variables(2)
        dst_shape = (a * c,)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, _identity(box)),
            Store(dst, affine_map(box, (c * i0 + i1,)), "v"),
        )
    elif kind == "unflatten":
        (n,) = shape
        inner = rng.choice([d for d in (2, 4, 8) if n % d == 0 and n // d >= 2])
        box = IntBox.from_extents(n)
        (x,) = variables(1)
        dst_shape = (n // inner, inner)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, _identity(box)),
            Store(dst, affine_map(box, (x.floordiv(inner), x.mod(inner))), "v"),
        )
    elif kind == "repeat":
        (n,) = shape
        reps = rng.choice([2, 4]) if n <= 32 else 2
        box = IntBox.from_extents(reps, n)
        i0, i1 = variables(2)
        dst_shape = (reps * n,)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, affine_map(box, (i1,))),
            Store(dst, affine_map(box, (n * i0 + i1,)), "v"),
        )
    elif kind == "slice":
        (n,) = shape
        off = rng.choice([0, 1])
        box = IntBox.from_extents(n // 2)
        (x,) = variables(1)
        dst_shape = (n // 2,)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, affine_map(box, (2 * x + off,))),
            Store(dst, _identity(box), "v"),
        )
        kind = "strided_slice"
    elif kind == "split":
        (n,) = shape
        half = rng.choice([0, 1])
        box = IntBox.from_extents(n // 2)
        (x,) = variables(1)
        dst_shape = (n // 2,)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, affine_map(box, (x + half * (n // 2),))),
            Store(dst, _identity(box), "v"),
        )
    elif kind == "reverse":
        (n,) = shape
        box = IntBox.from_extents(n)
        (x,) = variables(1)
        dst_shape = (n,)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, affine_map(box, ((n - 1) - x,))),
            Store(dst, _identity(box), "v"),
        )
        kind = "strided_slice"
    elif kind == "collide2":
        a, c = shape
        box = IntBox.from_extents(a, c)
        i0, i1 = variables(2)
        dst_shape = (a + c - 1,)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, _identity(box)),
            Store(dst, affine_map(box, (i0 + i1,)), "v"),
        )
        kind = "other"
    elif kind == "collide1":
        # broadcast-load over (2, n) with a colliding store; grows by one
        # cell so consecutive colliders never shrink below collision size
        (n,) = shape
        box = IntBox.from_extents(2, n)
        i0, i1 = variables(2)
        dst_shape = (n + 1,)
        dst = b.declare(b.fresh(), dst_shape, OnChip())
        body = (
            Load("v", src, affine_map(box, (i1,))),
            Store(dst, affine_map(box, (i0 + i1,)), "v"),
        )
        kind = "other"
    else:
        raise ValueError(kind)
    if kind in ("flatten", "unflatten"):
        kind = "reshape"
    b.nests.append(OperatorNest(f"copy{idx}", kind, box, body))
    return dst, dst_shape


def generate_wavenet_analog(copy_pairs: int, non_invertible: int, seed: int = 0) -> Program:
    """Chain of `copy_pairs` data-movement nests interleaved with compute,
    exactly `non_invertible` of which use colliding (non-reversible) stores.
    """
    if non_invertible > copy_pairs:
        raise ValueError("non_invertible must be <= copy_pairs")
    rng = random.Random(seed)
    b = _Builder([], [])
    shape: tuple[int, ...] = (32,)
    cur = b.declare("x", shape, OffChip(), Origin.MODEL_INPUT)
    colliders = set(rng.sample(range(copy_pairs), non_invertible))
    adds_left = 8

    opcode = "neg"
    cur = _emit_compute(b, 0, cur, shape, opcode)
    for k in range(copy_pairs):
        kinds = _legal_kinds(shape, k in colliders)
        # steer sizes back toward the working range
        size = 1
        for d in shape:
            size *= d
        if len(shape) == 1 and size > 64 and "slice" in kinds:
            kind = rng.choice(["slice", "split"])
        elif len(shape) == 1 and size < 16 and "repeat" in kinds:
            kind = "repeat"
        else:
            kind = rng.choice(kinds)
        cur, shape = _emit_copy(b, k, cur, shape, kind, rng)
        if rng.random() < 0.2 and adds_left > 0:
            opcode = "add"
            adds_left -= 1
        else:
            opcode = rng.choice(["neg", "max"])
        cur = _emit_compute(b, k + 1, cur, shape, opcode)
    out = b.declare("y", shape, OffChip(), Origin.MODEL_OUTPUT)
    _emit_compute(b, copy_pairs + 1, cur, shape, "neg", out_decl=out)
    return b.program()


# ---------------------------------------------------------------------------
# anchored-block analog


def _emit_binary(b: _Builder, name: str, kind: str, opcode: str, a: str, c: str, out: str, box: IntBox):
    body = (
        Load("v", a, _identity(box)),
        Load("u", c, _identity(box)),
        Compute("w", opcode, ("v", "u")),
        Store(out, _identity(box), "w"),
    )
    b.nests.append(OperatorNest(name, kind, box, body))


def _emit_unary(b: _Builder, name: str, kind: str, opcode: str, src: str, out: str, box: IntBox):
    body = (
        Load("v", src, _identity(box)),
        Compute("w", opcode, ("v", "v")),
        Store(out, _identity(box), "w"),
    )
    b.nests.append(OperatorNest(name, kind, box, body))


def generate_resnet_analog(blocks: int, transposes_between: int, seed: int = 0) -> Program:
    """Blocks of anchored nests (conv-like, pooling, matmul-like) whose
    shared tensors pass through `transposes_between` transposes, so that
    mapping propagation can reconcile what local assignment copies for.
    """
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    rng = random.Random(seed)
    side = rng.choice([4, 8])
    box = IntBox.from_extents(side, side)
    i0, i1 = variables(2)
    b = _Builder([], [])

    if blocks == 1 and transposes_between == 0:
        x = b.declare("x1", (side, side), OffChip(), Origin.MODEL_INPUT)
        w = b.declare("wconv1", (side, side), OffChip(), Origin.MODEL_INPUT)
        u = b.declare("u1", (side, side), OffChip(), Origin.MODEL_OUTPUT)
        _emit_binary(b, "conv1", "conv2d", "mul", x, w, u, box)
        return b.program()

    cur = b.declare("x1", (side, side), OffChip(), Origin.MODEL_INPUT)
    for blk in range(1, blocks + 1):
        w = b.declare(f"wconv{blk}", (side, side), OffChip(), Origin.MODEL_INPUT)
        u = b.declare(f"u{blk}", (side, side), OnChip())
        _emit_binary(b, f"conv{blk}", "conv2d", "mul", cur, w, u, box)
        v = u
        for t in range(1, transposes_between + 1):
            vt = b.declare(f"v{blk}_{t}", (side, side), OnChip())
            b.nests.append(
                OperatorNest(
                    f"tr{blk}_{t}",
                    "transpose",
                    box,
                    (Load("v", v, _identity(box)), Store(vt, affine_map(box, (i1, i0)), "v")),
                )
            )
            v = vt
        p = b.declare(f"p{blk}", (side, side), OnChip())
        _emit_unary(b, f"pool{blk}", "pooling", "max", v, p, box)
        wm = b.declare(f"wmm{blk}", (side, side), OffChip(), Origin.MODEL_INPUT)
        m = b.declare(f"m{blk}", (side, side), OnChip())
        _emit_binary(b, f"mm{blk}", "matmul", "mul", v, wm, m, box)
        y = b.declare(f"y{blk}", (side, side), OffChip(), Origin.MODEL_OUTPUT)
        _emit_binary(b, f"res{blk}", "elementwise", "add", p, m, y, box)
        cur = v
    return b.program()
