"""Reference interpreter: the correctness oracle for every pass.

Runs a program on concrete integer tensors with per-cell poison tracking
(reading a never-written intermediate cell is an error).  Iteration order
is lexicographic over each nest's box with body statements in order.

Because validation guarantees that a nest never reads a tensor written by
the same nest, statements can be evaluated vectorized across the whole box;
a scalar walk is kept for the rare body whose statements overlap writes to
one tensor, where interleaving is observable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .affine import IntBox
from .ir import Compute, Load, Memcopy, Origin, Program, Statement, Store


class InterpError(Exception):
    pass


class PoisonRead(InterpError):
    pass


@dataclass
class TensorStore:
    """Dense integer buffers by tensor name, with written-cell masks."""

    data: dict[str, np.ndarray]
    written: dict[str, np.ndarray]

    @staticmethod
    def from_arrays(arrays: dict[str, np.ndarray]) -> "TensorStore":
        data = {k: np.array(v, dtype=np.int64) for k, v in arrays.items()}
        written = {k: np.ones(v.size, dtype=bool) for k, v in data.items()}
        return TensorStore(data, written)

    def array(self, name: str) -> np.ndarray:
        return self.data[name]

    def names(self) -> set[str]:
        return set(self.data)


@lru_cache(maxsize=512)
def _points_for(box: IntBox) -> np.ndarray:
    return box.points_array()


def _strides_for(shape: tuple[int, ...]) -> np.ndarray:
    strides = np.ones(len(shape), dtype=np.int64)
    for j in range(len(shape) - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    return strides


def run(program: Program, inputs: TensorStore) -> TensorStore:
    """Execute and return the model-output tensors.

    The input store is not modified.  Raises InterpError for missing or
    mis-shaped inputs, PoisonRead for reads of never-written cells.
    """
    decls = program.tensor_map
    expected = {t.name for t in program.tensors if t.origin is Origin.MODEL_INPUT}
    if inputs.names() != expected:
        raise InterpError(
            f"inputs must cover exactly the model inputs {sorted(expected)}, got {sorted(inputs.names())}"
        )
    data: dict[str, np.ndarray] = {}
    written: dict[str, np.ndarray] = {}
    for t in program.tensors:
        if t.origin is Origin.MODEL_INPUT:
            src = inputs.array(t.name)
            if tuple(src.shape) != t.shape:
                raise InterpError(f"input '{t.name}' has shape {src.shape}, declared {t.shape}")
            data[t.name] = np.array(src.reshape(-1), dtype=np.int64)
            written[t.name] = np.ones(src.size, dtype=bool)
        else:
            size = t.index_box.cardinality
            data[t.name] = np.zeros(size, dtype=np.int64)
            written[t.name] = np.zeros(size, dtype=bool)

    for nest in program.nests:
        pts = _points_for(nest.box)
        if pts.shape[0] == 0:
            continue
        if _has_overlapping_writes(nest.body):
            _run_nest_scalar(nest, pts, decls, data, written)
        else:
            _run_nest_vectorized(nest, pts, decls, data, written)

    outputs = {
        t.name: data[t.name].reshape(t.shape).copy()
        for t in program.tensors
        if t.origin is Origin.MODEL_OUTPUT
    }
    for t in program.tensors:
        if t.origin is Origin.MODEL_OUTPUT and not written[t.name].all():
            raise PoisonRead(f"model output '{t.name}' is not fully written")
    return TensorStore.from_arrays(outputs)


def _has_overlapping_writes(body: tuple[Statement, ...]) -> bool:
    targets: list[str] = []
    for s in body:
        if isinstance(s, Store):
            targets.append(s.tensor)
        elif isinstance(s, Memcopy):
            targets.append(s.dst)
    return len(targets) != len(set(targets))


def _flat_indices(access, pts, decl, nest_name):
    idx = access.evaluate_batch(pts)
    shape = np.asarray(decl.shape, dtype=np.int64)
    if idx.shape[1] != len(decl.shape) or (idx < 0).any() or (idx >= shape).any():
        raise InterpError(f"access to '{decl.name}' out of bounds in nest '{nest_name}'")
    return idx @ _strides_for(decl.shape)


def _apply_compute(opcode: str, args: list[np.ndarray]) -> np.ndarray:
    if opcode == "add":
        return args[0] + args[1]
    if opcode == "mul":
        return args[0] * args[1]
    if opcode == "max":
        return np.maximum(args[0], args[1])
    if opcode == "neg":
        return -args[0]
    if opcode == "identity":
        return args[0].copy()
    raise InterpError(f"unknown opcode '{opcode}'")


def _run_nest_vectorized(nest, pts, decls, data, written):
    env: dict[str, np.ndarray] = {}
    for stmt in nest.body:
        if isinstance(stmt, Load):
            decl = decls[stmt.tensor]
            flat = _flat_indices(stmt.access, pts, decl, nest.name)
            mask = written[stmt.tensor][flat]
            if not mask.all():
                p = pts[int(np.argmin(mask))]
                raise PoisonRead(
                    f"nest '{nest.name}' reads unwritten cell of '{stmt.tensor}' at point {tuple(int(v) for v in p)}"
                )
            env[stmt.result] = data[stmt.tensor][flat]
        elif isinstance(stmt, Compute):
            env[stmt.result] = _apply_compute(stmt.opcode, [env[o] for o in stmt.operands])
        elif isinstance(stmt, Store):
            decl = decls[stmt.tensor]
            flat = _flat_indices(stmt.access, pts, decl, nest.name)
            data[stmt.tensor][flat] = env[stmt.value]
            written[stmt.tensor][flat] = True
        elif isinstance(stmt, Memcopy):
            sdecl, ddecl = decls[stmt.src], decls[stmt.dst]
            sflat = _flat_indices(stmt.element_map, pts, sdecl, nest.name)
            dflat = _flat_indices(stmt.element_map, pts, ddecl, nest.name)
            mask = written[stmt.src][sflat]
            if not mask.all():
                p = pts[int(np.argmin(mask))]
                raise PoisonRead(
                    f"nest '{nest.name}' copies unwritten cell of '{stmt.src}' at point {tuple(int(v) for v in p)}"
                )
            data[stmt.dst][dflat] = data[stmt.src][sflat]
            written[stmt.dst][dflat] = True


def _run_nest_scalar(nest, pts, decls, data, written):
    # exact lexicographic, statement-in-order semantics
    index_cache: dict[int, np.ndarray] = {}
    for si, stmt in enumerate(nest.body):
        if isinstance(stmt, Load):
            index_cache[si] = _flat_indices(stmt.access, pts, decls[stmt.tensor], nest.name)
        elif isinstance(stmt, Store):
            index_cache[si] = _flat_indices(stmt.access, pts, decls[stmt.tensor], nest.name)
        elif isinstance(stmt, Memcopy):
            index_cache[si] = _flat_indices(stmt.element_map, pts, decls[stmt.dst], nest.name)
            index_cache[-si - 1] = _flat_indices(stmt.element_map, pts, decls[stmt.src], nest.name)
    for k in range(pts.shape[0]):
        env: dict[str, int] = {}
        for si, stmt in enumerate(nest.body):
            if isinstance(stmt, Load):
                flat = int(index_cache[si][k])
                if not written[stmt.tensor][flat]:
                    raise PoisonRead(
                        f"nest '{nest.name}' reads unwritten cell of '{stmt.tensor}'"
                    )
                env[stmt.result] = int(data[stmt.tensor][flat])
            elif isinstance(stmt, Compute):
                args = [np.int64(env[o]) for o in stmt.operands]
                env[stmt.result] = int(_apply_compute(stmt.opcode, args))
            elif isinstance(stmt, Store):
                flat = int(index_cache[si][k])
                data[stmt.tensor][flat] = env[stmt.value]
                written[stmt.tensor][flat] = True
            elif isinstance(stmt, Memcopy):
                sflat = int(index_cache[-si - 1][k])
                dflat = int(index_cache[si][k])
                if not written[stmt.src][sflat]:
                    raise PoisonRead(
                        f"nest '{nest.name}' copies unwritten cell of '{stmt.src}'"
                    )
                data[stmt.dst][dflat] = data[stmt.src][sflat]
                written[stmt.dst][dflat] = True


# ---------------------------------------------------------------------------
# Equivalence oracle


@dataclass(frozen=True)
class Counterexample:
    trial: int
    tensor: str
    index: tuple[int, ...]
    left: int
    right: int

    def __str__(self) -> str:
        return (
            f"trial {self.trial}: output '{self.tensor}' differs at {self.index}: "
            f"{self.left} != {self.right}"
        )


@dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    trials: int
    counterexample: Counterexample | None = None


INPUT_RANGE = (-50, 50)


def random_inputs(program: Program, seed: int, trial: int = 0) -> TensorStore:
    """Deterministic pseudo-random integer inputs for the model-input tensors."""
    rng = np.random.default_rng([seed, trial])
    arrays = {
        t.name: rng.integers(INPUT_RANGE[0], INPUT_RANGE[1], size=t.shape, dtype=np.int64)
        for t in program.tensors
        if t.origin is Origin.MODEL_INPUT
    }
    return TensorStore.from_arrays(arrays)


def equivalent(p1: Program, p2: Program, trials: int = 5, seed: int = 0) -> EquivalenceResult:
    """Compare observable behaviour on deterministic random inputs, exactly."""
    in1 = {(t.name, t.shape, t.elem_size) for t in p1.tensors if t.origin is Origin.MODEL_INPUT}
    in2 = {(t.name, t.shape, t.elem_size) for t in p2.tensors if t.origin is Origin.MODEL_INPUT}
    out1 = {(t.name, t.shape) for t in p1.tensors if t.origin is Origin.MODEL_OUTPUT}
    out2 = {(t.name, t.shape) for t in p2.tensors if t.origin is Origin.MODEL_OUTPUT}
    if in1 != in2 or out1 != out2:
        raise InterpError("programs do not share input/output declarations")
    for trial in range(trials):
        inputs = random_inputs(p1, seed, trial)
        r1 = run(p1, inputs)
        r2 = run(p2, inputs)
        for name in sorted(r1.names()):
            a, b = r1.array(name), r2.array(name)
            if not np.array_equal(a, b):
                flat = int(np.argmax((a != b).reshape(-1)))
                idx = tuple(int(v) for v in np.unravel_index(flat, a.shape))
                return EquivalenceResult(
                    False,
                    trials,
                    Counterexample(trial, name, idx, int(a[idx]), int(b[idx])),
                )
    return EquivalenceResult(True, trials, None)
