"""
Exact evaluation of every IR kind on classical inputs.

Besides pointwise evaluation this module enumerates whole truth tables.
Read-once quantum formulas are enumerated bottom-up over the distinct
states each wire can carry: the joint input of a gate is the tensor
product of its children's outputs, so a gate only ever sees the product
of its children's (small) state sets rather than all 2^n assignments.
Everything else is evaluated per assignment, either vectorized with numpy
or in dask-threaded chunks merged in assignment order, so the result does
not depend on the thread count.
"""

import logging
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import dask
import numpy as np
import pandas as pd
from dask.diagnostics import ProgressBar

from errors import EvaluationError, TooManyVariablesError, UnassignedVariableError
from formula_ir import (
    And,
    CGate,
    CLeaf,
    Circuit,
    ControlledX,
    IRObject,
    Not,
    OneQubitProgram,
    Or,
    QGate,
    QLeaf,
    QNode,
    TruthTable,
    Var,
    validate_read_once,
    variables,
)
from qlinalg import (
    PAULI_X,
    DensityMatrix,
    Tolerances,
    is_classical_state,
    pairwise_trace_distances,
    tensor_states,
    trace_distance,
)

ENUMERATION_LIMIT = 20
_CHUNKS_PER_THREAD = 4

Assignment = Union[Sequence[int], Mapping[int, int]]


def resolve_threads(threads: Optional[int]) -> int:
    """0 or None means one worker per CPU."""
    if not threads:
        return os.cpu_count() or 1
    return max(1, int(threads))


@dataclass(frozen=True, eq=False)
class StateSet:
    """
    Distinct output states of a sub-formula over all assignments to its
    variables, with one witness assignment (bits over `vars`) per state.
    `membership[i]` is the state index reached by assignment index i.
    """

    vars: Tuple[int, ...]
    states: Tuple[DensityMatrix, ...]
    witnesses: Tuple[Tuple[int, ...], ...]
    membership: np.ndarray

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True, eq=False)
class TruthTableResult:
    """
    Exhaustive evaluation result. For quantum objects `outputs` holds the
    output state per assignment and `classical` is true iff every one of
    them is a computational basis state; otherwise table entries are the
    rounded outcome <1|rho|1> >= 1/2.
    """

    vars: Tuple[int, ...]
    table: TruthTable
    classical: bool
    outputs: Optional[Tuple[DensityMatrix, ...]] = None

    def to_frame(self) -> pd.DataFrame:
        rows = assignment_matrix(len(self.vars))
        frame = pd.DataFrame(rows, columns=[f"x{v}" for v in self.vars])
        frame["f"] = self.table.to_array()
        if self.outputs is not None:
            frame["p1"] = [round(s.prob_one, 12) for s in self.outputs]
        return frame


def assignment_matrix(n: int) -> np.ndarray:
    """All 2^n assignments as rows of bits, big-endian, in index order."""
    index = np.arange(2 ** n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((index[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def _lookup(x: Assignment, var: int) -> int:
    try:
        value = x[var]
    except (IndexError, KeyError):
        raise UnassignedVariableError(var) from None
    if value not in (0, 1):
        raise EvaluationError(f"x{var} = {value!r} is not a bit")
    return int(value)


def _guard(vars_: Sequence[int]) -> None:
    if len(vars_) > ENUMERATION_LIMIT:
        raise TooManyVariablesError(len(vars_), ENUMERATION_LIMIT)


# Pointwise evaluation

def eval_qformula(f: QNode, x: Assignment) -> DensityMatrix:
    """Children first, pre channels per wire, then the gate channel, then `out`."""
    if isinstance(f, QLeaf):
        state = DensityMatrix.basis(_lookup(x, f.var))
    else:
        inputs = []
        for child, pre in zip(f.children, f.pre):
            wire = eval_qformula(child, x)
            inputs.append(wire if pre is None else pre.apply(wire))
        state = f.channel.apply(tensor_states(inputs))
    if f.out is not None:
        state = f.out.apply(state)
    return state


def eval_cformula(f, x: Assignment) -> int:
    if isinstance(f, CLeaf):
        return _lookup(x, f.var)
    return f.table(tuple(eval_cformula(c, x) for c in f.children))


def eval_circuit(c: Circuit, x: Assignment) -> int:
    if isinstance(c, Var):
        return _lookup(x, c.var)
    if isinstance(c, Not):
        return 1 - eval_circuit(c.child, x)
    if isinstance(c, And):
        return eval_circuit(c.left, x) & eval_circuit(c.right, x)
    if isinstance(c, Or):
        return eval_circuit(c.left, x) | eval_circuit(c.right, x)
    raise TypeError(f"not a circuit node: {c!r}")


def eval_oqp(p: OneQubitProgram, x: Assignment) -> DensityMatrix:
    """Run the items left to right on |0>; ControlledX applies X iff x_var = 1."""
    psi = np.array([1.0, 0.0], dtype=complex)
    for item in p.items:
        if isinstance(item, ControlledX):
            if _lookup(x, item.var):
                psi = PAULI_X @ psi
        else:
            psi = item.u @ psi
    return DensityMatrix.from_vector(psi)


def evaluate(f: IRObject, x: Assignment) -> Union[int, DensityMatrix]:
    if isinstance(f, (QLeaf, QGate)):
        return eval_qformula(f, x)
    if isinstance(f, (CLeaf, CGate)):
        return eval_cformula(f, x)
    if isinstance(f, OneQubitProgram):
        return eval_oqp(f, x)
    return eval_circuit(f, x)


# Distinct-state bookkeeping

def dedup_states(states: Sequence[DensityMatrix], radius: float) -> Tuple[List[DensityMatrix], np.ndarray]:
    """
    Merge states within `radius` in trace distance, keeping the first seen.

    Returns the representatives and, per input state, its representative
    index. Entry-wise differences bound the trace distance from below, so
    only candidates whose entries all lie within `radius` are compared.
    """
    reps: List[DensityMatrix] = []
    stacked: List[np.ndarray] = []
    mapping = np.empty(len(states), dtype=np.int64)
    for i, state in enumerate(states):
        found = -1
        if stacked:
            gaps = np.max(np.abs(np.stack(stacked) - state.mat), axis=(1, 2))
            for j in np.flatnonzero(gaps <= radius):
                if trace_distance(reps[j], state) <= radius:
                    found = int(j)
                    break
        if found < 0:
            found = len(reps)
            reps.append(state)
            stacked.append(state.mat)
        mapping[i] = found
    return reps, mapping


@dataclass
class _Enumerated:
    vars: Tuple[int, ...]
    states: List[DensityMatrix]
    index: np.ndarray


def _sub_index(bits: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    weights = 1 << np.arange(len(positions) - 1, -1, -1, dtype=np.int64)
    return bits[:, list(positions)].astype(np.int64) @ weights


def _enumerate_read_once(node: QNode, tol: Tolerances) -> _Enumerated:
    if isinstance(node, QLeaf):
        states = [DensityMatrix.basis(0), DensityMatrix.basis(1)]
        index = np.array([0, 1], dtype=np.int64)
        vars_ = (int(node.var),)
    else:
        wires = []
        for child, pre in zip(node.children, node.pre):
            sub = _enumerate_read_once(child, tol)
            if pre is not None:
                sub.states = [pre.apply(s) for s in sub.states]
            wires.append(sub)
        vars_ = tuple(sorted(v for w in wires for v in w.vars))
        bits = assignment_matrix(len(vars_))
        position = {v: i for i, v in enumerate(vars_)}
        columns = [w.index[_sub_index(bits, [position[v] for v in w.vars])] for w in wires]
        combos, inverse = np.unique(np.stack(columns, axis=1), axis=0, return_inverse=True)
        states = [
            node.channel.apply(tensor_states([w.states[c] for w, c in zip(wires, row)]))
            for row in combos
        ]
        index = np.asarray(inverse).reshape(-1)

    if node.out is not None:
        states = [node.out.apply(s) for s in states]
    reps, mapping = dedup_states(states, tol.eps_num)
    return _Enumerated(vars_, reps, mapping[index])


def _pointwise(fn: Callable[[Dict[int, int]], object], vars_: Sequence[int], threads: Optional[int],
               progress: bool = False) -> list:
    """Evaluate fn on every assignment, chunked over dask threads, merged in index order."""
    n = len(vars_)
    total = 2 ** n
    workers = resolve_threads(threads)
    chunk = max(1, total // (workers * _CHUNKS_PER_THREAD))

    def run(start: int, stop: int) -> list:
        bits = assignment_matrix(n)[start:stop]
        return [fn(dict(zip(vars_, (int(b) for b in row)))) for row in bits]

    if workers == 1 or total <= chunk:
        return run(0, total)
    tasks = [dask.delayed(run)(s, min(s + chunk, total)) for s in range(0, total, chunk)]
    if progress:
        with ProgressBar():
            blocks = dask.compute(*tasks, scheduler="threads", num_workers=workers)
    else:
        blocks = dask.compute(*tasks, scheduler="threads", num_workers=workers)
    return [value for block in blocks for value in block]


def _expand(own_vars: Sequence[int], all_vars: Sequence[int]) -> np.ndarray:
    """For each assignment over all_vars, the index of its restriction to own_vars."""
    missing = set(own_vars) - set(all_vars)
    if missing:
        raise UnassignedVariableError(min(missing))
    position = {v: i for i, v in enumerate(all_vars)}
    return _sub_index(assignment_matrix(len(all_vars)), [position[v] for v in own_vars])


# Vectorized classical evaluation over all assignments

def _classical_column(f, bits: np.ndarray, position: Dict[int, int]) -> np.ndarray:
    if isinstance(f, (CLeaf, Var)):
        return bits[:, position[f.var]]
    if isinstance(f, CGate):
        index = np.zeros(bits.shape[0], dtype=np.int64)
        for child in f.children:
            index = (index << 1) | _classical_column(child, bits, position)
        return f.table.to_array()[index]
    if isinstance(f, Not):
        return 1 - _classical_column(f.child, bits, position)
    if isinstance(f, And):
        return _classical_column(f.left, bits, position) & _classical_column(f.right, bits, position)
    if isinstance(f, Or):
        return _classical_column(f.left, bits, position) | _classical_column(f.right, bits, position)
    raise TypeError(f"not a classical node: {f!r}")


def oqp_states(p: OneQubitProgram, vars_: Sequence[int]) -> np.ndarray:
    """Final state vectors U_net|0> for every assignment, shape (2^n, 2)."""
    bits = assignment_matrix(len(vars_))
    position = {v: i for i, v in enumerate(vars_)}
    psi = np.zeros((bits.shape[0], 2), dtype=complex)
    psi[:, 0] = 1.0
    for item in p.items:
        if isinstance(item, ControlledX):
            if item.var not in position:
                raise UnassignedVariableError(item.var)
            flip = bits[:, position[item.var]] == 1
            psi[flip] = psi[flip][:, ::-1]
        else:
            psi = psi @ item.u.T
    return psi


# Truth tables

def _quantum_result(vars_, outputs: Sequence[DensityMatrix], distinct: Sequence[DensityMatrix],
                    index: np.ndarray, tol: Tolerances) -> TruthTableResult:
    verdicts = [is_classical_state(s, tol) for s in distinct]
    classical = all(v is not None for v in verdicts)
    if classical:
        per_state = np.array(verdicts, dtype=np.uint8)
    else:
        per_state = np.array([1 if s.prob_one >= 0.5 else 0 for s in distinct], dtype=np.uint8)
    table = TruthTable(len(vars_), per_state[index].tolist())
    return TruthTableResult(tuple(vars_), table, classical, tuple(outputs))


def truth_table(f: IRObject, tol: Optional[Tolerances] = None, threads: Optional[int] = None,
                vars_: Optional[Sequence[int]] = None, progress: bool = False) -> TruthTableResult:
    """
    Enumerate all 2^n assignments of the object's variables (or of `vars_`,
    which must include them) and tabulate the output.
    """
    tol = tol or Tolerances()
    own = variables(f)
    vars_ = tuple(own if vars_ is None else sorted(set(vars_)))
    missing = set(own) - set(vars_)
    if missing:
        raise UnassignedVariableError(min(missing))
    _guard(vars_)
    logging.debug(f"enumerating {2 ** len(vars_)} assignments over {len(vars_)} variables")

    if isinstance(f, (QLeaf, QGate)):
        if validate_read_once(f):
            enum = _enumerate_read_once(f, tol)
            index = enum.index[_expand(enum.vars, vars_)]
            outputs = [enum.states[i] for i in index]
            return _quantum_result(vars_, outputs, enum.states, index, tol)
        outputs = _pointwise(lambda x: eval_qformula(f, x), vars_, threads, progress)
        distinct, index = dedup_states(outputs, tol.eps_num)
        return _quantum_result(vars_, outputs, distinct, index, tol)

    if isinstance(f, OneQubitProgram):
        psi = oqp_states(f, vars_)
        outputs = [DensityMatrix.from_vector(v) for v in psi]
        distinct, index = dedup_states(outputs, tol.eps_num)
        return _quantum_result(vars_, outputs, distinct, index, tol)

    bits = assignment_matrix(len(vars_))
    column = _classical_column(f, bits, {v: i for i, v in enumerate(vars_)})
    return TruthTableResult(vars_, TruthTable(len(vars_), column.tolist()), True)


def reachable_states(f: QNode, tol: Optional[Tolerances] = None, threads: Optional[int] = None) -> StateSet:
    """
    The distinct output states of `f` over all assignments to its variables,
    deduplicated at eps_dedup. Representatives and witnesses are the first
    assignment (lexicographically smallest) reaching each state.
    """
    tol = tol or Tolerances()
    vars_ = tuple(variables(f))
    _guard(vars_)
    if validate_read_once(f):
        enum = _enumerate_read_once(f, tol)
        reps, mapping = dedup_states(enum.states, tol.eps_dedup)
        membership = mapping[enum.index]
    else:
        outputs = _pointwise(lambda x: eval_qformula(f, x), vars_, threads)
        reps, membership = dedup_states(outputs, tol.eps_dedup)

    first = [int(np.flatnonzero(membership == k)[0]) for k in range(len(reps))]
    bits = assignment_matrix(len(vars_))
    witnesses = tuple(tuple(int(b) for b in bits[i]) for i in first)
    # Representatives are re-evaluated at their witness so every stored
    # state is reproduced exactly by its witness.
    states = tuple(eval_qformula(f, dict(zip(vars_, w))) for w in witnesses)
    return StateSet(vars_, states, witnesses, membership)


# Bounded-error diagnostics

def _split(outputs: Sequence[DensityMatrix], bits: Sequence[int], tol: Tolerances):
    groups = ([], [])
    for state, bit in zip(outputs, bits):
        groups[int(bit)].append(state)
    return tuple(dedup_states(g, tol.eps_num)[0] for g in groups)


def separation(outputs: Sequence[DensityMatrix], bits: Sequence[int],
               tol: Optional[Tolerances] = None) -> float:
    """Minimum trace distance between states labelled 0 and states labelled 1 (2.0 if one side is empty)."""
    zeros, ones = _split(outputs, bits, tol or Tolerances())
    if not zeros or not ones:
        return 2.0
    return float(np.min(pairwise_trace_distances(zeros, ones)))


def closeness(outputs: Sequence[DensityMatrix], bits: Sequence[int],
              tol: Optional[Tolerances] = None) -> float:
    """Maximum trace distance between an output and the basis state |f(x)>."""
    worst = 0.0
    for bit, group in enumerate(_split(outputs, bits, tol or Tolerances())):
        if group:
            target = [DensityMatrix.basis(bit)]
            worst = max(worst, float(np.max(pairwise_trace_distances(group, target))))
    return worst
