"""
Compilation of AND/OR/NOT circuits into one-qubit programs.

A program is a single qubit passed through single-qubit unitaries and
input-controlled X gates; its length is the number of controlled X gates.
A depth-d circuit compiles to a program of length at most 4^d whose net
unitary on input x is X^C(x) up to a global phase, so measuring the qubit
after starting from |0> yields C(x) with certainty.

Conjunction uses V = (X + Y)/sqrt(2) and R = (X + H)/sqrt(2 + sqrt(2)):

    V X^a H^b X^a H^b V = (unit scalar) X^(a AND b),    H^b = R X^b R.

Items execute left to right, so the emitted order is the reverse of the
matrix product above.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from errors import InternalConsistencyError, NotUnitaryError, UnassignedVariableError
from formula_ir import (
    And,
    Circuit,
    ControlledX,
    Not,
    OneQubitProgram,
    Or,
    ProgramItem,
    QGate,
    QLeaf,
    QNode,
    SingleQubit,
    TruthTable,
    Var,
    append_out,
    circuit_depth,
    variables,
)
from qlinalg import HADAMARD, IDENTITY2, PAULI_X, PAULI_Y, PAULI_Z, Channel, DensityMatrix, Tolerances, is_unitary
from simulate import assignment_matrix, truth_table
from toffoli import toffoli_channel


def _constant(mat: np.ndarray) -> np.ndarray:
    mat = np.array(mat, dtype=complex)
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True, eq=False)
class GateConstants:
    V: np.ndarray = field(default_factory=lambda: _constant((PAULI_X + PAULI_Y) / np.sqrt(2)))
    R: np.ndarray = field(default_factory=lambda: _constant((PAULI_X + HADAMARD) / np.sqrt(2 + np.sqrt(2))))
    X: np.ndarray = field(default_factory=lambda: PAULI_X)
    Y: np.ndarray = field(default_factory=lambda: PAULI_Y)
    Z: np.ndarray = field(default_factory=lambda: PAULI_Z)
    H: np.ndarray = field(default_factory=lambda: HADAMARD)

    def identities(self) -> Dict[str, float]:
        """Deviation of each defining identity, as max absolute entry error."""
        v, r, x, y, h = self.V, self.R, self.X, self.Y, self.H
        checks = {
            "V^2 = I": (v @ v, IDENTITY2),
            "VXV = Y": (v @ x @ v, y),
            "VYV = X": (v @ y @ v, x),
            "R^2 = I": (r @ r, IDENTITY2),
            "RXR = H": (r @ x @ r, h),
            "RHR = X": (r @ h @ r, x),
        }
        return {name: float(np.max(np.abs(lhs - rhs))) for name, (lhs, rhs) in checks.items()}

    def validate(self, tol: Optional[Tolerances] = None) -> None:
        tol = tol or Tolerances()
        for name, deviation in self.identities().items():
            if deviation > tol.eps_num:
                raise InternalConsistencyError(f"gate identity {name} fails by {deviation:.3g}")


CONSTANTS = GateConstants()


@dataclass(frozen=True, eq=False)
class CompileReport:
    program: OneQubitProgram
    source_depth: int
    length: int
    bound: int

    def to_json(self) -> dict:
        return {"length": self.length, "depth": self.source_depth, "bound": self.bound}


def de_morgan(c: Circuit) -> Circuit:
    """Rewrite every Or as Not(And(Not a, Not b)); depth is unchanged."""
    if isinstance(c, Var):
        return c
    if isinstance(c, Not):
        return Not(de_morgan(c.child))
    left, right = de_morgan(c.left), de_morgan(c.right)
    if isinstance(c, And):
        return And(left, right)
    return Not(And(Not(left), Not(right)))


def _emit(c: Circuit, k: GateConstants) -> List[ProgramItem]:
    if isinstance(c, Var):
        return [ControlledX(c.var)]
    if isinstance(c, Not):
        return _emit(c.child, k) + [SingleQubit(k.X)]
    if isinstance(c, Or):
        return _emit(de_morgan(c), k)
    first, second = _emit(c.left, k), _emit(c.right, k)
    hadamard_power = [SingleQubit(k.R)] + second + [SingleQubit(k.R)]
    return [SingleQubit(k.V)] + hadamard_power + first + hadamard_power + first + [SingleQubit(k.V)]


def merge_single_qubit(items: Sequence[ProgramItem]) -> List[ProgramItem]:
    """Fuse runs of adjacent single-qubit items; controlled X items are left in place."""
    merged: List[ProgramItem] = []
    for item in items:
        if isinstance(item, SingleQubit) and merged and isinstance(merged[-1], SingleQubit):
            merged[-1] = SingleQubit(item.u @ merged[-1].u)
        else:
            merged.append(item)
    return merged


def compile(c: Circuit, constants: GateConstants = CONSTANTS) -> CompileReport:
    depth = circuit_depth(c)
    program = OneQubitProgram(tuple(merge_single_qubit(_emit(c, constants))))
    report = CompileReport(program, depth, program.length, 4 ** depth)
    if report.length > report.bound:
        raise InternalConsistencyError(f"program length {report.length} exceeds 4^{depth}")
    logging.info(f"compiled depth-{depth} circuit to length {report.length} (bound {report.bound})")
    return report


Assignment = Union[Sequence[int], Mapping[int, int]]


def net_unitary(p: OneQubitProgram, x: Assignment) -> np.ndarray:
    """Product of the item matrices in time order; later items multiply on the left."""
    u = np.eye(2, dtype=complex)
    for item in p.items:
        if isinstance(item, ControlledX):
            try:
                bit = x[item.var]
            except (IndexError, KeyError):
                raise UnassignedVariableError(item.var) from None
            if bit:
                u = PAULI_X @ u
        else:
            u = item.u @ u
    return u


def net_unitaries(p: OneQubitProgram, vars_: Optional[Sequence[int]] = None) -> np.ndarray:
    """Net unitaries for every assignment of `vars_`, shape (2^n, 2, 2), in index order."""
    vars_ = tuple(variables(p) if vars_ is None else vars_)
    bits = assignment_matrix(len(vars_))
    position = {v: i for i, v in enumerate(vars_)}
    u = np.broadcast_to(np.eye(2, dtype=complex), (bits.shape[0], 2, 2)).copy()
    for item in p.items:
        if isinstance(item, ControlledX):
            if item.var not in position:
                raise UnassignedVariableError(item.var)
            flip = bits[:, position[item.var]] == 1
            u[flip] = u[flip][:, ::-1, :]
        else:
            u = np.matmul(item.u, u)
    return u


def up_to_phase_equal(a: np.ndarray, b: np.ndarray, tol: Optional[Tolerances] = None) -> bool:
    """True iff a = phi * b for a unit scalar phi, i.e. |tr(a^dagger b)| = dim."""
    tol = tol or Tolerances()
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return False
    if not is_unitary(a, tol) or not is_unitary(b, tol):
        raise NotUnitaryError("phase comparison needs unitary matrices")
    overlap = abs(np.trace(a.conj().T @ b))
    return bool(abs(overlap - a.shape[0]) <= tol.eps_num)


def verify_compilation(c: Circuit, program: OneQubitProgram, tol: Optional[Tolerances] = None) -> bool:
    """Check net_unitary(program, x) = phase * X^C(x) on every assignment of the circuit's variables."""
    tol = tol or Tolerances()
    vars_ = sorted(set(variables(c)) | set(variables(program)))
    expected = truth_table(c, tol, vars_=vars_).table.bits
    for u, bit in zip(net_unitaries(program, vars_), expected):
        if not up_to_phase_equal(u, PAULI_X if bit else IDENTITY2, tol):
            return False
    return True


def anf(t: TruthTable) -> np.ndarray:
    """Algebraic normal form coefficients over F2, indexed like the table (bit set = variable in monomial)."""
    coeffs = t.to_array().copy()
    n = t.arity
    for i in range(n):
        step = 1 << i
        view = coeffs.reshape(-1, 2, step)
        view[:, 1, :] ^= view[:, 0, :]
    return coeffs


def anf_degree(t: TruthTable) -> int:
    coeffs = anf(t)
    if not coeffs.any():
        return 0
    degrees = assignment_matrix(t.arity).sum(axis=1)
    return int(degrees[coeffs == 1].max())


def affine_check(t: TruthTable) -> bool:
    """True iff every monomial of degree >= 2 vanishes, i.e. t is computable over {NOT, PARITY}."""
    if t.arity > 20:
        raise ValueError(f"affine check supports at most 20 inputs, got {t.arity}")
    return anf_degree(t) <= 1


def to_qformula(p: OneQubitProgram) -> QNode:
    """
    The program as a read-many quantum formula: each controlled X becomes a
    CNOT-target gate over a fresh leaf for its control, single-qubit items
    become wire channels. The initial |0> is prepared from the first
    control's variable.
    """
    cx = [item.var for item in p.items if isinstance(item, ControlledX)]
    node: QNode = QLeaf(cx[0] if cx else 0, Channel.preparation(DensityMatrix.basis(0)))
    for item in p.items:
        if isinstance(item, ControlledX):
            node = QGate(toffoli_channel(2), (None, None), (QLeaf(item.var), node))
        else:
            node = append_out(node, Channel.unitary(item.u))
    return node
