"""
The traced Toffoli channel and the classical gates it yields.

Tracing out the m-1 controls of an m-qubit Toffoli leaves a channel that
applies X to the target with probability a = prod_i <1|rho_i|1> over the
control states. Dressing it with single-qubit channels therefore yields
only Toffoli tables with NOT or constant gates before and after it.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import FrozenSet, Iterator, Optional, Sequence, Tuple

import numpy as np

from errors import DimensionMismatchError, InternalConsistencyError, NonClassicalOutputError
from formula_ir import TruthTable
from qlinalg import (
    HADAMARD,
    IDENTITY2,
    PAULI_X,
    Channel,
    DensityMatrix,
    Tolerances,
    is_classical_state,
    tensor,
    tensor_states,
    trace_distance,
)
from simulate import assignment_matrix

MIN_M = 2
MAX_M = 6

# Single-bit gates as lookup rows: row[bit] is the output bit.
SINGLE_BIT_GATES = {
    "id": (0, 1),
    "not": (1, 0),
    "zero": (0, 0),
    "one": (1, 1),
}


def _check_m(m: int) -> None:
    if not MIN_M <= m <= MAX_M:
        raise ValueError(f"Toffoli width m must lie in [{MIN_M}, {MAX_M}], got {m}")


def toffoli_unitary(m: int, target: Optional[int] = None) -> np.ndarray:
    """Permutation matrix flipping qubit `target` (default: the last) when all other qubits are 1."""
    _check_m(m)
    target = m - 1 if target is None else target
    bits = assignment_matrix(m)
    others = np.delete(bits, target, axis=1)
    flipped = bits.copy()
    flipped[:, target] ^= np.all(others == 1, axis=1).astype(np.uint8)
    weights = 1 << np.arange(m - 1, -1, -1)
    image = flipped.astype(np.int64) @ weights
    u = np.zeros((2 ** m, 2 ** m), dtype=complex)
    u[image, np.arange(2 ** m)] = 1.0
    return u


@lru_cache(maxsize=None)
def toffoli_channel(m: int) -> Channel:
    """Kraus operators (<x| (x) I) T_m over the 2^(m-1) control patterns x."""
    _check_m(m)
    blocks = toffoli_unitary(m).reshape(2 ** (m - 1), 2, 2 ** m)
    return Channel(list(blocks))


@dataclass(frozen=True, eq=False)
class ToffoliAnalysis:
    m: int
    weights: Tuple[float, ...]
    a: float
    predicted_output: DensityMatrix
    actual_output: DensityMatrix

    @property
    def deviation(self) -> float:
        return trace_distance(self.predicted_output, self.actual_output)

    def to_json(self) -> dict:
        return {"m": self.m, "weights": list(self.weights), "a": self.a, "deviation": self.deviation}


def verify_output_identity(controls: Sequence[DensityMatrix], target: DensityMatrix,
                           tol: Optional[Tolerances] = None) -> ToffoliAnalysis:
    """
    Check that the traced Toffoli maps controls (x) target to
    a X target X + (1 - a) target with a the product of the controls' <1|rho|1>.

    Raises:
        InternalConsistencyError: the two sides differ by more than eps_num
    """
    tol = tol or Tolerances()
    states = list(controls) + [target]
    if any(s.dim != 2 for s in states):
        raise DimensionMismatchError("controls and target must be single-qubit states")
    m = len(states)
    actual = toffoli_channel(m).apply(tensor_states(states))

    weights = tuple(float(np.real(c.mat[1, 1])) for c in controls)
    a = float(np.prod(weights))
    flipped = PAULI_X @ target.mat @ PAULI_X
    predicted = DensityMatrix(a * flipped + (1.0 - a) * target.mat, validate=False)

    analysis = ToffoliAnalysis(m, weights, a, predicted, actual)
    if analysis.deviation > tol.eps_num:
        raise InternalConsistencyError(
            f"traced Toffoli output deviates from the closed form by {analysis.deviation:.3g}"
        )
    return analysis


def f_tof_dressings(m: int) -> Iterator[Tuple[Tuple[str, ...], str, TruthTable]]:
    """Every choice of single-bit gate per input and on the output, with the table it gives."""
    _check_m(m)
    bits = assignment_matrix(m)
    rows = {name: np.array(row, dtype=np.uint8) for name, row in SINGLE_BIT_GATES.items()}
    for pre in product(SINGLE_BIT_GATES, repeat=m):
        mapped = np.column_stack([rows[name][bits[:, j]] for j, name in enumerate(pre)])
        core = np.all(mapped[:, :-1] == 1, axis=1).astype(np.uint8) ^ mapped[:, -1]
        for post in SINGLE_BIT_GATES:
            yield pre, post, TruthTable(m, rows[post][core].tolist())


@lru_cache(maxsize=None)
def enumerate_f_tof(m: int) -> FrozenSet[TruthTable]:
    tables = frozenset(table for _, _, table in f_tof_dressings(m))
    logging.debug(f"F_tof({m}) has {len(tables)} distinct tables")
    return tables


def named_channel(name: str) -> Channel:
    """
    Single-qubit channels by name: the classical lifts id/not/zero/one and
    the non-classical plus/minus/h/mix.
    """
    plus = DensityMatrix.from_vector([1.0, 1.0])
    minus = DensityMatrix.from_vector([1.0, -1.0])
    channels = {
        "id": lambda: Channel.identity(),
        "not": lambda: Channel.unitary(PAULI_X),
        "zero": lambda: Channel.preparation(DensityMatrix.basis(0)),
        "one": lambda: Channel.preparation(DensityMatrix.basis(1)),
        "plus": lambda: Channel.preparation(plus),
        "minus": lambda: Channel.preparation(minus),
        "h": lambda: Channel.unitary(HADAMARD),
        "mix": lambda: Channel.preparation(DensityMatrix.maximally_mixed(1)),
    }
    if name not in channels:
        raise ValueError(f"unknown channel name '{name}', expected one of {sorted(channels)}")
    return channels[name]()


def classify_depth_one(pre: Sequence[Channel], post: Optional[Channel], m: int,
                       tol: Optional[Tolerances] = None) -> TruthTable:
    """
    Tabulate post(Toffoli_m(pre_1(|x1>) (x) ... (x) pre_m(|xm>))) over all inputs.

    Raises:
        NonClassicalOutputError: some input yields a non-classical output
        InternalConsistencyError: the table falls outside F_tof(m)
    """
    tol = tol or Tolerances()
    _check_m(m)
    if len(pre) != m or any(not c.is_single_qubit for c in pre):
        raise DimensionMismatchError(f"need {m} single-qubit pre channels")
    if post is not None and not post.is_single_qubit:
        raise DimensionMismatchError("post channel must be single-qubit")

    channel = toffoli_channel(m)
    bits = []
    for row in assignment_matrix(m):
        inputs = [c.apply(DensityMatrix.basis(int(b))) for c, b in zip(pre, row)]
        state = channel.apply(tensor_states(inputs))
        if post is not None:
            state = post.apply(state)
        bit = is_classical_state(state, tol)
        if bit is None:
            raise NonClassicalOutputError(
                f"input {''.join(str(int(b)) for b in row)} gives a non-classical output "
                f"(p1 = {state.prob_one:.6f})"
            )
        bits.append(bit)

    table = TruthTable(m, bits)
    if table not in enumerate_f_tof(m):
        raise InternalConsistencyError(f"{table} is classical but not in F_tof({m})")
    return table


def hadamard_exchange(m: int, tol: Optional[Tolerances] = None) -> bool:
    """
    Conjugating the target and the first control by Hadamard swaps their
    roles: H_0 H_t T(target=t) H_0 H_t = T(target=0).
    """
    tol = tol or Tolerances()
    _check_m(m)
    factors = [IDENTITY2] * m
    factors[0] = factors[m - 1] = HADAMARD
    w = tensor(*factors)
    exchanged = w @ toffoli_unitary(m) @ w
    return bool(np.allclose(exchanged, toffoli_unitary(m, target=0), atol=tol.eps_num))
