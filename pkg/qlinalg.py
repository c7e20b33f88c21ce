"""
Dense complex linear algebra for small qubit systems.

Matrices are plain numpy complex arrays. Qubit 0 is the most significant
tensor factor, so |x0 x1 ... x(n-1)> indexes the computational basis
big-endian, the same order truth tables use.

Trace distance follows the unhalved convention ||a - b||_1 whose maximum
on states is 2; every separation threshold in the toolkit (2, 2 - delta)
is stated in this convention.
"""

import logging
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import sqrtm

from errors import (
    DimensionMismatchError,
    EvaluationError,
    NotCPTPError,
    NotOrthogonalError,
    NotPureError,
    NotUnitaryError,
    ParseError,
)

IDENTITY2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

for _m in (IDENTITY2, PAULI_X, PAULI_Y, PAULI_Z, HADAMARD):
    _m.setflags(write=False)


@dataclass(frozen=True)
class Tolerances:
    """
    Numerical slack used throughout the toolkit.

    Args:
        eps_num: slack for identities that hold exactly in theory
        eps_dedup: trace-distance radius under which two states are the same
        eps_classical: distance to |0><0| or |1><1| accepted as classical
    """

    eps_num: float = 1e-9
    eps_dedup: float = 1e-7
    eps_classical: float = 1e-7

    def __post_init__(self):
        if min(self.eps_num, self.eps_dedup, self.eps_classical) <= 0:
            raise ValueError("tolerances must be strictly positive")
        if not self.eps_num <= self.eps_classical <= self.eps_dedup <= 1e-3:
            raise ValueError(
                "tolerances must satisfy eps_num <= eps_classical <= eps_dedup <= 1e-3, "
                f"got {self.eps_num}, {self.eps_classical}, {self.eps_dedup}"
            )


DEFAULT_TOLERANCES = Tolerances()


def _tol(tol: Optional[Tolerances]) -> Tolerances:
    return DEFAULT_TOLERANCES if tol is None else tol


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def qubit_count(dim: int) -> int:
    return dim.bit_length() - 1


def dagger(mat: np.ndarray) -> np.ndarray:
    return mat.conj().T


def tensor(*mats: np.ndarray) -> np.ndarray:
    """Kronecker product of the given matrices, left factor most significant."""
    return reduce(np.kron, mats, np.ones((1, 1), dtype=complex))


def ket(bits: Union[int, Sequence[int]]) -> np.ndarray:
    """Computational basis column vector for a bit or bit string."""
    if isinstance(bits, (int, np.integer)):
        bits = [int(bits)]
    index = 0
    for b in bits:
        index = (index << 1) | int(b)
    vec = np.zeros((2 ** len(bits), 1), dtype=complex)
    vec[index, 0] = 1.0
    return vec


def is_unitary(mat: np.ndarray, tol: Optional[Tolerances] = None) -> bool:
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False
    deviation = np.max(np.abs(dagger(mat) @ mat - np.eye(mat.shape[0])))
    return bool(deviation <= _tol(tol).eps_num)


def hermitian_eigh(mat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.

    2x2 matrices use the closed form; the eigenvector pair is built as a
    vector and its exact orthogonal complement so the result is unitary to
    machine precision. Larger matrices go through numpy.
    """
    mat = np.asarray(mat, dtype=complex)
    if mat.shape != (2, 2):
        return np.linalg.eigh(mat)

    a = mat[0, 0].real
    d = mat[1, 1].real
    b = 0.5 * (mat[0, 1] + np.conj(mat[1, 0]))
    mean = 0.5 * (a + d)
    radius = float(np.hypot(0.5 * (a - d), abs(b)))
    values = np.array([mean - radius, mean + radius])

    if radius < 1e-15:
        return values, np.eye(2, dtype=complex)

    top = mean + radius
    if a >= d:
        upper = np.array([top - d, np.conj(b)], dtype=complex)
    else:
        upper = np.array([b, top - a], dtype=complex)
    upper /= np.linalg.norm(upper)
    lower = np.array([-np.conj(upper[1]), np.conj(upper[0])], dtype=complex)
    return values, np.column_stack([lower, upper])


# Matrix serialization: complex numbers as [re, im], matrices row-major.

def matrix_to_json(mat: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(mat)]


def matrix_from_json(data, path: Sequence = ()) -> np.ndarray:
    if not isinstance(data, list) or not data or not all(isinstance(r, list) for r in data):
        raise ParseError("matrix must be a non-empty list of rows", path)
    width = len(data[0])
    rows = []
    for i, row in enumerate(data):
        if len(row) != width:
            raise ParseError("matrix rows differ in length", list(path) + [i])
        entries = []
        for j, z in enumerate(row):
            if (not isinstance(z, list) or len(z) != 2
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in z)):
                raise ParseError("complex entry must be [re, im]", list(path) + [i, j])
            value = complex(float(z[0]), float(z[1]))
            if not np.isfinite(value):
                raise ParseError("complex entry must be finite", list(path) + [i, j])
            entries.append(value)
        rows.append(entries)
    return np.array(rows, dtype=complex)


class DensityMatrix:
    """An immutable density matrix on one or more qubits."""

    __slots__ = ("mat",)

    def __init__(self, mat, tol: Optional[Tolerances] = None, validate: bool = True):
        mat = np.array(mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or not is_power_of_two(mat.shape[0]):
            raise DimensionMismatchError(f"density matrix must be 2^k x 2^k, got shape {mat.shape}")
        if validate:
            _check_state(mat, _tol(tol))
        mat.setflags(write=False)
        self.mat = mat

    @classmethod
    def basis(cls, bits: Union[int, Sequence[int]]) -> "DensityMatrix":
        vec = ket(bits)
        return cls(vec @ dagger(vec), validate=False)

    @classmethod
    def from_vector(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).reshape(-1, 1)
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise EvaluationError("cannot build a state from the zero vector")
        psi = psi / norm
        return cls(psi @ dagger(psi), validate=False)

    @classmethod
    def maximally_mixed(cls, num_qubits: int = 1) -> "DensityMatrix":
        dim = 2 ** num_qubits
        return cls(np.eye(dim, dtype=complex) / dim, validate=False)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def num_qubits(self) -> int:
        return qubit_count(self.dim)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.mat @ self.mat)))

    @property
    def prob_one(self) -> float:
        """Probability of measuring 1 on a single-qubit state."""
        if self.dim != 2:
            raise DimensionMismatchError("prob_one is defined for single-qubit states")
        return float(self.mat[1, 1].real)

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.mat, other.mat), validate=False)

    def conjugate(self, unitary: np.ndarray) -> "DensityMatrix":
        return DensityMatrix(unitary @ self.mat @ dagger(unitary), validate=False)

    def principal_vector(self) -> np.ndarray:
        _, vecs = hermitian_eigh(self.mat)
        return vecs[:, -1]

    def allclose(self, other: "DensityMatrix", atol: float = 1e-9) -> bool:
        return self.dim == other.dim and bool(np.allclose(self.mat, other.mat, atol=atol, rtol=0))

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, purity={self.purity:.6f})"


def _check_state(mat: np.ndarray, tol: Tolerances) -> None:
    if np.max(np.abs(mat - dagger(mat))) > tol.eps_num:
        raise EvaluationError("density matrix is not Hermitian")
    trace = np.trace(mat)
    if abs(trace - 1.0) > tol.eps_num:
        raise EvaluationError(f"density matrix has trace {trace.real:.12g}, expected 1")
    values, _ = hermitian_eigh(0.5 * (mat + dagger(mat)))
    if values[0] < -tol.eps_num:
        raise EvaluationError(f"density matrix has negative eigenvalue {values[0]:.3g}")


def tensor_states(states: Sequence[DensityMatrix]) -> DensityMatrix:
    return DensityMatrix(tensor(*[s.mat for s in states]), validate=False)


class Channel:
    """
    A completely positive trace-preserving map stored as Kraus operators.

    Each Kraus operator is a 2^out x 2^in matrix. Completeness,
    sum_i K_i^dagger K_i = I, is checked on construction; complete
    positivity holds by construction of the Kraus form.
    """

    __slots__ = ("kraus", "in_qubits", "out_qubits")

    def __init__(self, kraus: Iterable, tol: Optional[Tolerances] = None, validate: bool = True):
        ops = [np.array(k, dtype=complex) for k in kraus]
        if not ops:
            raise NotCPTPError("a channel needs at least one Kraus operator")
        shape = ops[0].shape
        if len(shape) != 2 or not (is_power_of_two(shape[0]) and is_power_of_two(shape[1])):
            raise DimensionMismatchError(f"Kraus operators must be 2^out x 2^in, got shape {shape}")
        if shape[1] < 2:
            raise DimensionMismatchError("a channel acts on at least one qubit")
        if any(k.shape != shape for k in ops):
            raise DimensionMismatchError("Kraus operators differ in shape")

        stacked = np.stack(ops)
        if validate:
            completeness = np.einsum("kji,kjl->il", stacked.conj(), stacked)
            deviation = float(np.max(np.abs(completeness - np.eye(shape[1]))))
            if deviation > _tol(tol).eps_num:
                raise NotCPTPError(f"Kraus completeness violated by {deviation:.3g}")
        stacked.setflags(write=False)
        self.kraus = stacked
        self.in_qubits = qubit_count(shape[1])
        self.out_qubits = qubit_count(shape[0])

    # Factories

    @classmethod
    def identity(cls, num_qubits: int = 1) -> "Channel":
        return cls([np.eye(2 ** num_qubits, dtype=complex)], validate=False)

    @classmethod
    def unitary(cls, u: np.ndarray, tol: Optional[Tolerances] = None) -> "Channel":
        if not is_unitary(u, tol):
            raise NotUnitaryError("matrix is not unitary")
        return cls([u], validate=False)

    @classmethod
    def depolarizing(cls, p: float) -> "Channel":
        """rho -> (1 - p) rho + p I/2 on one qubit; p = 1 is fully depolarizing."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"depolarizing strength must lie in [0, 1], got {p}")
        return cls([
            np.sqrt(1.0 - 0.75 * p) * IDENTITY2,
            np.sqrt(0.25 * p) * PAULI_X,
            np.sqrt(0.25 * p) * PAULI_Y,
            np.sqrt(0.25 * p) * PAULI_Z,
        ], validate=False)

    @classmethod
    def preparation(cls, state: DensityMatrix, in_qubits: int = 1) -> "Channel":
        """Discard the input and prepare a fixed state."""
        values, vecs = hermitian_eigh(state.mat)
        ops = []
        for weight, vec in zip(values, vecs.T):
            if weight <= 0:
                continue
            column = np.sqrt(weight) * vec.reshape(-1, 1)
            for i in range(2 ** in_qubits):
                ops.append(column @ dagger(ket(_bits(i, in_qubits))))
        return cls(ops)

    @classmethod
    def classical_preparation(cls, zero_state: DensityMatrix, one_state: DensityMatrix) -> "Channel":
        """Measure in the computational basis, then prepare zero_state or one_state."""
        ops = []
        for bit, state in ((0, zero_state), (1, one_state)):
            values, vecs = hermitian_eigh(state.mat)
            for weight, vec in zip(values, vecs.T):
                if weight > 0:
                    ops.append(np.sqrt(weight) * vec.reshape(-1, 1) @ dagger(ket(bit)))
        return cls(ops)

    @classmethod
    def classical_gate(cls, bits: Sequence[int], arity: int) -> "Channel":
        """Dephase the inputs and output the bit bits[x] for basis input x."""
        if len(bits) != 2 ** arity:
            raise DimensionMismatchError(f"a {arity}-ary table needs {2 ** arity} entries")
        ops = []
        for x, out in enumerate(bits):
            ops.append(ket(int(out)) @ dagger(ket(_bits(x, arity))))
        return cls(ops, validate=False)

    # Algebra

    @property
    def is_single_qubit(self) -> bool:
        return self.in_qubits == 1 and self.out_qubits == 1

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        if rho.dim != 2 ** self.in_qubits:
            raise DimensionMismatchError(
                f"channel expects {self.in_qubits} input qubits, state has {rho.num_qubits}"
            )
        out = np.einsum("kij,jl,kml->im", self.kraus, rho.mat, self.kraus.conj())
        return DensityMatrix(out, validate=False)

    def compose(self, first: "Channel") -> "Channel":
        """The channel that applies `first`, then this channel."""
        if first.out_qubits != self.in_qubits:
            raise DimensionMismatchError("composed channels disagree on the wire width")
        ops = [a @ b for a in self.kraus for b in first.kraus]
        return Channel(ops, validate=False)._compressed()

    def tensor(self, other: "Channel") -> "Channel":
        ops = [np.kron(a, b) for a in self.kraus for b in other.kraus]
        return Channel(ops, validate=False)._compressed()

    def precompose_unitary(self, u: np.ndarray) -> "Channel":
        """Kraus operators K u: the channel that applies u, then this channel."""
        return Channel([k @ u for k in self.kraus], validate=False)

    def superoperator(self) -> np.ndarray:
        """Matrix S with vec(Phi(rho)) = S vec(rho), row-major vec."""
        return sum(np.kron(k, k.conj()) for k in self.kraus)

    def allclose(self, other: "Channel", atol: float = 1e-9) -> bool:
        """Same map, whatever the Kraus decomposition."""
        if (self.in_qubits, self.out_qubits) != (other.in_qubits, other.out_qubits):
            return False
        return bool(np.allclose(self.superoperator(), other.superoperator(), atol=atol, rtol=0))

    def choi(self) -> np.ndarray:
        vecs = self.kraus.reshape(len(self.kraus), -1)
        return vecs.T @ vecs.conj()

    def _compressed(self) -> "Channel":
        # Re-derive a minimal Kraus set from the Choi matrix once the product
        # form outgrows it.
        d_out, d_in = self.kraus.shape[1:]
        if len(self.kraus) <= d_out * d_in:
            return self
        values, vecs = np.linalg.eigh(self.choi())
        cutoff = 1e-14 * max(1.0, float(values[-1]))
        ops = [np.sqrt(v) * vec.reshape(d_out, d_in) for v, vec in zip(values, vecs.T) if v > cutoff]
        return Channel(ops, validate=False)

    # Comparison and serialization

    def __eq__(self, other):
        if not isinstance(other, Channel):
            return NotImplemented
        return self.kraus.shape == other.kraus.shape and bool(np.array_equal(self.kraus, other.kraus))

    def __hash__(self):
        return hash((self.kraus.shape, self.kraus.tobytes()))

    def __repr__(self):
        return f"Channel(in={self.in_qubits}, out={self.out_qubits}, kraus={len(self.kraus)})"

    def to_json(self) -> dict:
        return {"in_qubits": self.in_qubits, "kraus": [matrix_to_json(k) for k in self.kraus]}

    @classmethod
    def from_json(cls, data, path: Sequence = (), tol: Optional[Tolerances] = None) -> "Channel":
        if not isinstance(data, dict) or "kraus" not in data:
            raise ParseError("channel must be an object with a 'kraus' list", path)
        kraus = data["kraus"]
        if not isinstance(kraus, list) or not kraus:
            raise ParseError("'kraus' must be a non-empty list", list(path) + ["kraus"])
        ops = [matrix_from_json(k, list(path) + ["kraus", i]) for i, k in enumerate(kraus)]
        try:
            channel = cls(ops, tol=tol)
        except (NotCPTPError, DimensionMismatchError) as e:
            logging.error(f"channel at /{'/'.join(str(p) for p in path)} with {len(ops)} Kraus operators: {e}")
            raise ParseError(f"invalid channel: {e}", path) from e
        declared = data.get("in_qubits", channel.in_qubits)
        if declared != channel.in_qubits:
            raise ParseError(
                f"in_qubits={declared} but Kraus operators act on {channel.in_qubits} qubits", path
            )
        return channel


def _bits(index: int, width: int) -> List[int]:
    return [(index >> (width - 1 - j)) & 1 for j in range(width)]


# Operations

def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """||a - b||_1, the sum of absolute eigenvalues of the difference (maximum 2)."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"cannot compare states of dimension {a.dim} and {b.dim}")
    diff = a.mat - b.mat
    values, _ = hermitian_eigh(0.5 * (diff + dagger(diff)))
    return float(np.sum(np.abs(values)))


def pairwise_trace_distances(left: Sequence[DensityMatrix], right: Sequence[DensityMatrix]) -> np.ndarray:
    """
    Matrix of ||l - r||_1 for single-qubit states, vectorized.

    The difference of two unit-trace 2x2 states is traceless, so its
    eigenvalues are +-sqrt(((a - d)/2)^2 + |b|^2).
    """
    if not left or not right:
        return np.zeros((len(left), len(right)))
    if any(s.dim != 2 for s in left) or any(s.dim != 2 for s in right):
        raise DimensionMismatchError("pairwise distances are computed for single-qubit states")
    a = np.stack([s.mat for s in left])[:, None]
    b = np.stack([s.mat for s in right])[None, :]
    diff = a - b
    half_gap = 0.5 * (diff[..., 0, 0].real - diff[..., 1, 1].real)
    off = 0.5 * (diff[..., 0, 1] + np.conj(diff[..., 1, 0]))
    return 2.0 * np.hypot(half_gap, np.abs(off))


def fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2; |<psi|phi>|^2 for pure states."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"cannot compare states of dimension {a.dim} and {b.dim}")
    root = sqrtm(a.mat)
    inner = sqrtm(root @ b.mat @ root)
    return float(np.real(np.trace(inner)) ** 2)


def apply_channel(channel: Channel, rho: DensityMatrix) -> DensityMatrix:
    return channel.apply(rho)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the kept qubits, listed in ascending qubit order."""
    keep = set(int(q) for q in keep)
    n = rho.num_qubits
    if not keep:
        raise DimensionMismatchError("partial trace needs at least one kept qubit")
    if any(q < 0 or q >= n for q in keep):
        raise DimensionMismatchError(f"kept qubits {sorted(keep)} out of range for {n} qubits")

    mat = rho.mat
    current = n
    for q in sorted(set(range(n)) - keep, reverse=True):
        before, after = 2 ** q, 2 ** (current - q - 1)
        mat = mat.reshape(before, 2, after, before, 2, after)
        mat = np.trace(mat, axis1=1, axis2=4).reshape(before * after, before * after)
        current -= 1
    return DensityMatrix(mat, validate=False)


def is_classical_state(rho: DensityMatrix, tol: Optional[Tolerances] = None) -> Optional[int]:
    """0 or 1 when rho is within eps_classical of |0><0| or |1><1|, else None."""
    tol = _tol(tol)
    for bit in (0, 1):
        if trace_distance(rho, _BASIS_STATES[bit]) <= tol.eps_classical:
            return bit
    return None


def orthogonal_pure_pair_basis(r1: DensityMatrix, r2: DensityMatrix,
                               tol: Optional[Tolerances] = None) -> np.ndarray:
    """
    Unitary U with U r1 U^dagger = |0><0| and U r2 U^dagger = |1><1|.

    The columns of U^dagger are the principal eigenvectors of r1 and r2; the
    second is taken as the exact complement of the first, phase-aligned with
    r2, so U is unitary to machine precision.
    """
    tol = _tol(tol)
    if r1.dim != 2 or r2.dim != 2:
        raise DimensionMismatchError("basis change is defined for single-qubit states")
    for name, state in (("first", r1), ("second", r2)):
        if state.purity < 1.0 - tol.eps_num:
            raise NotPureError(f"{name} state has purity {state.purity:.12g}")
    overlap = float(np.real(np.trace(r1.mat @ r2.mat)))
    if overlap > tol.eps_num:
        raise NotOrthogonalError(f"states overlap with weight {overlap:.6g}")

    v1 = r1.principal_vector()
    v2 = r2.principal_vector()
    complement = np.array([-np.conj(v1[1]), np.conj(v1[0])], dtype=complex)
    phase = np.vdot(complement, v2)
    if abs(phase) > 0:
        complement = complement * (phase / abs(phase))
    u_dagger = np.column_stack([v1, complement])
    logging.debug(f"basis change for overlap {overlap:.3g}")
    return dagger(u_dagger)


_BASIS_STATES = (DensityMatrix.basis(0), DensityMatrix.basis(1))
