"""
Seeded generators for formula, circuit and channel corpora.

Every generator draws from a numpy Generator built on PCG64 and seeded
from (seed, stream), so a corpus is reproduced from its GenConfig alone and
items can be generated independently of each other.
"""

import logging
from dataclasses import asdict, dataclass, replace
from itertools import count
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import qr
from tqdm import tqdm

from formula_ir import (
    And,
    CGate,
    CLeaf,
    CNode,
    Circuit,
    IRObject,
    Not,
    Or,
    QLeaf,
    QNode,
    TruthTable,
    Var,
    chain,
    embed_cformula,
)
from qlinalg import IDENTITY2, PAULI_X, Channel, DensityMatrix, dagger, tensor
from toffoli import enumerate_f_tof

PRNG_NAME = "numpy.PCG64"
KINDS = ("rof", "obf", "noisy", "circuit", "affine")


@dataclass(frozen=True)
class GenConfig:
    """
    Args:
        seed: corpus seed
        max_vars: number of variables drawn from (at most 20)
        max_depth: maximum gate depth
        max_arity: maximum gate fan-in, 2 to 6
        noise: depolarizing strength per wire for noisy corpora, in [0, 1)
        obfuscation_rounds: how many random unitaries are stacked on each wire
    """

    seed: int = 0
    max_vars: int = 6
    max_depth: int = 3
    max_arity: int = 3
    noise: float = 0.0
    obfuscation_rounds: int = 1

    def __post_init__(self):
        if not 1 <= self.max_vars <= 20:
            raise ValueError(f"max_vars must lie in [1, 20], got {self.max_vars}")
        if not 2 <= self.max_arity <= 6:
            raise ValueError(f"max_arity must lie in [2, 6], got {self.max_arity}")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError(f"noise must lie in [0, 1), got {self.noise}")
        if self.obfuscation_rounds < 0:
            raise ValueError("obfuscation_rounds must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return make_rng(self.seed, stream)

    def to_json(self) -> dict:
        return asdict(self)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64([int(seed), int(stream)]))


def meta_header(cfg: GenConfig, kind: str, index: int = 0) -> dict:
    return {"seed": cfg.seed, "index": index, "kind": kind, "prng": PRNG_NAME, "config": cfg.to_json()}


# Random linear algebra

def haar_unitary(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    """QR of a complex Gaussian matrix with the diagonal of R normalized to positive reals."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_state(rng: np.random.Generator, pure: bool = False, num_qubits: int = 1) -> DensityMatrix:
    dim = 2 ** num_qubits
    if pure:
        return DensityMatrix.from_vector(haar_unitary(rng, dim)[:, 0])
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    mat = g @ dagger(g)
    return DensityMatrix(mat / np.trace(mat).real)


def random_channel(rng: np.random.Generator, in_qubits: int = 1, kraus_count: int = 2) -> Channel:
    """Kraus operators sliced from the first columns of a Haar unitary (a random isometry)."""
    d_in = 2 ** in_qubits
    big = max(2 * kraus_count, d_in)
    isometry = haar_unitary(rng, big)[:, :d_in]
    blocks = isometry[: 2 * kraus_count].reshape(kraus_count, 2, d_in)
    if big > 2 * kraus_count:
        # Fold the leftover rows into one more operator so completeness holds.
        rest = isometry[2 * kraus_count:]
        blocks = np.concatenate([blocks, rest.reshape(-1, 2, d_in)])
    return Channel(list(blocks))


_NAMED_PREPARATIONS = (
    np.array([1.0, 0.0]),
    np.array([0.0, 1.0]),
    np.array([1.0, 1.0]) / np.sqrt(2),
    np.array([1.0, -1.0]) / np.sqrt(2),
)


def random_dressing(rng: np.random.Generator, q: Optional[float] = None) -> Channel:
    """
    Mixture q * (unitary conjugation) + (1 - q) * (state preparation) with
    q drawn from {0, 0.5, 1}. Unitaries are I, X or Haar; prepared states
    are basis or X eigenstates half of the time, random otherwise.
    """
    if q is None:
        q = float(rng.choice([0.0, 0.5, 1.0]))
    pick = int(rng.integers(3))
    u = (IDENTITY2, PAULI_X, None)[pick]
    if u is None:
        u = haar_unitary(rng)
    if rng.random() < 0.5:
        state = DensityMatrix.from_vector(_NAMED_PREPARATIONS[int(rng.integers(4))])
    else:
        state = random_state(rng, pure=bool(rng.random() < 0.5))

    ops = []
    if q > 0:
        ops.append(np.sqrt(q) * u)
    if q < 1:
        ops.extend(np.sqrt(1.0 - q) * k for k in Channel.preparation(state).kraus)
    return Channel(ops)


# Classical read-once formulas

def _compose_sizes(rng: np.random.Generator, total: int, parts: int, cap: int) -> List[int]:
    sizes = [1] * parts
    for _ in range(total - parts):
        open_parts = [i for i, s in enumerate(sizes) if s < cap]
        sizes[int(rng.choice(open_parts))] += 1
    return sizes


def _random_table(rng: np.random.Generator, arity: int) -> TruthTable:
    kind = int(rng.integers(3))
    if kind == 0:
        return TruthTable.parity(arity)
    if kind == 1:
        members = sorted(enumerate_f_tof(arity), key=lambda t: t.bits)
        return members[int(rng.integers(len(members)))]
    return TruthTable(arity, rng.integers(0, 2, size=2 ** arity).tolist())


def _grow(rng: np.random.Generator, leaves: Sequence[int], depth: int, cfg: GenConfig) -> CNode:
    if len(leaves) == 1:
        return CLeaf(int(leaves[0]))
    cap = cfg.max_arity ** (depth - 1)
    smallest = max(2, -(-len(leaves) // cap))
    arity = int(rng.integers(smallest, min(cfg.max_arity, len(leaves)) + 1))
    sizes = _compose_sizes(rng, len(leaves), arity, cap)
    children, start = [], 0
    for size in sizes:
        children.append(_grow(rng, leaves[start:start + size], depth - 1, cfg))
        start += size
    return CGate(_random_table(rng, arity), tuple(children))


def gen_classical_rof(cfg: GenConfig, rng: Optional[np.random.Generator] = None) -> CNode:
    """A random read-once classical formula over min(max_vars, max_arity^max_depth) variables."""
    rng = rng or cfg.rng()
    n = min(cfg.max_vars, cfg.max_arity ** cfg.max_depth)
    leaves = rng.permutation(n)
    return _grow(rng, [int(v) for v in leaves], cfg.max_depth, cfg)


# Quantum formulas

def obfuscate(f: CNode, cfg: GenConfig, rng: Optional[np.random.Generator] = None) -> QNode:
    """
    Lift f to classical channels, then hide every wire: a Haar unitary U is
    applied on the wire and U^dagger is folded into the Kraus operators of
    the gate that reads it.
    """
    rng = rng or cfg.rng()
    q = embed_cformula(f)
    for _ in range(cfg.obfuscation_rounds):
        q = _obfuscate_once(q, rng)
    return q


def _obfuscate_once(node: QNode, rng: np.random.Generator) -> QNode:
    if isinstance(node, QLeaf):
        return node
    children = tuple(_obfuscate_once(c, rng) for c in node.children)
    unitaries = [haar_unitary(rng) for _ in children]
    pre = tuple(chain(p, Channel.unitary(u)) for p, u in zip(node.pre, unitaries))
    channel = node.channel.precompose_unitary(tensor(*[dagger(u) for u in unitaries]))
    return replace(node, channel=channel, pre=pre, children=children)


def add_noise(f: QNode, noise: float) -> QNode:
    """Depolarize every wire entering a gate with strength `noise`."""
    if not 0.0 <= noise < 1.0:
        raise ValueError(f"noise must lie in [0, 1), got {noise}")
    if noise == 0.0 or isinstance(f, QLeaf):
        return f
    depolarize = Channel.depolarizing(noise)
    children = tuple(add_noise(c, noise) for c in f.children)
    pre = tuple(chain(p, depolarize) for p in f.pre)
    return replace(f, pre=pre, children=children)


# Circuits

def gen_circuit(cfg: GenConfig, rng: Optional[np.random.Generator] = None) -> Circuit:
    rng = rng or cfg.rng()

    def grow(depth: int) -> Circuit:
        if depth == 0 or rng.random() < 0.2:
            node: Circuit = Var(int(rng.integers(cfg.max_vars)))
        else:
            left, right = grow(depth - 1), grow(depth - 1)
            node = And(left, right) if rng.random() < 0.5 else Or(left, right)
        return Not(node) if rng.random() < 0.3 else node

    return grow(cfg.max_depth)


NEGATIONS = ("none", "leaves", "gates", "root")

Shape = Optional[Tuple[str, "Shape", "Shape"]]


def structured_circuits(max_depth: int = 3, max_vars: int = 4) -> Iterator[Circuit]:
    """
    Every AND/OR tree shape of depth at most max_depth, balanced or not,
    under each negation pattern: none, odd leaves, every gate, the root.
    Leaf i reads x_(i mod n) for n = 1..max_vars.
    """
    for shape in _shapes(max_depth):
        for n in range(1, max_vars + 1):
            for negate in NEGATIONS:
                c = _label(shape, count(), n, negate)
                yield Not(c) if negate == "root" else c


def _shapes(depth: int) -> List[Shape]:
    if depth == 0:
        return [None]
    smaller = _shapes(depth - 1)
    return [None] + [(op, a, b) for op in ("and", "or") for a in smaller for b in smaller]


def _label(shape: Shape, leaves: Iterator[int], n: int, negate: str) -> Circuit:
    if shape is None:
        i = next(leaves)
        leaf = Var(i % n)
        return Not(leaf) if negate == "leaves" and i % 2 else leaf
    op, left, right = shape
    a, b = _label(left, leaves, n, negate), _label(right, leaves, n, negate)
    node = And(a, b) if op == "and" else Or(a, b)
    return Not(node) if negate == "gates" else node


def gen_affine_formula(cfg: GenConfig, rng: Optional[np.random.Generator] = None) -> CNode:
    """A read-many classical formula over XOR, NOT and constant gates."""
    rng = rng or cfg.rng()
    xor = TruthTable.parity(2)
    unary = (TruthTable(1, (1, 0)), TruthTable.constant(1, 0), TruthTable.constant(1, 1))

    def grow(depth: int) -> CNode:
        if depth == 0 or rng.random() < 0.2:
            node: CNode = CLeaf(int(rng.integers(cfg.max_vars)))
        else:
            node = CGate(xor, (grow(depth - 1), grow(depth - 1)))
        roll = rng.random()
        if roll < 0.25:
            return CGate(unary[0], (node,))
        if roll < 0.3:
            return CGate(unary[1 + int(rng.integers(2))], (node,))
        return node

    return grow(cfg.max_depth)


# Corpora

def generate(kind: str, cfg: GenConfig, rng: Optional[np.random.Generator] = None) -> IRObject:
    rng = rng or cfg.rng()
    if kind == "rof":
        return gen_classical_rof(cfg, rng)
    if kind == "obf":
        return obfuscate(gen_classical_rof(cfg, rng), cfg, rng)
    if kind == "noisy":
        return add_noise(obfuscate(gen_classical_rof(cfg, rng), cfg, rng), cfg.noise)
    if kind == "circuit":
        return gen_circuit(cfg, rng)
    if kind == "affine":
        return gen_affine_formula(cfg, rng)
    raise ValueError(f"unknown corpus kind '{kind}', expected one of {KINDS}")


def gen_corpus(kind: str, cfg: GenConfig, count: int, progress: bool = False) -> List[Tuple[IRObject, dict]]:
    """`count` items, item i drawn from stream i, each with its meta header."""
    logging.info(f"generating {count} '{kind}' items from seed {cfg.seed}")
    items = []
    for index in tqdm(range(count), desc=f"Generating {kind}", disable=not progress):
        items.append((generate(kind, cfg, cfg.rng(index)), meta_header(cfg, kind, index)))
    return items
