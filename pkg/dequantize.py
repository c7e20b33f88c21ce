"""
Dequantization of read-once quantum formulas.

Both engines walk the formula top-down. At every multi-qubit gate Phi
(with the single-qubit chain Psi that follows it) they look at the states
each input wire can carry over all assignments of its own, disjoint,
block of variables:

- a wire the output does not depend on is Independent; any one of its
  states can stand in for all of them;
- a Dependent wire carries exactly two pure orthogonal states (exact
  engine) or two far-apart clusters of states (bounded-error engine).

Feeding the two states (or cluster representatives) through Phi and Psi
gives a classical gate R together with a depth-one quantum realization of
it, the gate's certificate. The dependent sub-formulas, rotated so their
two states become |0> and |1>, are then dequantized recursively.

Independent sub-formulas keep their shape as constant-0 "shadow" gates so
the classical formula has exactly the size and depth of the quantum one.
"""

import json
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from errors import (
    InternalConsistencyError,
    NonClassicalFormulaOutputError,
    NotOrthogonalError,
    NotPureError,
    NotReadOnceError,
    NotSeparableError,
    SeparationViolatedError,
    StructureViolationError,
)
from formula_ir import (
    CGate,
    CLeaf,
    CNode,
    GateCertificate,
    QGate,
    QLeaf,
    QNode,
    TruthTable,
    append_out,
    bits_to_index,
    chain,
    cformula_to_json,
    embed_cformula,
    index_to_bits,
    repeated_variables,
    size_and_depth,
    variables,
)
from qlinalg import (
    Channel,
    DensityMatrix,
    Tolerances,
    dagger,
    is_classical_state,
    orthogonal_pure_pair_basis,
    pairwise_trace_distances,
    tensor_states,
)
from simulate import StateSet, reachable_states, separation, truth_table

DEFAULT_MAX_ARITY = 6

Path = Tuple[int, ...]


@dataclass(frozen=True)
class ErrorBudget:
    """Output states for f(x)=0 and f(x)=1 must be at least 2 - delta apart."""

    delta: float

    def __post_init__(self):
        if not 0.0 <= self.delta < 2.0:
            raise ValueError(f"delta must lie in [0, 2), got {self.delta}")

    @property
    def threshold(self) -> float:
        return 2.0 - self.delta


@dataclass(frozen=True, eq=False)
class WirePlan:
    """How one input wire of a gate is replaced."""

    wire: int
    dependent: bool
    basis_change: Optional[np.ndarray] = None
    states: Tuple[DensityMatrix, ...] = ()
    fixed_state: Optional[DensityMatrix] = None

    def input_state(self, bit: int) -> DensityMatrix:
        if not self.dependent:
            return self.fixed_state
        if self.basis_change is not None:
            return DensityMatrix.basis(bit).conjugate(dagger(self.basis_change))
        return self.states[bit]

    def realization(self) -> Channel:
        """The single-qubit channel mapping |b> to this wire's input state."""
        if not self.dependent:
            return Channel.preparation(self.fixed_state)
        if self.basis_change is not None:
            return Channel.unitary(dagger(self.basis_change))
        return Channel.classical_preparation(self.states[0], self.states[1])


@dataclass(frozen=True, eq=False)
class DequantizeOutput:
    cformula: CNode
    certificates: Dict[Path, GateCertificate]
    size: int
    depth: int

    def gate_at(self, path: Path) -> CGate:
        node = self.cformula
        for k in path:
            node = node.children[k]
        return node

    def to_json(self) -> dict:
        return {
            "cformula": cformula_to_json(self.cformula),
            "certificates": [
                {"path": list(path), "table": self.gate_at(path).table.to_string(), **cert.to_json()}
                for path, cert in sorted(self.certificates.items())
            ],
            "size": self.size,
            "depth": self.depth,
        }


def collapse_unary(f: QNode) -> QNode:
    """Fold 1-ary gates into the single-qubit chain of their wire."""
    if isinstance(f, QLeaf):
        return f
    children = tuple(collapse_unary(c) for c in f.children)
    if len(children) == 1:
        folded = append_out(children[0], chain(chain(f.pre[0], f.channel), f.out))
        if folded.out is not None and folded.out.allclose(Channel.identity()):
            folded = replace(folded, out=None)
        return folded
    return replace(f, children=children)


def _wires(node: QGate) -> List[QNode]:
    return [append_out(child, pre) for child, pre in zip(node.children, node.pre)]


def _depends(table: TruthTable, vars_: Sequence[int], block: Sequence[int]) -> bool:
    position = {v: i for i, v in enumerate(vars_)}
    return any(table.depends_on(position[v]) for v in block)


def _feed(node: QGate, inputs: Sequence[DensityMatrix]) -> DensityMatrix:
    state = node.channel.apply(tensor_states(inputs))
    return state if node.out is None else node.out.apply(state)


def _unary_certificate(node: QLeaf, delta: Optional[float]) -> GateCertificate:
    return GateCertificate((node.out or Channel.identity(),), Channel.identity(), None, delta)


class _Engine:
    """Shared recursion state: tolerances and the certificate map."""

    def __init__(self, tol: Tolerances, delta: Optional[float] = None):
        self.tol = tol
        self.delta = delta
        self.certificates: Dict[Path, GateCertificate] = {}

    def leaf(self, node: QLeaf, table: TruthTable, path: Path) -> CNode:
        """A variable through a single-qubit chain: identity, NOT or a constant."""
        if table.bits == (0, 1):
            return CLeaf(node.var)
        self.certificates[path] = _unary_certificate(node, self.delta)
        return CGate(table, (CLeaf(node.var),))

    def shadow(self, node: QNode, path: Path) -> CNode:
        """Same-shape constant-0 formula for a sub-formula the output ignores."""
        if isinstance(node, QLeaf):
            return CLeaf(node.var)
        kids = tuple(self.shadow(c, path + (k,)) for k, c in enumerate(node.children))
        self.certificates[path] = GateCertificate(
            tuple(Channel.identity() for _ in kids), node.channel,
            Channel.preparation(DensityMatrix.basis(0)), self.delta,
        )
        return CGate(TruthTable.constant(len(kids), 0), kids)

    def certify(self, node: QGate, plans: Sequence[WirePlan], path: Path) -> None:
        self.certificates[path] = GateCertificate(
            tuple(p.realization() for p in plans), node.channel, node.out, self.delta,
        )


class _ExactEngine(_Engine):

    def node(self, node: QNode, path: Path) -> CNode:
        result = truth_table(node, self.tol)
        if not result.classical:
            raise StructureViolationError("sub-formula output is not classical", path=path)
        if isinstance(node, QLeaf):
            return self.leaf(node, result.table, path)

        plans = []
        wires = _wires(node)
        for k, wire in enumerate(wires):
            states = reachable_states(wire, self.tol)
            if not _depends(result.table, result.vars, states.vars):
                plans.append(WirePlan(k, False, fixed_state=states.states[0]))
                continue
            if len(states) != 2:
                raise StructureViolationError(
                    f"dependent wire carries {len(states)} distinct states, expected 2",
                    wire=k, path=path,
                )
            try:
                basis = orthogonal_pure_pair_basis(states.states[0], states.states[1], self.tol)
            except (NotPureError, NotOrthogonalError) as e:
                logging.error(
                    f"node {list(path)} wire {k}: purities "
                    f"{[round(s.purity, 12) for s in states.states]}, {e}"
                )
                raise StructureViolationError(str(e), wire=k, path=path) from e
            logging.debug(f"node {list(path)} wire {k}: dependent")
            plans.append(WirePlan(k, True, basis_change=basis, states=states.states))

        bits = []
        for x in range(2 ** node.arity):
            pattern = index_to_bits(x, node.arity)
            output = _feed(node, [p.input_state(b) for p, b in zip(plans, pattern)])
            bit = is_classical_state(output, self.tol)
            if bit is None:
                raise StructureViolationError(
                    f"gate output is not classical on input pattern {pattern}", path=path
                )
            bits.append(bit)
        self.certify(node, plans, path)

        kids = []
        for plan, wire in zip(plans, wires):
            child_path = path + (plan.wire,)
            if plan.dependent:
                rotated = append_out(wire, Channel.unitary(plan.basis_change, self.tol))
                kids.append(self.node(rotated, child_path))
            else:
                kids.append(self.shadow(wire, child_path))
        return CGate(TruthTable(node.arity, bits), tuple(kids))


class _BoundedEngine(_Engine):

    def __init__(self, tol: Tolerances, budget: ErrorBudget):
        super().__init__(tol, budget.delta)
        self.budget = budget

    def node(self, node: QNode, target: TruthTable, vars_: Tuple[int, ...], path: Path) -> CNode:
        result = truth_table(node, self.tol, vars_=vars_)
        gap = separation(result.outputs, target.bits, self.tol)
        if gap < self.budget.threshold - self.tol.eps_dedup:
            raise SeparationViolatedError(
                f"output separation {gap:.6f} is below 2 - delta = {self.budget.threshold:.6f}",
                path=path,
            )
        if isinstance(node, QLeaf):
            return self.leaf(node, target, path)

        position = {v: i for i, v in enumerate(vars_)}
        plans, witnesses, targets = [], [], []
        wires = _wires(node)
        for k, wire in enumerate(wires):
            states = reachable_states(wire, self.tol)
            if not _depends(target, vars_, states.vars):
                plans.append(WirePlan(k, False, fixed_state=states.states[0]))
                witnesses.append((states.vars, (states.witnesses[0],)))
                targets.append(None)
                continue
            try:
                zero, one = partition_states(states, self.budget, self.tol)
            except NotSeparableError as e:
                logging.error(f"node {list(path)} wire {k}: {len(states)} reachable states, {e}")
                raise SeparationViolatedError(str(e), wire=k, path=path) from e
            logging.debug(f"node {list(path)} wire {k}: clusters of {len(zero)} and {len(one)}")
            plans.append(WirePlan(k, True, states=(zero.states[0], one.states[0])))
            witnesses.append((states.vars, (zero.witnesses[0], one.witnesses[0])))
            targets.append(TruthTable(len(states.vars), (one.membership >= 0).astype(int).tolist()))

        bits = []
        for x in range(2 ** node.arity):
            pattern = index_to_bits(x, node.arity)
            assignment = [0] * len(vars_)
            for plan, (block, wits), b in zip(plans, witnesses, pattern):
                for v, value in zip(block, wits[b if plan.dependent else 0]):
                    assignment[position[v]] = value
            bits.append(target.bits[bits_to_index(assignment)])
        self.certify(node, plans, path)

        kids = []
        for plan, wire, sub_target in zip(plans, wires, targets):
            child_path = path + (plan.wire,)
            if plan.dependent:
                kids.append(self.node(wire, sub_target, tuple(variables(wire)), child_path))
            else:
                kids.append(self.shadow(wire, child_path))
        return CGate(TruthTable(node.arity, bits), tuple(kids))


def _preconditions(f: QNode, max_arity: int) -> QNode:
    repeated = repeated_variables(f)
    if repeated:
        raise NotReadOnceError(repeated)
    f = collapse_unary(f)
    _check_arity(f, max_arity, ())
    return f


def _check_arity(f: QNode, max_arity: int, path: Path) -> None:
    if isinstance(f, QGate):
        if f.arity > max_arity:
            raise StructureViolationError(
                f"gate arity {f.arity} exceeds the configured maximum {max_arity}", path=path
            )
        for k, child in enumerate(f.children):
            _check_arity(child, max_arity, path + (k,))


def _finish(f: QNode, cformula: CNode, certificates: Dict[Path, GateCertificate],
            expected: TruthTable, vars_: Sequence[int], tol: Tolerances,
            mismatch_error) -> DequantizeOutput:
    size, depth = size_and_depth(f)
    if size_and_depth(cformula) != (size, depth):
        raise InternalConsistencyError(
            f"classical formula has size/depth {size_and_depth(cformula)}, expected {(size, depth)}"
        )
    got = truth_table(cformula, tol, vars_=vars_).table
    if got != expected:
        raise mismatch_error("classical formula disagrees with the quantum formula")
    out = DequantizeOutput(cformula, certificates, size, depth)
    for path, cert in certificates.items():
        if not certify_gate(cert, out.gate_at(path).table, tol):
            raise InternalConsistencyError(f"certificate at {list(path)} does not reproduce its gate")
    return out


def dequantize_exact(f: QNode, tol: Optional[Tolerances] = None,
                     max_arity: int = DEFAULT_MAX_ARITY) -> DequantizeOutput:
    """
    Turn an exact read-once quantum formula into a read-once classical formula
    of the same size and depth, with a certificate per emitted gate.
    """
    tol = tol or Tolerances()
    f = _preconditions(f, max_arity)
    result = truth_table(f, tol)
    if not result.classical:
        raise NonClassicalFormulaOutputError(
            "formula output is not a computational basis state on every input"
        )
    logging.info(f"dequantizing exact formula over {len(result.vars)} variables")
    engine = _ExactEngine(tol)
    cformula = engine.node(f, ())

    def mismatch(message):
        return InternalConsistencyError(message)

    out = _finish(f, cformula, engine.certificates, result.table, result.vars, tol, mismatch)
    logging.info(f"dequantized: size={out.size} depth={out.depth} certificates={len(out.certificates)}")
    return out


def dequantize_bounded(f: QNode, budget: ErrorBudget, tol: Optional[Tolerances] = None,
                       max_arity: int = DEFAULT_MAX_ARITY) -> DequantizeOutput:
    """
    Bounded-error variant: the target function is inferred by rounding the
    acceptance probability at 1/2 and must be separated by 2 - delta at the
    root and at every dependent wire.
    """
    tol = tol or Tolerances()
    f = _preconditions(f, max_arity)
    result = truth_table(f, tol)
    if len(set(result.table.bits)) == 1:
        logging.warning(
            f"every output rounds to {result.table.bits[0]}; the inferred function is constant "
            "and the separation check has nothing to compare"
        )
    logging.info(f"dequantizing bounded-error formula with delta={budget.delta}")
    engine = _BoundedEngine(tol, budget)
    cformula = engine.node(f, result.table, result.vars, ())

    def mismatch(message):
        return SeparationViolatedError(message)

    out = _finish(f, cformula, engine.certificates, result.table, result.vars, tol, mismatch)
    logging.info(f"dequantized: size={out.size} depth={out.depth} certificates={len(out.certificates)}")
    return out


def partition_states(states: StateSet, budget: ErrorBudget,
                     tol: Optional[Tolerances] = None) -> Tuple[StateSet, StateSet]:
    """
    Split a state set into the two connected components of the graph whose
    edges join states closer than 2 - delta. The component holding the
    first state (smallest witness) comes first.
    """
    tol = tol or Tolerances()
    if len(states) < 2:
        raise NotSeparableError(len(states))
    distances = pairwise_trace_distances(list(states.states), list(states.states))
    graph = csr_matrix(distances < budget.threshold - tol.eps_num)
    count, labels = connected_components(graph, directed=False)
    if count != 2:
        raise NotSeparableError(int(count))
    if labels[0] != 0:
        labels = 1 - labels

    parts = []
    for label in (0, 1):
        members = np.flatnonzero(labels == label)
        remap = np.full(len(states), -1, dtype=np.int64)
        remap[members] = np.arange(len(members))
        parts.append(StateSet(
            states.vars,
            tuple(states.states[i] for i in members),
            tuple(states.witnesses[i] for i in members),
            remap[states.membership],
        ))
    cross = pairwise_trace_distances(list(parts[0].states), list(parts[1].states))
    if np.min(cross) < budget.threshold - tol.eps_num:
        raise InternalConsistencyError("components are closer than the separation threshold")
    return parts[0], parts[1]


def certify_gate(cert: GateCertificate, table: TruthTable, tol: Optional[Tolerances] = None) -> bool:
    """
    Simulate the depth-one realization on every classical input. Exact
    certificates must output |table(x)>; bounded-error certificates must
    keep the outputs for 0 and 1 at least 2 - delta apart.
    """
    tol = tol or Tolerances()
    if cert.arity != table.arity or len(cert.pre) != table.arity:
        return False
    outputs = []
    for x in range(2 ** table.arity):
        pattern = index_to_bits(x, table.arity)
        inputs = [pre.apply(DensityMatrix.basis(b)) for pre, b in zip(cert.pre, pattern)]
        state = cert.channel.apply(tensor_states(inputs))
        if cert.out is not None:
            state = cert.out.apply(state)
        outputs.append(state)

    if cert.delta is None:
        return all(is_classical_state(s, tol) == bit for s, bit in zip(outputs, table.bits))
    return separation(outputs, table.bits, tol) >= 2.0 - cert.delta - tol.eps_dedup


def embed_and_check(cformula: CNode, tol: Optional[Tolerances] = None) -> bool:
    """The trivial direction: a classical formula embedded as a quantum one computes the same table."""
    tol = tol or Tolerances()
    quantum = truth_table(embed_cformula(cformula), tol)
    return quantum.classical and quantum.table == truth_table(cformula, tol, vars_=quantum.vars).table


def serialize_output(out: DequantizeOutput, meta: Optional[dict] = None) -> str:
    obj = out.to_json()
    if meta is not None:
        obj = {"meta": meta, **obj}
    return json.dumps(obj, ensure_ascii=False)
