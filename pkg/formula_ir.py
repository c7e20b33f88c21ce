"""
Intermediate representations and their JSON codecs.

Four IR kinds share this module:

- quantum formulas (QLeaf / QGate), trees of channels over input bits,
  with single-qubit channels attached to wires (`pre` per child wire,
  `out` after a node) rather than appearing as tree nodes;
- classical formulas (CLeaf / CGate) over truth-table gates;
- boolean circuits (Var / Not / And / Or), the one-qubit compiler's source;
- one-qubit programs, lists of SingleQubit and ControlledX items.

Because single-qubit gates live on wires, size and depth count exactly the
multi-qubit (multi-bit) gates with no filtering.
"""

import json
from dataclasses import dataclass, replace
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DimensionMismatchError, NotUnitaryError, ParseError
from qlinalg import Channel, Tolerances, is_unitary, matrix_from_json, matrix_to_json


@dataclass(frozen=True)
class TruthTable:
    """A boolean function on `arity` bits, indexed big-endian (x1 most significant)."""

    arity: int
    bits: Tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != 2 ** self.arity:
            raise DimensionMismatchError(
                f"a {self.arity}-ary truth table needs {2 ** self.arity} entries, got {len(bits)}"
            )
        if any(b not in (0, 1) for b in bits):
            raise ValueError("truth table entries must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_function(cls, arity: int, fn: Callable[..., int]) -> "TruthTable":
        return cls(arity, [int(fn(*index_to_bits(x, arity))) & 1 for x in range(2 ** arity)])

    @classmethod
    def from_string(cls, text: str) -> "TruthTable":
        text = text.strip()
        arity = len(text).bit_length() - 1
        if not text or 2 ** arity != len(text) or set(text) - {"0", "1"}:
            raise ValueError(f"'{text}' is not a truth table of length 2^m")
        return cls(arity, [int(c) for c in text])

    @classmethod
    def constant(cls, arity: int, bit: int) -> "TruthTable":
        return cls(arity, [bit] * 2 ** arity)

    @classmethod
    def parity(cls, arity: int) -> "TruthTable":
        return cls.from_function(arity, lambda *x: sum(x) % 2)

    def __call__(self, *inputs: int) -> int:
        if len(inputs) == 1 and isinstance(inputs[0], (list, tuple)):
            inputs = tuple(inputs[0])
        if len(inputs) != self.arity:
            raise DimensionMismatchError(f"expected {self.arity} inputs, got {len(inputs)}")
        return self.bits[bits_to_index(inputs)]

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def to_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    def depends_on(self, position: int) -> bool:
        grid = self.to_array().reshape((2,) * self.arity)
        return bool(np.any(np.take(grid, 0, axis=position) != np.take(grid, 1, axis=position)))

    def __repr__(self):
        return f"TruthTable({self.arity}, '{self.to_string()}')"


def index_to_bits(index: int, width: int) -> Tuple[int, ...]:
    return tuple((index >> (width - 1 - j)) & 1 for j in range(width))


def bits_to_index(bits: Sequence[int]) -> int:
    index = 0
    for b in bits:
        index = (index << 1) | int(b)
    return index


NOT_TABLE = TruthTable(1, (1, 0))
IDENTITY_TABLE = TruthTable(1, (0, 1))


# Quantum formulas

def _single_qubit(channel: Optional[Channel], what: str) -> None:
    if channel is not None and not channel.is_single_qubit:
        raise DimensionMismatchError(f"{what} must be a single-qubit channel, got {channel!r}")


@dataclass(frozen=True)
class QLeaf:
    """Input bit x_var prepared as |x_var>, optionally followed by a single-qubit channel."""

    var: int
    out: Optional[Channel] = None

    def __post_init__(self):
        if int(self.var) < 0:
            raise ValueError("variable indices are non-negative")
        _single_qubit(self.out, "leaf output channel")


@dataclass(frozen=True)
class QGate:
    """A channel from len(children) qubits to one qubit over child sub-formulas."""

    channel: Channel
    pre: Tuple[Optional[Channel], ...]
    children: Tuple["QNode", ...]
    out: Optional[Channel] = None

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        pre = tuple(self.pre) if self.pre else (None,) * len(self.children)
        object.__setattr__(self, "pre", pre)
        if not self.children:
            raise DimensionMismatchError("a gate needs at least one child")
        if self.channel.in_qubits != len(self.children):
            raise DimensionMismatchError(
                f"channel reads {self.channel.in_qubits} qubits but the gate has "
                f"{len(self.children)} children"
            )
        if self.channel.out_qubits != 1:
            raise DimensionMismatchError("formula gates output exactly one qubit")
        if len(pre) != len(self.children):
            raise DimensionMismatchError("one pre channel (or null) is needed per child wire")
        for k, p in enumerate(pre):
            _single_qubit(p, f"pre channel on wire {k}")
        _single_qubit(self.out, "gate output channel")

    @property
    def arity(self) -> int:
        return len(self.children)


QNode = Union[QLeaf, QGate]


def chain(first: Optional[Channel], then: Optional[Channel]) -> Optional[Channel]:
    """Compose two optional single-qubit channels, `first` applied first."""
    if first is None:
        return then
    if then is None:
        return first
    return then.compose(first)


def append_out(node: QNode, channel: Optional[Channel]) -> QNode:
    """The same node with `channel` applied after its current output."""
    return replace(node, out=chain(node.out, channel))


# Classical formulas

@dataclass(frozen=True)
class CLeaf:
    var: int

    def __post_init__(self):
        if int(self.var) < 0:
            raise ValueError("variable indices are non-negative")


@dataclass(frozen=True)
class CGate:
    table: TruthTable
    children: Tuple["CNode", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise DimensionMismatchError("a gate needs at least one child")
        if self.table.arity != len(self.children):
            raise DimensionMismatchError(
                f"gate arity {self.table.arity} does not match {len(self.children)} children"
            )


CNode = Union[CLeaf, CGate]


# Boolean circuits

@dataclass(frozen=True)
class Var:
    var: int


@dataclass(frozen=True)
class Not:
    child: "Circuit"


@dataclass(frozen=True)
class And:
    left: "Circuit"
    right: "Circuit"


@dataclass(frozen=True)
class Or:
    left: "Circuit"
    right: "Circuit"


Circuit = Union[Var, Not, And, Or]


# One-qubit programs

class SingleQubit:
    """A single-qubit unitary item."""

    __slots__ = ("u",)

    def __init__(self, u, tol: Optional[Tolerances] = None):
        u = np.array(u, dtype=complex)
        if u.shape != (2, 2) or not is_unitary(u, tol):
            raise NotUnitaryError("program items must be 2x2 unitaries")
        u.setflags(write=False)
        self.u = u

    def __eq__(self, other):
        return isinstance(other, SingleQubit) and bool(np.array_equal(self.u, other.u))

    def __hash__(self):
        return hash(self.u.tobytes())

    def __repr__(self):
        return f"SingleQubit({np.round(self.u, 4).tolist()})"


@dataclass(frozen=True)
class ControlledX:
    """Apply X to the qubit iff x_var = 1."""

    var: int


ProgramItem = Union[SingleQubit, ControlledX]


@dataclass(frozen=True)
class OneQubitProgram:
    items: Tuple[ProgramItem, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    @property
    def length(self) -> int:
        return sum(1 for item in self.items if isinstance(item, ControlledX))


@dataclass(frozen=True, eq=False)
class GateCertificate:
    """
    A depth-one quantum realization of a classical gate: single-qubit
    channels on each input wire, the multi-qubit channel, and an optional
    single-qubit channel on the output. `delta` is set for realizations
    that compute the gate with bounded error.
    """

    pre: Tuple[Channel, ...]
    channel: Channel
    out: Optional[Channel] = None
    delta: Optional[float] = None

    @property
    def arity(self) -> int:
        return self.channel.in_qubits

    def to_json(self) -> dict:
        return {
            "pre": [p.to_json() for p in self.pre],
            "channel": self.channel.to_json(),
            "out": None if self.out is None else self.out.to_json(),
            "delta": self.delta,
        }


IRObject = Union[QLeaf, QGate, CLeaf, CGate, Var, Not, And, Or, OneQubitProgram]


# Structural queries

def leaf_variables(f: IRObject) -> List[int]:
    """Leaf variables in left-to-right order, with repetitions."""
    if isinstance(f, OneQubitProgram):
        return [item.var for item in f.items if isinstance(item, ControlledX)]
    return list(_walk_leaves(f))


def _walk_leaves(f) -> Iterator[int]:
    if isinstance(f, (QLeaf, CLeaf, Var)):
        yield int(f.var)
    elif isinstance(f, (QGate, CGate)):
        for child in f.children:
            yield from _walk_leaves(child)
    elif isinstance(f, Not):
        yield from _walk_leaves(f.child)
    elif isinstance(f, (And, Or)):
        yield from _walk_leaves(f.left)
        yield from _walk_leaves(f.right)
    else:
        raise TypeError(f"not an IR node: {f!r}")


def variables(f: IRObject) -> List[int]:
    return sorted(set(leaf_variables(f)))


def repeated_variables(f: IRObject) -> List[int]:
    seen, repeated = set(), set()
    for v in leaf_variables(f):
        (repeated if v in seen else seen).add(v)
    return sorted(repeated)


def validate_read_once(f: Union[QNode, CNode]) -> bool:
    return not repeated_variables(f)


def size_and_depth(f: Union[QNode, CNode]) -> Tuple[int, int]:
    """Count multi-qubit (multi-bit) gates and the longest path through them."""
    if isinstance(f, (QLeaf, CLeaf)):
        return 0, 0
    if not isinstance(f, (QGate, CGate)):
        raise TypeError(f"size and depth are defined for formulas, got {f!r}")
    size, depth = 0, 0
    for child in f.children:
        s, d = size_and_depth(child)
        size += s
        depth = max(depth, d)
    if len(f.children) >= 2:
        size += 1
        depth += 1
    return size, depth


def circuit_depth(c: Circuit) -> int:
    if isinstance(c, Var):
        return 0
    if isinstance(c, Not):
        return circuit_depth(c.child)
    if isinstance(c, (And, Or)):
        return 1 + max(circuit_depth(c.left), circuit_depth(c.right))
    raise TypeError(f"not a circuit node: {c!r}")


def embed_cformula(f: CNode) -> QNode:
    """A classical formula as a quantum formula whose gates are classical channels."""
    if isinstance(f, CLeaf):
        return QLeaf(f.var)
    return QGate(
        Channel.classical_gate(f.table.bits, f.table.arity),
        (None,) * len(f.children),
        tuple(embed_cformula(c) for c in f.children),
    )


# JSON encoding

def _channel_or_null(channel: Optional[Channel]):
    return None if channel is None else channel.to_json()


def qformula_to_json(f: QNode) -> dict:
    if isinstance(f, QLeaf):
        node = {"leaf": int(f.var)}
    else:
        node = {"gate": {
            "channel": f.channel.to_json(),
            "pre": [_channel_or_null(p) for p in f.pre],
            "children": [qformula_to_json(c) for c in f.children],
        }}
    if f.out is not None:
        node["out"] = f.out.to_json()
    return node


def cformula_to_json(f: CNode) -> dict:
    if isinstance(f, CLeaf):
        return {"leaf": int(f.var)}
    return {
        "gate": {"arity": f.table.arity, "bits": f.table.to_string()},
        "children": [cformula_to_json(c) for c in f.children],
    }


def circuit_to_json(c: Circuit) -> dict:
    if isinstance(c, Var):
        return {"var": int(c.var)}
    if isinstance(c, Not):
        return {"not": circuit_to_json(c.child)}
    key = "and" if isinstance(c, And) else "or"
    return {key: [circuit_to_json(c.left), circuit_to_json(c.right)]}


def program_to_json(p: OneQubitProgram) -> dict:
    items = []
    for item in p.items:
        if isinstance(item, ControlledX):
            items.append({"cx": int(item.var)})
        else:
            items.append({"u": matrix_to_json(item.u)})
    return {"items": items}


def to_json(f: IRObject) -> dict:
    if isinstance(f, (QLeaf, QGate)):
        return qformula_to_json(f)
    if isinstance(f, (CLeaf, CGate)):
        return cformula_to_json(f)
    if isinstance(f, (Var, Not, And, Or)):
        return circuit_to_json(f)
    if isinstance(f, OneQubitProgram):
        return program_to_json(f)
    raise TypeError(f"not an IR object: {f!r}")


def dumps(f: IRObject, meta: Optional[dict] = None) -> str:
    """Serialize any IR object; floats use the shortest round-trip repr, so entries are bit-exact."""
    obj = to_json(f)
    if meta is not None:
        obj = {"meta": meta, **obj}
    return json.dumps(obj, ensure_ascii=False)


def serialize_qformula(f: QNode, meta: Optional[dict] = None) -> str:
    return dumps(f, meta)


def serialize_cformula(f: CNode, meta: Optional[dict] = None) -> str:
    return dumps(f, meta)


def serialize_program(p: OneQubitProgram, meta: Optional[dict] = None) -> str:
    return dumps(p, meta)


# JSON decoding

def _load(text_or_obj):
    if isinstance(text_or_obj, (str, bytes)):
        try:
            return json.loads(text_or_obj)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg} (line {e.lineno})") from e
    return text_or_obj


def _var(value, path) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ParseError("variable index must be a non-negative integer", path)
    return value


def _node_keys(obj, allowed, path) -> None:
    if not isinstance(obj, dict):
        raise ParseError("node must be a JSON object", path)
    extra = set(obj) - set(allowed) - {"meta"}
    if extra:
        raise ParseError(f"unexpected keys {sorted(extra)}", path)


def _qnode(obj, path, tol) -> QNode:
    _node_keys(obj, ("leaf", "gate", "out"), path)
    out = None
    if obj.get("out") is not None:
        out = Channel.from_json(obj["out"], path + ["out"], tol)
        if not out.is_single_qubit:
            raise ParseError("output channel must be single-qubit", path + ["out"])
    if "leaf" in obj:
        if "gate" in obj:
            raise ParseError("node cannot be both a leaf and a gate", path)
        return QLeaf(_var(obj["leaf"], path + ["leaf"]), out)
    if "gate" not in obj:
        raise ParseError("node needs a 'leaf' or 'gate' key", path)

    gate = obj["gate"]
    gpath = path + ["gate"]
    if not isinstance(gate, dict) or "channel" not in gate or "children" not in gate:
        raise ParseError("gate needs 'channel' and 'children'", gpath)
    channel = Channel.from_json(gate["channel"], gpath + ["channel"], tol)
    children = gate["children"]
    if not isinstance(children, list) or not children:
        raise ParseError("'children' must be a non-empty list", gpath + ["children"])
    kids = tuple(_qnode(c, gpath + ["children", i], tol) for i, c in enumerate(children))

    pre_raw = gate.get("pre") or [None] * len(kids)
    if not isinstance(pre_raw, list) or len(pre_raw) != len(kids):
        raise ParseError("'pre' needs one entry per child", gpath + ["pre"])
    pre = []
    for i, p in enumerate(pre_raw):
        ch = None if p is None else Channel.from_json(p, gpath + ["pre", i], tol)
        if ch is not None and not ch.is_single_qubit:
            raise ParseError("pre channels must be single-qubit", gpath + ["pre", i])
        pre.append(ch)

    if channel.in_qubits != len(kids):
        raise ParseError(
            f"arity mismatch: channel reads {channel.in_qubits} qubits, {len(kids)} children", gpath
        )
    if channel.out_qubits != 1:
        raise ParseError("gate channels must output one qubit", gpath + ["channel"])
    return QGate(channel, tuple(pre), kids, out)


def _cnode(obj, path) -> CNode:
    _node_keys(obj, ("leaf", "gate", "children"), path)
    if "leaf" in obj:
        return CLeaf(_var(obj["leaf"], path + ["leaf"]))
    gate = obj.get("gate")
    if not isinstance(gate, dict) or "bits" not in gate:
        raise ParseError("classical gate needs 'arity' and 'bits'", path + ["gate"])
    try:
        table = TruthTable.from_string(str(gate["bits"]))
    except ValueError as e:
        raise ParseError(str(e), path + ["gate", "bits"]) from e
    if gate.get("arity", table.arity) != table.arity:
        raise ParseError(f"arity {gate['arity']} does not match {len(table.bits)} bits", path + ["gate"])
    children = obj.get("children")
    if not isinstance(children, list) or len(children) != table.arity:
        raise ParseError(f"arity mismatch: gate needs {table.arity} children", path + ["children"])
    return CGate(table, tuple(_cnode(c, path + ["children", i]) for i, c in enumerate(children)))


def _circuit(obj, path) -> Circuit:
    _node_keys(obj, ("var", "not", "and", "or"), path)
    keys = [k for k in ("var", "not", "and", "or") if k in obj]
    if len(keys) != 1:
        raise ParseError("circuit node needs exactly one of var/not/and/or", path)
    key = keys[0]
    if key == "var":
        return Var(_var(obj["var"], path + ["var"]))
    if key == "not":
        return Not(_circuit(obj["not"], path + ["not"]))
    pair = obj[key]
    if not isinstance(pair, list) or len(pair) != 2:
        raise ParseError(f"'{key}' takes exactly two operands", path + [key])
    left = _circuit(pair[0], path + [key, 0])
    right = _circuit(pair[1], path + [key, 1])
    return And(left, right) if key == "and" else Or(left, right)


def _program(obj, path, tol) -> OneQubitProgram:
    _node_keys(obj, ("items",), path)
    raw = obj.get("items")
    if not isinstance(raw, list):
        raise ParseError("'items' must be a list", path + ["items"])
    items = []
    for i, item in enumerate(raw):
        ipath = path + ["items", i]
        if isinstance(item, dict) and set(item) == {"cx"}:
            items.append(ControlledX(_var(item["cx"], ipath + ["cx"])))
        elif isinstance(item, dict) and set(item) == {"u"}:
            try:
                items.append(SingleQubit(matrix_from_json(item["u"], ipath + ["u"]), tol))
            except NotUnitaryError as e:
                raise ParseError(str(e), ipath) from e
        else:
            raise ParseError("item must be {'u': matrix} or {'cx': var}", ipath)
    return OneQubitProgram(tuple(items))


def parse_qformula(text, tol: Optional[Tolerances] = None) -> QNode:
    return _qnode(_load(text), [], tol)


def parse_cformula(text) -> CNode:
    return _cnode(_load(text), [])


def parse_circuit(text) -> Circuit:
    return _circuit(_load(text), [])


def parse_program(text, tol: Optional[Tolerances] = None) -> OneQubitProgram:
    return _program(_load(text), [], tol)


def load_document(text, tol: Optional[Tolerances] = None) -> IRObject:
    """Parse a JSON document holding any of the four IR kinds."""
    obj = _load(text)
    if not isinstance(obj, dict):
        raise ParseError("document must be a JSON object")
    if "items" in obj:
        return parse_program(obj, tol)
    if any(k in obj for k in ("var", "not", "and", "or")):
        return parse_circuit(obj)
    gate = obj.get("gate")
    if "leaf" in obj:
        # A bare leaf is read as a quantum formula unless it carries nothing quantum.
        return parse_qformula(obj, tol) if "out" in obj else parse_cformula(obj)
    if isinstance(gate, dict) and "channel" in gate:
        return parse_qformula(obj, tol)
    if isinstance(gate, dict) and "bits" in gate:
        return parse_cformula(obj)
    raise ParseError("unrecognized document kind")


def read_meta(text) -> Optional[dict]:
    obj = _load(text)
    return obj.get("meta") if isinstance(obj, dict) else None


def describe(f: IRObject) -> str:
    """Short human-readable kind name for reports."""
    if isinstance(f, (QLeaf, QGate)):
        return "quantum formula"
    if isinstance(f, (CLeaf, CGate)):
        return "classical formula"
    if isinstance(f, OneQubitProgram):
        return "one-qubit program"
    return "boolean circuit"
