import json

import numpy as np
import pytest

from formula_ir import QGate, QLeaf
from genrand import haar_unitary, make_rng
from qlinalg import Channel, DensityMatrix, Tolerances, dagger, tensor
from toffoli import toffoli_channel

PLUS = DensityMatrix.from_vector([1.0, 1.0])
MINUS = DensityMatrix.from_vector([1.0, -1.0])
ZERO = DensityMatrix.basis(0)
ONE = DensityMatrix.basis(1)


def cnot_formula(u0=None, u1=None) -> QGate:
    """XOR of x0 and x1 through the CNOT-target channel, optionally with wire unitaries folded in."""
    u0 = np.eye(2) if u0 is None else u0
    u1 = np.eye(2) if u1 is None else u1
    channel = toffoli_channel(2).precompose_unitary(tensor(dagger(u0), dagger(u1)))
    return QGate(channel, (Channel.unitary(u0), Channel.unitary(u1)), (QLeaf(0), QLeaf(1)))


@pytest.fixture
def tol():
    return Tolerances()


@pytest.fixture
def rng():
    return make_rng(20240611)


@pytest.fixture
def xor_formula():
    return QGate(toffoli_channel(2), (None, None), (QLeaf(0), QLeaf(1)))


@pytest.fixture
def obfuscated_xor(rng):
    return cnot_formula(haar_unitary(rng), haar_unitary(rng))


@pytest.fixture
def write_json(tmp_path):
    def write(name, obj):
        path = tmp_path / name
        path.write_text(obj if isinstance(obj, str) else json.dumps(obj), encoding="utf-8")
        return str(path)
    return write
