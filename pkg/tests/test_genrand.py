import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formula_ir import (
    And,
    CGate,
    CLeaf,
    Not,
    Or,
    QGate,
    circuit_depth,
    dumps,
    embed_cformula,
    read_meta,
    size_and_depth,
    validate_read_once,
    variables,
)
from genrand import (
    KINDS,
    PRNG_NAME,
    GenConfig,
    add_noise,
    gen_classical_rof,
    gen_corpus,
    generate,
    haar_unitary,
    make_rng,
    obfuscate,
    random_dressing,
    structured_circuits,
)
from qlinalg import IDENTITY2, DensityMatrix, dagger, is_classical_state
from simulate import truth_table

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def test_same_config_gives_identical_output():
    cfg = GenConfig(seed=42, max_vars=6, max_depth=3)
    for kind in KINDS:
        first = dumps(generate(kind, cfg, cfg.rng(3)))
        second = dumps(generate(kind, cfg, cfg.rng(3)))
        assert first == second


def test_streams_are_independent():
    assert make_rng(1, 0).random() != make_rng(1, 1).random()
    assert make_rng(1, 5).random() == make_rng(1, 5).random()


def test_two_variable_depth_one_formula():
    f = gen_classical_rof(GenConfig(seed=1, max_vars=2, max_depth=1))
    assert isinstance(f, CGate)
    assert f.table.arity == 2
    assert sorted(c.var for c in f.children) == [0, 1]


@settings(deadline=None, max_examples=50)
@given(seed=st.integers(min_value=0, max_value=10 ** 6), arity=st.integers(min_value=2, max_value=4),
       depth=st.integers(min_value=1, max_value=3))
def test_classical_formulas_are_read_once_and_bounded(seed, arity, depth):
    cfg = GenConfig(seed=seed, max_vars=12, max_depth=depth, max_arity=arity)
    f = gen_classical_rof(cfg)
    assert validate_read_once(f)
    size, d = size_and_depth(f)
    assert d <= depth
    assert size <= sum(arity ** level for level in range(depth))
    assert variables(f) == list(range(min(12, arity ** depth)))


def test_obfuscation_preserves_function_and_shape():
    for seed in range(10):
        cfg = GenConfig(seed=seed, max_vars=7, max_depth=3, obfuscation_rounds=2)
        rof = gen_classical_rof(cfg)
        f = obfuscate(rof, cfg, make_rng(seed, 1))
        result = truth_table(f)
        assert result.classical
        assert result.table == truth_table(rof).table
        assert size_and_depth(f) == size_and_depth(rof)


def test_zero_rounds_is_the_plain_embedding():
    cfg = GenConfig(seed=4, obfuscation_rounds=0)
    rof = gen_classical_rof(cfg)
    assert obfuscate(rof, cfg) == embed_cformula(rof)


def test_obfuscation_hides_wire_states():
    cfg = GenConfig(seed=9, max_vars=4, max_depth=2)
    f = obfuscate(gen_classical_rof(cfg), cfg, make_rng(9, 1))
    state = f.pre[0].apply(DensityMatrix.basis(0))
    assert is_classical_state(state) is None


def test_zero_noise_is_identity(obfuscated_xor):
    assert add_noise(obfuscated_xor, 0.0) is obfuscated_xor
    noisy = add_noise(obfuscated_xor, 0.01)
    assert size_and_depth(noisy) == size_and_depth(obfuscated_xor)
    assert truth_table(noisy).table == truth_table(obfuscated_xor).table
    with pytest.raises(ValueError):
        add_noise(obfuscated_xor, 1.0)


@settings(deadline=None, max_examples=100)
@given(seed=seeds, dim=st.sampled_from([2, 4, 8]))
def test_haar_unitaries_are_unitary(seed, dim):
    u = haar_unitary(make_rng(seed), dim)
    assert np.allclose(dagger(u) @ u, np.eye(dim), atol=1e-12)


@settings(deadline=None, max_examples=100)
@given(seed=seeds)
def test_dressings_are_channels(seed):
    channel = random_dressing(make_rng(seed))
    completeness = sum(dagger(k) @ k for k in channel.kraus)
    assert np.allclose(completeness, IDENTITY2, atol=1e-9)


def test_structured_corpus_size():
    circuits = list(structured_circuits(max_depth=1, max_vars=2))
    # three shapes (leaf, AND, OR) x 2 var counts x 4 negation patterns.
    assert len(circuits) == 3 * 2 * 4
    assert len(list(structured_circuits(max_depth=2, max_vars=1))) == 19 * 4


def test_structured_corpus_has_unbalanced_and_negated_shapes():
    circuits = list(structured_circuits(max_depth=2, max_vars=3))
    unbalanced = [c for c in circuits if isinstance(c, (And, Or))
                  and circuit_depth(c.left) != circuit_depth(c.right)]
    assert unbalanced
    negated_gates = [c for c in circuits if isinstance(c, Not) and isinstance(c.child, (And, Or))
                     and isinstance(c.child.left, Not)]
    assert negated_gates
    assert {circuit_depth(c) for c in circuits} == {0, 1, 2}


def test_corpus_meta_headers():
    cfg = GenConfig(seed=5, max_vars=4, max_depth=2)
    corpus = gen_corpus("obf", cfg, 3)
    assert [meta["index"] for _, meta in corpus] == [0, 1, 2]
    for f, meta in corpus:
        assert isinstance(f, QGate)
        assert meta["prng"] == PRNG_NAME
        assert meta["config"]["seed"] == 5
        text = dumps(f, meta)
        assert read_meta(text) == json.loads(json.dumps(meta))


@pytest.mark.parametrize("bad", [
    {"max_vars": 21},
    {"max_arity": 7},
    {"noise": 1.0},
    {"seed": -1},
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        GenConfig(**bad)


def test_unknown_kind():
    with pytest.raises(ValueError):
        generate("dag", GenConfig())


def test_leaves_are_a_permutation():
    f = gen_classical_rof(GenConfig(seed=3, max_vars=9, max_depth=2, max_arity=3))
    leaves = []

    def walk(node):
        if isinstance(node, CLeaf):
            leaves.append(node.var)
        else:
            for child in node.children:
                walk(child)

    walk(f)
    assert sorted(leaves) == list(range(9))
