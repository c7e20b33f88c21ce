import json

import numpy as np
import pytest

from conftest import ONE, PLUS, ZERO, cnot_formula
from dequantize import (
    DequantizeOutput,
    ErrorBudget,
    certify_gate,
    collapse_unary,
    dequantize_bounded,
    dequantize_exact,
    embed_and_check,
    partition_states,
    serialize_output,
)
from errors import (
    NonClassicalFormulaOutputError,
    NotReadOnceError,
    NotSeparableError,
    SeparationViolatedError,
    StructureViolationError,
)
from formula_ir import (
    CGate,
    CLeaf,
    GateCertificate,
    QGate,
    QLeaf,
    TruthTable,
    append_out,
    parse_cformula,
    size_and_depth,
)
from genrand import GenConfig, add_noise, gen_classical_rof, generate, haar_unitary, make_rng, obfuscate
from qlinalg import PAULI_X, Channel, DensityMatrix
from simulate import StateSet, truth_table
from toffoli import named_channel, toffoli_channel

XOR = TruthTable.parity(2)


def assert_valid(out: DequantizeOutput, f, tol):
    assert truth_table(out.cformula, tol).table == truth_table(f, tol).table
    assert (out.size, out.depth) == size_and_depth(f) == size_and_depth(out.cformula)
    for path, cert in out.certificates.items():
        assert certify_gate(cert, out.gate_at(path).table, tol)


def test_classical_formula_keeps_its_shape(xor_formula, tol):
    out = dequantize_exact(xor_formula, tol)
    assert out.cformula == CGate(XOR, (CLeaf(0), CLeaf(1)))
    assert (out.size, out.depth) == (1, 1)
    assert set(out.certificates) == {()}
    assert_valid(out, xor_formula, tol)


def test_obfuscated_xor(obfuscated_xor, tol):
    out = dequantize_exact(obfuscated_xor, tol)
    assert out.cformula == CGate(XOR, (CLeaf(0), CLeaf(1)))
    assert_valid(out, obfuscated_xor, tol)


def test_obfuscated_three_variable_parity(rng, tol):
    rof = CGate(XOR, (CGate(XOR, (CLeaf(0), CLeaf(1))), CLeaf(2)))
    f = obfuscate(rof, GenConfig(), rng)
    out = dequantize_exact(f, tol)
    assert truth_table(out.cformula).table.to_string() == "01101001"
    assert (out.size, out.depth) == (2, 2)
    assert_valid(out, f, tol)


def test_ignored_sub_formula_becomes_constant_shadow(rng, tol):
    rof = CGate(TruthTable.from_string("0101"), (CGate(XOR, (CLeaf(0), CLeaf(1))), CLeaf(2)))
    f = obfuscate(rof, GenConfig(), rng)
    out = dequantize_exact(f, tol)
    shadow = out.gate_at((0,))
    assert shadow.table == TruthTable.constant(2, 0)
    assert shadow.children == (CLeaf(0), CLeaf(1))
    assert (out.size, out.depth) == (2, 2)
    assert_valid(out, f, tol)


def test_read_many_formula_is_rejected(tol):
    f = QGate(toffoli_channel(2), (None, None), (QLeaf(0), QLeaf(0)))
    with pytest.raises(NotReadOnceError, match="NotReadOnce"):
        dequantize_exact(f, tol)
    with pytest.raises(NotReadOnceError):
        dequantize_bounded(f, ErrorBudget(0.1), tol)


def test_non_classical_output_is_rejected(xor_formula, tol):
    with pytest.raises(NonClassicalFormulaOutputError):
        dequantize_exact(append_out(xor_formula, Channel.depolarizing(0.5)), tol)


def test_negated_leaf_becomes_unary_gate(tol):
    f = QLeaf(0, Channel.unitary(PAULI_X))
    out = dequantize_exact(f, tol)
    assert out.cformula == CGate(TruthTable(1, (1, 0)), (CLeaf(0),))
    assert (out.size, out.depth) == (0, 0)
    assert_valid(out, f, tol)


def test_unary_gates_fold_into_wires(tol):
    inner = QGate(Channel.unitary(PAULI_X), (None,), (QLeaf(1),))
    f = QGate(toffoli_channel(2), (None, None), (QLeaf(0), inner))
    collapsed = collapse_unary(f)
    assert collapsed.children[1] == QLeaf(1, Channel.unitary(PAULI_X))
    assert truth_table(dequantize_exact(f, tol).cformula).table.to_string() == "1001"


def test_unary_gates_that_cancel_leave_a_bare_wire(tol):
    inner = QGate(Channel.unitary(PAULI_X), (None,), (QLeaf(1),))
    outer = QGate(Channel.unitary(PAULI_X), (None,), (inner,))
    assert collapse_unary(outer) == QLeaf(1)
    f = QGate(toffoli_channel(2), (None, None), (QLeaf(0), outer))
    assert dequantize_exact(f, tol).cformula == CGate(XOR, (CLeaf(0), CLeaf(1)))


def test_nearly_orthogonal_wire_is_a_structure_violation(tol, caplog):
    eps = np.arcsin(1e-4)
    tilted = DensityMatrix.from_vector([np.sin(eps), np.cos(eps)])
    f = QGate(toffoli_channel(2), (Channel.classical_preparation(ZERO, tilted), None), (QLeaf(0), QLeaf(1)))
    assert truth_table(f, tol).classical
    with pytest.raises(StructureViolationError) as info:
        dequantize_exact(f, tol)
    assert info.value.wire == 0
    assert "wire 0" in caplog.text


def test_arity_limit():
    f = QGate(toffoli_channel(3), (None,) * 3, (QLeaf(0), QLeaf(1), QLeaf(2)))
    with pytest.raises(StructureViolationError, match="arity"):
        dequantize_exact(f, max_arity=2)


def test_certify_gate_examples(obfuscated_xor, tol):
    out = dequantize_exact(obfuscated_xor, tol)
    assert certify_gate(out.certificates[()], XOR, tol)

    kraus = np.array(toffoli_channel(2).kraus)
    kraus[0, 1, 0] += 1e-2
    perturbed = GateCertificate((Channel.identity(), Channel.identity()), Channel(kraus, validate=False))
    assert not certify_gate(perturbed, XOR, tol)

    identity = GateCertificate((Channel.identity(),), Channel.identity())
    assert not certify_gate(identity, TruthTable(1, (1, 0)), tol)


def test_certify_gate_rejects_arity_mismatch(tol):
    cert = GateCertificate((Channel.identity(),), Channel.identity())
    assert not certify_gate(cert, XOR, tol)


def state_set(states, membership):
    witnesses = tuple((int(np.flatnonzero(np.array(membership) == k)[0]),) for k in range(len(states)))
    return StateSet((0, 1), tuple(states), witnesses, np.array(membership))


def test_partition_of_basis_states():
    zero, one = partition_states(state_set([ZERO, ONE], [0, 1, 1, 0]), ErrorBudget(0.1))
    assert len(zero) == 1 and zero.states[0].allclose(ZERO)
    assert len(one) == 1 and one.states[0].allclose(ONE)
    assert zero.membership.tolist() == [0, -1, -1, 0]


def test_partition_of_overlapping_states():
    with pytest.raises(NotSeparableError) as info:
        partition_states(state_set([ZERO, PLUS], [0, 1, 1, 1]), ErrorBudget(0.1))
    assert info.value.components == 1


def test_partition_groups_noisy_copies():
    rho0 = Channel.depolarizing(0.01).apply(ZERO)
    rho0_weaker = Channel.depolarizing(0.005).apply(ZERO)
    zero, one = partition_states(state_set([rho0, rho0_weaker, ONE], [0, 1, 2, 2]), ErrorBudget(0.1))
    assert len(zero) == 2 and len(one) == 1
    assert one.membership.tolist() == [-1, -1, 0, 0]


def test_error_budget_range():
    assert ErrorBudget(0.1).threshold == pytest.approx(1.9)
    with pytest.raises(ValueError):
        ErrorBudget(2.0)
    with pytest.raises(ValueError):
        ErrorBudget(-0.1)


def test_bounded_with_zero_delta_matches_exact(obfuscated_xor, tol):
    exact = dequantize_exact(obfuscated_xor, tol)
    bounded = dequantize_bounded(obfuscated_xor, ErrorBudget(0.0), tol)
    assert truth_table(bounded.cformula).table == truth_table(exact.cformula).table
    assert (bounded.size, bounded.depth) == (exact.size, exact.depth)


def test_bounded_on_lightly_noisy_xor(obfuscated_xor, tol):
    noisy = add_noise(obfuscated_xor, 0.005)
    assert not truth_table(noisy, tol).classical
    out = dequantize_bounded(noisy, ErrorBudget(0.1), tol)
    assert truth_table(out.cformula).table == XOR
    assert (out.size, out.depth) == (1, 1)
    for path, cert in out.certificates.items():
        assert cert.delta == 0.1
        assert certify_gate(cert, out.gate_at(path).table, tol)


def test_bounded_on_heavily_noisy_xor(obfuscated_xor, tol):
    with pytest.raises(SeparationViolatedError):
        dequantize_bounded(add_noise(obfuscated_xor, 0.3), ErrorBudget(0.1), tol)


def test_unseparable_wire_is_logged_and_reported(obfuscated_xor, tol, caplog, monkeypatch):
    import dequantize

    def three_clusters(states, budget, tol=None):
        raise NotSeparableError(3)

    monkeypatch.setattr(dequantize, "partition_states", three_clusters)
    with pytest.raises(SeparationViolatedError) as info:
        dequantize_bounded(add_noise(obfuscated_xor, 0.005), ErrorBudget(0.1), tol)
    assert info.value.wire == 0
    assert "node [] wire 0" in caplog.text


def test_fully_mixed_output_gives_a_constant_with_a_warning(tol, caplog):
    f = QLeaf(0, named_channel("mix"))
    out = dequantize_bounded(f, ErrorBudget(0.1), tol)
    assert out.cformula == CGate(TruthTable.constant(1, 1), (CLeaf(0),))
    assert any(r.levelname == "WARNING" and "constant" in r.getMessage() for r in caplog.records)


def test_output_serializes(obfuscated_xor, tol):
    out = dequantize_exact(obfuscated_xor, tol)
    doc = json.loads(serialize_output(out, meta={"source": "xor"}))
    assert doc["size"] == 1 and doc["depth"] == 1
    assert parse_cformula(doc["cformula"]) == out.cformula
    [cert] = doc["certificates"]
    assert cert["path"] == [] and cert["table"] == "0110"
    assert len(cert["pre"]) == 2 and cert["delta"] is None


def test_classical_formulas_embed(tol):
    for seed in range(5):
        assert embed_and_check(gen_classical_rof(GenConfig(seed=seed, max_vars=6)), tol)


def test_wire_unitaries_are_undone():
    rng = make_rng(3)
    for _ in range(10):
        f = cnot_formula(haar_unitary(rng), haar_unitary(rng))
        assert truth_table(dequantize_exact(f).cformula).table == XOR


@pytest.mark.slow
def test_obfuscated_corpus_dequantizes_exactly(tol):
    cfg = GenConfig(seed=2024, max_vars=10, max_depth=4, max_arity=3)
    for index in range(100):
        rng = cfg.rng(index)
        rof = gen_classical_rof(cfg, rng)
        f = obfuscate(rof, cfg, rng)
        out = dequantize_exact(f, tol)
        assert truth_table(out.cformula, tol).table == truth_table(rof, tol).table
        assert (out.size, out.depth) == size_and_depth(rof)
        for path, cert in out.certificates.items():
            assert certify_gate(cert, out.gate_at(path).table, tol)


@pytest.mark.slow
def test_noisy_corpus_dequantizes_to_noiseless_tables(tol):
    cfg = GenConfig(seed=7, max_vars=5, max_depth=3, max_arity=3, noise=0.005)
    for index in range(100):
        rof = gen_classical_rof(cfg, cfg.rng(index))
        noisy = generate("noisy", cfg, cfg.rng(index))
        out = dequantize_bounded(noisy, ErrorBudget(0.1), tol)
        assert truth_table(out.cformula, tol).table == truth_table(rof, tol).table
        assert (out.size, out.depth) == size_and_depth(rof)


@pytest.mark.slow
def test_heavily_noisy_corpus_violates_separation(tol):
    cfg = GenConfig(seed=7, max_vars=5, max_depth=3, max_arity=3, noise=0.3)
    for index in range(100):
        rof = gen_classical_rof(cfg, cfg.rng(index))
        if len(set(truth_table(rof, tol).table.bits)) == 1:
            continue
        with pytest.raises(SeparationViolatedError):
            dequantize_bounded(generate("noisy", cfg, cfg.rng(index)), ErrorBudget(0.1), tol)
