import numpy as np
import pytest

from conftest import ONE, ZERO
from errors import NotReadOnceError, NotUnitaryError, UnassignedVariableError
from formula_ir import And, CGate, CLeaf, ControlledX, Not, OneQubitProgram, Or, TruthTable, Var, circuit_depth
from dequantize import dequantize_exact
from genrand import GenConfig, gen_affine_formula, gen_circuit, structured_circuits
from oqp import (
    CONSTANTS,
    affine_check,
    anf,
    anf_degree,
    compile,
    de_morgan,
    net_unitaries,
    net_unitary,
    to_qformula,
    up_to_phase_equal,
    verify_compilation,
)
from qlinalg import HADAMARD, IDENTITY2, PAULI_X, PAULI_Y
from simulate import assignment_matrix, eval_oqp, truth_table

AND2 = And(Var(0), Var(1))


def test_gate_constants_satisfy_their_identities():
    CONSTANTS.validate()
    assert max(CONSTANTS.identities().values()) <= 1e-12


def test_compile_single_variable():
    report = compile(Var(0))
    assert report.length == 1
    assert report.program.items == (ControlledX(0),)
    assert report.to_json() == {"length": 1, "depth": 0, "bound": 1}


def test_compile_and():
    report = compile(AND2)
    assert (report.length, report.bound, report.source_depth) == (4, 4, 1)
    for x in assignment_matrix(2):
        expected = ONE if x[0] and x[1] else ZERO
        assert eval_oqp(report.program, x).allclose(expected)


def test_compile_depth_two():
    c = Or(AND2, Var(2))
    report = compile(c)
    assert report.length <= 16
    assert truth_table(report.program).table == truth_table(c).table


def test_single_qubit_items_are_merged():
    items = compile(Not(AND2)).program.items
    for first, second in zip(items, items[1:]):
        assert isinstance(first, ControlledX) or isinstance(second, ControlledX)


def test_not_preserves_length():
    for c in (Var(1), AND2, Or(AND2, Not(Var(2)))):
        assert compile(Not(c)).length == compile(c).length


def test_net_unitary_examples():
    assert np.allclose(net_unitary(OneQubitProgram((ControlledX(0),)), [1]), PAULI_X)
    assert np.allclose(net_unitary(OneQubitProgram(()), [1]), IDENTITY2)
    u = net_unitary(compile(AND2).program, [1, 1])
    assert up_to_phase_equal(u, PAULI_X)
    with pytest.raises(UnassignedVariableError):
        net_unitary(OneQubitProgram((ControlledX(3),)), [1])


def test_net_unitaries_match_pointwise():
    program = compile(Or(AND2, Not(Var(2)))).program
    stacked = net_unitaries(program, [0, 1, 2])
    for index, x in enumerate(assignment_matrix(3)):
        assert np.allclose(stacked[index], net_unitary(program, x), atol=1e-12)


def test_up_to_phase_examples():
    assert up_to_phase_equal(PAULI_X, 1j * PAULI_X)
    assert not up_to_phase_equal(PAULI_X, HADAMARD)
    assert up_to_phase_equal(-1j * PAULI_Y, 1j * PAULI_Y)
    with pytest.raises(NotUnitaryError):
        up_to_phase_equal(PAULI_X, 2 * PAULI_X)


def test_de_morgan_keeps_depth():
    c = Or(Or(Var(0), Var(1)), Not(Var(2)))
    rewritten = de_morgan(c)
    assert circuit_depth(rewritten) == circuit_depth(c)
    assert truth_table(rewritten).table == truth_table(c).table


def test_complete_and_tree_meets_the_bound():
    c = And(And(Var(0), Var(1)), And(Var(2), Var(3)))
    report = compile(c)
    assert report.length == report.bound == 16


@pytest.mark.slow
def test_structured_corpus_compiles_soundly():
    for c in structured_circuits(max_depth=3, max_vars=4):
        report = compile(c)
        assert report.length <= 4 ** circuit_depth(c)
        assert verify_compilation(c, report.program)


@pytest.mark.slow
def test_random_circuits_compile_soundly():
    for seed in range(200):
        c = gen_circuit(GenConfig(seed=seed, max_vars=8, max_depth=5))
        report = compile(c)
        assert report.length <= report.bound
        assert verify_compilation(c, report.program)
        outputs = truth_table(report.program, vars_=truth_table(c).vars).outputs
        assert all(s.purity == pytest.approx(1.0, abs=1e-9) for s in outputs)


def test_affine_examples():
    assert affine_check(TruthTable.parity(3))
    assert not affine_check(TruthTable.from_string("0001"))
    assert affine_check(TruthTable.constant(2, 1))
    assert anf_degree(TruthTable.from_string("0001")) == 2


def test_anf_of_and_is_a_single_monomial():
    assert anf(TruthTable.from_string("0001")).tolist() == [0, 0, 0, 1]
    assert anf(TruthTable.from_string("1001")).tolist() == [1, 1, 1, 0]


def test_affine_formulas_pass_the_check():
    for seed in range(500):
        f = gen_affine_formula(GenConfig(seed=seed, max_vars=6, max_depth=4))
        assert affine_check(truth_table(f).table)


def test_and_or_corpus_has_non_affine_functions():
    rejected = 0
    for seed in range(50):
        c = gen_circuit(GenConfig(seed=seed, max_vars=4, max_depth=3))
        if not affine_check(truth_table(c).table):
            rejected += 1
    assert rejected > 0


def test_program_as_formula_is_read_many():
    report = compile(AND2)
    f = to_qformula(report.program)
    assert truth_table(f).table.to_string() == "0001"
    with pytest.raises(NotReadOnceError):
        dequantize_exact(f)


def test_parity_formula_is_affine():
    f = CGate(TruthTable.parity(2), (CLeaf(0), CGate(TruthTable(1, (1, 0)), (CLeaf(1),))))
    assert affine_check(truth_table(f).table)
