import numpy as np
import pytest

from helpers import CORPUS, random_program, random_state, semantics_property_failures
from qert.frontend import load
from qert.frontend.syntax import While, flatten
from qert.operators import OperatorError, PartialDensityMatrix, StateSpaceLayout
from qert.semantics import ForwardRunner, SemanticsOptions, char_fun_semantics_step, eval_program

PLUS = np.full((2, 2), 0.5)
P0 = np.diag([1.0, 0.0])
P1 = np.diag([0.0, 1.0])


def qubit_program(body: str):
    return load("var q : bool;\n" + body)


def first_loop(prog):
    return next(s for s in flatten(prog.program) if isinstance(s, While))


def test_skip_is_identity():
    prog = qubit_program("skip")
    rho = PartialDensityMatrix(np.array([[0.3, 0.1j], [-0.1j, 0.5]]), prog.layout)
    res = eval_program(prog, rho)
    assert np.allclose(res.state.matrix, rho.matrix)
    assert res.converged and res.residual_mass == 0


def test_reset_then_hadamard():
    prog = qubit_program("q := |0>; [q] *= H")
    res = eval_program(prog, PartialDensityMatrix(P1, prog.layout))
    assert np.max(np.abs(res.state.matrix - PLUS)) < 1e-12


def test_sequence_runs_first_statement_first():
    # H then reset gives |0>; the transposed order would give |+>
    prog = qubit_program("[q] *= H; q := |0>")
    res = eval_program(prog, PartialDensityMatrix(P1, prog.layout))
    assert np.allclose(res.state.matrix, P0)


def test_reset_loop_terminates_in_two_iterations():
    prog = qubit_program("while M_std[q] = 1 do q := |0> od")
    res = eval_program(prog, PartialDensityMatrix(P1, prog.layout))
    assert np.allclose(res.state.matrix, P0)
    assert res.residual_mass == 0
    assert res.iterations_used == (2,)


def test_case_sums_branches():
    prog = qubit_program("case M_std[q] of 0 -> [q] *= X; 1 -> skip end")
    res = eval_program(prog, PartialDensityMatrix(PLUS, prog.layout))
    assert np.allclose(res.state.matrix, P1)


def test_zero_probability_branch_contributes_nothing():
    prog = qubit_program("case M_std[q] of 0 -> skip; 1 -> q := |0> end")
    res = eval_program(prog, PartialDensityMatrix(P0, prog.layout))
    assert np.allclose(res.state.matrix, P0)


def test_step_terminated_state():
    prog = qubit_program("while M_std[q] = 1 do skip od")
    exit_part, nxt = char_fun_semantics_step(prog, first_loop(prog), PartialDensityMatrix(P0, prog.layout))
    assert np.allclose(exit_part.matrix, P0)
    assert np.allclose(nxt.matrix, 0)


def test_step_plus_with_skip_body():
    prog = qubit_program("while M_std[q] = 1 do skip od")
    exit_part, nxt = char_fun_semantics_step(prog, first_loop(prog), PartialDensityMatrix(PLUS, prog.layout))
    assert np.allclose(exit_part.matrix, 0.5 * P0)
    assert np.allclose(nxt.matrix, 0.5 * P1)


def test_geometric_live_trace_halves():
    prog = load((CORPUS / "geometric.qgcl").read_text())
    loop = first_loop(prog)
    sigma = PartialDensityMatrix(PLUS, prog.layout)
    for n in range(1, 31):
        _, sigma = char_fun_semantics_step(prog, loop, sigma)
        assert abs(sigma.trace - 2.0 ** -n) < 1e-12


def test_geometric_loop_result_and_residual():
    prog = load((CORPUS / "geometric.qgcl").read_text())
    opts = SemanticsOptions()
    res = eval_program(prog, PartialDensityMatrix.basis(prog.layout), opts)
    assert res.converged and res.residual_mass <= opts.epsilon_mass
    assert np.allclose(res.state.matrix, P0, atol=1e-8)


def test_diverging_loop_reports_non_convergence():
    prog = load((CORPUS / "diverge.qgcl").read_text())
    res = eval_program(prog, PartialDensityMatrix.basis(prog.layout), SemanticsOptions(max_iterations=50))
    assert not res.converged
    assert res.residual_mass == pytest.approx(1.0)
    assert np.allclose(res.state.matrix, 0)


def test_accumulator_trace_nondecreasing():
    rng = np.random.default_rng(5)
    for _ in range(20):
        prog = random_program(rng, loops=True)
        loop = first_loop(prog)
        sigma = PartialDensityMatrix(random_state(rng, prog.layout), prog.layout)
        acc, last = 0.0, -1.0
        for _ in range(30):
            exit_part, sigma = char_fun_semantics_step(prog, loop, sigma)
            acc += exit_part.trace
            assert acc >= last - 1e-15
            last = acc


def test_live_trace_log_nonincreasing():
    prog = load((CORPUS / "geometric.qgcl").read_text())
    runner = ForwardRunner(prog, SemanticsOptions())
    runner.run(prog.program, np.asarray(PartialDensityMatrix.basis(prog.layout).matrix))
    log = runner.live_trace[0]
    assert all(b <= a + 1e-15 for a, b in zip(log, log[1:]))


def test_layout_mismatch():
    prog = qubit_program("skip")
    other = StateSpaceLayout((("r", 2),))
    with pytest.raises(OperatorError):
        eval_program(prog, PartialDensityMatrix.basis(other))


@pytest.mark.parametrize("field, value", [("epsilon_mass", 0.0), ("max_iterations", 0)])
def test_options_validated(field, value):
    with pytest.raises(ValueError):
        SemanticsOptions(**{field: value})


def test_semantics_properties_on_random_pairs():
    failures = semantics_property_failures(n_pairs=500)
    assert failures == []
