from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ectl.convert import (ConversionError, ConversionResult, GivenController,
                          ModalIntegerizeError, build_fir, build_pid, charpoly_exact,
                          charpoly_from_roots, companion, convert_controller, converted_inputs,
                          default_targets, divergent_demo, integer_pole_placement,
                          modal_integerize, observable_decomposition, pid_parallel_response,
                          prune_outputs)
from ectl.plant_sim.preset import CHARPOLY

import oracles


def random_controller(rng, n, m, p=1, nr=0, radius=0.9):
    F = rng.normal(size=(n, n))
    F *= radius / max(abs(np.linalg.eigvals(F)))
    dec = lambda A: [[repr(round(float(v), 4)) for v in row] for row in A]
    return GivenController(dec(F), dec(rng.normal(size=(n, p))), dec(rng.normal(size=(m, n))),
                           P=dec(rng.normal(size=(n, nr))) if nr else None)


def test_decimal_parsing_is_exact():
    c = GivenController([["0.1"]], [["0.2"]], [["0.3"]])
    assert c.exact["F"][0, 0] == Fraction(1, 10)
    back = GivenController.from_json(c.to_json())
    assert back.exact["H"][0, 0] == Fraction(3, 10)


def test_charpoly_exact_against_interpolation_oracle(rng):
    for n in (1, 3, 5):
        A = [[Fraction(int(v), 7) for v in row] for row in rng.integers(-9, 9, (n, n))]
        assert charpoly_exact(A) == oracles.charpoly_by_interpolation(A)


def test_charpoly_from_roots():
    assert charpoly_from_roots([0, 0]) == [1, 0, 0]
    assert charpoly_from_roots([1 + 2j, 1 - 2j]) == [1, -2, 5]
    with pytest.raises(ConversionError):
        charpoly_from_roots([1 + 2j])
    with pytest.raises(ConversionError):
        charpoly_from_roots([0.5])


def test_companion_charpoly():
    k = [1, 0, 0, -1, 3, -3, 3]
    assert [int(c) for c in charpoly_exact(companion(k).astype(object))] == CHARPOLY


def test_observable_full_rank():
    F = np.array([[0.5, 1.0], [0.0, 0.3]])
    d = observable_decomposition(F, [[1.0, 0.0]])
    assert d.n_obs == 2 and np.allclose(d.W1, np.eye(2))


def test_observable_decomposition_with_hidden_block(rng):
    # 2x2 observable block plus a 2x2 block the output never sees
    F0 = np.zeros((4, 4))
    F0[:2, :2] = [[0.5, 0.2], [-0.1, 0.4]]
    F0[2:, 2:] = [[0.3, 0.0], [0.1, -0.2]]
    F0[2:, :2] = rng.normal(size=(2, 2))
    H0 = np.array([[1.0, 0.5, 0.0, 0.0]])
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    F, H = Q.T @ F0 @ Q, H0 @ Q
    d = observable_decomposition(F, H)
    O = np.vstack([H @ np.linalg.matrix_power(F, k) for k in range(4)])
    assert d.n_obs == np.linalg.matrix_rank(O) == 2
    assert np.abs(d.F11 @ d.W1 - d.W1 @ F).max() < 1e-12
    assert np.abs(d.H1 @ d.W1 - H).max() < 1e-12


def test_no_observable_modes_rejected():
    ctl = GivenController([["0.5", "0"], ["0", "0.25"]], [["1"], ["1"]], [["0", "0"]])
    with pytest.raises(ConversionError):
        convert_controller(ctl)


def test_pole_placement_hand_case():
    # F - R H with R = [r0; r1]: char poly z^2 - (1.2 - r0) z + (0.5 - 1.2 r0 + r1)
    # = z^2 forces r0 = 1.2, r1 = 1.2 * 1.2 - 0.5
    F = np.array([[0.0, 1.0], [-0.5, 1.2]])
    H = np.array([[1.0, 0.0]])
    R1, T1, k, c = integer_pole_placement(F, H, targets=[0, 0])
    assert np.allclose(R1[:, 0], [1.2, 1.2 * 1.2 - 0.5])
    M = F - R1 @ H
    assert abs(np.trace(M)) < 1e-12 and abs(np.linalg.det(M)) < 1e-12


def test_pole_placement_nothing_to_move():
    F = np.array([[2.0, 0.0], [0.0, -1.0]])
    H = np.array([[1.0, 1.0]])
    R1, _, _, _ = integer_pole_placement(F, H, targets=[2, -1])
    assert np.abs(R1).max() < 1e-12


def test_modal_integerize_identity_and_complex_block(rng):
    A = np.diag([2.0, -1.0, 3.0])
    T = modal_integerize(A)
    assert np.abs(T @ A @ np.linalg.inv(T) - np.diag(np.diag(T @ A @ np.linalg.inv(T)))).max() < 1e-9
    S = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    B = S @ np.array([[1.0, 2.0], [-2.0, 1.0]]) @ np.linalg.inv(S)
    T = modal_integerize(B)
    M = T @ B @ np.linalg.inv(T)
    assert np.abs(M - np.round(M)).max() < 1e-8
    assert np.allclose(np.round(M), [[1, 2], [-2, 1]])


def test_modal_integerize_jordan_block(rng):
    S = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    J = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -2.0]])
    T = modal_integerize(S @ J @ np.linalg.inv(S))
    M = T @ S @ J @ np.linalg.inv(S) @ np.linalg.inv(T)
    assert np.abs(M - np.round(M)).max() < 1e-8
    assert sorted(np.round(np.diag(M)).tolist()) == [-2, 1, 1]


def test_modal_integerize_rejects_fractional():
    with pytest.raises(ModalIntegerizeError, match="0.5"):
        modal_integerize(np.array([[0.5]]))


def test_integer_F_keeps_identity():
    ctl = GivenController([["1", "1"], ["0", "1"]], [["0"], ["1"]], [["0.3", "0.7"]])
    conv = convert_controller(ctl)
    assert conv.route == "identity"
    assert np.array_equal(conv.T, np.eye(2)) and not conv.R.any()
    assert conv.Fp.tolist() == [[1, 1], [0, 1]]


def test_default_targets_ties_toward_zero():
    F = np.diag([0.5, -1.5, 0.49, 2.51])
    got = sorted(t.real for t in default_targets(F))
    assert got == sorted([0.0, -1.0, 0.0, 3.0])


def test_preset_charpoly_and_k(preset, preset_conv):
    conv = preset_conv
    assert conv.route == "charpoly"
    assert conv.Fp[:, -1].tolist() == [1, 0, 0, -1, 3, -3, 3]
    assert [int(c) for c in charpoly_exact(conv.Fp.astype(object))] == CHARPOLY
    assert np.abs(conv.Hp - np.eye(7)[-1]).max() < 1e-9


def _check_similarity(ctl, conv, tol=1e-9):
    assert np.issubdtype(conv.Fp.dtype, np.integer)
    assert np.abs((conv.Fp + conv.R @ conv.Hp) @ conv.T - conv.T @ ctl.F).max() <= tol
    assert np.abs(conv.Hp @ conv.T - ctl.H).max() <= tol
    assert np.linalg.matrix_rank(conv.T) == conv.n_prime
    assert np.abs(conv.T @ conv.T_right_inv - np.eye(conv.n_prime)).max() < 1e-6


@pytest.mark.parametrize("m", [1, 2, 3])
def test_random_conversions(m):
    rng = np.random.default_rng(m)
    for _ in range(15):
        ctl = random_controller(rng, int(rng.integers(2, 7)), m)
        _check_similarity(ctl, convert_controller(ctl))


def test_io_equivalence_over_500_steps():
    rng = np.random.default_rng(7)
    ctl = random_controller(rng, 5, 1, p=2, nr=1)
    conv = convert_controller(ctl)
    Gc, Pc = converted_inputs(ctl, conv)
    x = np.zeros(5)
    z = conv.T @ x
    worst = 0.0
    for _ in range(500):
        y, r = rng.normal(size=2), rng.normal(size=1)
        u = ctl.H @ x + ctl.J @ y + ctl.Q @ r
        u2 = conv.Hp @ z + ctl.J @ y + ctl.Q @ r
        worst = max(worst, float(np.abs(u - u2).max()))
        x = ctl.F @ x + ctl.G @ y + ctl.P @ r
        z = conv.Fp @ z + Gc @ y + Pc @ r + conv.R @ u2
    assert worst < 1e-6


def test_prune_outputs_keeps_observability():
    F = np.diag([0.1, 0.2, 0.3])
    H = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    kept = prune_outputs(F, H)
    assert kept == [0]


def test_non_cyclic_multi_output_rejected():
    # repeated eigenvalue with two independent eigenvectors: no single output observes it
    F = np.eye(2) * 0.5
    ctl = GivenController(F.tolist(), [[1], [1]], [[1, 0], [0, 1]])
    with pytest.raises(ConversionError):
        convert_controller(ctl)


def test_conversion_json_round_trip(preset_conv):
    back = ConversionResult.from_json(preset_conv.to_json())
    assert np.array_equal(back.Fp, preset_conv.Fp)
    assert np.allclose(back.T, preset_conv.T)


def test_fir_pure_gain_and_shift():
    c = build_fir([1])
    assert c.n == 0 and abs(c.transfer(np.exp(0.3j))[0, 0] - 1) < 1e-15
    c = build_fir(["0.5", "0.25", "-1"])
    assert np.array_equal(c.F, [[0, 0], [1, 0]])
    z = np.exp(0.7j)
    assert abs(c.transfer(z)[0, 0] - (0.5 + 0.25 / z - 1 / z**2)) < 1e-12


def test_pid_coefficients():
    c = build_pid(1, 0, 0, "0.05", 5)
    assert c.exact["H"].tolist() == [[0, 0]] and c.exact["J"][0, 0] == 1
    c = build_pid(1, "0.5", "0.1", "0.05", 5)
    assert c.F.tolist() == [[-3, 4], [1, 0]]
    with pytest.raises(ConversionError):
        build_pid(1, 0, 0, 0.05, 0)


@given(st.floats(0.05, 3.1))
def test_pid_matches_parallel_form(w):
    z = np.exp(1j * w)
    c = build_pid(1, "0.5", "0.1", "0.05", 5)
    want = pid_parallel_response(1, 0.5, 0.1, 0.05, 5, z)
    assert abs(c.transfer(z)[0, 0] - want) <= 1e-9 * max(1.0, abs(want))


def test_divergent_demo():
    ctl = GivenController([["0.4"]], [["1"]], [["1"]])
    assert divergent_demo(ctl, 1, [1], [], 20) == [1] * 20
    assert divergent_demo(ctl, 2, [0], [], 20) == [0] * 20
    norms = divergent_demo(ctl, 2, [1], [], 50)
    ratios = [b / a for a, b in zip(norms[10:], norms[11:])]
    assert min(ratios) >= 1.5
