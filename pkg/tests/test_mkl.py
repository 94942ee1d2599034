import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles.reference import joint_mkl, tiny_instance
from rffmkl.dataset import SYNTH_PRESETS, FeatureGroup, GroupedDataset, synth_grouped
from rffmkl.exceptions import ConfigurationError, InvariantError, ParameterError, ShapeError
from rffmkl.mkl import (
    EmbeddingBank,
    MklModel,
    Regularizer,
    SolverConfig,
    bank_for,
    beta_step,
    constraint_value,
    decision_scores,
    load_model,
    objective,
    save_model,
    solve,
    solve_gram,
    svm_step,
)
from rffmkl.rff import BandwidthSchedule
from rffmkl.svm import fit_gram

REGS = ("L1", "L2", "L21")


def _grams(blocks):
    return np.array([[blk @ blk.T for blk in row] for row in blocks])


def _weighted_sum(a, beta):
    live = a > 0
    return float((a[live] ** 2 / beta[live]).sum())


def _small_data(seed=0, n=40):
    spec = SYNTH_PRESETS["groups8"]
    data = synth_grouped(spec, seed).select_groups(["g0", "g1", "g3"])
    return data.subset(np.arange(n))


# ----------------------------------------------------------------------------
# closed-form weights


def test_beta_step_examples():
    np.testing.assert_allclose(beta_step(np.array([[3.0, 1.0]]), "L1"), [[0.75, 0.25]])
    np.testing.assert_allclose(beta_step(np.array([[1.0, 1.0]]), "L2"), [[2 ** -0.5] * 2])
    a = np.array([[0.4, 1.3, 2.0]])
    np.testing.assert_allclose(beta_step(a, "L21"), beta_step(a, "L2"), rtol=1e-14)


def test_beta_step_zero_group():
    a = np.array([[1.0, 2.0], [0.0, 0.0]])
    for reg in REGS:
        beta = beta_step(a, reg)
        assert np.all(beta[1] == 0)
        assert constraint_value(beta, reg) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("reg", REGS)
def test_beta_step_beats_grid(frozen, reg):
    for case in frozen["beta_grid"]:
        a = np.array(case["a"])
        beta = beta_step(a, reg)
        assert _weighted_sum(a, beta) <= case[reg] + 1e-6
        # and the grid is close, so the closed form is not exploiting a bug in the oracle
        assert _weighted_sum(a, beta) >= case[reg] * (1 - 2e-2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(REGS), st.floats(1e-3, 1e3))
def test_beta_step_scale_invariant_and_active(seed, reg, scale):
    rng = np.random.default_rng(seed)
    a = rng.exponential(size=(int(rng.integers(1, 5)), int(rng.integers(1, 5))))
    beta = beta_step(a, reg)
    np.testing.assert_allclose(beta_step(a * scale, reg), beta, rtol=1e-10, atol=1e-14)
    assert np.all(beta >= 0)
    assert abs(constraint_value(beta, reg) - 1.0) <= 1e-8


def test_beta_step_rejects_negative():
    with pytest.raises(ParameterError):
        beta_step(np.array([[1.0, -0.1]]), "L1")
    with pytest.raises(ParameterError):
        beta_step(np.array([[1.0, np.nan]]), "L2")


def test_beta_step_all_zero_is_uniform():
    for reg in REGS:
        beta = beta_step(np.zeros((2, 3)), reg)
        assert np.ptp(beta) == 0
        assert constraint_value(beta, reg) == pytest.approx(1.0)


def test_regularizer_parse():
    assert Regularizer.parse("mkl-l21") is Regularizer.L21
    assert Regularizer.parse("l1") is Regularizer.L1
    with pytest.raises(ConfigurationError):
        Regularizer.parse("L3")


# ----------------------------------------------------------------------------
# objective and scores


def _tiny_model(blocks, beta, w=None, b=0.0, reg="L1"):
    p, q = len(blocks), len(blocks[0])
    dim = blocks[0][0].shape[1]
    bank = bank_for(_small_data().select_groups(["g0"]), BandwidthSchedule((1.0,)), 2)
    if w is None:
        w = np.zeros((p, q, dim))
    return MklModel(w, b, beta, Regularizer.parse(reg), bank)


def test_objective_at_zero_weights():
    blocks, y, *_ = tiny_instance(0)
    model = _tiny_model(blocks, np.full((2, 2), 0.25))
    assert objective(model, blocks, y, 1.0) == pytest.approx(len(y))
    assert objective(model, blocks, y, 2.0) == pytest.approx(2 * len(y))


def test_objective_flags_zero_weight_with_mass():
    blocks, y, *_ = tiny_instance(0)
    w = np.zeros((2, 2, 8))
    w[1, 1, 0] = 0.3
    beta = np.array([[0.5, 0.5], [0.0, 0.0]])
    with pytest.raises(InvariantError):
        objective(_tiny_model(blocks, beta, w), blocks, y, 1.0)


def test_objective_block_mismatch():
    blocks, y, *_ = tiny_instance(0)
    model = _tiny_model(blocks, np.full((2, 2), 0.25))
    with pytest.raises(ShapeError):
        objective(model, blocks[:1], y, 1.0)


def test_decision_scores_intercept_only():
    data = _small_data()
    bank = bank_for(data, BandwidthSchedule((1.0, 2.0)), 16)
    w = np.zeros((bank.p, bank.q, bank.block_dim))
    model = MklModel(w, 1.0, np.full((3, 2), 1 / 6), Regularizer.L1, bank)
    np.testing.assert_array_equal(model.decision_scores(data), np.ones(data.n_samples))
    np.testing.assert_array_equal(model.predict(data), np.ones(data.n_samples))


def test_decision_scores_affine_in_intercept():
    data = _small_data()
    model, _ = solve(bank_for(data, BandwidthSchedule((1.0, 2.0)), 16), data, "L2")
    shifted = MklModel(model.w, model.b + 0.7, model.beta, model.regularizer, model.bank)
    np.testing.assert_allclose(shifted.decision_scores(data),
                               model.decision_scores(data) + 0.7, atol=1e-12)


def test_decision_scores_rejects_other_bank():
    data = _small_data()
    model, _ = solve(bank_for(data, BandwidthSchedule((1.0,)), 8), data, "L1")
    other = bank_for(data, BandwidthSchedule((1.0,)), 8, master_seed=3)
    with pytest.raises(ConfigurationError):
        decision_scores(model, other, data)


# ----------------------------------------------------------------------------
# solver


@pytest.mark.parametrize("reg", REGS)
def test_solver_matches_frozen_joint_optimum(frozen, reg):
    for ref in (r for r in frozen["joint"] if r["reg"] == reg):
        blocks, y, *_ = tiny_instance(ref["seed"])
        cfg = SolverConfig(C=ref["C"], outer_tol=1e-10, inner_tol=1e-10, max_outer_iters=500)
        fit = solve_gram(_grams(blocks), y, reg, cfg)
        assert fit.trace.objectives[-1] == pytest.approx(ref["value"], rel=1e-4)


def test_solver_matches_live_joint_optimum_at_large_C():
    blocks, y, *_ = tiny_instance(11, n=20)
    cfg = SolverConfig(C=10.0, outer_tol=1e-10, inner_tol=1e-10, max_outer_iters=500)
    for reg in REGS:
        fit = solve_gram(_grams(blocks), y, reg, cfg)
        assert fit.trace.objectives[-1] == pytest.approx(joint_mkl(blocks, y, 10.0, reg), rel=1e-4)


def test_single_kernel_reduces_to_svm():
    blocks, y, *_ = tiny_instance(3, p=1, q=1)
    K = blocks[0][0] @ blocks[0][0].T
    svm = fit_gram(K, y, 1.0, tol=1e-10)
    for reg in REGS:
        fit = solve_gram(K[None, None], y, reg, SolverConfig(inner_tol=1e-10))
        assert fit.beta[0, 0] == pytest.approx(1.0)
        assert fit.trace.objectives[-1] == pytest.approx(svm.primal, rel=1e-8)


def test_svm_step_on_scaled_blocks():
    blocks, y, *_ = tiny_instance(2)
    flat = [blk for row in blocks for blk in row]
    ws, b = svm_step(flat, y, 1.0, inner_tol=1e-10)
    assert [w.shape for w in ws] == [blk.shape[1:] for blk in flat]
    Phi = np.hstack(flat)
    sol = fit_gram(Phi @ Phi.T, y, 1.0, tol=1e-10)
    np.testing.assert_allclose(np.concatenate(ws), Phi.T @ sol.coef, atol=1e-9)
    assert b == pytest.approx(sol.b, abs=1e-10)


@pytest.mark.parametrize("reg", REGS)
def test_solve_invariants_and_trace(reg):
    data = _small_data(1)
    bank = bank_for(data, BandwidthSchedule((0.5, 1.0, 4.0)), 32)
    model, trace = solve(bank, data, reg)
    model.check_invariants()
    assert trace.is_monotone()
    assert trace.status in ("converged", "max_iters")
    assert constraint_value(model.beta, reg) <= 1 + 1e-8
    emb = bank.embed(data)
    assert objective(model, emb, data.labels, 1.0) == pytest.approx(trace.objectives[-1], rel=1e-8)


def test_solve_gram_validates_input():
    with pytest.raises(ShapeError):
        solve_gram(np.zeros((2, 3, 3)), np.array([1, -1, 1]), "L1")
    with pytest.raises(ShapeError):
        solve_gram(np.zeros((1, 1, 3, 3)), np.array([1, -1]), "L1")
    with pytest.raises(ParameterError):
        SolverConfig(C=-1.0)
    with pytest.raises(ParameterError):
        SolverConfig(max_outer_iters=0)


def test_solve_is_deterministic():
    data = _small_data(2)
    bank = bank_for(data, BandwidthSchedule((1.0, 2.0)), 16)
    m1, t1 = solve(bank, data, "L21")
    m2, t2 = solve(bank, data, "L21")
    np.testing.assert_array_equal(m1.w, m2.w)
    assert t1.objectives == t2.objectives


def test_max_iters_status_when_cut_short():
    blocks, y, *_ = tiny_instance(0)
    fit = solve_gram(_grams(blocks), y, "L1", SolverConfig(max_outer_iters=1))
    assert fit.trace.iterations == 1 and fit.trace.status == "max_iters"


# ----------------------------------------------------------------------------
# bank and persistence


def test_bank_layout_and_seeds():
    data = _small_data()
    bank = bank_for(data, BandwidthSchedule((1.0, 2.0)), 10, master_seed=4)
    assert (bank.p, bank.q, bank.block_dim) == (3, 2, 20)
    assert bank.total_dim == 3 * 2 * 20
    np.testing.assert_allclose(bank.sigmas[1], [np.sqrt(5), 2 * np.sqrt(5)])
    # a group's maps do not depend on which other groups are present
    alone = bank_for(data.select_groups(["g3"]), BandwidthSchedule((1.0, 2.0)), 10, master_seed=4)
    np.testing.assert_array_equal(alone.maps[0][1].omegas, bank.maps[2][1].omegas)
    grams = bank.grams(data)
    assert grams.shape == (3, 2, data.n_samples, data.n_samples)
    np.testing.assert_allclose(np.diagonal(grams, axis1=2, axis2=3), 1.0, atol=1e-12)


def test_bank_rejects_ragged_rows():
    data = _small_data()
    bank = bank_for(data, BandwidthSchedule((1.0, 2.0)), 10)
    with pytest.raises(ConfigurationError):
        EmbeddingBank((bank.maps[0], bank.maps[1][:1]), ("a", "b"))


def test_embed_checks_dimensions():
    data = _small_data()
    bank = bank_for(data, BandwidthSchedule((1.0,)), 10)
    wrong = GroupedDataset((FeatureGroup("g0", np.zeros((4, 2))), FeatureGroup("g1", np.zeros((4, 5))),
                            FeatureGroup("g3", np.zeros((4, 8)))), [1, -1, 1, -1])
    with pytest.raises((ShapeError, ConfigurationError)):
        bank.embed(wrong)


def test_save_load_round_trip(tmp_path):
    data = _small_data(3)
    bank = bank_for(data, BandwidthSchedule((1.0, 4.0)), 24, master_seed=9)
    model, _ = solve(bank, data, "L21")
    path = tmp_path / "model.npz"
    save_model(model, path, extra={"note": "x"})
    back = load_model(path)
    np.testing.assert_array_equal(back.w, model.w)
    np.testing.assert_array_equal(back.beta, model.beta)
    assert back.regularizer is Regularizer.L21 and back.b == model.b
    np.testing.assert_array_equal(back.predict(data), model.predict(data))
    np.testing.assert_allclose(back.decision_scores(data), model.decision_scores(data), atol=1e-12)
    save_model(model, tmp_path / "again.npz", extra={"note": "x"})
    assert path.read_bytes() == (tmp_path / "again.npz").read_bytes()


def test_separable_fixture_selects_informative_group():
    spec = SYNTH_PRESETS["separable"]
    mass, train_acc = [], []
    for seed in range(20):
        data = synth_grouped(spec, seed)
        bank = bank_for(data, fourier_size=100, master_seed=seed)
        model, _ = solve(bank, data, "L21")
        mass.append(model.beta[0].sum() / model.beta.sum())
        train_acc.append(np.mean(model.predict(data) == data.labels))
    assert np.median(mass) >= 0.9
    assert min(train_acc) == 1.0


def test_small_C_drives_weights_to_zero():
    blocks, y, *_ = tiny_instance(4)
    norms = []
    for C in (1.0, 1e-2, 1e-4):
        fit = solve_gram(_grams(blocks), y, "L2", SolverConfig(C=C))
        K = np.einsum("lm,lmij->ij", fit.gamma ** 2, _grams(blocks))  # |w|^2 = sum gamma^2 c.K_lm.c
        norms.append(float(np.sqrt(max(fit.coef @ K @ fit.coef, 0.0))))
    assert norms[0] > norms[1] > norms[2] and norms[2] < 1e-2
