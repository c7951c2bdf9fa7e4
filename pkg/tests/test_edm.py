import numpy as np
import pytest
from scipy.optimize import least_squares

from faceimit import errors
from faceimit.edm import (EDMTrainConfig, batch_landmark_loss, edm_infer, edm_infer_batch,
                          edm_representation_error, init_edm, load_edm, representation_error, save_edm,
                          train_edm)
from faceimit.headmodel import FaceParams, landmark_loss, landmarks_3d, project_2d, solve_alignment
from faceimit.synthdata import ParamPrior, generate_face_dataset, stack_observed

SMALL = EDMTrainConfig(epochs=15, lr=1e-3, batch=16, hidden=(32, 32), seed=4)


@pytest.fixture(scope="module")
def data(small_model):
    return generate_face_dataset(small_model, ParamPrior(seed=11), n=200)


def test_defaults_follow_training_protocol():
    cfg = EDMTrainConfig()
    assert (cfg.epochs, cfg.lr, cfg.batch) == (500, 1e-4, 16)
    assert cfg.hidden == (256, 256)


def test_output_shapes(model, data):
    edm = init_edm(model)
    obs = generate_face_dataset(model, ParamPrior(seed=1), n=2)[0].observed
    p = edm_infer(edm, obs)
    assert (p.e.shape, p.p.shape, p.m.shape) == ((10,), (3,), (8,))
    with pytest.raises(errors.DimensionError):
        edm_infer(edm, obs[:10])


def test_zero_final_layer_gives_zero_params(small_model, data):
    edm = init_edm(small_model, SMALL)
    edm.net.layers[-1].W[:] = 0
    out = edm_infer_batch(edm, stack_observed(data[:5]))
    assert not out.any()


def test_canonicalization_invariance(small_model, data):
    edm = train_edm(data[:50], small_model, EDMTrainConfig(epochs=2, hidden=(16,), seed=1))
    obs = stack_observed(data[:10])
    base = edm_infer_batch(edm, obs)
    np.testing.assert_allclose(edm_infer_batch(edm, obs + [3.5, -2.0]), base, atol=1e-12)
    np.testing.assert_allclose(edm_infer_batch(edm, 0.37 * obs), base, atol=1e-12)
    np.testing.assert_array_equal(edm_infer_batch(edm, 2.0 * obs), base)


def test_zero_epochs_returns_initial_network(small_model, data):
    cfg = EDMTrainConfig(epochs=0, hidden=(16,), seed=3)
    assert train_edm(data, small_model, cfg).net.same_weights(init_edm(small_model, cfg).net)


def test_training_reduces_loss_and_is_deterministic(small_model, data):
    a = train_edm(data, small_model, SMALL)
    b = train_edm(data, small_model, SMALL)
    assert np.array_equal(a.trace, b.trace)
    assert a.net.same_weights(b.net)
    assert a.trace[-1] < 0.5 * a.trace[0]
    obs = stack_observed(data)
    trained = batch_landmark_loss(a, small_model, obs).mean()
    untrained = batch_landmark_loss(init_edm(small_model, SMALL), small_model, obs).mean()
    assert trained < untrained


def test_trace_matches_per_sample_objective(small_model, data):
    # the kernel loss equals the explicit align-then-L1 computation
    edm = init_edm(small_model, SMALL)
    obs = stack_observed(data[:4])
    losses = batch_landmark_loss(edm, small_model, obs)
    for o, l, vec in zip(obs, losses, edm_infer_batch(edm, obs)):
        P = project_2d(landmarks_3d(small_model, FaceParams.from_vector(vec, small_model.n_e, small_model.n_s)))
        assert l == pytest.approx(landmark_loss(o, P, solve_alignment(o, P)), rel=1e-12)


def test_dataset_dimension_mismatch(model, small_model, data):
    with pytest.raises(errors.DimensionError):
        train_edm(data, model, SMALL)


def test_representation_error_examples():
    gt = np.random.default_rng(0).normal(size=(6, 2 + 3 + 4))
    zero = representation_error(gt, gt, 2, 4)
    assert all(v == 0 for block in zero.values() for v in block.values())
    one = representation_error(gt + 1, gt, 2, 4)
    assert all(v == pytest.approx(1.0) for block in one.values() for v in block.values())
    assert list(one) == ["overall", "expression", "morphology"]
    with pytest.raises(errors.DimensionError):
        representation_error(gt[:, :5], gt[:, :5], 2, 4)


def test_save_load_roundtrip(tmp_path, small_model, data):
    edm = train_edm(data[:40], small_model, EDMTrainConfig(epochs=2, hidden=(8,), seed=2))
    save_edm(edm, tmp_path / "e.json")
    back = load_edm(tmp_path / "e.json")
    assert back.net.same_weights(edm.net)
    assert np.array_equal(back.trace, edm.trace)
    assert (back.model_seed, back.config) == (edm.model_seed, edm.config)
    obs = stack_observed(data[:3])
    assert np.array_equal(edm_infer_batch(back, obs), edm_infer_batch(edm, obs))


@pytest.mark.slow
def test_default_training_trace_drops_tenfold(artifacts):
    trace = artifacts["edm"].trace
    assert len(trace) == 500
    assert trace[-1] < 0.1 * trace[0]


@pytest.mark.slow
def test_trained_model_fits_noiseless_training_faces(artifacts):
    model, edm = artifacts["model"], artifacts["edm"]
    train, _ = artifacts["faces"]
    # same parameters, re-observed without noise
    clean = np.stack([project_2d(landmarks_3d(model, s.params)) for s in train[:100]])
    untrained = batch_landmark_loss(init_edm(model, edm.config), model, stack_observed(train)).mean()
    assert batch_landmark_loss(edm, model, clean).mean() < 0.1 * untrained


@pytest.mark.slow
def test_representation_error_beats_random(artifacts):
    from faceimit.evalkit import table2_representation

    _, test = artifacts["faces"]
    rows = table2_representation(artifacts["edm"], test, ParamPrior(), seed=1)
    for block in ("overall", "expression", "morphology"):
        assert rows["EDM"][block]["MSE"] < rows["RG"][block]["MSE"]
    assert edm_representation_error(artifacts["edm"], test) == rows["EDM"]


def _refit_loss(model, obs, starts):
    """Best landmark loss from direct least squares over (e, p, m)."""
    n_e = model.n_e

    def project(vec):
        p = vec[n_e:n_e + 3]
        if np.linalg.norm(p) > np.pi:
            p = p / np.linalg.norm(p) * np.pi
        return project_2d(landmarks_3d(model, FaceParams(vec[:n_e], p, vec[n_e + 3:])))

    def resid(vec):
        P = project(vec)
        a = solve_alignment(obs, P)
        return (obs - (a.s * P + [a.t_x, a.t_y])).ravel()

    best = np.inf
    for x0 in starts:
        P = project(least_squares(resid, x0).x)
        best = min(best, landmark_loss(obs, P, solve_alignment(obs, P)))
    return best


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="an amortised encoder trained for 500 epochs cannot match a "
                   "per-sample refit that reaches ~1e-9 on noiseless faces; see the decisions ledger")
def test_identifiability_against_direct_refit(artifacts):
    model, edm = artifacts["model"], artifacts["edm"]
    faces = generate_face_dataset(model, ParamPrior(seed=99, noise_sigma=0.0), n=20)
    obs = stack_observed(faces)
    pred = edm_infer_batch(edm, obs)
    edm_loss = batch_landmark_loss(edm, model, obs)
    refit = np.array([_refit_loss(model, o, (p, np.zeros(model.n_params))) for o, p in zip(obs, pred)])
    print(f"identifiability: EDM loss {edm_loss.mean():.4g}, direct refit {refit.mean():.4g}")
    assert np.all(edm_loss <= 2 * refit)
