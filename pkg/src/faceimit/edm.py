"""Expression decoupling: landmarks -> (e, p, m), trained through the head model."""
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from ._jsonio import FORMAT_VERSION, read_json, write_json
from .errors import DimensionError, MalformedFileError
from .headmodel import FaceParams, canonicalize_landmarks
from .nnet import (adam_step, backward, forward, init_adam, init_network,
                   network_from_dict, network_to_dict)
from .synthdata import stack_observed, stack_params

CANONICALIZATION = "center-rms"


@dataclass(frozen=True)
class EDMTrainConfig:
    epochs: int = 500
    lr: float = 1e-4
    batch: int = 16
    seed: int = 0
    hidden: tuple = (256, 256)
    activation: str = "tanh"

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or not self.lr > 0:
            raise ValueError("epochs must be >= 0, batch >= 1 and lr > 0")


@dataclass(eq=False)
class EDMModel:
    net: object
    model_seed: int
    n_e: int
    n_s: int
    N: int
    config: EDMTrainConfig = field(default_factory=EDMTrainConfig)
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        sizes = self.net.sizes
        if sizes[0] != 2 * self.N or sizes[-1] != self.n_e + 3 + self.n_s:
            raise DimensionError(
                f"network {sizes[0]}->{sizes[-1]} does not fit N={self.N}, "
                f"n_e={self.n_e}, n_s={self.n_s}")


def init_edm(model, cfg=EDMTrainConfig()):
    sizes = [2 * model.N, *cfg.hidden, model.n_params]
    acts = [cfg.activation] * len(cfg.hidden) + ["linear"]
    return EDMModel(init_network(sizes, acts, seed=cfg.seed), model.seed,
                    model.n_e, model.n_s, model.N, cfg)


def encode_inputs(observed):
    """Canonicalised landmarks flattened as ``x1, y1, ..., xN, yN``."""
    c = canonicalize_landmarks(observed)
    return c.reshape(*c.shape[:-2], -1)


def _check_landmarks(edm, observed):
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape[-2:] != (edm.N, 2):
        raise DimensionError(f"expected landmarks of shape (..., {edm.N}, 2), got {observed.shape}")
    return observed


def edm_infer_batch(edm, observed):
    """Raw ``(B, n_e + 3 + n_s)`` parameter vectors for a landmark batch."""
    observed = _check_landmarks(edm, observed)
    return forward(edm.net, encode_inputs(observed))[0]


def edm_infer(edm, observed):
    vec = edm_infer_batch(edm, np.asarray(observed)[None])[0]
    return FaceParams.from_vector(vec, edm.n_e, edm.n_s)


def expression_codes(edm, observed):
    """Expression block only, for a batch of landmark sets."""
    return edm_infer_batch(edm, observed)[:, :edm.n_e]


def _check_model(edm_or_dims, model):
    if (edm_or_dims.n_e, edm_or_dims.n_s, edm_or_dims.N) != (model.n_e, model.n_s, model.N):
        raise DimensionError("EDM and head model dimensions differ")


def batch_landmark_loss(edm, model, observed):
    """Per-sample landmark loss of the re-decoded faces."""
    _check_model(edm, model)
    observed = np.ascontiguousarray(_check_landmarks(edm, observed))
    params = np.ascontiguousarray(edm_infer_batch(edm, observed))
    return _kernels.landmark_objective(params, observed, *model.landmark_blocks())[0]


def train_edm(samples, model, cfg=EDMTrainConfig(), on_epoch=None):
    """Self-supervised training through the fixed head model.

    Each step: encode, decode to landmarks, solve scale/translation in
    closed form (held constant), take the L1 landmark loss, backprop and
    apply Adam.  The returned model carries a per-epoch mean loss trace.
    """
    if not samples:
        raise ValueError("training set is empty")
    observed = stack_observed(samples)
    if observed.shape[1] != model.N or samples[0].params.e.shape[0] != model.n_e \
            or samples[0].params.m.shape[0] != model.n_s:
        raise DimensionError("dataset dimensions do not match the head model")
    edm = init_edm(model, cfg)
    blocks = model.landmark_blocks()
    inputs = encode_inputs(observed)
    net = edm.net
    state = init_adam(net)
    rng = np.random.default_rng([cfg.seed, 1])
    n = observed.shape[0]
    trace = np.zeros(cfg.epochs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch):
            idx = order[lo:lo + cfg.batch]
            y, tape = forward(net, inputs[idx])
            loss, g, _ = _kernels.landmark_objective(
                np.ascontiguousarray(y), observed[idx], *blocks)
            grads, _ = backward(net, tape, g / len(idx))
            adam_step(net, grads, state, cfg.lr)
            total += loss.sum()
        trace[epoch] = total / n
        if on_epoch is not None:
            on_epoch(epoch, trace[epoch])
    edm.trace = trace
    return edm


def _mse_mae(pred, gt):
    d = pred - gt
    return float(np.mean(d * d)), float(np.mean(np.abs(d)))


def edm_representation_error(edm, test):
    """MSE/MAE of decoupled codes against ground truth, per block."""
    if not test:
        raise ValueError("test set is empty")
    pred = edm_infer_batch(edm, stack_observed(test))
    return representation_error(pred, stack_params(test), edm.n_e, edm.n_s)


def representation_error(pred, gt, n_e, n_s):
    """Metrics over ``[e | p | m]`` vectors: overall, expression, morphology."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[1] != n_e + 3 + n_s:
        raise DimensionError("prediction and ground-truth shapes differ")
    out = {}
    for name, sl in (("overall", slice(None)), ("expression", slice(0, n_e)),
                     ("morphology", slice(n_e + 3, None))):
        mse, mae = _mse_mae(pred[:, sl], gt[:, sl])
        out[name] = dict(MSE=mse, MAE=mae)
    return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_edm(edm, path):
    cfg = asdict(edm.config)
    write_json(path, dict(kind="edm", format_version=FORMAT_VERSION,
                          network=network_to_dict(edm.net),
                          reference=dict(model_seed=edm.model_seed,
                                         dims=dict(n_e=edm.n_e, n_s=edm.n_s, N=edm.N, pose=3),
                                         canonicalization=CANONICALIZATION),
                          config=cfg, trace=edm.trace))


def load_edm(path):
    doc = read_json(path, kind="edm")
    try:
        ref = doc["reference"]
        if ref["canonicalization"] != CANONICALIZATION:
            raise ValueError(f"unknown canonicalization {ref['canonicalization']!r}")
        cfg = dict(doc.get("config", {}))
        if "hidden" in cfg:
            cfg["hidden"] = tuple(cfg["hidden"])
        dims = ref["dims"]
        return EDMModel(network_from_dict(doc["network"], path), int(ref["model_seed"]),
                        int(dims["n_e"]), int(dims["n_s"]), int(dims["N"]),
                        EDMTrainConfig(**cfg), np.asarray(doc.get("trace", []), dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DimensionError):
            raise
        raise MalformedFileError(f"{path}: bad EDM file ({exc})") from exc
