"""Expression transfer: a command->expression decoder and an expression->command encoder.

The decoder is fit first on ``(a, e_obs)`` pairs with a squared error.
It is then frozen, and the encoder is trained on

    L_enc = ||a - enc(e)||^2 + lam * ||e - dec(enc(e))||^2

with gradients of the second term flowing through the frozen decoder.
The encoder ends in a logistic so its commands stay inside ``[0, 1]``.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from ._jsonio import FORMAT_VERSION, read_json, write_json
from .errors import DimensionError, MalformedFileError
from .nnet import (adam_step, backward, forward, init_adam, init_network,
                   network_from_dict, network_to_dict)
from .robotsim import stack_pairs


@dataclass(frozen=True)
class ETMTrainConfig:
    lr: float = 1e-3
    batch: int = 32
    epochs: int = 300
    lam: float = 1.0
    seed: int = 0
    hidden: tuple = (128, 128)
    activation: str = "tanh"

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or not self.lr > 0:
            raise ValueError("epochs must be >= 0, batch >= 1 and lr > 0")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass(eq=False)
class ETMDecoder:
    net: object
    trace: dict = field(default_factory=dict)

    @property
    def n_act(self):
        return self.net.sizes[0]

    @property
    def n_e(self):
        return self.net.sizes[-1]


@dataclass(eq=False)
class ETMEncoder:
    net: object
    trace: dict = field(default_factory=dict)
    steps: int = 0

    @property
    def n_e(self):
        return self.net.sizes[0]

    @property
    def n_act(self):
        return self.net.sizes[-1]


LOGISTIC_GAIN = 4.0


def _sigmoid(z):
    """Logistic with unit slope at 0: a smooth ``clip(z + 1/2, 0, 1)``."""
    z = LOGISTIC_GAIN * z
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_decoder(n_act, n_e, cfg=ETMTrainConfig()):
    sizes = [n_act, *cfg.hidden, n_e]
    acts = [cfg.activation] * len(cfg.hidden) + ["linear"]
    return ETMDecoder(init_network(sizes, acts, seed=cfg.seed))


def init_encoder(n_e, n_act, cfg=ETMTrainConfig()):
    sizes = [n_e, *cfg.hidden, n_act]
    acts = [cfg.activation] * len(cfg.hidden) + ["linear"]
    return ETMEncoder(init_network(sizes, acts, seed=cfg.seed + 1))


def decoder_predict(dec, a):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != dec.n_act:
        raise DimensionError(f"expected {dec.n_act} commands, got {a.shape[-1]}")
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError("decoder input must lie in [0, 1]")
    return forward(dec.net, a)[0]


def encoder_predict(enc, e):
    e = np.asarray(e, dtype=np.float64)
    if e.shape[-1] != enc.n_e:
        raise DimensionError(f"expected expression of length {enc.n_e}, got {e.shape[-1]}")
    return _sigmoid(forward(enc.net, e)[0])


def reconstruct_expression(enc, dec, e):
    return decoder_predict(dec, encoder_predict(enc, e))


def _batches(rng, n, batch):
    order = rng.permutation(n)
    for lo in range(0, n, batch):
        yield order[lo:lo + batch]


def train_decoder(pairs, cfg=ETMTrainConfig()):
    """Fit ``dec(a) ~ e_obs`` by Adam on the mean squared-norm error."""
    if not pairs:
        raise ValueError("training set is empty")
    A, E = stack_pairs(pairs)
    dec = init_decoder(A.shape[1], E.shape[1], cfg)
    state = init_adam(dec.net)
    rng = np.random.default_rng([cfg.seed, 2])
    trace = np.zeros(cfg.epochs)
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in _batches(rng, len(A), cfg.batch):
            pred, tape = forward(dec.net, A[idx])
            diff = pred - E[idx]
            total += (diff * diff).sum()
            grads, _ = backward(dec.net, tape, 2.0 * diff / len(idx))
            adam_step(dec.net, grads, state, cfg.lr)
        trace[epoch] = total / len(A)
    dec.trace = dict(L_dec=trace)
    return dec


def encoder_losses(enc, dec, a, e, lam=1.0):
    """Per-sample ``(L_com, L_rec)`` for commands ``a`` and codes ``e``."""
    a_hat = encoder_predict(enc, e)
    e_hat = forward(dec.net, a_hat)[0]
    return ((a - a_hat) ** 2).sum(axis=-1), ((e - e_hat) ** 2).sum(axis=-1)


def _encoder_step(enc, dec, A, E, lam, state, lr):
    z, tape = forward(enc.net, E)
    a_hat = _sigmoid(z)
    d_com = a_hat - A
    com = (d_com * d_com).sum(axis=1)
    B = len(A)
    g_a = 2.0 * d_com / B
    if dec is None:
        rec = np.zeros(B)
    else:
        e_hat, dtape = forward(dec.net, a_hat)
        d_rec = e_hat - E
        rec = (d_rec * d_rec).sum(axis=1)
        if lam:
            _, g_through = backward(dec.net, dtape, 2.0 * lam * d_rec / B)
            g_a = g_a + g_through
    grads, _ = backward(enc.net, tape, LOGISTIC_GAIN * g_a * a_hat * (1.0 - a_hat))
    adam_step(enc.net, grads, state, lr)
    return com, rec


def train_encoder(pairs, dec, cfg=ETMTrainConfig(), max_steps=None, lam=None):
    """Train the encoder against the frozen decoder.

    ``max_steps`` caps the number of Adam steps (used by the RI-10
    baseline); ``lam`` overrides ``cfg.lam``.  ``dec`` may be ``None`` only
    when ``lam == 0``, in which case ``L_rec`` is logged as zero.  Traces hold per-epoch means
    and per-batch means of ``L_com``, ``L_rec`` and ``L_enc``.
    """
    if not pairs:
        raise ValueError("training set is empty")
    lam = cfg.lam if lam is None else lam
    A, E = stack_pairs(pairs)
    if dec is None:
        if lam:
            raise ValueError("a decoder is required when lam > 0")
    elif dec.n_e != E.shape[1] or dec.n_act != A.shape[1]:
        raise DimensionError("decoder dimensions do not match the command pairs")
    enc = init_encoder(E.shape[1], A.shape[1], cfg)
    state = init_adam(enc.net)
    rng = np.random.default_rng([cfg.seed, 3])
    epochs = {k: [] for k in ("L_com", "L_rec", "L_enc")}
    batches = {k: [] for k in ("L_com", "L_rec", "L_enc")}
    steps = 0
    done = max_steps is not None and max_steps <= 0
    for _ in range(cfg.epochs):
        if done:
            break
        sums = dict(L_com=0.0, L_rec=0.0, L_enc=0.0)
        seen = 0
        for idx in _batches(rng, len(A), cfg.batch):
            com, rec = _encoder_step(enc, dec, A[idx], E[idx], lam, state, cfg.lr)
            enc_loss = com + lam * rec
            for key, val in (("L_com", com), ("L_rec", rec), ("L_enc", enc_loss)):
                batches[key].append(val.mean())
                sums[key] += val.sum()
            seen += len(idx)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                done = True
                break
        for key in sums:
            epochs[key].append(sums[key] / seen)
    enc.trace = dict(lam=lam, **{k: np.asarray(v) for k, v in epochs.items()},
                     **{f"batch_{k}": np.asarray(v) for k, v in batches.items()})
    enc.steps = state.t
    return enc


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _save(net, role, path, cfg, dims, trace):
    write_json(path, dict(kind="etm", role=role, format_version=FORMAT_VERSION,
                          network=network_to_dict(net), dims=dims,
                          config=asdict(cfg) if cfg is not None else None,
                          trace={k: v for k, v in trace.items()}))


def save_decoder(dec, path, cfg=None):
    _save(dec.net, "decoder", path, cfg, dict(n_act=dec.n_act, n_e=dec.n_e), dec.trace)


def save_encoder(enc, path, cfg=None):
    _save(enc.net, "encoder", path, cfg, dict(n_act=enc.n_act, n_e=enc.n_e), enc.trace)


def _load(path, role):
    doc = read_json(path, kind="etm")
    if doc.get("role") != role:
        raise MalformedFileError(f"{path}: expected an ETM {role}, found {doc.get('role')!r}")
    net = network_from_dict(doc["network"], path)
    trace = {k: (np.asarray(v) if isinstance(v, list) else v) for k, v in doc.get("trace", {}).items()}
    return net, trace


def load_decoder(path):
    net, trace = _load(path, "decoder")
    return ETMDecoder(net, trace)


def load_encoder(path):
    net, trace = _load(path, "encoder")
    return ETMEncoder(net, trace)
