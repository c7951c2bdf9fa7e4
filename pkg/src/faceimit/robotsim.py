"""Simulated face robot: commands -> expression -> observed landmarks."""
import logging
from dataclasses import dataclass

import numpy as np

from ._jsonio import FORMAT_VERSION, read_json, read_jsonl, write_json, write_jsonl
from .errors import DimensionError, MalformedFileError
from .headmodel import FaceParams
from .synthdata import observe

log = logging.getLogger(__name__)

N_ACTUATORS = 22
G_HIDDEN = 32
G_WEIGHT_STD = 0.5
RAW_RANGE = (-1000.0, 1000.0)


@dataclass(frozen=True, eq=False)
class RobotRig:
    seed: int
    W1: np.ndarray      # (32, n_act)
    b1: np.ndarray      # (32,)
    W2: np.ndarray      # (n_e, 32), output scale folded in
    m_r: np.ndarray     # (n_s,)
    raw_min: np.ndarray
    raw_max: np.ndarray

    @property
    def n_act(self):
        return self.W1.shape[1]

    @property
    def n_e(self):
        return self.W2.shape[0]

    @property
    def n_s(self):
        return self.m_r.shape[0]


@dataclass
class CommandSample:
    a: np.ndarray      # normalized command in [0, 1]^n_act
    e_obs: np.ndarray  # EDM expression code of the observed robot face


def build_rig(seed=0, n_e=10, n_s=8, n_act=N_ACTUATORS, sigma_e=1.0, sigma_m=1.0,
              raw_range=RAW_RANGE):
    """Seeded ground-truth rig.

    ``g(a) = W2 @ tanh(W1 @ (2a - 1) + b1)`` with ``N(0, 0.5^2)`` weights.
    ``W2`` is rescaled so that on 4096 calibration commands the expression
    outputs have unit-average per-axis standard deviation (``sigma_e``),
    which puts most robot expressions inside ``+-2 sigma_e``.
    """
    rng = np.random.default_rng([int(seed), 4242])
    W1 = G_WEIGHT_STD * rng.normal(size=(G_HIDDEN, n_act))
    b1 = G_WEIGHT_STD * rng.normal(size=G_HIDDEN)
    W2 = G_WEIGHT_STD * rng.normal(size=(n_e, G_HIDDEN))
    calib = rng.uniform(size=(4096, n_act))
    h = np.tanh((2.0 * calib - 1.0) @ W1.T + b1)
    W2 = W2 * (sigma_e / (h @ W2.T).std(axis=0).mean())
    m_r = sigma_m * rng.normal(size=n_s)
    lo, hi = raw_range
    return RobotRig(int(seed), W1, b1, W2, m_r,
                    np.full(n_act, float(lo)), np.full(n_act, float(hi)))


def rig_expression(rig, a):
    """Ground-truth expression ``g(a)``; accepts one command or a batch."""
    a = np.asarray(a, dtype=np.float64)
    return np.tanh((2.0 * a - 1.0) @ rig.W1.T + rig.b1) @ rig.W2.T


def rig_expression_jacobian(rig, a):
    """``d g / d a`` for a single command, shape ``(n_e, n_act)``."""
    h = np.tanh((2.0 * a - 1.0) @ rig.W1.T + rig.b1)
    return 2.0 * (rig.W2 * (1.0 - h * h)) @ rig.W1


def command_bounds(a_real):
    """Per-actuator ``(min, max)`` across a set of collected raw commands."""
    a_real = np.atleast_2d(np.asarray(a_real, dtype=np.float64))
    return a_real.min(axis=0), a_real.max(axis=0)


def normalize_commands(a_real, raw_min, raw_max):
    """Map raw actuator values to ``[0, 1]`` per axis.

    Values outside the bounds are clamped and reported at warning level.
    """
    a_real = np.asarray(a_real, dtype=np.float64)
    raw_min = np.asarray(raw_min, dtype=np.float64)
    raw_max = np.asarray(raw_max, dtype=np.float64)
    span = raw_max - raw_min
    if np.any(~(span > 0)):
        raise ValueError("raw_max must exceed raw_min on every actuator")
    if a_real.shape[-1] != span.shape[-1]:
        raise DimensionError(f"command length {a_real.shape[-1]} != bounds length {span.shape[-1]}")
    out = (a_real - raw_min) / span
    clipped = (out < 0.0) | (out > 1.0)
    if np.any(clipped):
        log.warning("clamped %d out-of-range actuator values", int(clipped.sum()))
        out = np.clip(out, 0.0, 1.0)
    return out


def denormalize_commands(a, raw_min, raw_max):
    a = np.asarray(a, dtype=np.float64)
    return raw_min + a * (np.asarray(raw_max) - np.asarray(raw_min))


def _check_command(rig, a):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != rig.n_act:
        raise DimensionError(f"expected {rig.n_act} actuator commands, got {a.shape[-1]}")
    if np.any(a < 0.0) or np.any(a > 1.0) or not np.all(np.isfinite(a)):
        raise ValueError("normalized commands must lie in [0, 1]")
    return a


def actuate_and_observe(rig, model, a, noise_sigma=0.0, rng=None):
    """Landmarks of the robot face driven by command ``a`` (pose fixed at 0)."""
    a = _check_command(rig, a)
    if (rig.n_e, rig.n_s) != (model.n_e, model.n_s):
        raise DimensionError("rig and head model dimensions differ")
    params = FaceParams(rig_expression(rig, a), np.zeros(3), rig.m_r)
    return observe(model, params, noise_sigma, rng)


def collect_robot_dataset(rig, model, edm, n=1000, seed=0, noise_sigma=0.005):
    """Random commands, their observed faces, and the frozen EDM's codes.

    Commands are drawn uniformly in raw device units and mapped through
    ``normalize_commands`` with the rig's declared bounds.
    """
    from .edm import expression_codes

    rng = np.random.default_rng([int(seed), 31337])
    a_real = rng.uniform(rig.raw_min, rig.raw_max, size=(n, rig.n_act))
    a = normalize_commands(a_real, rig.raw_min, rig.raw_max)
    faces = np.stack([actuate_and_observe(rig, model, a[i], noise_sigma, rng) for i in range(n)])
    e_obs = expression_codes(edm, faces)
    return [CommandSample(a[i], e_obs[i]) for i in range(n)]


def stack_pairs(pairs):
    return (np.stack([p.a for p in pairs]), np.stack([p.e_obs for p in pairs]))


def landmark_lipschitz_estimate(rig, model, n=200, delta=1e-3, seed=0):
    """Largest observed landmark displacement per unit ``||da||_inf``.

    Probes random commands with random sign perturbations of size
    ``delta``; the result is a measured constant, not a guaranteed bound.
    """
    rng = np.random.default_rng([int(seed), 99])
    worst = 0.0
    for _ in range(n):
        a = rng.uniform(delta, 1.0 - delta, size=rig.n_act)
        b = a + delta * rng.choice([-1.0, 1.0], size=rig.n_act)
        d = np.abs(actuate_and_observe(rig, model, a) - actuate_and_observe(rig, model, b)).max()
        worst = max(worst, d / delta)
    return worst


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_rig(rig, path):
    write_json(path, dict(kind="robot_rig", format_version=FORMAT_VERSION, seed=rig.seed,
                          dims=dict(n_act=rig.n_act, n_e=rig.n_e, n_s=rig.n_s, hidden=G_HIDDEN),
                          raw_min=rig.raw_min, raw_max=rig.raw_max, m_r=rig.m_r,
                          g_net=dict(W1=rig.W1, b1=rig.b1, W2=rig.W2)))


def load_rig(path):
    doc = read_json(path, kind="robot_rig")
    try:
        d = doc["dims"]
        g = doc["g_net"]
        rig = RobotRig(int(doc["seed"]),
                       np.asarray(g["W1"], dtype=np.float64).reshape(d["hidden"], d["n_act"]),
                       np.asarray(g["b1"], dtype=np.float64).reshape(d["hidden"]),
                       np.asarray(g["W2"], dtype=np.float64).reshape(d["n_e"], d["hidden"]),
                       np.asarray(doc["m_r"], dtype=np.float64).reshape(d["n_s"]),
                       np.asarray(doc["raw_min"], dtype=np.float64).reshape(d["n_act"]),
                       np.asarray(doc["raw_max"], dtype=np.float64).reshape(d["n_act"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFileError(f"{path}: bad rig file ({exc})") from exc
    return rig


def save_pairs(pairs, path, seeds=None):
    header = dict(kind="robot_pairs", format_version=FORMAT_VERSION, n=len(pairs),
                  n_act=int(pairs[0].a.shape[0]), n_e=int(pairs[0].e_obs.shape[0]),
                  seeds=seeds or {})
    write_jsonl(path, header, [dict(a=p.a, e_obs=p.e_obs) for p in pairs])


def load_pairs(path):
    header, records = read_jsonl(path, kind="robot_pairs")
    try:
        pairs = [CommandSample(np.asarray(r["a"], dtype=np.float64),
                               np.asarray(r["e_obs"], dtype=np.float64)) for r in records]
        for p in pairs:
            if p.a.shape != (header["n_act"],) or p.e_obs.shape != (header["n_e"],):
                raise ValueError("record dimensions disagree with header")
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFileError(f"{path}: bad command record ({exc})") from exc
    return pairs
