"""Synthetic face samples, expression clusters and the JSON-lines dataset format."""
from dataclasses import asdict, dataclass

import numpy as np

from ._jsonio import FORMAT_VERSION, read_jsonl, write_jsonl
from .errors import DimensionError, MalformedFileError
from .headmodel import UNIT_ALIGNMENT, Alignment, FaceParams, landmarks_3d, project_2d

CLUSTER_LABELS = ("surprise", "fear", "disgust", "happy", "sad", "anger", "neutral")
ANCHOR_RADIUS = 2.5
DEFAULT_CLUSTER_SPREAD = 0.2


@dataclass(frozen=True)
class ParamPrior:
    sigma_e: float = 1.0
    sigma_m: float = 1.0
    pose_max: float = 0.3
    noise_sigma: float = 0.005
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_e", "sigma_m", "pose_max", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.pose_max > np.pi:
            raise ValueError("pose_max must not exceed pi")


@dataclass
class FaceSample:
    params: FaceParams
    observed: np.ndarray            # (N, 2)
    label: str = None
    align: Alignment = UNIT_ALIGNMENT


@dataclass(frozen=True)
class ExpressionCluster:
    label: str
    anchor: np.ndarray
    spread: float = DEFAULT_CLUSTER_SPREAD


def _uniform_ball(rng, radius):
    direction = rng.normal(size=3)
    norm = np.linalg.norm(direction)
    if radius == 0.0 or norm == 0.0:
        return np.zeros(3)
    return direction / norm * radius * rng.uniform() ** (1.0 / 3.0)


def sample_params(prior, rng, n_e, n_s):
    """Draw one ``FaceParams`` from ``prior`` using generator ``rng``."""
    e = prior.sigma_e * rng.normal(size=n_e)
    m = prior.sigma_m * rng.normal(size=n_s)
    p = _uniform_ball(rng, prior.pose_max)
    return FaceParams(e, p, m)


def observe(model, params, noise_sigma, rng=None, align=UNIT_ALIGNMENT):
    pts = project_2d(landmarks_3d(model, params), align)
    if noise_sigma > 0:
        pts = pts + noise_sigma * rng.normal(size=pts.shape)
    return pts


def _substream(seed, index):
    return np.random.default_rng([int(seed), int(index)])


def generate_face_dataset(model, prior, n=1000):
    """``n`` samples with ground-truth parameters and noisy 2D landmarks.

    Sample ``i`` draws from its own substream ``(prior.seed, i)`` so any
    subset can be regenerated independently.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    out = []
    for i in range(n):
        rng = _substream(prior.seed, i)
        params = sample_params(prior, rng, model.n_e, model.n_s)
        out.append(FaceSample(params, observe(model, params, prior.noise_sigma, rng)))
    return out


def default_clusters(n_e, seed=0, spread=DEFAULT_CLUSTER_SPREAD, sigma_e=1.0):
    """The seven category anchors.

    Non-neutral anchors are distinct seeded sign patterns (Hamming distance
    at least 3 apart; Gaussian directions below 6 axes) normalised to unit
    length and scaled to ``2.5 * sigma_e``.  Sign patterns keep every anchor
    component away from zero.  Neutral is the origin.
    """
    rng = np.random.default_rng([int(seed), 7919])
    patterns = []
    while len(patterns) < len(CLUSTER_LABELS) - 1:
        if n_e < 6:
            # too few axes for well-separated sign codes
            patterns.append(rng.normal(size=n_e))
            continue
        cand = rng.choice([-1.0, 1.0], size=n_e)
        if all(np.sum(cand != q) >= 3 for q in patterns):
            patterns.append(cand)
    clusters = []
    for label, pat in zip(CLUSTER_LABELS[:-1], patterns):
        anchor = pat / np.linalg.norm(pat) * ANCHOR_RADIUS * sigma_e
        clusters.append(ExpressionCluster(label, anchor, spread))
    clusters.append(ExpressionCluster("neutral", np.zeros(n_e), spread))
    return clusters


def generate_cluster_corpus(model, clusters, per_cluster=50, morph_prior=None, pose_max=0.1):
    """Labelled samples: fixed-category expressions on freshly drawn morphologies."""
    if per_cluster < 2:
        raise ValueError("per_cluster must be at least 2")
    morph_prior = morph_prior or ParamPrior()
    out = []
    for c, cluster in enumerate(clusters):
        if cluster.anchor.shape != (model.n_e,):
            raise DimensionError("cluster anchor length must equal n_e")
        for j in range(per_cluster):
            rng = np.random.default_rng([int(morph_prior.seed), 1 + c, j])
            e = cluster.anchor + cluster.spread * rng.normal(size=model.n_e)
            m = morph_prior.sigma_m * rng.normal(size=model.n_s)
            p = _uniform_ball(rng, pose_max)
            params = FaceParams(e, p, m)
            out.append(FaceSample(params, observe(model, params, morph_prior.noise_sigma, rng),
                                  label=cluster.label))
    return out


def train_test_split(items, train_frac=0.8, seed=0):
    """Deterministic shuffled split; returns ``(train, test)`` lists."""
    n = len(items)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_frac * n))
    return [items[i] for i in order[:n_train]], [items[i] for i in order[n_train:]]


def stack_observed(samples):
    return np.ascontiguousarray(np.stack([s.observed for s in samples]))


def stack_params(samples):
    return np.stack([s.params.as_vector() for s in samples])


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _sample_record(s):
    rec = dict(e=s.params.e, p=s.params.p, m=s.params.m, observed=s.observed,
               align=[s.align.s, s.align.t_x, s.align.t_y])
    if s.label is not None:
        rec["label"] = s.label
    return rec


def save_dataset(samples, path, model=None, prior=None, kind="face_dataset"):
    if not samples:
        raise ValueError("refusing to write an empty dataset")
    first = samples[0]
    header = dict(kind=kind, format_version=FORMAT_VERSION, n=len(samples),
                  N=int(first.observed.shape[0]), n_e=int(first.params.e.shape[0]),
                  n_s=int(first.params.m.shape[0]),
                  model_seed=None if model is None else model.seed,
                  prior=None if prior is None else asdict(prior))
    write_jsonl(path, header, [_sample_record(s) for s in samples])


def load_dataset(path, kind=None):
    header, records = read_jsonl(path, kind=kind)
    samples = []
    try:
        for rec in records:
            params = FaceParams(rec["e"], rec["p"], rec["m"])
            observed = np.asarray(rec["observed"], dtype=np.float64)
            if observed.shape != (header["N"], 2) or params.e.shape != (header["n_e"],) \
                    or params.m.shape != (header["n_s"],):
                raise ValueError("record dimensions disagree with header")
            s, tx, ty = rec.get("align", [1.0, 0.0, 0.0])
            samples.append(FaceSample(params, observed, rec.get("label"), Alignment(s, tx, ty)))
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedFileError(f"{path}: bad sample record ({exc})") from exc
    return samples


def load_dataset_header(path):
    return read_jsonl(path)[0]
