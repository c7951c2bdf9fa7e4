"""Procedural linear head model, weak-perspective projection and landmark loss.

The model has the usual morphable-model structure::

    V(e, p, m) = R(p) @ (template + sum_k m_k S_k + sum_k e_k E_k)

with ``S`` the shape (morphology) blendshapes, ``E`` the expression
blendshapes and ``R(p)`` an axis-angle rotation.  Instead of a scanned
template the mesh is a deterministic ellipsoid cap; the blendshapes are
seeded smooth displacement fields, orthonormalised jointly and scaled by a
geometric spectrum.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from ._jsonio import FORMAT_VERSION, read_json, write_json
from ._kernels import MIN_SCALE, rodrigues
from .errors import DegenerateAlignmentError, DimensionError, MalformedFileError

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
ELLIPSOID_AXES = (0.75, 1.0, 0.6)
CAP_MIN_Z = 0.25

DEFAULT_DIMS = dict(n_v=512, n_s=8, n_e=10, N=68)


@dataclass(frozen=True, eq=False)
class HeadModel:
    seed: int
    template: np.ndarray          # (n_v, 3)
    shape_basis: np.ndarray       # (n_s, n_v, 3)
    expr_basis: np.ndarray        # (n_e, n_v, 3)
    landmark_indices: np.ndarray  # (N,)
    faces: np.ndarray             # (F, 3), connectivity only
    sigma0: float = 1.5
    rho: float = 0.93

    @property
    def n_v(self):
        return self.template.shape[0]

    @property
    def n_s(self):
        return self.shape_basis.shape[0]

    @property
    def n_e(self):
        return self.expr_basis.shape[0]

    @property
    def N(self):
        return self.landmark_indices.shape[0]

    @property
    def n_params(self):
        return self.n_e + 3 + self.n_s

    def dims(self):
        return dict(n_v=self.n_v, n_s=self.n_s, n_e=self.n_e, N=self.N)

    def landmark_blocks(self):
        """Template and bases gathered at the landmarks, C-contiguous."""
        idx = self.landmark_indices
        return (np.ascontiguousarray(self.template[idx]),
                np.ascontiguousarray(self.shape_basis[:, idx]),
                np.ascontiguousarray(self.expr_basis[:, idx]))

    def same_as(self, other):
        return (self.seed == other.seed and self.dims() == other.dims()
                and np.array_equal(self.template, other.template)
                and np.array_equal(self.shape_basis, other.shape_basis)
                and np.array_equal(self.expr_basis, other.expr_basis)
                and np.array_equal(self.landmark_indices, other.landmark_indices))


@dataclass
class FaceParams:
    """Expression ``e``, axis-angle pose ``p`` (radians) and morphology ``m``."""
    e: np.ndarray
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    m: np.ndarray = None

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.m is None:
            self.m = np.zeros(0)
        self.m = np.asarray(self.m, dtype=np.float64)
        if self.p.shape != (3,):
            raise DimensionError(f"pose must have 3 components, got {self.p.shape}")
        vec = self.as_vector()
        if not np.all(np.isfinite(vec)):
            raise ValueError("face parameters must be finite")
        if np.linalg.norm(self.p) > np.pi + 1e-12:
            raise ValueError("pose angle exceeds pi")

    @classmethod
    def zeros(cls, n_e, n_s):
        return cls(np.zeros(n_e), np.zeros(3), np.zeros(n_s))

    @classmethod
    def from_vector(cls, vec, n_e, n_s):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (n_e + 3 + n_s,):
            raise DimensionError(f"expected {n_e + 3 + n_s} parameters, got {vec.shape}")
        return cls(vec[:n_e].copy(), vec[n_e:n_e + 3].copy(), vec[n_e + 3:].copy())

    def as_vector(self):
        return np.concatenate([self.e, self.p, self.m])


@dataclass(frozen=True)
class Alignment:
    s: float = 1.0
    t_x: float = 0.0
    t_y: float = 0.0


UNIT_ALIGNMENT = Alignment()


def _template_points(n_v):
    """Mirror-symmetric ellipsoid cap facing +z.

    Right-half points follow a golden-angle spiral of equal-area rings; the
    left half is their x-mirror.  An odd vertex count adds the cap apex.
    """
    n_half = n_v // 2
    i = np.arange(n_half) + 0.5
    cos_t = 1.0 - (i / n_half) * (1.0 - CAP_MIN_Z)
    sin_t = np.sqrt(1.0 - cos_t ** 2)
    phi = np.mod(np.arange(n_half) * GOLDEN_ANGLE, np.pi) - np.pi / 2
    # keep strictly off the midline so mirrored pairs never coincide
    phi = np.clip(phi, -np.pi / 2 + 1e-3, np.pi / 2 - 1e-3)
    u = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
    right = u * np.asarray(ELLIPSOID_AXES)
    left = right * np.array([-1.0, 1.0, 1.0])
    pts = [right, left]
    if n_v % 2:
        pts.append(np.array([[0.0, 0.0, ELLIPSOID_AXES[2]]]))
    return np.concatenate(pts, axis=0)


def _landmark_layout(n_v, N):
    """``N//2`` right-half vertices, evenly spaced along the spiral, plus mirrors."""
    n_half = n_v // 2
    k = N // 2
    right = np.unique(np.round(np.linspace(0, n_half - 1, k)).astype(np.int64)) if k else np.zeros(0, np.int64)
    idx = list(right) + list(right + n_half)
    if N % 2:
        if n_v % 2:
            idx.append(n_v - 1)
        else:
            spare = np.setdiff1d(np.arange(n_half), right)
            idx.append(int(spare[len(spare) // 2]))
    return np.asarray(idx, dtype=np.int64)


def _smooth_fields(rng, template, count, width, n_bumps=6):
    """Sums of Gaussian bumps with random centres and 3D directions."""
    n_v = template.shape[0]
    fields = np.zeros((count, n_v, 3))
    for c in range(count):
        centres = template[rng.choice(n_v, size=n_bumps, replace=False)]
        dirs = rng.normal(size=(n_bumps, 3))
        d2 = ((template[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
        w = np.exp(-d2 / (2.0 * width ** 2))
        fields[c] = w @ dirs
    return fields


def build_head_model(seed=7, n_v=512, n_s=8, n_e=10, N=68, sigma0=1.5, rho=0.93):
    """Build the deterministic head model used as the fixed decoder.

    Shape fields are broad (bump width 0.5) and expression fields local
    (0.25).  All ``n_s + n_e`` fields are orthonormalised together, shape
    first, and field ``k`` of the joint stack is scaled by ``sigma0 * rho**k``.
    """
    if N < 4:
        raise ValueError("need at least 4 landmarks")
    if n_v < N:
        raise ValueError(f"vertex count {n_v} is smaller than landmark count {N}")
    if n_s < 1 or n_e < 1:
        raise ValueError("n_s and n_e must be at least 1")
    if n_s + n_e + 3 > 2 * N:
        raise ValueError(
            f"{n_s} + {n_e} + 3 parameters are not identifiable from {2 * N} landmark coordinates")
    if not (0.0 < rho < 1.0) or sigma0 <= 0.0:
        raise ValueError("spectrum needs sigma0 > 0 and 0 < rho < 1")

    template = _template_points(n_v)
    landmarks = _landmark_layout(n_v, N)
    rng = np.random.default_rng(seed)
    raw = np.concatenate([_smooth_fields(rng, template, n_s, width=0.5),
                          _smooth_fields(rng, template, n_e, width=0.25)])
    q, r = np.linalg.qr(raw.reshape(n_s + n_e, -1).T)
    q = q * np.sign(np.diag(r))  # fixed sign: positive overlap with the raw field
    spectrum = sigma0 * rho ** np.arange(n_s + n_e)
    bases = (q.T * spectrum[:, None]).reshape(n_s + n_e, n_v, 3)
    faces = Delaunay(template[:, :2]).simplices.astype(np.int64)
    return HeadModel(seed=int(seed), template=template,
                     shape_basis=np.ascontiguousarray(bases[:n_s]),
                     expr_basis=np.ascontiguousarray(bases[n_s:]),
                     landmark_indices=landmarks, faces=faces,
                     sigma0=float(sigma0), rho=float(rho))


def _check_params(model, params):
    if params.e.shape != (model.n_e,) or params.m.shape != (model.n_s,):
        raise DimensionError(
            f"params have n_e={params.e.shape[0]}, n_s={params.m.shape[0]}; "
            f"model expects n_e={model.n_e}, n_s={model.n_s}")


def mesh_vertices(model, params):
    """All ``n_v`` posed vertices for ``params``."""
    _check_params(model, params)
    V = (model.template
         + np.tensordot(params.m, model.shape_basis, axes=1)
         + np.tensordot(params.e, model.expr_basis, axes=1))
    return V @ rodrigues(params.p).T


def landmarks_3d(model, params):
    return mesh_vertices(model, params)[model.landmark_indices]


def project_2d(pts3d, align=UNIT_ALIGNMENT):
    """Weak-perspective projection: scale and shift x, y; drop z."""
    if not align.s > 0:
        raise ValueError(f"projection scale must be positive, got {align.s}")
    pts3d = np.asarray(pts3d, dtype=np.float64)
    return align.s * pts3d[..., :2] + np.array([align.t_x, align.t_y])


def solve_alignment(observed, predicted):
    """Least-squares scale + translation taking ``predicted`` onto ``observed``."""
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if observed.shape != predicted.shape or observed.ndim != 2 or observed.shape[1] != 2:
        raise DimensionError(f"landmark shapes differ: {observed.shape} vs {predicted.shape}")
    mo = observed.mean(axis=0)
    mp = predicted.mean(axis=0)
    pc = predicted - mp
    den = float((pc * pc).sum())
    if den == 0.0:
        raise DegenerateAlignmentError("predicted landmarks are all coincident")
    s = max(float(((observed - mo) * pc).sum()) / den, MIN_SCALE)
    t = mo - s * mp
    return Alignment(s, float(t[0]), float(t[1]))


def landmark_loss(observed, predicted, align):
    """Summed L1 distance between ``observed`` and aligned ``predicted`` points."""
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if observed.shape != predicted.shape:
        raise DimensionError(f"landmark shapes differ: {observed.shape} vs {predicted.shape}")
    fitted = align.s * predicted + np.array([align.t_x, align.t_y])
    return float(np.abs(observed - fitted).sum())


def canonicalize_landmarks(points):
    """Center on the centroid and divide by the RMS radius; works batched."""
    points = np.asarray(points, dtype=np.float64)
    c = points - points.mean(axis=-2, keepdims=True)
    rms = np.sqrt((c * c).sum(axis=(-2, -1), keepdims=True) / points.shape[-2])
    if np.any(rms == 0):
        raise DegenerateAlignmentError("landmarks collapse to a single point")
    return c / rms


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def head_model_to_dict(model):
    return dict(kind="head_model", format_version=FORMAT_VERSION, seed=model.seed,
                **model.dims(), sigma0=model.sigma0, rho=model.rho,
                template=model.template, shape_basis=model.shape_basis,
                expr_basis=model.expr_basis, landmark_indices=model.landmark_indices,
                faces=model.faces)


def head_model_from_dict(doc, path="<dict>"):
    try:
        model = HeadModel(
            seed=int(doc["seed"]),
            template=np.asarray(doc["template"], dtype=np.float64).reshape(doc["n_v"], 3),
            shape_basis=np.asarray(doc["shape_basis"], dtype=np.float64).reshape(doc["n_s"], doc["n_v"], 3),
            expr_basis=np.asarray(doc["expr_basis"], dtype=np.float64).reshape(doc["n_e"], doc["n_v"], 3),
            landmark_indices=np.asarray(doc["landmark_indices"], dtype=np.int64),
            faces=np.asarray(doc["faces"], dtype=np.int64).reshape(-1, 3),
            sigma0=float(doc["sigma0"]), rho=float(doc["rho"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedFileError(f"{path}: bad head model ({exc})") from exc
    if model.N != doc["N"]:
        raise MalformedFileError(f"{path}: landmark count disagrees with header")
    return model


def save_head_model(model, path):
    write_json(path, head_model_to_dict(model))


def load_head_model(path):
    return head_model_from_dict(read_json(path, kind="head_model"), path)
