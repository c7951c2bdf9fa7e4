"""Hot inner loops, each in a numba and a pure-numpy flavour.

The active backend is picked once at import time:

* ``FACEIMIT_BACKEND=numpy`` forces the numpy path,
* ``FACEIMIT_BACKEND=numba`` (default) uses numba when it imports, and
  falls back to numpy with a warning otherwise.

Both flavours are always importable as ``*_numpy`` / ``*_numba`` so the test
suite and ``benchmarks/bench_kernels.py`` can compare them directly.
"""
import os
import warnings

import numpy as np

_requested = os.environ.get("FACEIMIT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"FACEIMIT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    if _requested == "numba":
        warnings.warn("numba could not be imported, using the numpy kernels")

BACKEND = "numba" if (HAVE_NUMBA and _requested == "numba") else "numpy"

MIN_SCALE = 1e-6
_SMALL_ANGLE = 1e-6


# ---------------------------------------------------------------------------
# rotation helpers
# ---------------------------------------------------------------------------

def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rodrigues(p):
    """Rotation matrix for the axis-angle vector ``p`` (radians)."""
    p = np.asarray(p, dtype=np.float64)
    theta2 = float(p @ p)
    K = _skew(p)
    if theta2 < _SMALL_ANGLE ** 2:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def rodrigues_jacobian(p):
    """Return ``(R, dR)`` with ``dR[j] = dR/dp_j``.

    Uses the closed form of Gallego & Yezzi away from the origin and a
    second-order expansion below 1e-6 rad.
    """
    p = np.asarray(p, dtype=np.float64)
    R = rodrigues(p)
    theta2 = float(p @ p)
    eye = np.eye(3)
    dR = np.empty((3, 3, 3))
    if theta2 < _SMALL_ANGLE ** 2:
        K = _skew(p)
        for j in range(3):
            Ej = _skew(eye[j])
            dR[j] = Ej + 0.5 * (Ej @ K + K @ Ej)
        return R, dR
    K = _skew(p)
    I_R = eye - R
    for j in range(3):
        w = np.cross(p, I_R[:, j])
        dR[j] = (p[j] * K + _skew(w)) @ R / theta2
    return R, dR


# ---------------------------------------------------------------------------
# landmark objective: decode -> rotate -> project -> align -> L1
# ---------------------------------------------------------------------------

def landmark_objective_numpy(params, observed, tmpl_lm, shape_lm, expr_lm):
    """Per-sample L1 landmark loss and its gradient w.r.t. ``(e, p, m)``.

    ``params`` is ``(B, n_e + 3 + n_s)`` laid out as ``[e | p | m]``;
    ``observed`` is ``(B, N, 2)``; the head-model blocks are already gathered
    at the landmark indices (``tmpl_lm`` ``(N, 3)``, ``shape_lm``
    ``(n_s, N, 3)``, ``expr_lm`` ``(n_e, N, 3)``).

    The similarity alignment is solved in closed form per sample and held
    constant for the gradient.  Returns ``(loss (B,), grad (B, P),
    align (B, 3))`` where ``align`` rows are ``(s, t_x, t_y)``.
    """
    params = np.asarray(params, dtype=np.float64)
    B = params.shape[0]
    n_e = expr_lm.shape[0]
    n_s = shape_lm.shape[0]
    e = params[:, :n_e]
    p = params[:, n_e:n_e + 3]
    m = params[:, n_e + 3:]

    X = (tmpl_lm[None]
         + np.einsum("bk,kni->bni", m, shape_lm)
         + np.einsum("bk,kni->bni", e, expr_lm))
    R = np.empty((B, 3, 3))
    dR = np.empty((B, 3, 3, 3))
    for b in range(B):
        R[b], dR[b] = rodrigues_jacobian(p[b])
    pred = np.einsum("bij,bnj->bni", R[:, :2, :], X)

    obs_mean = observed.mean(axis=1, keepdims=True)
    pred_mean = pred.mean(axis=1, keepdims=True)
    oc = observed - obs_mean
    pc = pred - pred_mean
    den = np.einsum("bni,bni->b", pc, pc)
    num = np.einsum("bni,bni->b", oc, pc)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), MIN_SCALE)
    s = np.maximum(s, MIN_SCALE)
    t = obs_mean[:, 0, :] - s[:, None] * pred_mean[:, 0, :]

    resid = observed - (s[:, None, None] * pred + t[:, None, :])
    loss = np.abs(resid).sum(axis=(1, 2))
    g = -s[:, None, None] * np.sign(resid)

    G3 = np.einsum("bna,bai->bni", g, R[:, :2, :])
    grad = np.empty_like(params)
    grad[:, :n_e] = np.einsum("bni,kni->bk", G3, expr_lm)
    grad[:, n_e + 3:] = np.einsum("bni,kni->bk", G3, shape_lm) if n_s else 0.0
    grad[:, n_e:n_e + 3] = np.einsum("bna,bjai,bni->bj", g, dR[:, :, :2, :], X)
    align = np.stack([s, t[:, 0], t[:, 1]], axis=1)
    return loss, grad, align


@njit(cache=True)
def _rot_and_jac_nb(p, R, dR):
    theta2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
    K = np.zeros((3, 3))
    K[0, 1] = -p[2]
    K[0, 2] = p[1]
    K[1, 0] = p[2]
    K[1, 2] = -p[0]
    K[2, 0] = -p[1]
    K[2, 1] = p[0]
    KK = K @ K
    if theta2 < _SMALL_ANGLE * _SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    for i in range(3):
        for j in range(3):
            R[i, j] = a * K[i, j] + b * KK[i, j]
        R[i, i] += 1.0
    Ej = np.zeros((3, 3))
    for j in range(3):
        Ej[:, :] = 0.0
        # skew of the j-th unit vector
        if j == 0:
            Ej[1, 2] = -1.0
            Ej[2, 1] = 1.0
        elif j == 1:
            Ej[0, 2] = 1.0
            Ej[2, 0] = -1.0
        else:
            Ej[0, 1] = -1.0
            Ej[1, 0] = 1.0
        if theta2 < _SMALL_ANGLE * _SMALL_ANGLE:
            D = Ej + 0.5 * (Ej @ K + K @ Ej)
        else:
            # w = p x (I - R)[:, j]
            c0 = -R[0, j]
            c1 = -R[1, j]
            c2 = -R[2, j]
            if j == 0:
                c0 += 1.0
            elif j == 1:
                c1 += 1.0
            else:
                c2 += 1.0
            w0 = p[1] * c2 - p[2] * c1
            w1 = p[2] * c0 - p[0] * c2
            w2 = p[0] * c1 - p[1] * c0
            W = np.zeros((3, 3))
            W[0, 1] = -w2
            W[0, 2] = w1
            W[1, 0] = w2
            W[1, 2] = -w0
            W[2, 0] = -w1
            W[2, 1] = w0
            D = (p[j] * K + W) @ R / theta2
        for r in range(3):
            for c in range(3):
                dR[j, r, c] = D[r, c]


@njit(cache=True)
def landmark_objective_numba(params, observed, tmpl_lm, shape_lm, expr_lm):
    B = params.shape[0]
    N = tmpl_lm.shape[0]
    n_e = expr_lm.shape[0]
    n_s = shape_lm.shape[0]
    loss = np.zeros(B)
    grad = np.zeros(params.shape)
    align = np.zeros((B, 3))
    X = np.empty((N, 3))
    pred = np.empty((N, 2))
    g = np.empty((N, 2))
    G3 = np.empty((N, 3))
    R = np.empty((3, 3))
    dR = np.empty((3, 3, 3))
    for b in range(B):
        for n in range(N):
            for i in range(3):
                acc = tmpl_lm[n, i]
                for k in range(n_s):
                    acc += params[b, n_e + 3 + k] * shape_lm[k, n, i]
                for k in range(n_e):
                    acc += params[b, k] * expr_lm[k, n, i]
                X[n, i] = acc
        _rot_and_jac_nb(params[b, n_e:n_e + 3], R, dR)
        mo0 = 0.0
        mo1 = 0.0
        mp0 = 0.0
        mp1 = 0.0
        for n in range(N):
            x0 = R[0, 0] * X[n, 0] + R[0, 1] * X[n, 1] + R[0, 2] * X[n, 2]
            x1 = R[1, 0] * X[n, 0] + R[1, 1] * X[n, 1] + R[1, 2] * X[n, 2]
            pred[n, 0] = x0
            pred[n, 1] = x1
            mp0 += x0
            mp1 += x1
            mo0 += observed[b, n, 0]
            mo1 += observed[b, n, 1]
        mo0 /= N
        mo1 /= N
        mp0 /= N
        mp1 /= N
        num = 0.0
        den = 0.0
        for n in range(N):
            pc0 = pred[n, 0] - mp0
            pc1 = pred[n, 1] - mp1
            num += (observed[b, n, 0] - mo0) * pc0 + (observed[b, n, 1] - mo1) * pc1
            den += pc0 * pc0 + pc1 * pc1
        s = num / den if den > 0.0 else MIN_SCALE
        if s < MIN_SCALE:
            s = MIN_SCALE
        tx = mo0 - s * mp0
        ty = mo1 - s * mp1
        total = 0.0
        for n in range(N):
            r0 = observed[b, n, 0] - (s * pred[n, 0] + tx)
            r1 = observed[b, n, 1] - (s * pred[n, 1] + ty)
            total += abs(r0) + abs(r1)
            g[n, 0] = -s * np.sign(r0)
            g[n, 1] = -s * np.sign(r1)
            for i in range(3):
                G3[n, i] = g[n, 0] * R[0, i] + g[n, 1] * R[1, i]
        loss[b] = total
        for k in range(n_e):
            acc = 0.0
            for n in range(N):
                for i in range(3):
                    acc += G3[n, i] * expr_lm[k, n, i]
            grad[b, k] = acc
        for k in range(n_s):
            acc = 0.0
            for n in range(N):
                for i in range(3):
                    acc += G3[n, i] * shape_lm[k, n, i]
            grad[b, n_e + 3 + k] = acc
        for j in range(3):
            acc = 0.0
            for n in range(N):
                for a in range(2):
                    acc += g[n, a] * (dR[j, a, 0] * X[n, 0] + dR[j, a, 1] * X[n, 1]
                                      + dR[j, a, 2] * X[n, 2])
            grad[b, n_e + j] = acc
        align[b, 0] = s
        align[b, 1] = tx
        align[b, 2] = ty
    return loss, grad, align


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def adam_update_numpy(param, grad, m, v, lr, beta1, beta2, eps, t):
    """In-place bias-corrected Adam update of one parameter array."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@njit(cache=True)
def _adam_flat_nb(param, grad, m, v, lr, beta1, beta2, eps, t):
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i in range(param.size):
        gi = grad[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        param[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


def adam_update_numba(param, grad, m, v, lr, beta1, beta2, eps, t):
    _adam_flat_nb(param.reshape(-1), np.ascontiguousarray(grad).reshape(-1),
                  m.reshape(-1), v.reshape(-1), lr, beta1, beta2, eps, float(t))


# ---------------------------------------------------------------------------
# nearest neighbour
# ---------------------------------------------------------------------------

def nearest_index_numpy(train, query, chunk=256):
    """Index of the Euclidean-nearest training row per query row.

    Distances are formed as sums of squared differences so exact duplicates
    give exact zeros; ``argmin`` returns the lowest index on ties.
    """
    out = np.empty(query.shape[0], dtype=np.int64)
    for lo in range(0, query.shape[0], chunk):
        q = query[lo:lo + chunk]
        d = ((q[:, None, :] - train[None, :, :]) ** 2).sum(axis=2)
        out[lo:lo + chunk] = np.argmin(d, axis=1)
    return out


@njit(cache=True)
def nearest_index_numba(train, query):
    M, D = train.shape
    out = np.empty(query.shape[0], dtype=np.int64)
    for q in range(query.shape[0]):
        best = np.inf
        arg = 0
        for i in range(M):
            d = 0.0
            for k in range(D):
                diff = query[q, k] - train[i, k]
                d += diff * diff
            if d < best:
                best = d
                arg = i
        out[q] = arg
    return out


if BACKEND == "numba":
    landmark_objective = landmark_objective_numba
    adam_update = adam_update_numba
    nearest_index = nearest_index_numba
else:
    landmark_objective = landmark_objective_numpy
    adam_update = adam_update_numpy
    nearest_index = nearest_index_numpy
