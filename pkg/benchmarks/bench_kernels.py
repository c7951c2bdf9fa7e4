"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 50] [--epochs 5] [--json out.json]

The last row trains a small EDM in a subprocess under each backend
(``FACEIMIT_BACKEND=numba|numpy``) so the whole training loop is compared.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from faceimit import _kernels as K
from faceimit.headmodel import build_head_model

TRAIN_SNIPPET = """
import time
from faceimit.edm import EDMTrainConfig, train_edm
from faceimit.headmodel import build_head_model
from faceimit.synthdata import ParamPrior, generate_face_dataset
model = build_head_model(seed=7)
data = generate_face_dataset(model, ParamPrior(seed=1), n=800)
train_edm(data[:32], model, EDMTrainConfig(epochs=1))  # warm up / compile
t0 = time.perf_counter()
train_edm(data, model, EDMTrainConfig(epochs={epochs}))
print(time.perf_counter() - t0)
"""


def best_of(fn, repeat):
    fn()  # first call compiles
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    model = build_head_model(seed=7)
    blocks = model.landmark_blocks()
    params = 0.3 * rng.normal(size=(16, model.n_params))
    observed = rng.normal(size=(16, model.N, 2))
    train = rng.normal(size=(800, 10))
    query = rng.normal(size=(200, 10))

    def adam(fn):
        p = rng.normal(size=(256, 256))
        g = rng.normal(size=p.shape)
        m, v = np.zeros_like(p), np.zeros_like(p)
        return lambda: fn(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 1)

    return [
        ("landmark_objective (B=16)",
         lambda: K.landmark_objective_numpy(params, observed, *blocks),
         lambda: K.landmark_objective_numba(params, observed, *blocks)),
        ("adam_update (256x256)", adam(K.adam_update_numpy), adam(K.adam_update_numba)),
        ("nearest_index (800 x 200)",
         lambda: K.nearest_index_numpy(train, query),
         lambda: K.nearest_index_numba(train, query)),
    ]


def train_time(backend, epochs):
    env = dict(os.environ, FACEIMIT_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(epochs=epochs)],
                         env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=5, help="EDM epochs for the end-to-end row")
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1

    results = []
    for name, np_fn, nb_fn in kernel_rows(args.repeat):
        results.append(dict(name=name, numpy=best_of(np_fn, args.repeat), numba=best_of(nb_fn, args.repeat)))
    results.append(dict(name=f"train_edm ({args.epochs} epochs, 800 samples)",
                        numpy=train_time("numpy", args.epochs), numba=train_time("numba", args.epochs)))

    print(f"{'kernel':40s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for r in results:
        print(f"{r['name']:40s} {1e3 * r['numpy']:12.3f} {1e3 * r['numba']:12.3f} "
              f"{r['numpy'] / r['numba']:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(dict(format_version=1, kind="benchmark", results=results), fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
