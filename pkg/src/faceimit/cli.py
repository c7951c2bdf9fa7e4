"""Command-line front end: ``faceimit {gen,train,eval,repro}``.

Every command works inside one output directory (``--out``).  The resolved
run configuration is stored there as ``config.json`` and reused by later
commands, so ``gen``, ``train`` and ``eval`` can be run step by step or all
at once through ``repro``.
"""
import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from ._jsonio import FORMAT_VERSION, write_json
from .edm import EDMTrainConfig, load_edm, save_edm, train_edm
from .errors import DimensionError
from .etm import ETMTrainConfig, load_decoder, load_encoder, save_decoder, save_encoder, train_decoder, train_encoder
from .evalkit import (TABLE1_REFERENCE, TABLE2_REFERENCE, TABLE3_REFERENCE, end_to_end_imitation,
                      expression_fidelity, pca_embed_2d, reachability_floor, reachable_human_faces, table1_cv,
                      table2_representation, table3_comparison)
from .headmodel import build_head_model, load_head_model, save_head_model
from .robotsim import build_rig, collect_robot_dataset, load_pairs, load_rig, save_pairs, save_rig
from .synthdata import (ParamPrior, default_clusters, generate_cluster_corpus, generate_face_dataset,
                        load_dataset, save_dataset, train_test_split)

log = logging.getLogger("faceimit")

SEED_NAMES = ("model", "data", "rig", "training", "eval")

DEFAULT_CONFIG = {
    "master_seed": 0,
    "seeds": {},
    "model": {"n_v": 512, "n_s": 8, "n_e": 10, "N": 68},
    "prior": {"sigma_e": 1.0, "sigma_m": 1.0, "pose_max": 0.3, "noise_sigma": 0.005},
    "dataset": {"n": 1000, "train_frac": 0.8},
    "clusters": {"per_cluster": 50, "spread": 0.2, "pose_max": 0.1},
    "rig": {"n_act": 22, "raw_min": -1000.0, "raw_max": 1000.0},
    "pairs": {"n": 1000, "train_frac": 0.8, "noise_sigma": 0.005},
    "edm": {"epochs": 500, "lr": 1e-4, "batch": 16, "hidden": [256, 256]},
    "etm": {"epochs": 300, "lr": 1e-3, "batch": 32, "lam": 1.0, "hidden": [128, 128]},
    "imitate": {"n": 20, "pose_max": 0.05},
}

FILES = {
    "model": "model.json", "dataset": "dataset.jsonl", "clusters": "clusters.jsonl",
    "rig": "rig.json", "pairs": "robot_pairs.jsonl", "edm": "edm.json",
    "edm_trace": "edm_trace.csv", "etm-dec": "etm_dec.json", "etm-dec_trace": "etm_dec_trace.csv",
    "etm-enc": "etm_enc.json", "etm-enc_trace": "etm_enc_trace.csv",
    "table1": "table1.csv", "table2": "table2.csv", "table3": "table3.csv",
    "imitate": "imitate.csv", "embed_landmark": "embed_landmark.csv",
    "embed_expression": "embed_expression.csv", "report": "report.json",
    "manifest": "manifest.json", "config": "config.json",
}


class UsageError(Exception):
    pass


class CommandError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def derive_seeds(master):
    state = np.random.SeedSequence(int(master)).generate_state(len(SEED_NAMES))
    return {name: int(s) for name, s in zip(SEED_NAMES, state)}


def resolve_config(args):
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    stored = Path(args.out) / FILES["config"]
    if stored.exists():
        cfg = _merge(cfg, json.loads(stored.read_text()).get("config", {}))
    if args.config:
        try:
            cfg = _merge(cfg, json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"cannot read config {args.config}: {exc}") from exc
    if args.seed is not None:
        cfg["master_seed"] = args.seed
        cfg["seeds"] = {}
    seeds = derive_seeds(cfg["master_seed"])
    seeds.update({k: int(v) for k, v in cfg.get("seeds", {}).items()})
    cfg["seeds"] = seeds
    return cfg


def _meta(cfg):
    return {"format_version": FORMAT_VERSION, "seeds": cfg["seeds"], "faceimit": __version__}


def _prior(cfg, seed):
    return ParamPrior(seed=seed, **cfg["prior"])


def _edm_cfg(cfg):
    c = cfg["edm"]
    return EDMTrainConfig(epochs=int(c["epochs"]), lr=float(c["lr"]), batch=int(c["batch"]),
                          hidden=tuple(c["hidden"]), seed=cfg["seeds"]["training"])


def _etm_cfg(cfg):
    c = cfg["etm"]
    return ETMTrainConfig(epochs=int(c["epochs"]), lr=float(c["lr"]), batch=int(c["batch"]),
                          lam=float(c["lam"]), hidden=tuple(c["hidden"]),
                          seed=cfg["seeds"]["training"])


class Run:
    """Output directory plus resolved config; guards overwrites."""

    def __init__(self, args, cfg):
        self.out = Path(args.out)
        self.cfg = cfg
        self.force = args.force
        self.resume = args.resume
        self.out.mkdir(parents=True, exist_ok=True)
        write_json(self.out / FILES["config"], dict(_meta(cfg), kind="run_config", config=cfg))

    def path(self, key):
        return self.out / FILES[key]

    def writable(self, key):
        """Return the path for ``key``; refuse to clobber unless ``--force``."""
        p = self.path(key)
        if p.exists() and not self.force:
            raise CommandError(f"{p} exists; pass --force to overwrite")
        return p

    def need(self, key, hint):
        p = self.path(key)
        if not p.exists():
            raise CommandError(f"missing {p}; run `faceimit {hint}` first")
        return p

    def skip(self, key):
        return self.resume and self.path(key).exists()


def stamp(path, cfg):
    """Add ``seeds`` to a JSON artifact or to the header line of a JSONL one."""
    path = Path(path)
    if path.suffix == ".jsonl":
        first, rest = path.read_text().split("\n", 1)
        head = json.loads(first)
        head["meta"]["seeds"] = cfg["seeds"]
        path.write_text(json.dumps(head) + "\n" + rest)
    else:
        doc = json.loads(path.read_text())
        doc["seeds"] = cfg["seeds"]
        write_json(path, doc)


def _write_csv(path, meta, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# artifact loading with cross checks
# ---------------------------------------------------------------------------

def _model(run):
    model = load_head_model(run.need("model", "gen model"))
    want = run.cfg["model"]
    if model.dims() != {k: want[k] for k in ("n_v", "n_s", "n_e", "N")}:
        raise DimensionError(f"model.json dims {model.dims()} differ from config {want}")
    return model


def _edm(run, model):
    edm = load_edm(run.need("edm", "train edm"))
    if edm.model_seed != model.seed or (edm.n_e, edm.n_s, edm.N) != (model.n_e, model.n_s, model.N):
        raise DimensionError(
            f"edm.json was trained for model seed {edm.model_seed} "
            f"(n_e={edm.n_e}, n_s={edm.n_s}, N={edm.N}); model.json has seed {model.seed} "
            f"(n_e={model.n_e}, n_s={model.n_s}, N={model.N})")
    return edm


def _rig(run, model):
    rig = load_rig(run.need("rig", "gen rig"))
    if (rig.n_e, rig.n_s) != (model.n_e, model.n_s):
        raise DimensionError("rig.json expression/morphology sizes differ from model.json")
    return rig


def _pair_split(run):
    pairs = load_pairs(run.need("pairs", "gen pairs"))
    c = run.cfg["pairs"]
    return train_test_split(pairs, c["train_frac"], seed=run.cfg["seeds"]["data"] + 1)


def _face_split(run, model):
    samples = load_dataset(run.need("dataset", "gen dataset"))
    if samples[0].observed.shape[0] != model.N or samples[0].params.e.shape[0] != model.n_e \
            or samples[0].params.m.shape[0] != model.n_s:
        raise DimensionError("dataset.jsonl dimensions differ from model.json")
    return train_test_split(samples, run.cfg["dataset"]["train_frac"], seed=run.cfg["seeds"]["data"])


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def gen_model(run):
    c = run.cfg["model"]
    model = build_head_model(seed=run.cfg["seeds"]["model"], **c)
    save_head_model(model, run.writable("model"))
    stamp(run.path("model"), run.cfg)
    print(f"model: n_v={model.n_v} n_s={model.n_s} n_e={model.n_e} N={model.N} "
          f"seed={model.seed} -> {run.path('model')}")


def gen_dataset(run, n=None):
    model = _model(run)
    n = run.cfg["dataset"]["n"] if n is None else n
    prior = _prior(run.cfg, run.cfg["seeds"]["data"])
    samples = generate_face_dataset(model, prior, n)
    save_dataset(samples, run.writable("dataset"), model, prior)
    stamp(run.path("dataset"), run.cfg)
    print(f"dataset: {len(samples)} samples, model seed={model.seed}, data seed={prior.seed} "
          f"-> {run.path('dataset')}")


def gen_clusters(run, per_cluster=None):
    model = _model(run)
    c = run.cfg["clusters"]
    per = c["per_cluster"] if per_cluster is None else per_cluster
    seed = run.cfg["seeds"]["data"] + 2
    clusters = default_clusters(model.n_e, seed=seed, spread=c["spread"],
                                sigma_e=run.cfg["prior"]["sigma_e"])
    corpus = generate_cluster_corpus(model, clusters, per, _prior(run.cfg, seed), c["pose_max"])
    save_dataset(corpus, run.writable("clusters"), model, _prior(run.cfg, seed), kind="cluster_corpus")
    stamp(run.path("clusters"), run.cfg)
    print(f"clusters: {len(clusters)} x {per} = {len(corpus)} samples, seed={seed} "
          f"-> {run.path('clusters')}")


def gen_rig(run):
    model = _model(run)
    c = run.cfg["rig"]
    rig = build_rig(run.cfg["seeds"]["rig"], model.n_e, model.n_s, c["n_act"],
                    run.cfg["prior"]["sigma_e"], run.cfg["prior"]["sigma_m"],
                    (c["raw_min"], c["raw_max"]))
    save_rig(rig, run.writable("rig"))
    stamp(run.path("rig"), run.cfg)
    print(f"rig: n_act={rig.n_act} seed={rig.seed} -> {run.path('rig')}")


def gen_pairs(run, n=None):
    model = _model(run)
    rig = _rig(run, model)
    edm = _edm(run, model)
    c = run.cfg["pairs"]
    n = c["n"] if n is None else n
    seed = run.cfg["seeds"]["rig"] + 1
    pairs = collect_robot_dataset(rig, model, edm, n, seed=seed, noise_sigma=c["noise_sigma"])
    save_pairs(pairs, run.writable("pairs"), seeds=run.cfg["seeds"])
    print(f"pairs: {len(pairs)} command/expression pairs, seed={seed} -> {run.path('pairs')}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def train_edm_cmd(run):
    model = _model(run)
    train, _ = _face_split(run, model)
    cfg = _edm_cfg(run.cfg)
    print(f"train edm: epochs={cfg.epochs} lr={cfg.lr} batch={cfg.batch} on {len(train)} samples")
    out = run.writable("edm")
    t0 = time.time()
    edm = train_edm(train, model, cfg,
                    on_epoch=lambda e, l: log.info("edm epoch %d loss %.6f", e + 1, l))
    save_edm(edm, out)
    stamp(out, run.cfg)
    _write_csv(run.path("edm_trace"), _meta(run.cfg), ["epoch", "mean_landmark_loss"],
               [[i + 1, _fmt(v)] for i, v in enumerate(edm.trace)])
    final = edm.trace[-1] if len(edm.trace) else float("nan")
    print(f"edm: final mean loss {final:.6f} ({time.time() - t0:.1f}s) -> {out}")


def train_dec_cmd(run):
    train, _ = _pair_split(run)
    cfg = _etm_cfg(run.cfg)
    print(f"train etm-dec: epochs={cfg.epochs} lr={cfg.lr} batch={cfg.batch} on {len(train)} pairs")
    out = run.writable("etm-dec")
    dec = train_decoder(train, cfg)
    save_decoder(dec, out, cfg)
    stamp(out, run.cfg)
    _write_csv(run.path("etm-dec_trace"), _meta(run.cfg), ["epoch", "L_dec"],
               [[i + 1, _fmt(v)] for i, v in enumerate(dec.trace["L_dec"])])
    print(f"etm-dec: final L_dec {dec.trace['L_dec'][-1] if cfg.epochs else float('nan'):.6f} -> {out}")


def train_enc_cmd(run):
    train, _ = _pair_split(run)
    dec = load_decoder(run.need("etm-dec", "train etm-dec"))
    if dec.n_act != train[0].a.shape[0] or dec.n_e != train[0].e_obs.shape[0]:
        raise DimensionError("etm_dec.json dimensions differ from robot_pairs.jsonl")
    cfg = _etm_cfg(run.cfg)
    print(f"train etm-enc: epochs={cfg.epochs} lr={cfg.lr} batch={cfg.batch} lambda={cfg.lam} "
          f"on {len(train)} pairs")
    out = run.writable("etm-enc")
    enc = train_encoder(train, dec, cfg)
    save_encoder(enc, out, cfg)
    stamp(out, run.cfg)
    tr = enc.trace
    _write_csv(run.path("etm-enc_trace"), _meta(run.cfg), ["epoch", "L_com", "L_rec", "L_enc"],
               [[i + 1, _fmt(a), _fmt(b), _fmt(c)]
                for i, (a, b, c) in enumerate(zip(tr["L_com"], tr["L_rec"], tr["L_enc"]))])
    print(f"etm-enc: final L_enc {tr['L_enc'][-1] if cfg.epochs else float('nan'):.6f} -> {out}")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _update_report(run, section, payload):
    p = run.path("report")
    doc = json.loads(p.read_text()) if p.exists() else {}
    doc.update(_meta(run.cfg))
    doc["kind"] = "report"
    doc.setdefault("sections", {})[section] = payload
    write_json(p, doc)


def eval_table1(run):
    model = _model(run)
    edm = _edm(run, model)
    corpus = load_dataset(run.need("clusters", "gen clusters"), kind="cluster_corpus")
    rows = table1_cv(edm, corpus)
    labels = list(next(iter(rows.values())))
    _write_csv(run.writable("table1"), _meta(run.cfg), ["Representation", *labels],
               [[name, *(f"{vals[c]:.6f}" for c in labels)] for name, vals in rows.items()])
    wins = sum(rows["morphology-independent"][c] < rows["landmark-based"][c] for c in labels)
    _update_report(run, "table1", dict(cv=rows, categories_improved=wins, reference=TABLE1_REFERENCE))
    print(f"table1: expression code has lower CV in {wins}/{len(labels)} categories -> {run.path('table1')}")
    return rows


def eval_table2(run):
    model = _model(run)
    edm = _edm(run, model)
    _, test = _face_split(run, model)
    rows = table2_representation(edm, test, _prior(run.cfg, 0), seed=run.cfg["seeds"]["eval"])
    blocks = ("overall", "expression", "morphology")
    _write_csv(run.writable("table2"), _meta(run.cfg),
               ["Method", *(f"{b}_{m}" for b in blocks for m in ("MSE", "MAE"))],
               [[name, *(f"{rec[b][m]:.6f}" for b in blocks for m in ("MSE", "MAE"))]
                for name, rec in rows.items()])
    red = {b: 1.0 - rows["EDM"][b]["MSE"] / rows["RG"][b]["MSE"] for b in blocks}
    _update_report(run, "table2", dict(rows=rows, mse_reduction=red, reference=TABLE2_REFERENCE,
                                       n_test=len(test)))
    print("table2: EDM MSE reduction vs RG "
          + ", ".join(f"{b} {100 * v:.1f}%" for b, v in red.items()) + f" -> {run.path('table2')}")
    return rows


def eval_table3(run):
    train, test = _pair_split(run)
    enc = load_encoder(run.need("etm-enc", "train etm-enc"))
    dec = load_decoder(run.need("etm-dec", "train etm-dec"))
    rows = table3_comparison(train, test, enc, dec, _prior(run.cfg, 0),
                             seed=run.cfg["seeds"]["eval"], cfg=_etm_cfg(run.cfg))
    _write_csv(run.writable("table3"), _meta(run.cfg), ["Method", "MSE", "MAE"],
               [[r.method, f"{r.mse:.6f}", f"{r.mae:.6f}"] for r in rows])
    fid = expression_fidelity(train, test, enc, dec)
    _update_report(run, "table3", dict(rows=[asdict(r) for r in rows], reference=TABLE3_REFERENCE,
                                       expression_fidelity=fid, n_test=len(test)))
    for r in rows:
        print(f"table3: {r.method:12s} MSE {r.mse:.4f} MAE {r.mae:.4f}")
    return rows


def eval_imitate(run):
    model = _model(run)
    edm = _edm(run, model)
    rig = _rig(run, model)
    enc = load_encoder(run.need("etm-enc", "train etm-enc"))
    c = run.cfg["imitate"]
    humans = reachable_human_faces(model, rig, c["n"], run.cfg["seeds"]["eval"],
                              _prior(run.cfg, 0), c["pose_max"])
    rows = []
    for i, obs in enumerate(humans):
        res = end_to_end_imitation(obs, edm, enc, rig, model)
        floor = reachability_floor(obs, edm, rig, model)
        rows.append([i, f"{res['gap']:.8f}", f"{floor['gap']:.8f}", f"{floor['fit_error']:.8f}"])
    gaps = np.array([float(r[1]) for r in rows])
    floors = np.array([float(r[2]) for r in rows])
    _write_csv(run.writable("imitate"), _meta(run.cfg),
               ["sample", "expression_gap", "reachability_floor", "oracle_fit_error"], rows)
    summary = dict(mean_gap=float(gaps.mean()), mean_floor=float(floors.mean()),
                   ratio=float(gaps.mean() / floors.mean()), n=len(rows))
    _update_report(run, "imitate", summary)
    print(f"imitate: mean gap {summary['mean_gap']:.4f}, mean floor {summary['mean_floor']:.4f} "
          f"(ratio {summary['ratio']:.3f}) -> {run.path('imitate')}")
    return summary


def eval_embed(run):
    from .edm import encode_inputs, expression_codes

    model = _model(run)
    edm = _edm(run, model)
    corpus = load_dataset(run.need("clusters", "gen clusters"), kind="cluster_corpus")
    obs = np.stack([s.observed for s in corpus])
    labels = [s.label for s in corpus]
    for key, vecs in (("embed_landmark", encode_inputs(obs)),
                      ("embed_expression", expression_codes(edm, obs))):
        xy = pca_embed_2d(vecs)
        _write_csv(run.writable(key), _meta(run.cfg), ["label", "x", "y"],
                   [[lab, f"{x:.8f}", f"{y:.8f}"] for lab, (x, y) in zip(labels, xy)])
    print(f"embed: {len(labels)} points -> {run.path('embed_landmark')}, {run.path('embed_expression')}")


# ---------------------------------------------------------------------------
# repro
# ---------------------------------------------------------------------------

REPRO_STEPS = (
    ("model", gen_model), ("dataset", gen_dataset), ("clusters", gen_clusters), ("rig", gen_rig),
    ("edm", train_edm_cmd), ("pairs", gen_pairs), ("etm-dec", train_dec_cmd),
    ("etm-enc", train_enc_cmd), ("table1", eval_table1), ("table2", eval_table2),
    ("table3", eval_table3), ("imitate", eval_imitate), ("embed_expression", eval_embed),
)


def write_manifest(run):
    hashes = {}
    for key, name in sorted(FILES.items()):
        p = run.out / name
        if key in ("manifest", "config") or not p.exists():
            continue
        hashes[name] = hashlib.sha256(p.read_bytes()).hexdigest()
    write_json(run.path("manifest"), dict(_meta(run.cfg), kind="manifest", sha256=hashes))
    return hashes


def repro(run):
    if not run.resume and not run.force:
        clash = [FILES[k] for k, _ in REPRO_STEPS if run.path(k).exists()]
        if clash:
            raise CommandError(f"{run.out} already holds {', '.join(clash)}; "
                               "use --resume to continue or --force to overwrite")
    # a forced rerun must not mix old report sections into the new one
    if run.force and run.path("report").exists():
        run.path("report").unlink()
    t0 = time.time()
    for key, step in REPRO_STEPS:
        if run.skip(key):
            print(f"repro: {FILES[key]} present, skipping")
            continue
        step(run)
    hashes = write_manifest(run)
    print(f"repro: done in {time.time() - t0:.1f}s, {len(hashes)} artifacts hashed -> {run.path('manifest')}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

GEN = {"model": gen_model, "dataset": gen_dataset, "clusters": gen_clusters, "rig": gen_rig,
       "pairs": gen_pairs}
TRAIN = {"edm": train_edm_cmd, "etm-dec": train_dec_cmd, "etm-enc": train_enc_cmd}
EVAL = {"table1": eval_table1, "table2": eval_table2, "table3": eval_table3,
        "imitate": eval_imitate, "embed": eval_embed}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--out", default="runs/default", help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--resume", action="store_true", help="repro: keep existing artifacts")
    common.add_argument("--config", default=None, help="JSON file overriding config values")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="faceimit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate model, data or rig")
    p.add_argument("what", choices=sorted(GEN))
    p.add_argument("--n", type=int, default=None, help="sample count (dataset, pairs)")
    p.add_argument("--per-cluster", type=int, default=None)

    p = sub.add_parser("train", parents=[common], help="train EDM or the transfer networks")
    p.add_argument("what", choices=sorted(TRAIN))
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lam", type=float, default=None, help="etm-enc trade-off weight")

    p = sub.add_parser("eval", parents=[common], help="produce report tables")
    p.add_argument("what", choices=sorted(EVAL))

    sub.add_parser("repro", parents=[common], help="run gen -> train -> eval end to end")
    return parser


def _apply_train_flags(args, cfg):
    section = "edm" if args.what == "edm" else "etm"
    for flag in ("epochs", "lr", "batch"):
        val = getattr(args, flag)
        if val is not None:
            cfg[section][flag] = val
    if args.lam is not None:
        if args.what != "etm-enc":
            raise UsageError("--lam only applies to `train etm-enc`")
        cfg["etm"]["lam"] = args.lam


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.force and args.resume:
            raise UsageError("--force and --resume are mutually exclusive")
        if args.command == "gen":
            if args.n is not None and args.what not in ("dataset", "pairs"):
                raise UsageError("--n only applies to `gen dataset` and `gen pairs`")
            if args.per_cluster is not None and args.what != "clusters":
                raise UsageError("--per-cluster only applies to `gen clusters`")
        cfg = resolve_config(args)
        if args.command == "train":
            _apply_train_flags(args, cfg)
        run = Run(args, cfg)
        if args.command == "gen":
            fn = GEN[args.what]
            if args.what in ("dataset", "pairs"):
                fn(run, args.n)
            elif args.what == "clusters":
                fn(run, args.per_cluster)
            else:
                fn(run)
        elif args.command == "train":
            TRAIN[args.what](run)
        elif args.command == "eval":
            EVAL[args.what](run)
        else:
            repro(run)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"faceimit: error: {exc}", file=sys.stderr)
        return 2
    except (CommandError, ValueError, OSError) as exc:
        print(f"faceimit: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
