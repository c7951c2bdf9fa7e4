import numpy as np
import pytest

from faceimit.headmodel import build_head_model


@pytest.fixture(scope="session")
def model():
    return build_head_model(seed=7)


@pytest.fixture(scope="session")
def small_model():
    return build_head_model(seed=3, n_v=96, n_s=3, n_e=4, N=16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class FullRun:
    """One default ``repro`` run shared by the slow tests."""

    def __init__(self, out, seconds, rc):
        self.out = out
        self.seconds = seconds
        self.rc = rc

    def artifacts(self):
        import json

        from faceimit.edm import load_edm
        from faceimit.etm import load_decoder, load_encoder
        from faceimit.headmodel import load_head_model
        from faceimit.robotsim import load_pairs, load_rig
        from faceimit.synthdata import load_dataset, train_test_split

        cfg = json.loads((self.out / "config.json").read_text())["config"]
        seeds = cfg["seeds"]
        faces = load_dataset(self.out / "dataset.jsonl")
        pairs = load_pairs(self.out / "robot_pairs.jsonl")
        return dict(
            cfg=cfg, model=load_head_model(self.out / "model.json"),
            edm=load_edm(self.out / "edm.json"), rig=load_rig(self.out / "rig.json"),
            dec=load_decoder(self.out / "etm_dec.json"), enc=load_encoder(self.out / "etm_enc.json"),
            faces=train_test_split(faces, cfg["dataset"]["train_frac"], seed=seeds["data"]),
            pairs=train_test_split(pairs, cfg["pairs"]["train_frac"], seed=seeds["data"] + 1),
            clusters=load_dataset(self.out / "clusters.jsonl", kind="cluster_corpus"))


@pytest.fixture(scope="session")
def full_run(tmp_path_factory):
    import time

    from faceimit.cli import main

    out = tmp_path_factory.mktemp("repro") / "run"
    t0 = time.perf_counter()
    rc = main(["repro", "--seed", "0", "--out", str(out)])
    return FullRun(out, time.perf_counter() - t0, rc)


@pytest.fixture(scope="session")
def artifacts(full_run):
    assert full_run.rc == 0
    return full_run.artifacts()


ACCEPTANCE = []


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance line; returns ``ok`` so tests can assert on it."""

    def record(number, title, ok, detail):
        ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} -- {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def pytest_collection_modifyitems(items):
    for item in items:
        if {"full_run", "artifacts"} & set(getattr(item, "fixturenames", ())):
            item.add_marker(pytest.mark.slow)
