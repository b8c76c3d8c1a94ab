import json
import os

import pytest

from patcherizer.config import load_config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA = os.path.join(ROOT, "src", "patcherizer", "data")
TOY_CONFIG = os.path.join(ROOT, "configs", "toy.json")


def data_path(name):
    return os.path.join(DATA, name)


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


@pytest.fixture(scope="session")
def toy_records():
    return read_jsonl(data_path("toy_gen.jsonl"))


@pytest.fixture(scope="session")
def toy_correctness_records():
    return read_jsonl(data_path("toy_correctness.jsonl"))


@pytest.fixture()
def toy_cfg():
    return load_config(TOY_CONFIG)


@pytest.fixture(scope="session")
def toy_world():
    """Vocab, static graph and featurized toy corpus (model config from toy.json)."""
    from patcherizer import training as T
    from patcherizer.model import Featurizer, ModelConfig

    cfg = load_config(TOY_CONFIG)
    pairs, failures = T.preprocess_records(T.load_records(cfg["data"]["train"]))
    cpairs, _ = T.preprocess_records(T.load_records(cfg["data"]["correctness_train"]))
    assert not failures
    vocab = T.build_vocab(pairs + cpairs, cfg["data"]["vocab_size"])
    static = T.static_graph_for([p for _, p in pairs], cfg["gcn"]["N_g"])
    mcfg = ModelConfig.from_config(cfg)
    fz = Featurizer(vocab, static, mcfg)
    feats = [fz(p, msg=r["msg"]) for r, p in pairs]
    cfeats = [fz(p, bug_report=r["bug_report"], label=r["label"]) for r, p in cpairs]
    return {
        "cfg": cfg, "pairs": pairs, "vocab": vocab, "static": static,
        "mcfg": mcfg, "featurizer": fz, "feats": feats, "cfeats": cfeats,
    }


# -- acceptance report ---------------------------------------------------------

_criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _criteria[props["criterion"]] = (report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outcome, detail = _criteria[n]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'} criterion {n}: {detail}")
