"""Single-file JSON configuration with sections data/model/gcn/train/decode.

Keys that fix parameter shapes must be present in the file; everything
else falls back to ``DEFAULTS``.
"""

import copy
import json
import os

from .errors import FileNotFound, MissingConfigKey

DEFAULTS = {
    "data": {
        "train": None,
        "test": None,
        "correctness_train": None,
        "correctness_test": None,
        "bug_vectors": None,
        "vocab_size": 1000,
        "bpe_include_messages": True,
    },
    "model": {
        "d_e": 64,
        "n_heads": 2,
        "n_layers": 2,
        "L_max": 64,
        "msg_len": 32,
        "d_ff": 128,
        "dropout": 0.1,
        "d_b": None,
        "use_seq_intention": True,
        "use_graph_intention": True,
    },
    "gcn": {
        "layers": 2,
        "alpha": 0.1,
        "beta_scale": 0.5,
        "N_g": 2000,
        "pooling": "all",
        "edges": "local",
        "exact_limit": 12,
    },
    "train": {
        "lr": 0.001,
        "batch_size": 8,
        "epochs": 30,
        "pretrain_steps": None,
        "finetune_steps": None,
        "mask_rate": 0.15,
        "seed": 0,
    },
    "decode": {"beam": 3, "max_out": 32, "workers": 1},
}

REQUIRED = ("model.d_e", "model.n_heads", "model.n_layers", "model.L_max")


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def get(cfg, dotted):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise MissingConfigKey(dotted)
        node = node[part]
    return node


def from_dict(doc):
    for key in REQUIRED:
        get(doc, key)
    return _merge(DEFAULTS, doc)


def load_config(path):
    if not os.path.exists(path):
        raise FileNotFound(f"config file {path}")
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    cfg = from_dict(doc)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("train", "test", "correctness_train", "correctness_test", "bug_vectors"):
        value = cfg["data"].get(key)
        if value and not os.path.isabs(value):
            cfg["data"][key] = os.path.normpath(os.path.join(base, value))
    return cfg
