"""Command-line pipeline: preprocess, build artifacts, train, infer, evaluate.

Every command reads ``--config`` and works inside ``--out``; filenames in
that directory are fixed (see ``FILES``).
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import autodiff as ad
from . import training as T
from .bpe import Vocab, decode
from .config import load_config
from .errors import FileNotFound, PatcherizerError, ShapeMismatch
from .fusion import read_embeddings, write_embeddings
from .graph_intention import StaticGraph
from .heads import RetrievalIndex
from .metrics import corpus_scores, plus_minus_recall
from .model import Featurizer, ModelConfig, Patcherizer

log = logging.getLogger("patcherizer")

FILES = {
    "report": "preprocess_report.json",
    "patches": "patches.jsonl",
    "vocab": "vocab.json",
    "static": "static_graph.json",
    "pretrain": "pretrain.ckpt",
    "pretrain_log": "pretrain_log.csv",
    "desc": "desc.ckpt",
    "desc_log": "desc_log.csv",
    "cls": "cls.ckpt",
    "cls_log": "cls_log.csv",
    "embeddings": "embeddings.jsonl",
    "predictions": "predictions.jsonl",
    "index": "retrieval_index.jsonl",
    "retrieval": "retrieval.jsonl",
    "classifications": "classifications.jsonl",
    "eval": "eval.json",
}


class Run:
    """Config, output directory and lazily loaded artifacts of one command."""

    def __init__(self, args):
        self.args = args
        self.cfg = load_config(args.config)
        if args.seed is not None:
            self.cfg["train"]["seed"] = args.seed
        if args.no_seq_intention:
            self.cfg["model"]["use_seq_intention"] = False
        if args.no_graph_intention:
            self.cfg["model"]["use_graph_intention"] = False
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.mcfg = ModelConfig.from_config(self.cfg)

    def path(self, key):
        return os.path.join(self.out, FILES[key])

    def need(self, key):
        p = self.path(key)
        if not os.path.exists(p):
            raise FileNotFound(f"{p} (run the command that produces {FILES[key]} first)")
        return p

    def records(self, split):
        path = self.cfg["data"].get(split)
        if not path:
            raise FileNotFound(f"no data.{split} path in config")
        return T.load_records(path)

    def patches(self, split):
        pairs, _ = T.preprocess_records(self.records(split))
        return pairs

    def vocab(self):
        return Vocab.load(self.need("vocab"))

    def static(self):
        with open(self.need("static"), encoding="utf-8") as f:
            return StaticGraph.from_json(json.load(f))

    def featurizer(self):
        return Featurizer(self.vocab(), self.static(), self.mcfg)

    def bug_vectors(self):
        path = self.cfg["data"].get("bug_vectors")
        if not path:
            return {}
        if not os.path.exists(path):
            raise FileNotFound(f"bug vector file {path}")
        vecs = read_embeddings(path)
        for pid, v in vecs.items():
            if v.shape != (self.mcfg.bug_dim,):
                raise ShapeMismatch(f"bug vector {pid} has shape {v.shape}, expected ({self.mcfg.bug_dim},)")
        return vecs

    def features(self, split, fz=None):
        fz = fz or self.featurizer()
        vecs = self.bug_vectors() if split.startswith("correctness") else {}
        out = []
        for rec, p in self.patches(split):
            bug = vecs.get(rec["id"])
            out.append(fz(
                p,
                msg=rec.get("msg"),
                bug_report=None if bug is not None else rec.get("bug_report"),
                bug_vec=bug,
                label=rec.get("label"),
            ))
        return out

    def model(self, vocab_size):
        """Freshly initialized model (seeded from ``train.seed``)."""
        return Patcherizer(self.mcfg, vocab_size, seed=self.cfg["train"]["seed"])

    def load_model(self, key, vocab_size):
        m = self.model(vocab_size)
        m.load(self.args.checkpoint or self.path(key))
        return m

    def meta(self):
        return {"config": self.cfg, "seed": self.cfg["train"]["seed"]}


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def _read_jsonl(path):
    if not os.path.exists(path):
        raise FileNotFound(path)
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


# -- commands ----------------------------------------------------------------

def cmd_preprocess(run):
    report = {"splits": {}, "parsed": 0, "total": 0}
    rows, seen_ok, seen = [], set(), set()
    for split in ("train", "test", "correctness_train", "correctness_test"):
        if not run.cfg["data"].get(split):
            continue
        recs = run.records(split)
        pairs, failures = T.preprocess_records(recs)
        report["splits"][split] = {
            "total": len(recs),
            "parsed": len(pairs),
            "failures": [{"id": i, "code": c, "message": m} for i, c, m in failures],
        }
        seen.update(r["diff"] for r in recs)
        seen_ok.update(r["diff"] for r, _ in pairs)
        for rec, p in pairs:
            rows.append({
                "split": split,
                "id": p.id,
                "cc_p": p.cc_p,
                "cc_m": p.cc_m,
                "cbp": p.cbp,
                "cap": p.cap,
                "g_cbp": p.g_cbp.to_json(),
                "g_cap": p.g_cap.to_json(),
            })
    # splits may share diffs (the toy corpus does); count each patch once
    report["parsed"], report["total"] = len(seen_ok), len(seen)
    _write_jsonl(run.path("patches"), rows)
    with open(run.path("report"), "w", encoding="utf-8") as f:
        json.dump(report, f, indent=1)
    log.info("preprocess: %d/%d records parsed", report["parsed"], report["total"])


def cmd_build_vocab(run):
    pairs = run.patches("train")
    if run.cfg["data"].get("correctness_train"):
        pairs += run.patches("correctness_train")
    vocab = T.build_vocab(pairs, run.cfg["data"]["vocab_size"], run.cfg["data"]["bpe_include_messages"])
    vocab.save(run.path("vocab"))
    log.info("build-vocab: %d entries", len(vocab))


def cmd_build_static_graph(run):
    patches = [p for _, p in run.patches("train")]
    static = T.static_graph_for(patches, run.cfg["gcn"]["N_g"])
    with open(run.path("static"), "w", encoding="utf-8") as f:
        json.dump(static.to_json(), f)
    log.info("build-static-graph: %d nodes", len(static))


def cmd_pretrain(run):
    vocab = run.vocab()
    feats = run.features("train", Featurizer(vocab, run.static(), run.mcfg))
    model = run.model(len(vocab))
    hist = T.pretrain(model, feats, run.cfg, steps=run.args.steps, log_path=run.path("pretrain_log"))
    model.save(run.path("pretrain"), run.meta())
    log.info("pretrain: %d steps, final loss %.4f", len(hist), hist[-1] if hist else float("nan"))


def _init_from_pretrain(run, model):
    prefix = run.args.init or run.path("pretrain")
    if os.path.exists(prefix + ".json"):
        model.load(prefix)
        log.info("initialized from %s", prefix)
    else:
        log.warning("no pre-trained checkpoint at %s; starting from random weights", prefix)


def cmd_finetune_desc(run):
    vocab = run.vocab()
    feats = run.features("train", Featurizer(vocab, run.static(), run.mcfg))
    model = run.model(len(vocab))
    _init_from_pretrain(run, model)
    hist = T.finetune_generation(model, feats, run.cfg, steps=run.args.steps, log_path=run.path("desc_log"))
    model.save(run.path("desc"), run.meta())
    log.info("finetune-desc: %d steps, final loss %.4f", len(hist), hist[-1])


def cmd_finetune_correctness(run):
    vocab = run.vocab()
    feats = run.features("correctness_train", Featurizer(vocab, run.static(), run.mcfg))
    model = run.model(len(vocab))
    _init_from_pretrain(run, model)
    hist = T.finetune_correctness(model, feats, run.cfg, steps=run.args.steps, log_path=run.path("cls_log"))
    model.save(run.path("cls"), run.meta())
    log.info("finetune-correctness: %d steps, final loss %.4f", len(hist), hist[-1])


def _embed_all(model, feats):
    with ad.no_grad():
        return [(f.id, model.encode(f).vector()) for f in feats]


def cmd_embed(run):
    vocab = run.vocab()
    feats = run.features(run.args.split, Featurizer(vocab, run.static(), run.mcfg))
    model = run.load_model("desc", len(vocab))
    write_embeddings(run.path("embeddings"), _embed_all(model, feats))


_worker = {}


def _init_worker(model, beam, max_out):
    _worker.update(model=model, beam=beam, max_out=max_out)


def _generate_one(feat):
    m = _worker["model"]
    with ad.no_grad():
        emb = m.encode(feat)
    return m.generate(emb, _worker["beam"], _worker["max_out"])


def generate_all(model, feats, beam, max_out, workers=1):
    if workers <= 1 or len(feats) < 2:
        _init_worker(model, beam, max_out)
        return [_generate_one(f) for f in feats]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(model, beam, max_out)) as pool:
        return list(pool.map(_generate_one, feats))


def cmd_generate(run):
    vocab = run.vocab()
    feats = run.features(run.args.split, Featurizer(vocab, run.static(), run.mcfg))
    model = run.load_model("desc", len(vocab))
    d = run.cfg["decode"]
    outs = generate_all(model, feats, d["beam"], d["max_out"], d["workers"])
    _write_jsonl(run.path("predictions"), [{"id": f.id, "prediction": decode(vocab, o)} for f, o in zip(feats, outs)])


def cmd_classify(run):
    vocab = run.vocab()
    feats = run.features("correctness_test", Featurizer(vocab, run.static(), run.mcfg))
    model = run.load_model("cls", len(vocab))
    probs = T.predict_probs(model, feats)
    _write_jsonl(
        run.path("classifications"),
        [{"id": f.id, "prediction": p, "label": f.label} for f, p in zip(feats, probs)],
    )


def cmd_retrieve(run):
    vocab = run.vocab()
    fz = Featurizer(vocab, run.static(), run.mcfg)
    model = run.load_model("desc", len(vocab))
    train = run.features("train", fz)
    index = RetrievalIndex()
    for f, (pid, vec) in zip(train, _embed_all(model, train)):
        index.add(pid, vec, f.msg or "")
    index.save(run.path("index"))
    rows = []
    for pid, vec in _embed_all(model, run.features(run.args.split, fz)):
        match, msg, score = index.retrieve(vec)
        rows.append({"id": pid, "prediction": msg, "match": match, "score": score})
    _write_jsonl(run.path("retrieval"), rows)


def cmd_eval(run):
    """Scores files only; the model is never loaded."""
    result = {"bleu": None, "rouge_l": None, "meteor": None, "plus_recall": None, "minus_recall": None, "n": 0}
    pred_path = run.args.predictions or run.path("predictions")
    if os.path.exists(pred_path):
        preds = {r["id"]: r["prediction"] for r in _read_jsonl(pred_path)}
        refs = {r["id"]: r.get("msg", "") for r in run.records(run.args.split)}
        ids = [i for i in refs if i in preds and refs[i].strip()]
        result.update(corpus_scores([preds[i] for i in ids], [refs[i] for i in ids]))
    cls_path = run.path("classifications")
    if os.path.exists(cls_path):
        rows = [r for r in _read_jsonl(cls_path) if r.get("label") is not None]
        plus, minus = plus_minus_recall([r["prediction"] for r in rows], [r["label"] for r in rows])
        result.update(plus_recall=plus, minus_recall=minus)
    with open(run.path("eval"), "w", encoding="utf-8") as f:
        json.dump(result, f, indent=1)
    print(json.dumps(result))


COMMANDS = {
    "preprocess": cmd_preprocess,
    "build-vocab": cmd_build_vocab,
    "build-static-graph": cmd_build_static_graph,
    "pretrain": cmd_pretrain,
    "finetune-desc": cmd_finetune_desc,
    "finetune-correctness": cmd_finetune_correctness,
    "embed": cmd_embed,
    "generate": cmd_generate,
    "classify": cmd_classify,
    "retrieve": cmd_retrieve,
    "eval": cmd_eval,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="patcherizer", description="Patch representation learning pipeline.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--out", default="out", help="artifact directory")
    ap.add_argument("--seed", type=int, default=None, help="overrides train.seed")
    ap.add_argument("--steps", type=int, default=None, help="overrides the configured step count")
    ap.add_argument("--split", default="test", help="data split for embed/generate/retrieve/eval")
    ap.add_argument("--init", default=None, help="checkpoint prefix to start fine-tuning from")
    ap.add_argument("--checkpoint", default=None, help="checkpoint prefix for inference commands")
    ap.add_argument("--predictions", default=None, help="predictions file for eval")
    ap.add_argument("--no-seq-intention", action="store_true")
    ap.add_argument("--no-graph-intention", action="store_true")
    return ap


def setup_logging():
    level = os.environ.get("PATCHERIZER_LOG", "info").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "INFO"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](Run(args))
    except PatcherizerError as exc:
        print(exc.one_line(), file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: SchemaError: invalid JSON: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
