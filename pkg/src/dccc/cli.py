"""``dccc`` command line: generate, train, evaluate, sweep.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from dccc.clustering import eps_at
from dccc.config import TrainConfig, parse_config
from dccc.encoder import EncoderParams
from dccc.errors import ConfigError, ContractError, DcccError
from dccc.metrics import clustering_quality, evaluate_retrieval
from dccc.synthetic import DatasetSpec, SyntheticDataset, generate_dataset, split_query_gallery
from dccc.sweep import SweepSpec, run_sweep
from dccc.trainer import extract, pseudo_label, train

log = logging.getLogger("dccc")

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dccc", description="Unsupervised re-identification desk lab.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset as JSON")
    g.add_argument("--spec", required=True, help="key = value file of dataset fields (plus optional split)")
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train and write reports.csv and checkpoint.json")
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir", required=True)

    e = sub.add_parser("evaluate", help="score a checkpoint on a dataset file")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)

    s = sub.add_parser("sweep", help="run one axis over several seeds")
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", required=True, help="comma-separated integer seeds")
    s.add_argument("--out", required=True)
    return p


def parse_dataset_spec(text: str, source: str) -> tuple[DatasetSpec, str]:
    types = {f.name: f.type for f in fields(DatasetSpec)}
    values, split = {}, "train"
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = (part.strip() for part in line.partition("="))
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if key == "split":
            split = raw
            continue
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown dataset key {key!r}")
        try:
            values[key] = int(raw) if types[key] == "int" else float(raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: cannot parse {raw!r} for key {key!r}") from None
    spec = DatasetSpec(**values)
    spec.validate()
    return spec, split


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def cmd_generate(args) -> None:
    spec, split = parse_dataset_spec(_read(args.spec), args.spec)
    ds = generate_dataset(spec, split)
    _write(args.out, json.dumps(ds.to_json_dict()))


def cmd_train(args) -> None:
    cfg = parse_config(args.config)
    reports, _ = train(cfg, args.out_dir)
    last = reports[-1]
    print(f"{len(reports)} epochs, final mAP {last.mAP:.4f}, ARI "
          + ("n/a" if last.ari is None else f"{last.ari:.4f}"))


def _load_json(path: str, what: str) -> dict:
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def evaluate_checkpoint(ckpt: dict, ds: SyntheticDataset) -> dict:
    """Retrieval and clustering scores of a checkpoint's network on a dataset.

    Query/gallery split, eval network and clustering settings come from the
    config stored in the checkpoint; clustering uses the last trained epoch's eps.
    """
    try:
        cfg = TrainConfig(**ckpt["config"])
        net = EncoderParams.from_json_dict(ckpt[cfg.eval_network])
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed checkpoint: {exc}") from None
    if net.weight.shape[1] != ds.samples.shape[1]:
        raise ContractError(
            f"checkpoint expects input_dim {net.weight.shape[1]}, dataset has {ds.samples.shape[1]}"
        )
    feats = extract(net, ds.samples)
    query, gallery = split_query_gallery(ds, cfg.query_per_id, cfg.seed)
    ret = evaluate_retrieval(feats[query], feats[gallery], ds.true_ids[query], ds.true_ids[gallery],
                             ds.cam_ids[query], ds.cam_ids[gallery])
    eps = eps_at(cfg.schedule(), max(int(ckpt.get("epoch", 1)) - 1, 0))
    quality = clustering_quality(pseudo_label(feats, cfg, eps), ds.true_ids)

    def clean(v):
        return None if v is None or np.isnan(v) else float(v)

    return {"map": clean(ret.mAP), "r1": clean(ret.cmc[1]), "r5": clean(ret.cmc[5]),
            "r10": clean(ret.cmc[10]), "nmi": clean(quality.nmi), "ari": clean(quality.ari)}


def cmd_evaluate(args) -> None:
    ckpt = _load_json(args.checkpoint, "checkpoint")
    try:
        ds = SyntheticDataset.from_json_dict(_load_json(args.data, "dataset"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed dataset file {args.data}: {exc}") from None
    print(json.dumps(evaluate_checkpoint(ckpt, ds)))


def _csv_list(text: str, name: str) -> list[str]:
    items = [v.strip() for v in text.split(",") if v.strip()]
    if not items:
        raise ConfigError(f"--{name} needs at least one entry")
    return items


def cmd_sweep(args) -> None:
    try:
        seeds = tuple(int(s) for s in _csv_list(args.seeds, "seeds"))
    except ValueError:
        raise ConfigError(f"--seeds must be integers, got {args.seeds!r}") from None
    spec = SweepSpec(args.axis, tuple(_csv_list(args.values, "values")), parse_config(args.config), seeds)
    results, text = run_sweep(spec)
    _write(args.out, text)
    failed = sum(r["status"] != "ok" for r in results)
    print(f"{len(results)} runs, {failed} failed, written to {args.out}")


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"dccc: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"dccc: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (DcccError, OSError, ArithmeticError) as exc:
        print(f"dccc: failed: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
