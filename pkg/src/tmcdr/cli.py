"""Command-line front door: config parsing and pipeline orchestration.

Verbs: synth, split, pretrain, meta-train, map-train, evaluate. Every verb
reads one JSON config (nested sections mirroring the pipeline stages;
unknown keys are rejected so hyperparameter typos fail loudly) and writes
self-describing artifacts into the output directory. All randomness is
seeded, so rerunning a command reproduces its artifacts byte for byte.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
divergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    InteractionDataset,
    OverlapSet,
    OverlapUser,
    find_overlap,
    load_interactions,
    save_interactions,
    split_cold_start,
)
from .errors import ConfigError, DataError, DivergenceError, TmcdrError
from .evaluate import affine_embedder, evaluate_cold_start, target_oracle_embedder
from .mapping import train_mapping
from .meta import MetaConfig, meta_train
from .models import BaseModel, ModelKind
from .network import MappingNetwork, MetaNetwork
from .persist import (
    load_embeddings,
    load_network,
    read_split_manifest,
    save_embeddings,
    save_network,
    write_report,
    write_split_manifest,
)
from .pretrain import PretrainConfig, train_base_model
from .synth import SynthConfig, generate_world

_REQUIRED = object()

EVAL_METHODS = ("tmcdr", "emcdr", "target_oracle")


@dataclass(frozen=True)
class MappingTrainConfig:
    epochs: int = 500
    lr: float = 0.001
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    source_path: str
    target_path: str
    fmt: str
    output_dir: str
    split_ratio: float
    split_seed: int
    source_pretrain: PretrainConfig
    target_pretrain: PretrainConfig
    meta: MetaConfig
    mapping: MappingTrainConfig
    eval_k: int
    synth: SynthConfig | None = None

    def __post_init__(self):
        if self.source_pretrain.dim != self.target_pretrain.dim:
            raise ConfigError(
                f"source dim {self.source_pretrain.dim} != target dim {self.target_pretrain.dim}"
            )
        if self.eval_k < 1:
            raise ConfigError(f"eval k must be >= 1, got {self.eval_k}")


def _section(data, fields: dict, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")
    out = {}
    for key, default in fields.items():
        if key in data:
            out[key] = data[key]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r} in {where}")
        else:
            out[key] = default
    return out


def _model_kind(name, margin, where: str) -> ModelKind:
    try:
        return ModelKind(name, margin)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _pretrain_config(data, where: str) -> PretrainConfig:
    fields = _section(
        data,
        {
            "kind": "mf", "margin": None, "dim": 16, "epochs": 20, "batch_size": 256,
            "lr": 0.01, "l2": 1e-5, "negatives_per_positive": 4, "seed": 0,
        },
        where,
    )
    kind = _model_kind(fields.pop("kind"), fields.pop("margin"), where)
    try:
        return PretrainConfig(kind=kind, **fields)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_run_config(path, seed: int | None = None, out: str | None = None) -> RunConfig:
    """Parse a JSON run config; --seed/--out overrides apply to every stage."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None

    top = _section(
        raw,
        {
            "source_path": _REQUIRED, "target_path": _REQUIRED, "format": "tsv",
            "output_dir": _REQUIRED, "split": {}, "source_pretrain": {},
            "target_pretrain": {}, "meta": {}, "mapping": {}, "eval": {}, "synth": None,
        },
        "config",
    )
    split = _section(top["split"], {"ratio": 0.2, "seed": 0}, "split")
    meta_fields = _section(
        top["meta"],
        {f.name: f.default for f in dataclasses.fields(MetaConfig)},
        "meta",
    )
    mapping_fields = _section(top["mapping"], {"epochs": 500, "lr": 0.001, "seed": 0}, "mapping")
    eval_fields = _section(top["eval"], {"k": 10}, "eval")
    synth_cfg = None
    if top["synth"] is not None:
        synth_fields = _section(
            top["synth"],
            {f.name: f.default for f in dataclasses.fields(SynthConfig)},
            "synth",
        )
        try:
            synth_cfg = SynthConfig(**synth_fields)
        except ValueError as exc:
            raise ConfigError(f"synth: {exc}") from None

    try:
        meta_cfg = MetaConfig(**meta_fields)
    except ConfigError as exc:
        raise ConfigError(f"meta: {exc}") from None

    config = RunConfig(
        source_path=top["source_path"],
        target_path=top["target_path"],
        fmt=top["format"],
        output_dir=out if out is not None else top["output_dir"],
        split_ratio=split["ratio"],
        split_seed=split["seed"],
        source_pretrain=_pretrain_config(top["source_pretrain"], "source_pretrain"),
        target_pretrain=_pretrain_config(top["target_pretrain"], "target_pretrain"),
        meta=meta_cfg,
        mapping=MappingTrainConfig(**mapping_fields),
        eval_k=eval_fields["k"],
        synth=synth_cfg,
    )
    if seed is not None:
        config = dataclasses.replace(
            config,
            split_seed=seed,
            source_pretrain=dataclasses.replace(config.source_pretrain, seed=seed),
            target_pretrain=dataclasses.replace(config.target_pretrain, seed=seed),
            meta=dataclasses.replace(config.meta, seed=seed),
            mapping=dataclasses.replace(config.mapping, seed=seed),
            synth=dataclasses.replace(config.synth, seed=seed) if config.synth else None,
        )
    return config


# ---------------------------------------------------------------- artifacts

def _out(config: RunConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _domain_paths(config: RunConfig, domain: str) -> tuple[Path, Path, Path]:
    out = Path(config.output_dir)
    return (
        out / f"{domain}_user.emb",
        out / f"{domain}_item.emb",
        out / f"{domain}_pretrain.json",
    )


def _split_path(config: RunConfig) -> Path:
    return Path(config.output_dir) / "split.txt"


def _network_path(config: RunConfig, method: str) -> Path:
    name = "meta_network.emb" if method == "tmcdr" else "mapping_network.emb"
    return Path(config.output_dir) / name


def _load_domain_data(config: RunConfig, domain: str) -> InteractionDataset:
    path = config.source_path if domain == "source" else config.target_path
    return load_interactions(path, config.fmt)


def _load_pretrained(config: RunConfig, domain: str) -> tuple[BaseModel, InteractionDataset]:
    data = _load_domain_data(config, domain)
    user_path, item_path, meta_path = _domain_paths(config, domain)
    for p in (user_path, item_path, meta_path):
        if not p.exists():
            raise DataError(
                f"{p} not found; run `tmcdr pretrain --domain {domain}` first"
            )
    user_ids, users = load_embeddings(user_path)
    item_ids, items = load_embeddings(item_path)
    if user_ids != data.user_ids or item_ids != data.item_ids:
        raise DataError(
            f"{domain} embeddings were trained on different data than {config.source_path if domain == 'source' else config.target_path}"
        )
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    kind = _model_kind(meta["kind"], meta.get("margin"), str(meta_path))
    model = BaseModel(kind, users.astype(np.float64), items.astype(np.float64))
    return model, data


def _load_split(
    config: RunConfig, source: InteractionDataset, target: InteractionDataset
) -> tuple[OverlapSet, OverlapSet]:
    path = _split_path(config)
    if not path.exists():
        raise DataError(f"{path} not found; run `tmcdr split` first")
    _, _, train_ids, test_ids = read_split_manifest(path)

    def resolve(ids):
        users = []
        for external_id in ids:
            if external_id not in source.user_index or external_id not in target.user_index:
                raise DataError(
                    f"{path}: user {external_id!r} from the manifest is not in both domains"
                )
            users.append(
                OverlapUser(source.user_index[external_id], target.user_index[external_id], external_id)
            )
        return OverlapSet(tuple(users))

    return resolve(train_ids), resolve(test_ids)


def _stage_seeds(config: RunConfig) -> dict:
    return {
        "split_seed": config.split_seed,
        "source_pretrain_seed": config.source_pretrain.seed,
        "target_pretrain_seed": config.target_pretrain.seed,
        "meta_seed": config.meta.seed,
        "mapping_seed": config.mapping.seed,
    }


# ----------------------------------------------------------------- commands

def cmd_synth(config: RunConfig) -> tuple[Path, Path]:
    """Generate the two-domain synthetic world into source_path/target_path."""
    if config.synth is None:
        raise ConfigError("config has no synth section")
    world = generate_world(config.synth)
    for path in (config.source_path, config.target_path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_interactions(world.source, config.source_path, config.fmt)
    save_interactions(world.target, config.target_path, config.fmt)
    return Path(config.source_path), Path(config.target_path)


def cmd_split(config: RunConfig) -> Path:
    """Write the train/test overlap-user manifest."""
    source = _load_domain_data(config, "source")
    target = _load_domain_data(config, "target")
    split = split_cold_start(find_overlap(source, target), config.split_ratio, config.split_seed)
    path = _out(config) / "split.txt"
    write_split_manifest(path, split)
    return path


def cmd_pretrain(config: RunConfig, domain: str) -> tuple[Path, Path, Path]:
    """Train one domain's base model; write user/item tables plus metadata."""
    if domain not in ("source", "target"):
        raise ConfigError(f"domain must be 'source' or 'target', got {domain!r}")
    pre = config.source_pretrain if domain == "source" else config.target_pretrain
    data = _load_domain_data(config, domain)
    result = train_base_model(data, pre)
    _out(config)
    user_path, item_path, meta_path = _domain_paths(config, domain)
    save_embeddings(user_path, data.user_ids, result.model.user_embeddings)
    save_embeddings(item_path, data.item_ids, result.model.item_embeddings)
    metadata = {
        "kind": pre.kind.name,
        "margin": pre.kind.margin,
        "dim": pre.dim,
        "seed": pre.seed,
        "epochs": pre.epochs,
        "batch_size": pre.batch_size,
        "lr": pre.lr,
        "l2": pre.l2,
        "negatives_per_positive": pre.negatives_per_positive,
        "losses": list(result.losses),
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(metadata, fh, indent=2)
        fh.write("\n")
    return user_path, item_path, meta_path


def cmd_meta_train(config: RunConfig) -> Path:
    """Train the meta network on the training overlap; persist it."""
    source_model, source_data = _load_pretrained(config, "source")
    target_model, target_data = _load_pretrained(config, "target")
    if source_model.dim != target_model.dim:
        raise DataError(
            f"artifact dim mismatch: source {source_model.dim}, target {target_model.dim}"
        )
    train_overlap, _ = _load_split(config, source_data, target_data)
    result = meta_train(source_model, target_model, target_data, train_overlap, config.meta)
    path = _network_path(config, "tmcdr")
    save_network(path, result.network)
    sidecar = {
        "method": "tmcdr",
        "seed": config.meta.seed,
        "iterations": config.meta.iterations,
        "order": config.meta.order,
        "inner_lr": config.meta.inner_lr,
        "losses": list(result.losses),
    }
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return path


def cmd_map_train(config: RunConfig) -> Path:
    """Train the MSE mapping baseline on the training overlap; persist it."""
    source_model, source_data = _load_pretrained(config, "source")
    target_model, target_data = _load_pretrained(config, "target")
    if source_model.dim != target_model.dim:
        raise DataError(
            f"artifact dim mismatch: source {source_model.dim}, target {target_model.dim}"
        )
    train_overlap, _ = _load_split(config, source_data, target_data)
    result = train_mapping(
        source_model, target_model, train_overlap,
        epochs=config.mapping.epochs, lr=config.mapping.lr, seed=config.mapping.seed,
    )
    path = _network_path(config, "emcdr")
    save_network(path, result.network)
    sidecar = {
        "method": "emcdr",
        "seed": config.mapping.seed,
        "epochs": config.mapping.epochs,
        "lr": config.mapping.lr,
        "losses": list(result.losses),
    }
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return path


def cmd_evaluate(config: RunConfig, method: str) -> Path:
    """Evaluate one embedding provider on the held-out users; write the report."""
    if method not in EVAL_METHODS:
        raise ConfigError(f"method must be one of {EVAL_METHODS}, got {method!r}")
    target_model, target_data = _load_pretrained(config, "target")
    source_model, source_data = _load_pretrained(config, "source")
    _, test_overlap = _load_split(config, source_data, target_data)
    if method == "target_oracle":
        embed = target_oracle_embedder(target_model)
    else:
        net_path = _network_path(config, method)
        if not net_path.exists():
            verb = "meta-train" if method == "tmcdr" else "map-train"
            raise DataError(f"{net_path} not found; run `tmcdr {verb}` first")
        cls = MetaNetwork if method == "tmcdr" else MappingNetwork
        net = load_network(net_path, cls)
        if net.dim != source_model.dim:
            raise DataError(
                f"artifact dim mismatch: network {net.dim}, source model {source_model.dim}"
            )
        embed = affine_embedder(net, source_model)
    report = evaluate_cold_start(test_overlap, embed, target_model, target_data, config.eval_k)
    path = _out(config) / f"report_{method}.txt"
    write_report(path, report, method, extras=_stage_seeds(config))
    return path


# --------------------------------------------------------------------- main

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the JSON run config")
    common.add_argument("--seed", type=int, default=None,
                        help="override every stage seed in the config")
    common.add_argument("--out", default=None, help="override the output directory")
    parser = argparse.ArgumentParser(
        prog="tmcdr",
        description="Cross-domain cold-start recommendation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic two-domain world")
    sub.add_parser("split", parents=[common], help="write the train/test overlap split")
    p = sub.add_parser("pretrain", parents=[common], help="train one domain's base model")
    p.add_argument("--domain", choices=["source", "target"], required=True)
    sub.add_parser("meta-train", parents=[common], help="train the meta network")
    sub.add_parser("map-train", parents=[common], help="train the MSE mapping baseline")
    p = sub.add_parser("evaluate", parents=[common], help="evaluate one method on held-out users")
    p.add_argument("--method", choices=list(EVAL_METHODS), required=True)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        config = load_run_config(args.config, seed=args.seed, out=args.out)
        if args.command == "synth":
            produced = cmd_synth(config)
        elif args.command == "split":
            produced = (cmd_split(config),)
        elif args.command == "pretrain":
            produced = cmd_pretrain(config, args.domain)
        elif args.command == "meta-train":
            produced = (cmd_meta_train(config),)
        elif args.command == "map-train":
            produced = (cmd_map_train(config),)
        else:
            produced = (cmd_evaluate(config, args.method),)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for path in produced:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
