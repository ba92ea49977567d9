"""Command-line entry point: one binary, one subcommand per pipeline stage.

    synth           generate the seeded synthetic corpus
    score           fill the indicator score cache
    embed           fit standardizer + PCA, write per-sample embeddings
    split           build the labeled training subsets
    train-selector  fit the quality selector on (subset, label) pairs
    curate          cluster, allocate quotas, select the final alpha samples
    report          render report.json and score histograms

Config precedence: defaults < config file < environment < flags. The
environment may only set provider endpoints and the API credential.
Every stage records a fingerprint of its inputs and relevant config;
rerunning with nothing changed is a no-op. Exit codes: 0 success,
1 pipeline error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import report as report_mod
from . import synth as synth_mod
from .config import PipelineConfig, build_config, fingerprint, stage_is_current, stage_mark_done
from .corpus import (
    REQUIRED_MATRICES,
    ScoreCache,
    load_features,
    load_manifest,
    read_feature_file,
    read_scores,
    write_scores,
)
from .embedding import (
    ItemEmbedding,
    assemble_corpus,
    embedding_matrix,
    fit_feature_reducer,
    fit_standardizer,
    identity_standardizer,
    load_bundle,
    save_bundle,
    write_embeddings,
)
from .curate import curate as run_curation
from .errors import MissingFeature, VlcurateError
from .indicators import RatingClient, RewardClient, indicator_matrix, score_corpus
from .quality_labels import (
    SubsetRecord,
    attach_labels,
    build_subsets,
    read_eval_reports,
    write_eval_reports,
    write_subset_manifests,
)
from .selector import init_selector, load_selector, predict_items, save_selector, train

_INDICATOR_COLUMNS = {"clip": 0, "length": 1, "reward": 2, "gpt": 3}


def _log(stage: str, message: str) -> None:
    print(f"[{stage}] {message}")


def _feature_files(cfg: PipelineConfig) -> list[Path]:
    return [cfg.features_path() / f"{name}.txt" for name in REQUIRED_MATRICES]


def _load_embedding_list(cfg: PipelineConfig, manifest) -> list[ItemEmbedding]:
    rows, _ = read_feature_file(cfg.embeddings_path())
    embeddings = []
    for t in manifest:
        if t.id not in rows:
            raise MissingFeature(t.id, "embeddings")
        embeddings.append(ItemEmbedding(id=t.id, vector=rows[t.id]))
    return embeddings


# -- stages ---------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig, args) -> int:
    stage = "synth"
    conf = {"n": cfg.synth_n, "seed": cfg.seed,
            "image_dim": cfg.image_dim, "text_dim": cfg.text_dim}
    outputs = [cfg.manifest_path(), cfg.scores_path(), cfg.oracle_path(),
               *_feature_files(cfg)]
    value = fingerprint([], conf)
    if stage_is_current(cfg.workdir, stage, value, outputs):
        _log(stage, "up-to-date, skipping")
        return 0
    started = time.perf_counter()
    Path(cfg.workdir).mkdir(parents=True, exist_ok=True)
    corpus = synth_mod.generate(cfg.synth_n, cfg.seed, cfg.image_dim, cfg.text_dim)
    synth_mod.write_corpus(corpus, cfg.workdir)
    stage_mark_done(cfg.workdir, stage, value)
    _log(stage, f"n={cfg.synth_n} seed={cfg.seed} -> {cfg.manifest_path()} "
                f"({time.perf_counter() - started:.2f}s)")
    return 0


def cmd_score(cfg: PipelineConfig, args) -> int:
    stage = "score"
    inputs = [cfg.manifest_path(), *_feature_files(cfg)]
    conf = {"provider": cfg.provider, "reward_url": cfg.reward_url,
            "rating_url": cfg.rating_url, "workers": cfg.workers}
    value = fingerprint(inputs, conf)
    if stage_is_current(cfg.workdir, stage, value, [cfg.scores_path()]):
        _log(stage, "up-to-date, skipping")
        return 0
    started = time.perf_counter()
    manifest = load_manifest(cfg.manifest_path())
    features = load_features(cfg.features_path(), manifest)
    cache = read_scores(cfg.scores_path()) if cfg.scores_path().exists() else ScoreCache()
    gpt_provider = reward_provider = None
    if cfg.provider == "http":
        headers = {"Authorization": f"Bearer {cfg.api_key}"} if cfg.api_key else None
        reward_provider = RewardClient(cfg.reward_url, headers=headers)
        gpt_provider = RatingClient(cfg.rating_url, headers=headers)
    score_corpus(manifest, features, cache, gpt_provider, reward_provider,
                 workers=cfg.workers)
    write_scores(cache, cfg.scores_path())
    stage_mark_done(cfg.workdir, stage, value)
    _log(stage, f"scored {len(manifest)} samples ({time.perf_counter() - started:.2f}s)")
    return 0


def cmd_embed(cfg: PipelineConfig, args) -> int:
    stage = "embed"
    inputs = [cfg.manifest_path(), cfg.scores_path(), *_feature_files(cfg)]
    conf = {"m": cfg.m, "standardize": cfg.standardize, "reducer_mode": cfg.reducer_mode}
    value = fingerprint(inputs, conf)
    outputs = [cfg.embeddings_path(), cfg.bundle_path() / "embedding_bundle.json"]
    if stage_is_current(cfg.workdir, stage, value, outputs):
        _log(stage, "up-to-date, skipping")
        return 0
    started = time.perf_counter()
    manifest = load_manifest(cfg.manifest_path())
    features = load_features(cfg.features_path(), manifest)
    cache = read_scores(cfg.scores_path())
    scores = indicator_matrix(manifest, cache)
    std = fit_standardizer(scores) if cfg.standardize else identity_standardizer()
    reducer = fit_feature_reducer(features, cfg.m, cfg.reducer_mode)
    embeddings = assemble_corpus(manifest, cache, features, std, reducer)
    write_embeddings(cfg.embeddings_path(), embeddings)
    save_bundle(cfg.bundle_path(), std, reducer, fingerprint=value)
    stage_mark_done(cfg.workdir, stage, value)
    _log(stage, f"embedded {len(embeddings)} samples, dim {4 + cfg.m} "
                f"({time.perf_counter() - started:.2f}s)")
    return 0


def cmd_split(cfg: PipelineConfig, args) -> int:
    stage = "split"
    inputs = [cfg.manifest_path(), cfg.embeddings_path()]
    if cfg.subset_space == "image":
        inputs.extend(_feature_files(cfg))
    if args.oracle_reports:
        inputs.append(cfg.oracle_path())
    conf = {"n_subsets": cfg.n_subsets, "capacity": cfg.capacity, "seed": cfg.seed,
            "subset_space": cfg.subset_space, "oracle": bool(args.oracle_reports)}
    value = fingerprint(inputs, conf)
    outputs = [cfg.subsets_path() / "subsets.json"]
    if args.oracle_reports:
        outputs.append(cfg.reports_path())
    if stage_is_current(cfg.workdir, stage, value, outputs):
        _log(stage, "up-to-date, skipping")
        return 0
    started = time.perf_counter()
    manifest = load_manifest(cfg.manifest_path())
    embeddings = _load_embedding_list(cfg, manifest)
    vectors = None
    if cfg.subset_space == "image":
        vectors = load_features(cfg.features_path(), manifest).matrix("image")
    subsets = build_subsets(
        embeddings, cfg.n_subsets, seed=cfg.seed, vectors=vectors,
        capacity=cfg.capacity or None,
    )
    write_subset_manifests(subsets, manifest, cfg.subsets_path())
    blob = {
        "n_subsets": cfg.n_subsets,
        "capacity": len(subsets[0].member_ids),
        "subsets": [
            {"subset_id": s.subset_id, "member_ids": list(s.member_ids)}
            for s in subsets
        ],
    }
    with open(cfg.subsets_path() / "subsets.json", "w", encoding="utf-8") as fh:
        json.dump(blob, fh, indent=2)
        fh.write("\n")
    if args.oracle_reports:
        oracle = synth_mod.read_oracle(cfg.oracle_path())
        write_eval_reports(
            cfg.reports_path(),
            synth_mod.oracle_eval_reports(subsets, oracle, seed=cfg.seed),
        )
    stage_mark_done(cfg.workdir, stage, value)
    _log(stage, f"{cfg.n_subsets} subsets x {blob['capacity']} samples "
                f"({time.perf_counter() - started:.2f}s)")
    return 0


def cmd_train_selector(cfg: PipelineConfig, args) -> int:
    stage = "train-selector"
    inputs = [cfg.embeddings_path(), cfg.subsets_path() / "subsets.json",
              cfg.reports_path()]
    conf = {"kind": cfg.selector_kind, "d_model": cfg.d_model, "ff_dim": cfg.ff_dim,
            "layers": cfg.layers, "epochs": cfg.epochs, "lr": cfg.lr,
            "seed": cfg.seed, "optimizer": cfg.optimizer}
    value = fingerprint(inputs, conf)
    outputs = [cfg.model_path() / "meta.json", cfg.model_path() / "params.txt"]
    if stage_is_current(cfg.workdir, stage, value, outputs):
        _log(stage, "up-to-date, skipping")
        return 0
    started = time.perf_counter()
    rows, dim = read_feature_file(cfg.embeddings_path())
    with open(cfg.subsets_path() / "subsets.json", encoding="utf-8") as fh:
        blob = json.load(fh)
    subsets = [
        SubsetRecord(
            subset_id=int(entry["subset_id"]),
            member_ids=tuple(entry["member_ids"]),
            embeddings=np.stack([rows[i] for i in entry["member_ids"]]),
        )
        for entry in blob["subsets"]
    ]
    labeled = attach_labels(subsets, read_eval_reports(cfg.reports_path()))
    model = init_selector(cfg.selector_kind, input_dim=dim, seed=cfg.seed,
                          d_model=cfg.d_model, ff_dim=cfg.ff_dim, layers=cfg.layers)
    result = train(
        model,
        [s.embeddings for s in labeled],
        np.array([s.label for s in labeled]),
        epochs=cfg.epochs, lr=cfg.lr, optimizer=cfg.optimizer,
    )
    save_selector(cfg.model_path(), result.model)
    with open(cfg.model_path() / "losses.json", "w", encoding="utf-8") as fh:
        json.dump({"losses": result.losses}, fh, indent=2)
        fh.write("\n")
    stage_mark_done(cfg.workdir, stage, value)
    _log(stage, f"kind={cfg.selector_kind} loss {result.losses[0]:.4f} -> "
                f"{result.losses[-1]:.4f} over {cfg.epochs} epochs "
                f"({time.perf_counter() - started:.2f}s)")
    return 0


def cmd_curate(cfg: PipelineConfig, args) -> int:
    stage = "curate"
    inputs = [cfg.manifest_path(), cfg.embeddings_path(), *_feature_files(cfg)]
    if cfg.indicator:
        inputs.append(cfg.scores_path())
    else:
        inputs.extend([cfg.model_path() / "meta.json", cfg.model_path() / "params.txt"])
    conf = {"k_clusters": cfg.k_clusters, "alpha": cfg.alpha, "seed": cfg.seed,
            "clustering": cfg.clustering, "indicator": cfg.indicator}
    value = fingerprint(inputs, conf)
    outputs = [cfg.curated_path() / "selected.manifest.jsonl",
               cfg.curated_path() / "summary.json"]
    if stage_is_current(cfg.workdir, stage, value, outputs):
        _log(stage, "up-to-date, skipping")
        return 0
    started = time.perf_counter()
    manifest = load_manifest(cfg.manifest_path())
    features = load_features(cfg.features_path(), manifest)
    if cfg.indicator:
        cache = read_scores(cfg.scores_path())
        item_scores = indicator_matrix(manifest, cache)[:, _INDICATOR_COLUMNS[cfg.indicator]]
    else:
        model = load_selector(cfg.model_path())
        embeddings = _load_embedding_list(cfg, manifest)
        item_scores = predict_items(model, embedding_matrix(embeddings))
    result = run_curation(
        manifest, item_scores, features.matrix("image"),
        k_clusters=cfg.k_clusters, alpha=cfg.alpha, seed=cfg.seed,
        use_clusters=cfg.clustering,
    )
    report_mod.write_selection(cfg.curated_path(), result, manifest)
    stage_mark_done(cfg.workdir, stage, value)
    _log(stage, f"selected {len(result.selected_ids)} of {len(manifest)} across "
                f"{len(result.quotas)} clusters ({time.perf_counter() - started:.2f}s)")
    return 0


def cmd_report(cfg: PipelineConfig, args) -> int:
    stage = "report"
    inputs = [cfg.curated_path() / "summary.json"]
    oracle = None
    if cfg.oracle_path().exists():
        inputs.append(cfg.oracle_path())
        oracle = synth_mod.read_oracle(cfg.oracle_path())
    value = fingerprint(inputs, {"seed": cfg.seed})
    if stage_is_current(cfg.workdir, stage, value,
                        [cfg.curated_path() / "report.json"]):
        _log(stage, "up-to-date, skipping")
        return 0
    started = time.perf_counter()
    manifest = load_manifest(cfg.manifest_path())
    report = report_mod.write_report(cfg.curated_path(), manifest, oracle, seed=cfg.seed)
    stage_mark_done(cfg.workdir, stage, value)
    note = ""
    if "oracle_comparison" in report:
        comp = report["oracle_comparison"]
        note = (f" uplift={comp['uplift']:.4f} z={comp['z']:.1f}")
    _log(stage, f"wrote {cfg.curated_path() / 'report.json'}{note} "
                f"({time.perf_counter() - started:.2f}s)")
    return 0


# -- argument parsing -----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlcurate",
        description="Indicator-scored, selector-ranked curation of "
                    "vision-language instruction data.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--workdir", help="pipeline working directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--n", dest="synth_n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--image-dim", dest="image_dim", type=int)
    p.add_argument("--text-dim", dest="text_dim", type=int)

    p = sub.add_parser("score", parents=[common], help="fill the indicator score cache")
    p.add_argument("--provider", choices=("cache", "http"))
    p.add_argument("--workers", type=int)
    p.add_argument("--reward-url", dest="reward_url")
    p.add_argument("--rating-url", dest="rating_url")

    p = sub.add_parser("embed", parents=[common], help="assemble per-sample embeddings")
    p.add_argument("--feature-size", dest="m", type=int,
                   help="PCA output width m (embedding dim is 4+m)")
    p.add_argument("--no-standardize", dest="standardize",
                   action="store_const", const=False)
    p.add_argument("--reducer-mode", dest="reducer_mode", choices=("joint", "split"))

    p = sub.add_parser("split", parents=[common], help="build labeled training subsets")
    p.add_argument("--n-subsets", dest="n_subsets", type=int)
    p.add_argument("--capacity", type=int)
    p.add_argument("--space", dest="subset_space", choices=("embedding", "image"))
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle", dest="oracle_reports", action="store_true",
                   help="also derive eval reports from the planted oracle")

    p = sub.add_parser("train-selector", parents=[common], help="train the selector")
    p.add_argument("--kind", dest="selector_kind",
                   choices=("linear", "mlp", "attention"))
    p.add_argument("--layers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--d-model", dest="d_model", type=int)
    p.add_argument("--ff-dim", dest="ff_dim", type=int)

    p = sub.add_parser("curate", parents=[common], help="select the final subset")
    p.add_argument("--alpha", type=int)
    p.add_argument("--clusters", dest="k_clusters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--selector", dest="model_dir", help="selector model directory")
    p.add_argument("--no-clustering", dest="clustering",
                   action="store_const", const=False)
    p.add_argument("--indicator", choices=("clip", "length", "reward", "gpt"),
                   help="rank by one raw indicator instead of the selector")

    p = sub.add_parser("report", parents=[common], help="render report and plots")
    p.add_argument("--seed", type=int)
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "score": cmd_score,
    "embed": cmd_embed,
    "split": cmd_split,
    "train-selector": cmd_train_selector,
    "curate": cmd_curate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    known = config_mod.config_keys()
    flag_values = {
        key: value for key, value in vars(args).items()
        if key in known and value is not None
    }
    try:
        cfg = build_config(args.config, flag_values)
        return _COMMANDS[args.command](cfg, args)
    except (VlcurateError, OSError) as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
