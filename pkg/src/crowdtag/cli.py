"""Command-line entry point.

Subcommands mirror the pipeline stages plus `verify-theorem` and `sweep`.
Exit codes: 0 success, 1 validation error, 2 missing prior artifact,
3 budget refusal, 4 LLM transport failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fixtures, pipeline
from .annotate import BudgetExhaustedError, TransportError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--out-dir", help="artifact directory (overrides config)")
    parser.add_argument("--seed", type=int, help="base seed (annotator + GCN + splits)")


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--content", help=".content file path")
    parser.add_argument("--cites", help=".cites file path")
    parser.add_argument("--texts", help="optional key<TAB>text file")
    parser.add_argument("--embeddings", help="optional key<TAB>floats file")
    parser.add_argument(
        "--edge-semantics",
        choices=["citing_to_cited", "cited_to_citing"],
        help="direction an edge represents",
    )
    parser.add_argument(
        "--fixture",
        action="store_true",
        help="use the bundled 30-node fixture dataset",
    )


def _add_annotator_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--endpoint", help="chat-completions URL (llm mode)")
    parser.add_argument("--model", help="model name sent in requests")
    parser.add_argument("--api-key-env", help="env var holding the API key")
    parser.add_argument("--cache", help="response cache JSONL path")
    parser.add_argument("--budget-usd", type=float, help="hard dollar limit")
    parser.add_argument("--max-inflight", type=int, help="concurrent request bound")
    parser.add_argument("--noise", type=float, help="oracle mode noise rate")
    parser.add_argument("--node-cap", type=int, help="annotate only the top-N stage-one nodes")
    parser.add_argument(
        "--annotator-mode", choices=["oracle", "llm"], help="worker backend"
    )


def _add_filter_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gamma", type=float, help="stage-one PageRank weight")
    parser.add_argument("--lambda", dest="lam", type=float, help="stage-one density weight")
    parser.add_argument("--eta", type=float, help="stage-two keep fraction")
    parser.add_argument("--k", type=int, help="stage-one selection size")
    parser.add_argument("--kmeans-seed", type=int, help="k-means init seed")
    parser.add_argument("--damping", type=float, help="PageRank damping factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdtag",
        description="LLM-crowdsourced annotation of directed citation graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("ingest", "parse dataset files into the graph artifact"),
        ("annotate", "run the eight workers per node (cached, budgeted)"),
        ("aggregate", "fuse worker responses into pseudo-labels"),
        ("filter", "two-stage training-set selection"),
        ("train", "train the GCN on the selected nodes"),
        ("pipeline", "run all stages in order"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        _add_dataset_flags(p)
        _add_annotator_flags(p)
        _add_filter_flags(p)

    p = sub.add_parser("sweep", help="filter+train over a gamma/lambda grid (cache only)")
    _add_common(p)
    _add_dataset_flags(p)
    _add_annotator_flags(p)
    _add_filter_flags(p)
    p.add_argument("--gamma-values", help="comma-separated gamma grid")
    p.add_argument("--lambda-values", help="comma-separated lambda grid")
    p.add_argument("--sweep-seeds", type=int, help="runs per cell")

    p = sub.add_parser("verify-theorem", help="closed-form vs Monte Carlo dominance check")
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")

    p = sub.add_parser("make-fixture", help="write the bundled fixture dataset files")
    p.add_argument("--out-dir", default="fixture30")
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    dataset = {
        "content": get("content"),
        "cites": get("cites"),
        "texts": get("texts"),
        "embeddings": get("embeddings"),
        "edge_semantics": get("edge_semantics"),
    }
    if get("fixture"):
        content, cites, texts = fixtures.fixture_paths()
        dataset.update({"content": str(content), "cites": str(cites), "texts": str(texts)})
    annotator = {
        "mode": get("annotator_mode"),
        "endpoint": get("endpoint"),
        "model": get("model"),
        "api_key_env": get("api_key_env"),
        "cache": get("cache"),
        "budget_usd": get("budget_usd"),
        "max_inflight": get("max_inflight"),
        "noise": get("noise"),
        "node_cap": get("node_cap"),
        "seed": get("seed"),
    }
    filt = {
        "gamma": get("gamma"),
        "lambda": get("lam"),
        "eta": get("eta"),
        "k": get("k"),
        "kmeans_seed": get("kmeans_seed"),
        "damping": get("damping"),
    }
    gcn_over = {"seed": get("seed")}
    overrides = {
        "dataset": dataset,
        "annotator": annotator,
        "filter": filt,
        "gcn": gcn_over,
        "out_dir": get("out_dir"),
    }
    return overrides


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "make-fixture":
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = fixtures.write_fixture_files(out / "fixture30")
        print("\n".join(str(p) for p in paths))
        return pipeline.EXIT_OK

    if args.command == "verify-theorem":
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "theorem_report.csv"
        reports, passed = pipeline.verify_theorem(
            args.alpha, args.classes, args.hops, args.samples, args.seed, report_path
        )
        for r in reports:
            print(
                f"hop {r.hop}: diag {r.diagonal:.4f} offdiag {r.off_diagonal:.4f} "
                f"empirical {r.empirical:.4f} gap {r.gap:.4f} "
                f"{'dominant' if r.dominant else 'not dominant'}"
            )
        print(f"report: {report_path}")
        print("PASS" if passed else "FAIL")
        return pipeline.EXIT_OK if passed else pipeline.EXIT_VALIDATION

    try:
        cfg = pipeline.load_config(args.config, _overrides_from_args(args))
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return pipeline.EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return pipeline.EXIT_VALIDATION

    paths = pipeline.StagePaths(Path(cfg.out_dir))
    stage_fns = {
        "ingest": pipeline.stage_ingest,
        "annotate": pipeline.stage_annotate,
        "aggregate": pipeline.stage_aggregate,
        "filter": pipeline.stage_filter,
        "train": pipeline.stage_train,
    }

    try:
        with pipeline.pipeline_lock(paths.out_dir):
            if args.command == "pipeline":
                ran = pipeline.run_pipeline(cfg, paths)
                for stage, did_run in ran.items():
                    print(f"{stage}: {'ran' if did_run else 'skipped (up to date)'}")
            elif args.command == "sweep":
                gamma_values = (
                    [float(x) for x in args.gamma_values.split(",")]
                    if args.gamma_values
                    else cfg.sweep.gamma_values
                )
                lambda_values = (
                    [float(x) for x in args.lambda_values.split(",")]
                    if args.lambda_values
                    else cfg.sweep.lambda_values
                )
                seeds = args.sweep_seeds or cfg.sweep.seeds
                if not gamma_values:
                    raise pipeline.ConfigError("sweep requires gamma/lambda grids")
                results = pipeline.hyperparameter_sweep(
                    cfg, paths, gamma_values, lambda_values, seeds
                )
                sweep_path = paths.out_dir / "sweep.csv"
                pipeline.write_sweep_csv(
                    sweep_path, pipeline.config_hash(cfg, ("filter", "gcn")), results
                )
                for r in results:
                    print(
                        f"gamma={r['gamma']:.3f} lambda={r['lambda']:.3f}: "
                        f"{100 * r['mean_acc']:.2f} +/- {100 * r['std_acc']:.2f}"
                    )
                print(f"wrote {sweep_path}")
            else:
                did_run = stage_fns[args.command](cfg, paths)
                print(f"{args.command}: {'ran' if did_run else 'skipped (up to date)'}")
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return pipeline.EXIT_VALIDATION
    except pipeline.MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return pipeline.EXIT_MISSING_ARTIFACT
    except BudgetExhaustedError as exc:
        print(f"budget refusal: {exc}", file=sys.stderr)
        return pipeline.EXIT_BUDGET
    except TransportError as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return pipeline.EXIT_TRANSPORT
    return pipeline.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
