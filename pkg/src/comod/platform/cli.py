"""Command-line front end.

Subcommands cover the full desk-scale pipeline:

    comod simulate  --out data/ --n 4000 --seed 7
    comod ingest    --annotations data/annotations.jsonl --min-annotators 10
    comod train-toy --data data/ --reg-mode BCE --out model.json --emit-scores data/model_scores.jsonl
    comod calibrate --data data/ --alpha 0.1 --class-method LAC --reg-method AR --out calibration.json
    comod route     --calibration calibration.json --scores data/scores.jsonl --out decisions.jsonl
    comod evaluate  --calibration calibration.json --data data/ --report report.json
    comod serve     --calibration calibration.json --port 8080
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..errors import ModerationError
from ..router import RoutingPolicy
from ..scorer import train_toy, predict_toy
from ..simulator import RNG_ALGORITHM, SimConfig, generate
from .pipeline import (
    CLASS_METHODS,
    REG_METHODS,
    calibrate_bundle,
    evaluate_bundle,
    load_dataset,
    route_scored,
)
from .schemas import (
    SCHEMA_VERSION,
    DatasetManifest,
    ScoredInstance,
    file_checksum,
    ingest_annotations,
    write_annotations,
    write_manifest,
    write_scores,
)
from .store import load_calibration, load_model, persist_calibration, persist_model


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--annotators-min", type=int, default=10)
    p.add_argument("--annotators-max", type=int, default=40)
    p.add_argument("--score-noise-sd", type=float, default=0.5)
    p.add_argument("--temperature", type=float, default=1.3)
    p.add_argument("--reg-noise-sd", type=float, default=0.1)
    p.add_argument("--feature-dim", type=int, default=4)
    p.add_argument("--format", choices=("csv", "jsonl"), default="jsonl")
    p.add_argument("--method", choices=("distance", "entropy"), default="distance")


def _cmd_simulate(args) -> int:
    config = SimConfig(
        seed=args.seed,
        n=args.n,
        annotators_min=args.annotators_min,
        annotators_max=args.annotators_max,
        score_noise_sd=args.score_noise_sd,
        temperature=args.temperature,
        reg_noise_sd=args.reg_noise_sd,
        feature_dim=args.feature_dim,
        disagreement_method=args.method,
    )
    items = generate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    annotations_path = out / f"annotations.{args.format}"
    scores_path = out / f"scores.{args.format}"
    write_annotations([item.record for item in items], annotations_path, args.format)
    write_scores(
        [
            ScoredInstance(id=item.record.id, probs=item.probs, reg=item.reg, text=item.record.text)
            for item in items
        ],
        scores_path,
        args.format,
    )
    manifest = DatasetManifest(
        schema_version=SCHEMA_VERSION,
        source="simulator",
        n=len(items),
        annotation_method=args.method,
        min_annotators=config.annotators_min,
        checksum=file_checksum(annotations_path),
        rng_algorithm=RNG_ALGORITHM,
        seed=args.seed,
    )
    write_manifest(manifest, out / "manifest.json")
    print(f"wrote {len(items)} items to {out}")
    return 0


def _add_ingest(sub):
    p = sub.add_parser("ingest", help="validate annotations and report label stats")
    p.add_argument("--annotations", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default="jsonl")
    p.add_argument("--min-annotators", type=int, default=10)
    p.add_argument("--method", choices=("distance", "entropy"), default="distance")
    p.add_argument("--out", help="write labeled instances to this jsonl file")


def _cmd_ingest(args) -> int:
    labeled, manifest = ingest_annotations(
        args.annotations,
        format=args.format,
        min_annotators=args.min_annotators,
        method=args.method,
    )
    toxic = sum(inst.y for inst in labeled)
    mean_d = sum(inst.d for inst in labeled) / len(labeled)
    print(f"{len(labeled)} instances ({toxic} toxic), mean disagreement {mean_d:.3f}")
    print(f"manifest checksum {manifest.checksum[:12]}…")
    if args.out:
        with open(args.out, "w") as fh:
            for inst in labeled:
                fh.write(
                    json.dumps(
                        {
                            "id": inst.id,
                            "y": inst.y,
                            "a_mean": inst.a_mean,
                            "d": inst.d,
                            "annotator_count": inst.annotator_count,
                        }
                    )
                    + "\n"
                )
    return 0


def _add_train_toy(sub):
    p = sub.add_parser("train-toy", help="train the tiny multitask scorer")
    p.add_argument("--data", required=True, help="dataset directory from `simulate`")
    p.add_argument("--format", choices=("csv", "jsonl"), default="jsonl")
    p.add_argument("--reg-mode", choices=("BCE", "MSE", "RAC"), default="BCE")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden-dim", type=int, default=8)
    p.add_argument("--min-annotators", type=int, default=1)
    p.add_argument("--method", choices=("distance", "entropy"), default="distance")
    p.add_argument("--out", required=True, help="model parameter file")
    p.add_argument("--emit-scores", help="write the model's own scores for the dataset here")


def _cmd_train_toy(args) -> int:
    pairs = load_dataset(
        args.data, format=args.format, min_annotators=args.min_annotators, method=args.method
    )
    missing = [s.id for _, s in pairs if s.reg.features is None]
    if missing:
        print(
            f"error: {len(missing)} instances lack feature vectors; "
            "simulate with --feature-dim >= 1",
            file=sys.stderr,
        )
        return 2
    dataset = [(s.reg.features, inst.y, inst.d) for inst, s in pairs]
    params = train_toy(
        dataset,
        reg_mode=args.reg_mode,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        seed=args.seed,
        hidden_dim=args.hidden_dim,
    )
    persist_model(params, args.out)
    print(f"trained {args.reg_mode} scorer on {len(dataset)} items -> {args.out}")
    if args.emit_scores:
        from ..conformal_reg import RegOutput

        scored = []
        for inst, s in pairs:
            probs, reg = predict_toy(params, s.reg.features)
            reg = RegOutput(d_hat=reg.d_hat, bin_probs=reg.bin_probs, features=s.reg.features)
            scored.append(ScoredInstance(id=inst.id, probs=probs, reg=reg, text=inst.text))
        write_scores(scored, args.emit_scores, args.format)
        print(f"wrote model scores to {args.emit_scores}")
    return 0


def _add_calibrate(sub):
    p = sub.add_parser("calibrate", help="freeze conformal calibrations for both tasks")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default="jsonl")
    p.add_argument("--scores", help="override the scores file (e.g. model scores)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.6)
    p.add_argument("--class-method", choices=CLASS_METHODS, default="LAC")
    p.add_argument("--reg-method", choices=REG_METHODS, default="AR")
    p.add_argument("--pipeline", choices=("STL", "CoM", "MTL"), default="MTL")
    p.add_argument("--cal-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-annotators", type=int, default=1)
    p.add_argument("--method", choices=("distance", "entropy"), default="distance")
    p.add_argument("--rn-neighbors", type=int, default=25)
    p.add_argument("--out", required=True)


def _cmd_calibrate(args) -> int:
    pairs = load_dataset(
        args.data,
        format=args.format,
        min_annotators=args.min_annotators,
        method=args.method,
        scores_path=args.scores,
    )
    policy = RoutingPolicy(gamma=args.gamma, alpha=args.alpha, pipeline=args.pipeline)
    bundle = calibrate_bundle(
        pairs,
        policy,
        args.class_method,
        args.reg_method,
        cal_fraction=args.cal_fraction,
        seed=args.seed,
        rn_neighbors=args.rn_neighbors,
        data_dir=args.data,
        scores_path=args.scores,
        data_format=args.format,
        min_annotators=args.min_annotators,
        annotation_method=args.method,
    )
    persist_calibration(bundle, args.out)
    cc, rc = bundle.class_calibration, bundle.reg_calibration
    threshold = {"LAC": cc.q_hat, "CCLAC": cc.q_hat_per_class, "CRC": cc.lambda_hat}[cc.method]
    print(
        f"calibrated {cc.method}+{rc.method} at alpha={policy.alpha} on "
        f"{len(bundle.cal_ids)} items (class threshold {threshold}, reg q_hat {rc.q_hat:.4f})"
    )
    print(f"wrote {args.out}")
    return 0


def _add_route(sub):
    p = sub.add_parser("route", help="route scored comments with a frozen calibration")
    p.add_argument("--calibration", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default="jsonl")
    p.add_argument("--out", help="decision log (jsonl); defaults to stdout")


def _cmd_route(args) -> int:
    from .schemas import ingest_scores
    from .service import decision_to_dict

    bundle = load_calibration(args.calibration)
    scored = ingest_scores(args.scores, format=args.format)
    decisions, summary = route_scored(
        scored, bundle.class_calibration, bundle.reg_calibration, bundle.policy
    )
    lines = [json.dumps(decision_to_dict(d)) for d in decisions]
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    else:
        for line in lines:
            print(line)
    print(
        f"routed {len(decisions)}: {summary['review']} review, "
        f"{summary['auto_publish']} publish, {summary['auto_remove']} remove",
        file=sys.stderr,
    )
    return 0


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="full metrics report on the evaluation split")
    p.add_argument("--calibration", required=True)
    p.add_argument("--data", help="dataset directory; defaults to the one in the bundle")
    p.add_argument("--scores", help="override scores file")
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--target-tpr", type=float, default=0.85)
    p.add_argument("--report", help="write the machine-readable report here (json)")


def _cmd_evaluate(args) -> int:
    bundle = load_calibration(args.calibration)
    data_dir = args.data or bundle.data_dir
    if data_dir is None:
        print("error: no dataset directory on record; pass --data", file=sys.stderr)
        return 2
    fmt = args.format or bundle.data_format
    pairs = load_dataset(
        data_dir,
        format=fmt,
        min_annotators=bundle.min_annotators,
        method=bundle.annotation_method,
        scores_path=args.scores or bundle.scores_path,
    )
    report = evaluate_bundle(bundle, pairs, target_tpr=args.target_tpr)
    status = report.defined_status()
    print(f"n={report.n}  alpha={report.alpha}  gamma={report.gamma}")
    for name, defined in status.items():
        value = getattr(report, name)
        shown = f"{value:.4f}" if isinstance(value, float) else str(value)
        print(f"  {name:>18}: {shown if defined else 'undefined'}")
    if args.report:
        Path(args.report).write_text(json.dumps(report.as_dict(), indent=2) + "\n")
        print(f"wrote {args.report}", file=sys.stderr)
    return 0


def _add_serve(sub):
    p = sub.add_parser("serve", help="start the HTTP moderation service")
    p.add_argument("--calibration", help="calibration bundle to load at startup")
    p.add_argument("--log", default=None, help="decision log path")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    data_dir = Path(os.environ.get("COMOD_DATA_DIR", "."))
    log_path = Path(args.log) if args.log else data_dir / "decision_log.jsonl"
    port = args.port if args.port is not None else int(os.environ.get("COMOD_PORT", "8080"))
    if args.calibration and not Path(args.calibration).exists():
        print(f"error: calibration file {args.calibration} not found", file=sys.stderr)
        return 2
    app = create_app(log_path=log_path, calibration_path=args.calibration)
    uvicorn.run(app, host=args.host, port=port)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "ingest": _cmd_ingest,
    "train-toy": _cmd_train_toy,
    "calibrate": _cmd_calibrate,
    "route": _cmd_route,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comod", description="collaborative content-moderation engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate(sub)
    _add_ingest(sub)
    _add_train_toy(sub)
    _add_calibrate(sub)
    _add_route(sub)
    _add_evaluate(sub)
    _add_serve(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ModerationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
