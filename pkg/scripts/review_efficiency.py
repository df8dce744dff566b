#!/usr/bin/env python3
"""Review-process efficiency across conformal method combinations.

For one simulated dataset this sweeps every (classification CP, regression
CP) pair, evaluates MURE, CARE, R-F1, the point-biserial correlation of the
uncertainty flag against true disagreement, and the FPR at a target TPR, and
prints a comparison table. The trained tiny scorer can stand in for the
simulator's direct scores via --use-toy-scorer.

Usage:
    python scripts/review_efficiency.py --n 4000 --gamma 0.6 --target-tpr 0.85
"""

from __future__ import annotations

import argparse

from comod.annotations import build_labeled
from comod.errors import UndefinedMetric, UnreachableTarget
from comod.metrics import EvalRecord, care, mure, point_biserial, review_f1, threshold_at_tpr
from comod.platform.pipeline import (
    CLASS_METHODS,
    REG_METHODS,
    calibrate_class_method,
    calibrate_reg_method,
    predict_interval,
    predict_set,
)
from comod.platform.schemas import ScoredInstance
from comod.scorer import predict_toy, train_toy
from comod.simulator import SimConfig, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--alpha", type=float, default=0.1)
    parser.add_argument("--gamma", type=float, default=0.6)
    parser.add_argument("--target-tpr", type=float, default=0.85)
    parser.add_argument("--use-toy-scorer", action="store_true")
    parser.add_argument("--epochs", type=int, default=150)
    args = parser.parse_args()

    cfg = SimConfig(
        seed=args.seed,
        n=args.n,
        score_noise_sd=0.5,
        temperature=1.3,
        reg_noise_sd=0.1,
        feature_dim=4,
    )
    items = generate(cfg)
    labeled = [build_labeled(item.record) for item in items]

    scored = [
        ScoredInstance(id=item.record.id, probs=item.probs, reg=item.reg)
        for item in items
    ]
    if args.use_toy_scorer:
        data = [(item.reg.features, li.y, li.d) for item, li in zip(items, labeled)]
        params = train_toy(data, reg_mode="BCE", epochs=args.epochs, seed=args.seed)
        scored = []
        for item in items:
            probs, reg = predict_toy(params, item.reg.features)
            scored.append(ScoredInstance(id=item.record.id, probs=probs, reg=reg))

    half = len(items) // 2
    cal = list(zip(scored[:half], labeled[:half]))
    test = list(zip(scored[half:], labeled[half:]))

    print(
        f"\nalpha={args.alpha} gamma={args.gamma} target TPR={args.target_tpr} "
        f"n_cal={half} n_test={len(items) - half}"
        + ("  [toy scorer]" if args.use_toy_scorer else "  [simulator scores]")
    )
    header = f"{'class CP':>9} {'reg CP':>7} {'MURE':>7} {'CARE':>7} {'R-F1':>7} {'r_pb':>7} {'FPR@TPR':>8}"
    print(header)
    print("-" * len(header))

    for class_method in CLASS_METHODS:
        class_cal = calibrate_class_method(
            class_method, [(li, s) for s, li in cal], args.alpha
        )
        for reg_method in REG_METHODS:
            reg_cal = calibrate_reg_method(
                reg_method, [(li, s) for s, li in cal], args.alpha
            )
            records = [
                EvalRecord(
                    id=li.id,
                    y=li.y,
                    y_hat=1 if s.probs.p_toxic >= 0.5 else 0,
                    p_toxic=s.probs.p_toxic,
                    set=predict_set(class_cal, s),
                    d=li.d,
                    d_hat=s.reg.d_hat,
                    interval=predict_interval(reg_cal, s),
                )
                for s, li in test
            ]
            def guarded(fn, *a):
                try:
                    return fn(*a)
                except (UndefinedMetric, UnreachableTarget):
                    return None

            m = guarded(mure, records)
            c = guarded(care, records, args.gamma)
            rf1 = review_f1(m, c) if m is not None and c is not None else None
            flags = [1 if r.set.uncertain else 0 for r in records]
            pb = guarded(point_biserial, flags, [r.d for r in records])
            at = guarded(threshold_at_tpr, records, args.target_tpr, args.gamma)
            fpr = at[1] if at is not None else None

            fmt = lambda v: f"{v:7.4f}" if v is not None else "      —"
            print(
                f"{class_method:>9} {reg_method:>7} {fmt(m)} {fmt(c)} "
                f"{fmt(rf1)} {fmt(pb)} {fmt(fpr):>8}"
            )


if __name__ == "__main__":
    main()
