#!/usr/bin/env python3
"""Run the full experiment grid and write CSV/JSON results.

  1. Gini Importance and Information Gain rankings on the quasi-balanced set.
  2. F1-versus-feature-count curves for DT, RF (m grid) and k-NN (k grid).
  3. CV F1 plus per-sample latency of every (subset, model) pair on the
     extended set.

Without --qb/--eqb a synthetic flow-like dataset is generated, which makes
the script runnable anywhere (results are then only a smoke test).
"""

from __future__ import annotations

import argparse
import csv
import json
import time
from pathlib import Path

import numpy as np

from botsift import __version__
from botsift.dataset import Dataset, quasi_balance, read_csv
from botsift.evaluation import SUBSETS, evaluate_subsets
from botsift.features import FEATURE_NAMES
from botsift.models import ForestParams, ModelSpec
from botsift.ranking import feature_curve, rank_features


def synthetic_dataset(n: int, seed: int) -> Dataset:
    """Flow-like samples whose class shows mostly in dPort, nPackets and nBytes."""
    rng = np.random.default_rng(seed)
    classes = ["Normal", "Neris", "Rbot", "Virut", "Murlo", "Sogou"]
    weights = np.array([8, 8, 8, 8, 4, 1], dtype=float)
    y = rng.choice(len(classes), size=n, p=weights / weights.sum())
    ports = np.array([443, 80, 6667, 65520, 25, 8080])
    X = np.empty((n, len(FEATURE_NAMES)))
    X[:, 0] = rng.integers(1024, 65535, n)                                  # sPort
    X[:, 1] = np.where(rng.random(n) < 0.8, ports[y], rng.choice(ports, n))  # dPort
    npk = rng.poisson(4 + 3 * y) + 2
    lens = rng.gamma(2.0, 40 + 25 * y)
    X[:, 2] = lens                                                         # mLen
    X[:, 3] = lens ** 2 * rng.uniform(0.2, 1.0, n)                         # vLen
    X[:, 4] = rng.exponential(0.05 * (1 + y), n)                           # mTime
    X[:, 5] = X[:, 4] ** 2 * rng.uniform(0.1, 2.0, n)                      # vTime
    X[:, 6] = rng.exponential(0.03, n)                                     # mResp
    X[:, 7] = X[:, 6] ** 2 * rng.uniform(0.1, 2.0, n)                      # vResp
    X[:, 8] = np.round(lens * npk)                                         # nBytes
    X[:, 9] = rng.integers(0, 3, n)                                        # nSYN
    X[:, 10] = npk                                                         # nPackets
    return Dataset(FEATURE_NAMES, X, tuple(classes[i] for i in y))


def write_rows(path: Path, header, rows, seed: int) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# botsift {__version__} seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qb", help="quasi-balanced dataset CSV (ranking and curves)")
    ap.add_argument("--eqb", help="extended dataset CSV (subset evaluation)")
    ap.add_argument("--output", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--m-grid", default="1,5,10,20", help="forest sizes for the curves")
    ap.add_argument("--k-grid", default="1,3,5", help="neighbour counts for the curves")
    ap.add_argument("--synthetic", type=int, default=3000,
                    help="samples to generate when no CSV is given")
    ap.add_argument("--cap", type=int, default=None, help="quasi-balance cap applied to --qb")
    args = ap.parse_args()

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    qb = read_csv(args.qb, FEATURE_NAMES) if args.qb else synthetic_dataset(args.synthetic, args.seed)
    if args.cap:
        qb = quasi_balance(qb, args.cap, args.seed)
    eqb = read_csv(args.eqb, FEATURE_NAMES) if args.eqb else qb
    print(f"ranking/curve set: {len(qb)} samples {qb.class_counts()}")
    print(f"evaluation set:    {len(eqb)} samples")

    models = [ModelSpec("dt")]
    models += [ModelSpec("rf", m=int(m)) for m in args.m_grid.split(",")]
    models += [ModelSpec("knn", k=int(k)) for k in args.k_grid.split(",")]

    curve_rows = []
    for method in ("gi", "ig"):
        t0 = time.perf_counter()
        ranking = rank_features(qb, method, forest_params=ForestParams(m=10), seed=args.seed)
        write_rows(out / f"rank_{method}.csv", ("feature", "score"),
                   zip(ranking.features, ranking.scores), args.seed)
        print(f"{method}: {' > '.join(ranking.features)} ({time.perf_counter() - t0:.1f} s)")
        for spec in models:
            t0 = time.perf_counter()
            curve = feature_curve(qb, ranking, spec, args.folds, args.seed)
            curve_rows += [(method, spec.name, n, f, s) for n, f, s in curve.rows()]
            best = int(np.argmax(curve.f1))
            print(f"  {spec.name:8s} best F1 {curve.f1[best]:.3f} at n={best + 1} "
                  f"({time.perf_counter() - t0:.1f} s)")
    write_rows(out / "curves.csv", ("method", "model", "n", "feature_added", "f1"), curve_rows,
               args.seed)

    specs = [ModelSpec("dt"), ModelSpec("rf", m=10), ModelSpec("knn", k=1)]
    reports = evaluate_subsets(eqb, SUBSETS, specs, args.folds, args.seed)
    (out / "reports.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n",
                                      encoding="utf-8")
    rows = []
    for r in reports:
        us = r.seconds_per_sample * 1e6
        perf = r.weighted_f1 / (r.seconds_per_sample * 1e3)
        rows.append((r.model, r.subset, len(r.features), r.weighted_f1, r.macro_f1, us, perf))
        print(f"{r.model:8s} {r.subset:6s} wF1 {r.weighted_f1:.3f} mF1 {r.macro_f1:.3f} "
              f"{us:8.2f} us/sample  perf {perf:9.2f} ms^-1")
    write_rows(out / "summary.csv", ("model", "subset", "n_features", "weighted_f1", "macro_f1",
                                     "us_per_sample", "performance"), rows, args.seed)
    print(f"results in {out}/")


if __name__ == "__main__":
    main()
