#!/usr/bin/env python3
"""Materialize the datasets used by the bundled experiment configs.

data/breast_cancer.csv
    Wisconsin Diagnostic Breast Cancer (569 samples, 30 features).
    Canonical source: https://archive.ics.uci.edu/dataset/17 (wdbc.data).
    This script writes it from scikit-learn's bundled copy so no network
    access is needed. Labels are remapped so the majority class (benign)
    is 0 and the minority class (malignant) is 1, matching the
    objective-on-majority / constraint-on-minority convention.

data/synthetic_adult.csv
    Synthetic stand-in for the Adult census-income dataset
    (https://archive.ics.uci.edu/dataset/2), generated by
    `fedswitch gen-synth --kind adult-like --rows 4000 --seed 7`.
    The real Adult data is not redistributed here; point
    configs/fair_adult.yaml at your own copy to use it.
"""

import csv
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def write_breast_cancer(path: Path) -> None:
    from sklearn.datasets import load_breast_cancer

    data = load_breast_cancer()
    header = [f"x{j:02d}" for j in range(data.data.shape[1])] + ["label"]
    # benign (sklearn target 1) is the majority class -> label 0
    labels = (data.target == 0).astype(int)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, y in zip(data.data, labels):
            writer.writerow([repr(float(v)) for v in row] + [str(y)])
    print(f"wrote {path}")


def write_synthetic_adult(path: Path) -> None:
    from fedswitch.gensynth import generate

    generate("adult-like", rows=4000, seed=7, out=path)
    print(f"wrote {path}")


if __name__ == "__main__":
    write_breast_cancer(ROOT / "data" / "breast_cancer.csv")
    write_synthetic_adult(ROOT / "data" / "synthetic_adult.csv")
