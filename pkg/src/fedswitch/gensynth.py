"""Synthetic CSV generators for offline experiments.

The adult-like table mirrors a census-income layout (mixed numeric and
categorical columns, a binary protected attribute, 100 encoded
features); the cancer-like table is a 30-feature two-class numeric set.
Both are plain CSV so the loader path is exercised end to end.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.special import expit

from fedswitch.datasets import CsvSchema
from fedswitch.sampling import INIT_SYNTH, SERVER, Purpose, RngStreamKey, generator_for

ADULT_CATEGORIES: dict[str, list[str]] = {
    "workclass": [f"wc{i:02d}" for i in range(7)],
    "education": [f"edu{i:02d}" for i in range(16)],
    "marital": [f"mar{i:02d}" for i in range(7)],
    "occupation": [f"occ{i:02d}" for i in range(14)],
    "relationship": [f"rel{i:02d}" for i in range(6)],
    "race": [f"race{i:02d}" for i in range(5)],
    "country": [f"ctry{i:02d}" for i in range(40)],
    "sex": ["f", "m"],
}

ADULT_NUMERIC = ["age", "hours", "capital"]


def adult_like_schema() -> CsvSchema:
    """Schema for the adult-like table: 3 numeric + 97 one-hot = 100
    encoded features; 'sex' = 'f' is the protected subgroup."""
    return CsvSchema(label="income", categorical=dict(ADULT_CATEGORIES),
                     protected="sex", protected_value="f")


def cancer_like_schema() -> CsvSchema:
    return CsvSchema(label="label")


def generate_adult_like(rows: int, seed: int) -> tuple[list[str], list[list[str]]]:
    """Rows of an adult-like table with a mildly label-correlated
    protected attribute, so the parity constraint is active but satisfiable."""
    if rows < 10:
        raise ValueError("need at least 10 rows")
    gen = generator_for(RngStreamKey(seed, 1, SERVER, INIT_SYNTH, Purpose.INIT))
    header = ADULT_NUMERIC + list(ADULT_CATEGORIES) + ["income"]
    out = []
    for _ in range(rows):
        age = float(np.round(gen.uniform(18, 80), 1))
        hours = float(np.round(gen.uniform(5, 80), 1))
        capital = float(np.round(gen.exponential(800.0), 2))
        cats = {}
        for col, values in ADULT_CATEGORIES.items():
            if col == "sex":
                cats[col] = values[int(gen.random() < 0.55)]
            else:
                # mild skew toward low indices, like real census columns
                probs = np.exp(-0.25 * np.arange(len(values)))
                probs /= probs.sum()
                cats[col] = values[int(gen.choice(len(values), p=probs))]
        edu = int(cats["education"][3:])
        occ = int(cats["occupation"][3:])
        score = (0.045 * (age - 45) + 0.035 * (hours - 42)
                 + 0.00035 * capital + 0.16 * (edu - 7) - 0.08 * (occ - 6)
                 + 0.6 * (cats["sex"] == "m") - 0.9)
        y = int(gen.random() < expit(score))
        out.append([f"{age}", f"{hours}", f"{capital}"]
                   + [cats[c] for c in ADULT_CATEGORIES] + [str(y)])
    return header, out


def generate_cancer_like(rows: int, seed: int) -> tuple[list[str], list[list[str]]]:
    """Two overlapping Gaussian classes in 30 dimensions; class 1 is the
    minority (about one third of rows)."""
    if rows < 10:
        raise ValueError("need at least 10 rows")
    gen = generator_for(RngStreamKey(seed, 2, SERVER, INIT_SYNTH, Purpose.INIT))
    d = 30
    mu1 = gen.normal(size=d)
    mu1 *= 2.2 / np.linalg.norm(mu1)
    header = [f"x{j:02d}" for j in range(d)] + ["label"]
    out = []
    for _ in range(rows):
        y = int(gen.random() < 1.0 / 3.0)
        x = gen.normal(size=d) + (mu1 if y else 0.0)
        out.append([f"{v:.6f}" for v in x] + [str(y)])
    return header, out


def write_csv(path: str | Path, header: list[str], rows: list[list[str]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def generate(kind: str, rows: int, seed: int, out: str | Path) -> Path:
    if kind == "adult-like":
        header, data = generate_adult_like(rows, seed)
    elif kind == "cancer-like":
        header, data = generate_cancer_like(rows, seed)
    else:
        raise ValueError(f"unknown synthetic dataset kind {kind!r}")
    write_csv(out, header, data)
    return Path(out)
