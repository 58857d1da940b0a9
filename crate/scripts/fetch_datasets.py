#!/usr/bin/env python3
"""Build the benchmark CSVs used by the `palms` CLI and the acceptance suite.

Sources are Python wheels that bundle public copies of the UCI/KEEL data
(fetched through pip, so any configured package index works):

  keel_ds          tictactoe, krvskp, pima, phoneme
  orange3          heart (Cleveland), ionosphere
  common_datasets  thyroid (new-thyroid, normal vs. hyper/hypo)

Every output is `f1,...,fn,label` with label in {0,1}. Categorical columns are
integer coded (sorted category order), exact duplicate rows are dropped, and
missing cells are filled with the column median.

Solarflare, Spinal and IBN_Sina have no bundled copy with a matching class
split and are not produced. `--uci-dir` can rebuild thyroid from a local raw
`new-thyroid.data` instead of the wheel.
"""

import argparse
import csv
import glob
import io
import os
import statistics
import subprocess
import sys
import tempfile
import zipfile

# dataset -> (wheel, member path, parser, positive/class-1 raw labels)
KEEL = "keel_ds"
ORANGE = "orange3"
COMMON = "common_datasets"

SOURCES = {
    "tictactoe": (KEEL, "keel_ds/data/balanced/raw/tic-tac-toe.dat", "keel", {"positive"}),
    "krvskp": (KEEL, "keel_ds/data/balanced/raw/chess.dat", "keel", {"nowin"}),
    "pima": (KEEL, "keel_ds/data/balanced/raw/pima.dat", "keel", {"tested_positive"}),
    "phoneme": (KEEL, "keel_ds/data/balanced/raw/phoneme.dat", "keel", {"1"}),
    # class 0 = heart disease present (diameter narrowing 1)
    "heart": (ORANGE, "Orange/datasets/heart_disease.tab", "tab", {"0"}),
    "ionosphere": (ORANGE, "Orange/tests/datasets/ionosphere.tab", "tab", {"g"}),
    # class 1 = normal (150), class 0 = hyper/hypo (65)
    "thyroid": (COMMON, "common_datasets/data/classification/newthyroid/newthyroid.dat", "keel", {"1"}),
}


def fetch_wheel(package, cache):
    found = glob.glob(os.path.join(cache, package.replace("-", "_") + "-*.whl"))
    if not found:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", package, "--no-deps",
             "--only-binary", ":all:", "-d", cache, "-q"],
            check=True,
        )
        found = glob.glob(os.path.join(cache, package.replace("-", "_") + "-*.whl"))
    if not found:
        raise SystemExit(f"could not download wheel for {package}")
    return sorted(found)[-1]


def parse_keel(text):
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        rows.append([c.strip() for c in line.split(",")])
    return rows


def parse_tab(text):
    lines = text.splitlines()
    body = lines[3:]
    rows = []
    for line in body:
        if not line.strip():
            continue
        rows.append([c.strip() for c in line.split("\t")])
    return rows


def encode(rows, positive):
    width = len(rows[0]) - 1
    columns = list(zip(*[r[:width] for r in rows]))
    encoded = []
    for col in columns:
        present = [v for v in col if v not in ("?", "")]
        try:
            numeric = [float(v) for v in present]
            fill = statistics.median(numeric)
            encoded.append([float(v) if v not in ("?", "") else fill for v in col])
        except ValueError:
            cats = sorted(set(present))
            codes = [cats.index(v) for v in present]
            fill = statistics.median_low(codes)
            encoded.append([cats.index(v) if v not in ("?", "") else fill for v in col])
    labels = [1 if r[width] in positive else 0 for r in rows]
    out = []
    seen = set()
    for i, y in enumerate(labels):
        row = tuple(c[i] for c in encoded) + (y,)
        if row in seen:
            continue
        seen.add(row)
        out.append(row)
    return width, out


def write_csv(path, width, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i + 1}" for i in range(width)] + ["label"])
        for r in rows:
            w.writerow([fmt(v) for v in r[:-1]] + [r[-1]])


def fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def uci_thyroid(uci_dir):
    path = os.path.join(uci_dir, "new-thyroid.data")
    if not os.path.exists(path):
        return None
    rows = []
    for line in open(path):
        parts = [p.strip() for p in line.strip().split(",")]
        if len(parts) != 6:
            continue
        # class 1 = normal (150), classes 2/3 = hyper/hypo (65)
        rows.append(parts[1:] + ["1" if parts[0] == "1" else "0"])
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--cache", default=None, help="directory holding/receiving the source wheels")
    ap.add_argument("--uci-dir", default=None, help="directory with raw UCI files (new-thyroid.data)")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    cache = args.cache or tempfile.mkdtemp(prefix="palms-wheels-")
    os.makedirs(cache, exist_ok=True)

    wheels = {}
    for name, (pkg, member, kind, positive) in SOURCES.items():
        if pkg not in wheels:
            wheels[pkg] = zipfile.ZipFile(fetch_wheel(pkg, cache))
        text = io.TextIOWrapper(wheels[pkg].open(member), encoding="utf-8").read()
        rows = parse_keel(text) if kind == "keel" else parse_tab(text)
        width, out = encode(rows, positive)
        path = os.path.join(args.out, f"{name}.csv")
        write_csv(path, width, out)
        n1 = sum(r[-1] for r in out)
        print(f"{name:12s} features={width:3d} class0={len(out) - n1:5d} class1={n1:5d} -> {path}")

    if args.uci_dir:
        rows = uci_thyroid(args.uci_dir)
        if rows is not None:
            width, out = encode(rows, {"1"})
            path = os.path.join(args.out, "thyroid.csv")
            write_csv(path, width, out)
            print(f"thyroid      features={width:3d} rows={len(out)} (from --uci-dir) -> {path}")
        else:
            print("thyroid: new-thyroid.data not found in --uci-dir, skipped")


if __name__ == "__main__":
    main()
