"""Build the extension module and exercise it from Python.

Usage: python3 python/smoke_test.py
"""

import csv
import importlib
import json
import random
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_module(dest: Path) -> None:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "fuelclust-python", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libpyfuelclust.so"
    shutil.copy(lib, dest / "pyfuelclust.so")


def main() -> int:
    work = Path(tempfile.mkdtemp(prefix="pyfuelclust-"))
    build_module(work)
    sys.path.insert(0, str(work))
    fc = importlib.import_module("pyfuelclust")

    rng = random.Random(7)
    values = [rng.gauss(0.0, 1.0) for _ in range(300)] + [rng.gauss(10.0, 1.0) for _ in range(700)]

    fit = fc.fit(values, 2, seed=1)
    means = sorted(m[0] for m in fit.model.means)
    assert abs(means[0]) < 0.3 and abs(means[1] - 10.0) < 0.3, means
    assert all(b >= a - 1e-9 for a, b in zip(fit.trace, fit.trace[1:]))
    labels = fit.model.assign(values)
    assert len(labels) == len(values)

    model = fc.MixtureModel([(0.5, 0.0, 1.0), (0.5, 4.0, 1.0)])
    assert abs(model.density(1.0) - 0.1232013) < 1e-6

    si = fc.silhouette_index([0.0, 1.0, 10.0, 11.0], [0, 0, 1, 1])
    assert abs(si - (9.5 / 10.5 + 8.5 / 9.5) / 2) < 1e-12
    scores = fc.validity_scores(values, labels)
    assert scores["k"] == 2 and scores["silhouette"] > 0.8

    averages, k = fc.aggregate_ranks(
        list(range(2, 10)),
        [1, 2, 7, 5, 8, 3, 4, 6],
        [2, 1, 3, 4, 6, 5, 8, 7],
        [2, 1, 4, 3, 8, 6, 5, 7],
    )
    assert [f"{a:.1f}" for a in averages] == ["1.7", "1.3", "4.7", "4.0", "7.3", "4.7", "5.7", "6.7"]
    assert k == 3

    selection = fc.select_k(values, 2, 5)
    assert selection["selected_k"] == 2, selection["rank_table_csv"]

    # a cluster holding both tails gets split in two
    tails = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 20.0, 21.0, 22.0]
    new_labels, log = fc.refine_clusters(tails, [0, 0, 0, 1, 1, 1, 0, 0, 0])
    assert new_labels == [0, 0, 0, 1, 1, 1, 2, 2, 2] and len(log) == 1

    stats = fc.cluster_stats(tails, new_labels)
    assert [s["num"] for s in stats] == [3, 3, 3]

    out = fc.boxplot_outliers([1.0, 2.0, 3.0, 4.0, 100.0])
    assert out["outlier_positions"] == [4]

    props = fc.group_proportions(["a", "a", "b", "b"], [0, 0, 0, 1])
    assert props["proportions"]["rows"][0]["proportions"] == [1.0, 0.0]
    assert props["deviation"]["dominant_count"] == 1

    csv_path = work / "trips.csv"
    with csv_path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["trip_id", "driver_id", "route_id", "fuel_efficiency"])
        for i, v in enumerate(values):
            w.writerow([f"t{i}", f"d{i % 7}", f"r{i % 3}", f"{v + 20.0:.3f}"])
    rows, report = fc.load_trips(str(csv_path))
    assert len(rows) == len(values) and report["violations"] == []

    summary = fc.analyze(str(csv_path), str(work / "out"), k_max=4, seed=3)
    assert summary["final_k"] == 2, summary
    assert json.loads((work / "out" / "analysis.json").read_text()) == summary

    try:
        fc.fit([1.0, 2.0], 5)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError for k > N")

    print("pyfuelclust smoke test passed")
    shutil.rmtree(work)
    return 0


if __name__ == "__main__":
    sys.exit(main())
