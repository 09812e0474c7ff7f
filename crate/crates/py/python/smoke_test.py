"""Smoke test for the sclifd extension module.

Build the library first, e.g.

    cargo build -p sclifd-py --features extension-module

then run `python3 crates/py/python/smoke_test.py`. The script copies the
compiled library next to a temporary `sclifd.so` and imports it from there;
set SCLIFD_LIB to point at a specific build artefact.
"""

import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[3]


def locate_library():
    explicit = os.environ.get("SCLIFD_LIB")
    if explicit:
        return Path(explicit)
    for profile in ("release", "debug"):
        for name in ("libsclifd.so", "libsclifd.dylib"):
            candidate = ROOT / "target" / profile / name
            if candidate.exists():
                return candidate
    sys.exit("libsclifd not found; build crates/py first")


def import_module():
    workdir = tempfile.mkdtemp(prefix="sclifd-")
    shutil.copy(locate_library(), Path(workdir) / "sclifd.so")
    sys.path.insert(0, workdir)
    import sclifd

    return sclifd


def main():
    sclifd = import_module()

    assert sclifd.per_class_quota(100, 10) == 10
    assert sclifd.per_class_quota(10, 5) == 2
    avg = sclifd.aggregate_metrics([98.89, 98.48, 98.29, 83.16, 72.25])
    assert abs(avg - 90.214) < 1e-12, avg

    same = [[1.0, 0.0]] * 4
    loss = sclifd.supervised_contrastive_loss(same, [0, 0, 0, 0])
    assert abs(loss - 4 * math.log(3)) < 1e-9, loss
    kd = sclifd.distillation_loss(same, same)
    assert abs(kd - math.log(3)) < 1e-9, kd

    assert sclifd.selection_order("mes", [[0.0], [0.4], [1.0]], 1) == [2]
    assert sclifd.selection_order("herding", [[0.0], [0.4], [1.0]], 1) == [1]

    x, y = sclifd.synth_gaussian_stream([40, 40], dim=6, means_scale=6.0, seed=3)
    enc = sclifd.Encoder(6, hidden_dims=[16], embed_dim=4, seed=1)
    z = enc.encode(x)
    assert all(abs(sum(v * v for v in row) - 1.0) < 1e-12 for row in z)
    again = sclifd.Encoder.from_json(enc.to_json())
    assert again.encode(x[:3]) == z[:3]

    forest = sclifd.BalancedForest.fit(x, y, n_trees=20, seed=5)
    assert forest.n_trees == 20
    acc = sum(p == t for p, t in zip(forest.predict(x), y)) / len(y)
    assert acc > 0.9, acc
    assert all(n == 40 for tree in forest.bootstrap_counts() for _, n in tree)

    fc = sclifd.FcClassifier.fit(x, y, epochs=200, lr=0.01)
    assert abs(sum(fc.probabilities(x[0])) - 1.0) < 1e-12

    try:
        sclifd.run_experiment("[loss]\ntemperature = 0.0\n")
    except sclifd.ConfigError as e:
        assert "loss.temperature" in str(e)
    else:
        raise AssertionError("zero temperature accepted")

    config = "[train]\nepochs = 3\n[forest]\nn_trees = 10\n"
    report = json.loads(sclifd.run_experiment(config, seed=2))
    assert len(report["sessions"]) == 3
    assert report == json.loads(sclifd.run_experiment(config, seed=2))
    print("sclifd smoke test passed:", [round(s["accuracy"], 3) for s in report["sessions"]])


if __name__ == "__main__":
    main()
