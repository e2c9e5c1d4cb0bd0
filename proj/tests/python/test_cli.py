# Copyright 2026 The bevbeam Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


import csv
import hashlib
import os
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("BEVBEAM_CLI", "bevbeam")

TINY = [
    "--grid_cells", "8", "--c_bev", "16", "--c_back", "32", "--camera_size", "32",
    "--cam_layers", "1", "--temporal_layers", "1", "--gps_hidden", "16",
    "--head_hidden", "32", "--beams", "8", "--image_size", "32",
]


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True)


def tree_hash(root, skip=("run_config.txt",)):
    """Hash of every file under root except the echoed run config (it names the path)."""
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file() and p.name not in skip:
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    r = run("generate", *TINY, "--sequences", 20, "--out", root)
    assert r.returncode == 0, r.stderr
    return root


def test_generate_is_deterministic(dataset, tmp_path):
    again = tmp_path / "again"
    assert run("generate", *TINY, "--sequences", 20, "--out", again).returncode == 0
    assert tree_hash(dataset) == tree_hash(again)


def test_bad_arguments_exit_codes(tmp_path, dataset):
    assert run("generate", "--sequences", 0, "--out", tmp_path / "x").returncode == 2
    assert run("generate", "--no-such-flag").returncode == 2
    assert run("train", *TINY, "--data", tmp_path / "missing", "--out", tmp_path / "o").returncode == 3


def test_perfect_predictions_score_one(dataset, tmp_path):
    pred = tmp_path / "pred.csv"
    with open(dataset / "index.csv") as f:
        rows = list(csv.DictReader(f))
    with open(pred, "w") as f:
        f.write("seq_id,rank1,rank2,rank3,label\n")
        for r in rows:
            m = int(r["label"])
            f.write(f"{r['seq_id']},{m},{(m + 1) % 8},{(m + 2) % 8},{m}\n")
    out = tmp_path / "eval"
    r = run("eval", "--data", dataset, "--out", out, "--predictions", pred)
    assert r.returncode == 0, r.stderr
    with open(out / "report.csv") as f:
        overall = next(row for row in csv.DictReader(f) if row["scope"] == "overall")
    assert float(overall["dba"]) == 1.0
    assert float(overall["top1"]) == 1.0


def test_train_predict_eval(dataset, tmp_path):
    out = tmp_path / "run"
    r = run("train", *TINY, "--data", dataset, "--out", out, "--epochs", 1, "--seed", 3)
    assert r.returncode == 0, r.stderr
    assert (out / "checkpoint" / "config.txt").exists()
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,lr,train_loss,val_dba,wall_time_s"
    assert len(log) == 2

    r = run("predict", "--data", dataset, "--out", out)
    assert r.returncode == 0, r.stderr
    with open(out / "predictions.csv") as f:
        preds = list(csv.DictReader(f))
    assert len(preds) == 20
    for p in preds:
        probs = [float(p[f"prob{i}"]) for i in (1, 2, 3)]
        assert probs == sorted(probs, reverse=True)
        assert len({p["rank1"], p["rank2"], p["rank3"]}) == 3

    r = run("eval", "--data", dataset, "--out", out, "--plots")
    assert r.returncode == 0, r.stderr
    assert (out / "report.csv").exists()
    assert (out / "confusion.ppm").read_bytes().startswith(b"P6")

    r = run("eval", "--data", dataset, "--out", out, "--c_bev", 32)
    assert r.returncode == 5
    assert "c_bev" in r.stderr


def test_zero_learning_rate_keeps_initial_parameters(dataset, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, epochs in ((a, 1), (b, 2)):
        r = run("train", *TINY, "--data", dataset, "--out", out, "--epochs", epochs,
                "--lr", 0, "--seed", 5, "--val_ratio", 0, "--train_ratio", 0.9,
                "--test_ratio", 0.1)
        assert r.returncode == 0, r.stderr
    assert tree_hash(a / "checkpoint" / "params") == tree_hash(b / "checkpoint" / "params")
