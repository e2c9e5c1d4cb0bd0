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


import itertools
import math

import numpy as np
import pytest

import bevbeam


def brute_dba(rankings, labels, k, delta):
    total = 0.0
    for kk in range(1, k + 1):
        miss = 0.0
        for ranks, label in zip(rankings, labels):
            miss += min(min(abs(m - label) / delta, 1.0) for m in ranks[:kk])
        total += 1.0 - miss / len(labels)
    return total / k


def test_worked_cases():
    assert bevbeam.dba_score([[15, 10, 12]], [10]) == pytest.approx(2 / 3, abs=1e-12)
    assert bevbeam.dba_score([[12, 13, 14]], [10]) == pytest.approx(0.6, abs=1e-12)


def test_dba_matches_python_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 30))
        ranks = [list(map(int, rng.choice(64, 3, replace=False))) for _ in range(n)]
        labels = list(map(int, rng.integers(0, 64, n)))
        assert abs(bevbeam.dba_score(ranks, labels) - brute_dba(ranks, labels, 3, 5.0)) < 1e-12


def test_random_baseline_by_enumeration():
    beams, labels = 8, [0, 3, 7, 5]
    perms = list(itertools.permutations(range(beams), 3))
    expected = np.mean([brute_dba([list(p)] * len(labels), labels, 3, 5.0)
                        for p in perms])
    assert abs(bevbeam.random_baseline_dba(labels, beams) - expected) < 1e-12


def test_rank_beams_and_confusion():
    assert bevbeam.rank_beams(np.array([0.1, 0.4, 0.4, 0.1], np.float32), 3) == [1, 2, 0]
    c = bevbeam.confusion_matrix([0, 1, 1], [0, 0, 1], 2)
    assert c.tolist() == [[1, 1], [0, 1]]
    assert bevbeam.topk_accuracy([[1, 0], [1, 0]], [0, 1], 1) == pytest.approx(0.5)


def test_focal_loss_reductions():
    p = np.array([[0.5, 0.5]])
    assert abs(bevbeam.focal_loss(p, [0], 2.0) - 0.25 * math.log(2)) < 1e-9
    q = np.array([[0.2, 0.7, 0.1], [0.6, 0.3, 0.1]])
    ce = -(math.log(0.7) + math.log(0.6)) / 2
    assert abs(bevbeam.focal_loss(q, [1, 0], 0.0, [1.0, 1.0, 1.0]) - ce) < 1e-10
    with pytest.raises(bevbeam.ContractError):
        bevbeam.focal_loss(q, [5, 0], 2.0)


def test_class_weights_mean_one():
    w = bevbeam.class_weights([0, 0, 0, 1], 3)
    assert np.mean(w) == pytest.approx(1.0)
    assert w[0] < w[1] < w[2]


def test_oracle_beam_boresight_and_edges():
    assert bevbeam.oracle_beam(0.0, 10.0, 16, 90.0) == (8, False)
    assert bevbeam.oracle_beam(-100.0, 1.0, 16, 90.0) == (0, True)
    assert bevbeam.oracle_beam(100.0, 1.0, 16, 90.0) == (15, True)


@pytest.mark.parametrize("dtype", [np.float32, np.float64, np.uint8, np.complex64])
def test_tensor_round_trip(tmp_path, dtype):
    a = (np.arange(24).reshape(2, 3, 4) * 3 % 251).astype(dtype)
    path = tmp_path / "a.bvt"
    bevbeam.save_tensor(path, a)
    b = bevbeam.load_tensor(path)
    assert b.dtype == a.dtype
    assert b.shape == a.shape
    assert a.tobytes() == b.tobytes()


def test_corrupt_magic_detected(tmp_path):
    path = tmp_path / "a.bvt"
    bevbeam.save_tensor(path, np.ones(4, np.float32))
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(bevbeam.FormatError):
        bevbeam.load_tensor(path)


def test_generate_and_split(tmp_path):
    n = bevbeam.generate(tmp_path / "ds", {"sequences": 12, "beams": 8, "image_size": 32})
    assert n == 12
    rows = bevbeam.load_index(tmp_path / "ds")
    assert len(rows) == 12
    assert all(0 <= r["label"] < 8 for r in rows)
    train, val, test = bevbeam.split_indices(tmp_path / "ds")
    assert sorted(train + val + test) == list(range(12))


def test_bad_config_key_raises():
    with pytest.raises(bevbeam.ConfigError):
        bevbeam.generate("/nonexistent", {"no_such_key": 1})
    assert "beams" in bevbeam.config_keys()
