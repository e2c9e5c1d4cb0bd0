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

"""Python bindings for the bevbeam beam-prediction library."""

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    FormatError,
    IoError,
    MismatchError,
    NumericError,
    class_weights,
    config_keys,
    confusion_matrix,
    dba_curve,
    dba_score,
    focal_loss,
    generate,
    load_index,
    load_tensor,
    oracle_beam,
    random_baseline_dba,
    rank_beams,
    save_tensor,
    split_indices,
    topk_accuracy,
)

__version__ = "0.1.0"
