/* Copyright 2026 The odnl-lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

// Label-noise synthesis and auxiliary-pool construction. Every operation is
// value-in/value-out and deterministic given its Rng stream.

#include "odnl/data.hpp"
#include "odnl/netcore.hpp"
#include "odnl/rng.hpp"

namespace odnl {

/// With probability `rate` each observed label is replaced by a uniform draw
/// over the k-1 other classes.
LabeledDataset corrupt_symmetric(const LabeledDataset& data, double rate, Rng rng);

/// With probability `rate` label c becomes (c + 1) mod k.
LabeledDataset corrupt_circular(const LabeledDataset& data, double rate, Rng rng);

/// Feature-dependent surrogate: the round(rate * N) samples with the smallest
/// weak-model margin (p_true - max_{j != true} p_j) take the weak model's
/// top-scoring incorrect class. Ties break toward the lower index.
LabeledDataset corrupt_instance_dependent(const LabeledDataset& data, double rate,
                                          const NetworkParams& weak_model);

/// Replaces round(rate * N) uniformly chosen rows with distinct pool rows,
/// keeping their observed labels and masking them as open-set.
LabeledDataset inject_open_set(const LabeledDataset& data, double rate, const AuxiliaryPool& pool,
                               Rng rng);

/// Row i is (1 - alpha) * open_i + alpha * closed_{pi(i)} for a uniform pairing pi.
AuxiliaryPool mix_auxiliary(const AuxiliaryPool& open_pool, const AuxiliaryPool& closed_pool,
                            double alpha, Rng rng);

/// Draws one permanent uniform label in [0, k) per pool instance.
AuxiliaryPool assign_fixed_labels(const AuxiliaryPool& pool, int k, Rng rng);

/// Exact transition matrix from known true labels. Classes without samples
/// get a uniform row.
TransitionMatrix empirical_transition_matrix(const LabeledDataset& data);

/// Margin p_true - max_{j != true} p_j of a model on every row, using the
/// true label (observed label on open-set rows).
std::vector<double> confidence_margins(const NetworkParams& model, const LabeledDataset& data);

}  // namespace odnl
