#pragma once

#include <string>
#include <vector>

#include "stylevec/checkpoint.hpp"
#include "stylevec/taskvector.hpp"

namespace stylevec {

/// Low-rank factors for one target weight: delta = b_factor (d x r) * a_factor (r x k).
struct LoraEntry {
    Tensor a_factor;
    Tensor b_factor;

    std::size_t rank() const { return a_factor.shape().empty() ? 0 : static_cast<std::size_t>(a_factor.shape()[0]); }
    /// Throws ShapeMismatch / RankTooLarge when the factor shapes disagree.
    void validate() const;
};

struct LoraAdapter {
    std::map<TensorKey, LoraEntry> entries;
    Metadata metadata;
};

// Targets are viewed as d x k matrices: rank-2 weights (linear, embedding)
// as-is, rank-3 1D-conv weights [out, in, kernel] as [out, in * kernel].
// Anything else is not a LoRA target.
Shape matrix_shape(const Shape& weight_shape);
std::string reshape_rule(const Shape& weight_shape);

Tensor materialize_delta(const LoraEntry& entry);

/// Materialized deltas reshaped and cast onto the matching base weights,
/// as a task vector keyed like the base.
TaskVector materialize_adapter(const LoraAdapter& adapter, const Checkpoint& base);

/// W = W_pre + alpha^2 * B A for every adapter target; other keys untouched.
Checkpoint apply_lora(const Checkpoint& base, const LoraAdapter& adapter, double alpha);

/// Rank-r truncated SVD of each target delta, split as
/// B = U_r S_r^(1/2), A = S_r^(1/2) V_r^T. Singular values below
/// 1e-7 * s_max are dropped (their factor columns are zero).
LoraAdapter extract_lora(const TaskVector& tau, std::size_t rank, const std::vector<TensorKey>& targets);

struct VariationEntry {
    TensorKey key;
    double relative_change = 0.0;
    double delta_norm = 0.0;
    double base_norm = 0.0;
};

/// Keys of `tau` by descending ||tau_k|| / ||theta_k||, ties by key.
std::vector<VariationEntry> rank_targets_by_variation(const TaskVector& tau, const Checkpoint& theta_pre);

Checkpoint to_checkpoint(const LoraAdapter& adapter);
LoraAdapter lora_from_checkpoint(const Checkpoint& ckpt);

} // namespace stylevec
