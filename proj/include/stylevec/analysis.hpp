#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stylevec/checkpoint.hpp"
#include "stylevec/taskvector.hpp"
#include "stylevec/topology.hpp"

namespace stylevec {

/// Cosine matrix entry; empty when either vector has zero norm.
using Cosine = std::optional<double>;
using CosineMatrix = std::vector<std::vector<Cosine>>;

struct ConsistencyReport {
    std::vector<std::string> labels;
    CosineMatrix cosine;
    std::map<TensorKey, CosineMatrix> per_layer_cosine; // filled on request
    std::size_t shared_keys = 0;
    std::size_t shared_elements = 0;
};

/// Pairwise cosine similarity over the flattened intersection of keys, in f64
/// with key-ordered summation.
ConsistencyReport direction_consistency(const std::vector<TaskVector>& vectors, std::vector<std::string> labels = {},
                                        bool per_layer = false);

struct PerturbationSpec {
    std::vector<TensorKey> target_keys;
    /// Alternative selector: every key of this class under `topology`.
    std::optional<LayerClass> layer_class;
    std::optional<ModelTopology> topology;
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

std::vector<TensorKey> resolve_perturbation_targets(const Checkpoint& ckpt, const PerturbationSpec& spec);

/// Adds i.i.d. N(0, sigma^2) noise to the targeted tensors. Each tensor draws
/// from its own CounterRng stream (seed, fnv1a64(key)), so the result does
/// not depend on processing order.
Checkpoint perturb(const Checkpoint& ckpt, const PerturbationSpec& spec);

struct LayerStat {
    TensorKey key;
    double abs_norm = 0.0;
    double rel_norm = 0.0;
    std::size_t numel = 0;
};

struct GroupStat {
    std::size_t keys = 0;
    std::size_t numel = 0;
    double abs_norm = 0.0; // norm over the group's concatenated deltas
};

struct LayerStatsReport {
    std::vector<LayerStat> layers; // key order
    std::map<LayerClass, GroupStat> groups;
    std::size_t total_numel = 0;
};

LayerStatsReport per_layer_stats(const TaskVector& tau, const Checkpoint& theta_pre,
                                 const std::optional<ModelTopology>& topology = std::nullopt);

struct LinearityStep {
    std::size_t index = 0;
    double norm = 0.0;
    Cosine cosine;         // cos(tau_t, tau_final)
    double residual = 0.0; // ||tau_t - proj(tau_t)|| / ||tau_t||, 0 for a zero tau_t
};

struct LinearityReport {
    std::vector<LinearityStep> steps;
    double final_norm = 0.0;
};

/// Measures how far each tau_t = theta_t - theta_pre of a fine-tuning
/// trajectory strays from the direction of the final task vector.
LinearityReport linearity_probe(const Checkpoint& theta_pre, const std::vector<Checkpoint>& trajectory);

} // namespace stylevec
