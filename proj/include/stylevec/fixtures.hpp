#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stylevec/checkpoint.hpp"
#include "stylevec/topology.hpp"

namespace stylevec {

struct FixtureDims {
    int embed = 8;
    int hidden = 16;
    int heads = 2;
};

/// Toy DiT-shaped checkpoint description. Generated keys:
///
///   text_embed.weight                               [32, embed]
///   transformer_blocks.{i}.attn.{to_q,to_k,to_v,to_out}.weight   [hidden, hidden]
///   transformer_blocks.{i}.ff.w1.weight             [2 * hidden, hidden]
///   transformer_blocks.{i}.ff.w2.weight             [hidden, 2 * hidden]
///   transformer_blocks.{i}.norm.weight              [hidden]
///
/// which classify under ModelTopology::with_blocks(n_blocks).
struct FixtureSpec {
    int n_blocks = 4;
    FixtureDims dims;
    Dtype dtype = Dtype::F32;
    std::uint64_t seed = 0;

    void validate() const;
};

inline constexpr int kFixtureVocab = 32;

Checkpoint gen_base(const FixtureSpec& spec);

/// Realized per-key deltas (variant - base, exact in f64, stored as F32) of
/// a styled variant. Only keys whose realized delta is nonzero appear.
struct PlantLedger {
    std::map<TensorKey, Tensor> deltas;
    std::string style_label;
    double magnitude = 0.0;
};

/// Which keys to plant on: listed keys plus every key of the listed classes.
struct PlantTargets {
    std::vector<LayerClass> classes;
    std::vector<TensorKey> keys;
    /// Defaults to the standard patterns with n_blocks inferred from the base.
    std::optional<ModelTopology> topology;
};

/// Default-pattern topology with n_blocks = 1 + highest block index in `ckpt`.
ModelTopology infer_topology(const Checkpoint& ckpt);

/// base + Gaussian deltas scaled to Frobenius norm `magnitude` on each target.
std::pair<Checkpoint, PlantLedger> gen_styled_variant(const Checkpoint& base, const PlantTargets& targets,
                                                      double magnitude, std::uint64_t seed,
                                                      std::string style_label = "style");

} // namespace stylevec
