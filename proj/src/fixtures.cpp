#include "stylevec/fixtures.hpp"

#include <cmath>
#include <set>

#include "stylevec/error.hpp"
#include "stylevec/prng.hpp"
#include "stylevec/taskvector.hpp"

namespace stylevec {

namespace {

Tensor gaussian_tensor(std::uint64_t seed, const std::string& key, Shape shape, Dtype dtype, double mean,
                       double stddev) {
    CounterRng rng(seed, fnv1a64("base:" + key));
    std::vector<float> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<float>(mean + stddev * rng.gaussian());
    return Tensor::from_floats(values, std::move(shape), dtype);
}

} // namespace

void FixtureSpec::validate() const {
    if (n_blocks < 0) throw Error(ErrorCode::InvalidArgument, "n_blocks must be non-negative");
    if (dims.embed <= 0 || dims.hidden <= 0 || dims.heads <= 0) {
        throw Error(ErrorCode::InvalidArgument, "fixture dims must be positive");
    }
    if (dims.hidden % dims.heads != 0) {
        throw Error(ErrorCode::InvalidArgument, "hidden size must be divisible by the head count");
    }
}

Checkpoint gen_base(const FixtureSpec& spec) {
    spec.validate();
    const std::int64_t e = spec.dims.embed;
    const std::int64_t h = spec.dims.hidden;
    Checkpoint ckpt;
    ckpt.entries.emplace("text_embed.weight",
                         gaussian_tensor(spec.seed, "text_embed.weight", {kFixtureVocab, e}, spec.dtype, 0.0, 0.1));
    for (int i = 0; i < spec.n_blocks; ++i) {
        const std::string block = "transformer_blocks." + std::to_string(i) + ".";
        const double attn_std = 1.0 / std::sqrt(static_cast<double>(h));
        for (const char* proj : {"to_q", "to_k", "to_v", "to_out"}) {
            const auto key = block + "attn." + proj + ".weight";
            ckpt.entries.emplace(key, gaussian_tensor(spec.seed, key, {h, h}, spec.dtype, 0.0, attn_std));
        }
        const auto w1 = block + "ff.w1.weight";
        const auto w2 = block + "ff.w2.weight";
        ckpt.entries.emplace(w1, gaussian_tensor(spec.seed, w1, {2 * h, h}, spec.dtype, 0.0, attn_std));
        ckpt.entries.emplace(w2, gaussian_tensor(spec.seed, w2, {h, 2 * h}, spec.dtype, 0.0, attn_std / std::sqrt(2.0)));
        const auto norm = block + "norm.weight";
        ckpt.entries.emplace(norm, gaussian_tensor(spec.seed, norm, {h}, spec.dtype, 1.0, 0.01));
    }
    ckpt.metadata["stylevec.kind"] = "fixture_base";
    ckpt.metadata["stylevec.fixture.seed"] = std::to_string(spec.seed);
    ckpt.metadata["stylevec.fixture.n_blocks"] = std::to_string(spec.n_blocks);
    return ckpt;
}

ModelTopology infer_topology(const Checkpoint& ckpt) {
    ModelTopology topo;
    long long highest = -1;
    for (const auto& [k, _] : ckpt.entries) {
        if (auto i = topo.block_index(k)) highest = std::max(highest, *i);
    }
    topo.n_blocks = static_cast<int>(highest + 1);
    return topo;
}

std::pair<Checkpoint, PlantLedger> gen_styled_variant(const Checkpoint& base, const PlantTargets& targets,
                                                      double magnitude, std::uint64_t seed, std::string style_label) {
    if (!std::isfinite(magnitude) || magnitude < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "magnitude must be finite and non-negative");
    }
    std::set<TensorKey> keys;
    for (const auto& k : targets.keys) {
        if (!base.contains(k)) throw Error(ErrorCode::KeyNotFound, "plant target '" + k + "'");
        keys.insert(k);
    }
    if (!targets.classes.empty()) {
        const auto topo = targets.topology ? *targets.topology : infer_topology(base);
        for (const auto& [k, _] : base.entries) {
            const auto c = classify_layer(k, topo);
            for (auto want : targets.classes) {
                if (c == want) keys.insert(k);
            }
        }
    }

    Checkpoint variant = base;
    PlantLedger ledger;
    ledger.style_label = std::move(style_label);
    ledger.magnitude = magnitude;
    for (const auto& k : keys) {
        const Tensor& t = base.entries.at(k);
        if (magnitude == 0.0 || t.numel() == 0) continue;
        CounterRng rng(seed, fnv1a64("plant:" + k));
        std::vector<double> raw(t.numel());
        double sq = 0.0;
        for (auto& x : raw) {
            x = rng.gaussian();
            sq += x * x;
        }
        const double scale = magnitude / std::sqrt(sq);
        std::vector<float> values(t.numel());
        std::vector<float> realized(t.numel());
        bool any = false;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const float before = t.at(i);
            values[i] = round_to(t.dtype(), static_cast<float>(static_cast<double>(before) + raw[i] * scale));
            realized[i] = static_cast<float>(static_cast<double>(values[i]) - static_cast<double>(before));
            any = any || realized[i] != 0.0f;
        }
        variant.entries[k] = Tensor::from_floats(values, t.shape(), t.dtype());
        if (any) ledger.deltas.emplace(k, Tensor::from_floats(realized, t.shape(), Dtype::F32));
    }
    variant.metadata["stylevec.kind"] = "fixture_variant";
    variant.metadata["stylevec.fixture.style"] = ledger.style_label;
    variant.metadata["stylevec.fixture.magnitude"] = format_real(magnitude);
    variant.metadata["stylevec.fixture.variant_seed"] = std::to_string(seed);
    return {std::move(variant), std::move(ledger)};
}

} // namespace stylevec
