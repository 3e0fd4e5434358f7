#include "stylevec/lora.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stylevec/error.hpp"
#include "stylevec/parallel.hpp"
#include "stylevec/svd.hpp"

namespace stylevec {

namespace {

constexpr std::string_view kSuffixA = ".lora_A";
constexpr std::string_view kSuffixB = ".lora_B";
constexpr double kSvdCutoff = 1e-7;

} // namespace

void LoraEntry::validate() const {
    const auto& a = a_factor.shape();
    const auto& b = b_factor.shape();
    if (a.size() != 2 || b.size() != 2) {
        throw Error(ErrorCode::ShapeMismatch, "LoRA factors must be rank-2, got A" + shape_to_string(a) + " B" +
                                                  shape_to_string(b));
    }
    if (a[0] != b[1]) {
        throw Error(ErrorCode::ShapeMismatch, "LoRA inner dimensions disagree: A" + shape_to_string(a) + " B" +
                                                  shape_to_string(b));
    }
    if (a[0] < 1) throw Error(ErrorCode::ShapeMismatch, "LoRA rank must be positive");
    if (a[0] > std::min(a[1], b[0])) {
        throw Error(ErrorCode::RankTooLarge, "rank " + std::to_string(a[0]) + " exceeds min(d, k) for B" +
                                                 shape_to_string(b) + " A" + shape_to_string(a));
    }
}

Shape matrix_shape(const Shape& s) {
    if (s.size() == 2) return s;
    if (s.size() == 3) return {s[0], s[1] * s[2]};
    throw Error(ErrorCode::ShapeMismatch, "weight " + shape_to_string(s) + " cannot be viewed as a matrix");
}

std::string reshape_rule(const Shape& s) {
    if (s.size() == 2) return "as_is:" + shape_to_string(s);
    if (s.size() == 3) return "flatten_trailing:" + shape_to_string(s);
    throw Error(ErrorCode::ShapeMismatch, "weight " + shape_to_string(s) + " cannot be viewed as a matrix");
}

Tensor materialize_delta(const LoraEntry& entry) {
    entry.validate();
    return matmul(entry.b_factor, entry.a_factor);
}

TaskVector materialize_adapter(const LoraAdapter& adapter, const Checkpoint& base) {
    std::vector<TensorKey> keys;
    for (const auto& [k, _] : adapter.entries) {
        if (!base.contains(k)) throw Error(ErrorCode::KeyNotInBase, "adapter target '" + k + "'");
        keys.push_back(k);
    }
    std::vector<Tensor> deltas(keys.size());
    parallel_for(keys.size(), [&](std::size_t i) {
        const auto& k = keys[i];
        const Tensor& w = base.entries.at(k);
        const auto delta = materialize_delta(adapter.entries.at(k));
        if (delta.shape() != matrix_shape(w.shape())) {
            throw Error(ErrorCode::ShapeMismatch, "adapter target '" + k + "': delta " +
                                                      shape_to_string(delta.shape()) + " vs weight " +
                                                      shape_to_string(w.shape()));
        }
        deltas[i] = cast(delta, w.dtype()).reshaped(w.shape());
    });
    TaskVector tau;
    for (std::size_t i = 0; i < keys.size(); ++i) tau.delta.emplace(keys[i], std::move(deltas[i]));
    auto src = adapter.metadata.find("stylevec.source");
    tau.provenance.finetuned_id = src != adapter.metadata.end() ? src->second : "lora_adapter";
    return tau;
}

Checkpoint apply_lora(const Checkpoint& base, const LoraAdapter& adapter, double alpha) {
    const double scale = alpha * alpha;
    if (!std::isfinite(scale)) throw Error(ErrorCode::NonFiniteScale, "LoRA alpha " + format_real(alpha));
    return apply_evector(base, EVector{materialize_adapter(adapter, base), scale});
}

LoraAdapter extract_lora(const TaskVector& tau, std::size_t rank, const std::vector<TensorKey>& targets) {
    if (rank == 0) throw Error(ErrorCode::InvalidArgument, "LoRA rank must be positive");
    for (const auto& k : targets) {
        auto it = tau.delta.find(k);
        if (it == tau.delta.end()) throw Error(ErrorCode::KeyNotFound, "target '" + k + "' not in task vector");
        const auto m = matrix_shape(it->second.shape());
        if (static_cast<std::int64_t>(rank) > std::min(m[0], m[1])) {
            throw Error(ErrorCode::RankTooLarge, "rank " + std::to_string(rank) + " for target '" + k + "' of " +
                                                     shape_to_string(m));
        }
    }

    std::vector<LoraEntry> entries(targets.size());
    parallel_for(targets.size(), [&](std::size_t ti) {
        const Tensor& t = tau.delta.at(targets[ti]);
        const auto m = matrix_shape(t.shape());
        const auto d = static_cast<std::size_t>(m[0]);
        const auto k = static_cast<std::size_t>(m[1]);
        std::vector<double> values(t.numel());
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = t.at(i);
        const auto svd = jacobi_svd(values, d, k);

        const double cutoff = svd.singular_values.empty() ? 0.0 : kSvdCutoff * svd.singular_values.front();
        std::vector<float> a(rank * k, 0.0f);
        std::vector<float> b(d * rank, 0.0f);
        for (std::size_t j = 0; j < rank; ++j) {
            const double sigma = svd.singular_values[j];
            if (sigma <= cutoff || sigma == 0.0) continue;
            const double root = std::sqrt(sigma);
            for (std::size_t c = 0; c < k; ++c) a[j * k + c] = static_cast<float>(root * svd.v[j][c]);
            for (std::size_t r = 0; r < d; ++r) b[r * rank + j] = static_cast<float>(root * svd.u[j][r]);
        }
        const auto r64 = static_cast<std::int64_t>(rank);
        entries[ti].a_factor = Tensor::from_floats(a, {r64, m[1]});
        entries[ti].b_factor = Tensor::from_floats(b, {m[0], r64});
    });

    LoraAdapter adapter;
    adapter.metadata["stylevec.kind"] = "lora_adapter";
    adapter.metadata["stylevec.rank"] = std::to_string(rank);
    adapter.metadata["stylevec.source"] = tau.id();
    for (std::size_t i = 0; i < targets.size(); ++i) {
        adapter.metadata["stylevec.reshape." + targets[i]] = reshape_rule(tau.delta.at(targets[i]).shape());
        adapter.entries[targets[i]] = std::move(entries[i]);
    }
    return adapter;
}

std::vector<VariationEntry> rank_targets_by_variation(const TaskVector& tau, const Checkpoint& theta_pre) {
    std::vector<VariationEntry> out;
    for (const auto& [k, d] : tau.delta) {
        if (!theta_pre.contains(k)) throw Error(ErrorCode::KeyNotInBase, "'" + k + "'");
        out.push_back({k, 0.0, 0.0, 0.0});
    }
    parallel_for(out.size(), [&](std::size_t i) {
        auto& e = out[i];
        e.delta_norm = frobenius_norm(tau.delta.at(e.key));
        e.base_norm = frobenius_norm(theta_pre.entries.at(e.key));
        e.relative_change = e.delta_norm / std::max(e.base_norm, std::numeric_limits<double>::min());
    });
    std::stable_sort(out.begin(), out.end(), [](const VariationEntry& a, const VariationEntry& b) {
        return a.relative_change != b.relative_change ? a.relative_change > b.relative_change : a.key < b.key;
    });
    return out;
}

Checkpoint to_checkpoint(const LoraAdapter& adapter) {
    Checkpoint ckpt;
    ckpt.metadata = adapter.metadata;
    ckpt.metadata["stylevec.kind"] = "lora_adapter";
    std::size_t rank = 0;
    for (const auto& [k, e] : adapter.entries) {
        ckpt.entries[k + std::string(kSuffixA)] = e.a_factor;
        ckpt.entries[k + std::string(kSuffixB)] = e.b_factor;
        rank = std::max(rank, e.rank());
    }
    if (!ckpt.metadata.count("stylevec.rank")) ckpt.metadata["stylevec.rank"] = std::to_string(rank);
    return ckpt;
}

LoraAdapter lora_from_checkpoint(const Checkpoint& ckpt) {
    auto kind = ckpt.metadata.find("stylevec.kind");
    if (kind != ckpt.metadata.end() && kind->second != "lora_adapter") {
        throw Error(ErrorCode::SchemaError, "expected a LoRA adapter file, found kind '" + kind->second + "'");
    }
    LoraAdapter adapter;
    adapter.metadata = ckpt.metadata;
    for (const auto& [key, t] : ckpt.entries) {
        std::string_view k = key;
        if (k.ends_with(kSuffixA)) {
            const std::string target(k.substr(0, k.size() - kSuffixA.size()));
            adapter.entries[target].a_factor = t;
        } else if (k.ends_with(kSuffixB)) {
            const std::string target(k.substr(0, k.size() - kSuffixB.size()));
            adapter.entries[target].b_factor = t;
        } else {
            throw Error(ErrorCode::SchemaError, "adapter key '" + key + "' lacks a .lora_A/.lora_B suffix");
        }
    }
    for (const auto& [target, e] : adapter.entries) {
        if (!ckpt.contains(target + std::string(kSuffixA)) || !ckpt.contains(target + std::string(kSuffixB))) {
            throw Error(ErrorCode::SchemaError, "adapter target '" + target + "' is missing a factor");
        }
        try {
            e.validate();
        } catch (const Error& err) {
            throw Error(err.code(), "adapter target '" + target + "': " + err.what());
        }
    }
    return adapter;
}

} // namespace stylevec
