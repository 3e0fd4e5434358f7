#include "stylevec/taskvector.hpp"

#include <charconv>
#include <cmath>
#include <set>

#include "stylevec/error.hpp"
#include "stylevec/parallel.hpp"

namespace stylevec {

namespace {

constexpr const char* kKind = "stylevec.kind";
constexpr const char* kBaseId = "stylevec.base_id";
constexpr const char* kFinetunedId = "stylevec.finetuned_id";
constexpr const char* kAlignment = "stylevec.alignment";
constexpr const char* kCoefficient = "stylevec.coefficient";

std::map<TensorKey, Tensor> map_keys(const std::vector<TensorKey>& keys,
                                     const std::function<Tensor(const TensorKey&)>& fn) {
    std::vector<Tensor> results(keys.size());
    parallel_for(keys.size(), [&](std::size_t i) { results[i] = fn(keys[i]); });
    std::map<TensorKey, Tensor> out;
    for (std::size_t i = 0; i < keys.size(); ++i) out.emplace_hint(out.end(), keys[i], std::move(results[i]));
    return out;
}

void check_coefficient(double c) {
    if (!std::isfinite(c)) throw Error(ErrorCode::NonFiniteCoefficient, "coefficient " + format_real(c));
}

} // namespace

std::string_view alignment_name(KeyAlignment policy) noexcept {
    return policy == KeyAlignment::Strict ? "strict" : "intersect";
}

std::string format_real(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

std::string TaskVector::id() const {
    return provenance.finetuned_id.empty() ? std::string("task_vector") : provenance.finetuned_id;
}

TaskVector build_task_vector(const Checkpoint& finetuned, const Checkpoint& base, KeyAlignment policy,
                             std::string finetuned_id, std::string base_id) {
    TaskVector tau;
    tau.provenance = {std::move(base_id), std::move(finetuned_id), policy};

    std::vector<TensorKey> keys;
    if (policy == KeyAlignment::Strict) {
        if (finetuned.keys() != base.keys()) {
            std::string example;
            for (const auto& [k, _] : finetuned.entries) {
                if (!base.contains(k)) {
                    example = "'" + k + "' missing from base";
                    break;
                }
            }
            if (example.empty()) {
                for (const auto& [k, _] : base.entries) {
                    if (!finetuned.contains(k)) {
                        example = "'" + k + "' missing from fine-tuned checkpoint";
                        break;
                    }
                }
            }
            throw Error(ErrorCode::KeySetMismatch, "strict alignment: " + example);
        }
        keys = finetuned.keys();
    } else {
        auto& report = tau.alignment_report;
        for (const auto& [k, t] : finetuned.entries) {
            auto it = base.entries.find(k);
            if (it == base.entries.end()) {
                report.only_in_finetuned.push_back(k);
            } else if (it->second.shape() != t.shape()) {
                report.shape_mismatch.push_back(k);
            } else if (it->second.dtype() != t.dtype()) {
                report.dtype_mismatch.push_back(k);
            } else {
                keys.push_back(k);
            }
        }
        for (const auto& [k, _] : base.entries) {
            if (!finetuned.contains(k)) report.only_in_base.push_back(k);
        }
        if (keys.empty()) throw Error(ErrorCode::EmptyIntersection, "no common keys with matching shape and dtype");
    }

    tau.delta = map_keys(keys, [&](const TensorKey& k) {
        try {
            return elementwise_sub(finetuned.entries.at(k), base.entries.at(k));
        } catch (const Error& e) {
            throw Error(e.code(), "key '" + k + "': " + e.what());
        }
    });
    return tau;
}

EVector scale_task_vector(TaskVector tau, double coefficient, const ScaleOptions& options) {
    check_coefficient(coefficient);
    if (options.emotion_mode && (coefficient < 0.0 || coefficient > options.beta_max)) {
        throw Error(ErrorCode::CoefficientOutOfRange, "strength " + format_real(coefficient) + " outside [0, " +
                                                          format_real(options.beta_max) + "]");
    }
    return EVector{std::move(tau), coefficient};
}

Checkpoint apply_evector(const Checkpoint& base, const EVector& eps) {
    check_coefficient(eps.coefficient);
    for (const auto& [k, d] : eps.vector.delta) {
        if (!base.contains(k)) throw Error(ErrorCode::KeyNotInBase, "'" + k + "'");
        const auto& b = base.entries.at(k);
        if (b.shape() != d.shape()) {
            throw Error(ErrorCode::ShapeMismatch, "key '" + k + "': " + shape_to_string(d.shape()) + " vs base " +
                                                      shape_to_string(b.shape()));
        }
        if (b.dtype() != d.dtype()) throw Error(ErrorCode::DtypeMismatch, "key '" + k + "'");
    }
    if (eps.coefficient == 0.0) return base;

    Checkpoint out = base;
    const auto keys = [&] {
        std::vector<TensorKey> ks;
        for (const auto& [k, _] : eps.vector.delta) ks.push_back(k);
        return ks;
    }();
    auto updated = map_keys(keys, [&](const TensorKey& k) {
        try {
            return axpy(base.entries.at(k), eps.vector.delta.at(k), eps.coefficient);
        } catch (const Error& e) {
            throw Error(e.code(), "key '" + k + "': " + e.what());
        }
    });
    for (auto& [k, t] : updated) out.entries[k] = std::move(t);

    std::size_t n = 0;
    while (out.metadata.count("stylevec.applied." + std::to_string(n) + ".vector")) ++n;
    const auto prefix = "stylevec.applied." + std::to_string(n);
    out.metadata[prefix + ".vector"] = eps.vector.id();
    out.metadata[prefix + ".coefficient"] = format_real(eps.coefficient);
    return out;
}

TaskVector combine_linear(const std::vector<EVector>& terms) {
    std::set<TensorKey> key_union;
    for (const auto& t : terms) {
        check_coefficient(t.coefficient);
        for (const auto& [k, _] : t.vector.delta) key_union.insert(k);
    }
    const std::vector<TensorKey> keys(key_union.begin(), key_union.end());

    TaskVector out;
    if (!terms.empty()) out.provenance.base_id = terms.front().vector.provenance.base_id;
    out.provenance.finetuned_id = "linear_combination";
    out.delta = map_keys(keys, [&](const TensorKey& k) {
        const Tensor* first = nullptr;
        std::vector<float> acc;
        for (std::size_t ti = 0; ti < terms.size(); ++ti) {
            auto it = terms[ti].vector.delta.find(k);
            if (it == terms[ti].vector.delta.end()) continue;
            const Tensor& t = it->second;
            const double c = terms[ti].coefficient;
            if (!first) {
                first = &t;
                acc.resize(t.numel());
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = static_cast<float>(c * static_cast<double>(t.at(i)));
                continue;
            }
            if (t.shape() != first->shape()) {
                throw Error(ErrorCode::ShapeMismatch, "term " + std::to_string(ti) + " key '" + k + "': " +
                                                          shape_to_string(t.shape()) + " vs " +
                                                          shape_to_string(first->shape()));
            }
            if (t.dtype() != first->dtype()) {
                throw Error(ErrorCode::DtypeMismatch, "term " + std::to_string(ti) + " key '" + k + "'");
            }
            for (std::size_t i = 0; i < acc.size(); ++i) {
                const auto step = static_cast<float>(c * static_cast<double>(t.at(i)));
                acc[i] = acc[i] + step;
            }
        }
        return Tensor::from_floats(acc, first->shape(), first->dtype());
    });
    return out;
}

Checkpoint to_checkpoint(const TaskVector& tau) {
    Checkpoint ckpt;
    ckpt.entries = tau.delta;
    ckpt.metadata[kKind] = "task_vector";
    ckpt.metadata[kBaseId] = tau.provenance.base_id;
    ckpt.metadata[kFinetunedId] = tau.provenance.finetuned_id;
    ckpt.metadata[kAlignment] = std::string(alignment_name(tau.provenance.alignment));
    return ckpt;
}

Checkpoint to_checkpoint(const EVector& eps) {
    auto ckpt = to_checkpoint(eps.vector);
    ckpt.metadata[kCoefficient] = format_real(eps.coefficient);
    return ckpt;
}

TaskVector task_vector_from_checkpoint(const Checkpoint& ckpt) {
    auto kind = ckpt.metadata.find(kKind);
    if (kind != ckpt.metadata.end() && kind->second != "task_vector") {
        throw Error(ErrorCode::SchemaError, "expected a task vector file, found kind '" + kind->second + "'");
    }
    TaskVector tau;
    tau.delta = ckpt.entries;
    auto get = [&](const char* key) {
        auto it = ckpt.metadata.find(key);
        return it == ckpt.metadata.end() ? std::string() : it->second;
    };
    tau.provenance.base_id = get(kBaseId);
    tau.provenance.finetuned_id = get(kFinetunedId);
    tau.provenance.alignment = get(kAlignment) == "intersect" ? KeyAlignment::Intersect : KeyAlignment::Strict;
    return tau;
}

std::optional<double> stored_coefficient(const Checkpoint& ckpt) {
    auto it = ckpt.metadata.find(kCoefficient);
    if (it == ckpt.metadata.end()) return std::nullopt;
    double v = 0.0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::SchemaError, "bad stylevec.coefficient '" + s + "'");
    }
    return v;
}

} // namespace stylevec
