#include "stylevec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "stylevec/error.hpp"
#include "stylevec/parallel.hpp"
#include "stylevec/prng.hpp"

namespace stylevec {

namespace {

Cosine cosine_of(double dot, double norm2_a, double norm2_b) {
    if (norm2_a == 0.0 || norm2_b == 0.0) return std::nullopt;
    return std::clamp(dot / (std::sqrt(norm2_a) * std::sqrt(norm2_b)), -1.0, 1.0);
}

// Gram matrix of the given tensors (one per vector) in f64, index order.
std::vector<std::vector<double>> gram(const std::vector<const Tensor*>& ts) {
    const auto n = ts.size();
    std::vector<std::vector<float>> values;
    for (const auto* t : ts) values.push_back(t->to_floats());
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a; b < n; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < values[a].size(); ++i) {
                s += static_cast<double>(values[a][i]) * static_cast<double>(values[b][i]);
            }
            g[a][b] = g[b][a] = s;
        }
    }
    return g;
}

CosineMatrix to_cosines(const std::vector<std::vector<double>>& g) {
    const auto n = g.size();
    CosineMatrix m(n, std::vector<Cosine>(n));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) m[a][b] = cosine_of(g[a][b], g[a][a], g[b][b]);
    }
    return m;
}

} // namespace

ConsistencyReport direction_consistency(const std::vector<TaskVector>& vectors, std::vector<std::string> labels,
                                        bool per_layer) {
    if (vectors.size() < 2) throw Error(ErrorCode::InvalidArgument, "direction consistency needs at least 2 vectors");
    if (labels.empty()) {
        for (std::size_t i = 0; i < vectors.size(); ++i) labels.push_back(vectors[i].id());
    }
    if (labels.size() != vectors.size()) throw Error(ErrorCode::InvalidArgument, "one label per vector required");

    std::vector<TensorKey> shared;
    for (const auto& [k, t] : vectors.front().delta) {
        bool everywhere = true;
        for (std::size_t v = 1; v < vectors.size() && everywhere; ++v) {
            auto it = vectors[v].delta.find(k);
            if (it == vectors[v].delta.end()) {
                everywhere = false;
            } else if (it->second.shape() != t.shape()) {
                throw Error(ErrorCode::ShapeMismatch, "key '" + k + "' has shape " + shape_to_string(t.shape()) +
                                                          " in vector 0 but " +
                                                          shape_to_string(it->second.shape()) + " in vector " +
                                                          std::to_string(v));
            }
        }
        if (everywhere) shared.push_back(k);
    }
    if (shared.empty()) throw Error(ErrorCode::EmptyIntersection, "vectors share no keys");

    std::vector<std::vector<std::vector<double>>> per_key(shared.size());
    parallel_for(shared.size(), [&](std::size_t i) {
        std::vector<const Tensor*> ts;
        for (const auto& v : vectors) ts.push_back(&v.delta.at(shared[i]));
        per_key[i] = gram(ts);
    });

    const auto n = vectors.size();
    std::vector<std::vector<double>> total(n, std::vector<double>(n, 0.0));
    ConsistencyReport report;
    for (std::size_t i = 0; i < shared.size(); ++i) {
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) total[a][b] += per_key[i][a][b];
        }
        if (per_layer) report.per_layer_cosine.emplace(shared[i], to_cosines(per_key[i]));
        report.shared_elements += vectors.front().delta.at(shared[i]).numel();
    }
    report.labels = std::move(labels);
    report.cosine = to_cosines(total);
    report.shared_keys = shared.size();
    return report;
}

std::vector<TensorKey> resolve_perturbation_targets(const Checkpoint& ckpt, const PerturbationSpec& spec) {
    std::set<TensorKey> keys;
    for (const auto& k : spec.target_keys) {
        if (!ckpt.contains(k)) throw Error(ErrorCode::KeyNotFound, "perturbation target '" + k + "'");
        keys.insert(k);
    }
    if (spec.layer_class) {
        if (!spec.topology) throw Error(ErrorCode::InvalidArgument, "a layer-class selector needs a topology");
        spec.topology->validate();
        for (const auto& [k, _] : ckpt.entries) {
            if (classify_layer(k, *spec.topology) == *spec.layer_class) keys.insert(k);
        }
    }
    return {keys.begin(), keys.end()};
}

Checkpoint perturb(const Checkpoint& ckpt, const PerturbationSpec& spec) {
    if (!std::isfinite(spec.sigma) || spec.sigma < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "sigma must be finite and non-negative, got " + format_real(spec.sigma));
    }
    const auto targets = resolve_perturbation_targets(ckpt, spec);
    if (spec.sigma == 0.0) return ckpt;

    std::vector<Tensor> noisy(targets.size());
    parallel_for(targets.size(), [&](std::size_t ti) {
        const Tensor& t = ckpt.entries.at(targets[ti]);
        CounterRng rng(spec.seed, fnv1a64(targets[ti]));
        auto values = t.to_floats();
        for (auto& x : values) {
            const auto noise = static_cast<float>(spec.sigma * rng.gaussian());
            x = x + noise;
        }
        noisy[ti] = Tensor::from_floats(values, t.shape(), t.dtype());
    });

    Checkpoint out = ckpt;
    for (std::size_t i = 0; i < targets.size(); ++i) out.entries[targets[i]] = std::move(noisy[i]);
    out.metadata["stylevec.perturb.sigma"] = format_real(spec.sigma);
    out.metadata["stylevec.perturb.seed"] = std::to_string(spec.seed);
    return out;
}

LayerStatsReport per_layer_stats(const TaskVector& tau, const Checkpoint& theta_pre,
                                 const std::optional<ModelTopology>& topology) {
    LayerStatsReport report;
    for (const auto& [k, t] : tau.delta) {
        if (!theta_pre.contains(k)) throw Error(ErrorCode::KeyNotInBase, "'" + k + "'");
        report.layers.push_back({k, 0.0, 0.0, t.numel()});
    }
    parallel_for(report.layers.size(), [&](std::size_t i) {
        auto& s = report.layers[i];
        s.abs_norm = frobenius_norm(tau.delta.at(s.key));
        const double base = frobenius_norm(theta_pre.entries.at(s.key));
        s.rel_norm = s.abs_norm / std::max(base, std::numeric_limits<double>::min());
    });

    std::map<LayerClass, double> sq;
    if (topology) topology->validate();
    for (const auto& s : report.layers) {
        report.total_numel += s.numel;
        if (!topology) continue;
        const auto c = classify_layer(s.key, *topology);
        auto& g = report.groups[c];
        g.keys += 1;
        g.numel += s.numel;
        sq[c] += s.abs_norm * s.abs_norm;
    }
    for (auto& [c, g] : report.groups) g.abs_norm = std::sqrt(sq[c]);
    return report;
}

LinearityReport linearity_probe(const Checkpoint& theta_pre, const std::vector<Checkpoint>& trajectory) {
    if (trajectory.size() < 3) {
        throw Error(ErrorCode::InvalidArgument, "trajectory needs at least 3 checkpoints, got " +
                                                    std::to_string(trajectory.size()));
    }
    const auto keys = theta_pre.keys();
    for (std::size_t t = 0; t < trajectory.size(); ++t) {
        if (trajectory[t].keys() != keys) {
            throw Error(ErrorCode::KeySetMismatch, "trajectory checkpoint " + std::to_string(t) +
                                                       " is not key-aligned with the base");
        }
        for (const auto& k : keys) {
            if (trajectory[t].entries.at(k).shape() != theta_pre.entries.at(k).shape()) {
                throw Error(ErrorCode::ShapeMismatch, "trajectory checkpoint " + std::to_string(t) + " key '" + k +
                                                          "'");
            }
        }
    }

    // flattened deltas in key order, f64
    auto flatten_delta = [&](const Checkpoint& ckpt) {
        std::vector<double> out;
        out.reserve(theta_pre.parameter_count());
        for (const auto& k : keys) {
            const auto& a = ckpt.entries.at(k);
            const auto& b = theta_pre.entries.at(k);
            for (std::size_t i = 0; i < a.numel(); ++i) {
                out.push_back(static_cast<double>(a.at(i)) - static_cast<double>(b.at(i)));
            }
        }
        return out;
    };

    const auto final_delta = flatten_delta(trajectory.back());
    double final_sq = 0.0;
    for (double x : final_delta) final_sq += x * x;
    if (final_sq == 0.0) throw Error(ErrorCode::DegenerateTrajectory, "final task vector has zero norm");

    LinearityReport report;
    report.final_norm = std::sqrt(final_sq);
    report.steps.resize(trajectory.size());
    parallel_for(trajectory.size(), [&](std::size_t t) {
        const auto delta = flatten_delta(trajectory[t]);
        double dot = 0.0;
        double sq = 0.0;
        for (std::size_t i = 0; i < delta.size(); ++i) {
            dot += delta[i] * final_delta[i];
            sq += delta[i] * delta[i];
        }
        const double coeff = dot / final_sq;
        double resid_sq = 0.0;
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double r = delta[i] - coeff * final_delta[i];
            resid_sq += r * r;
        }
        auto& step = report.steps[t];
        step.index = t;
        step.norm = std::sqrt(sq);
        step.cosine = cosine_of(dot, sq, final_sq);
        step.residual = sq == 0.0 ? 0.0 : std::sqrt(resid_sq) / step.norm;
    });
    return report;
}

} // namespace stylevec
