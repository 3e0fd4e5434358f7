#include "stylevec/report_json.hpp"

namespace stylevec {

using nlohmann::json;

namespace {

json cosine_json(const Cosine& c) { return c ? json(*c) : json(nullptr); }

json matrix_json(const CosineMatrix& m) {
    json rows = json::array();
    for (const auto& row : m) {
        json r = json::array();
        for (const auto& c : row) r.push_back(cosine_json(c));
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace

json to_json(const HeaderReport& report) {
    json tensors = json::array();
    for (const auto& e : report.entries) {
        tensors.push_back({{"key", e.key},
                           {"dtype", dtype_name(e.dtype)},
                           {"shape", e.shape},
                           {"data_offsets", {e.begin, e.end}}});
    }
    json violations = json::array();
    for (const auto& v : report.violations) {
        violations.push_back({{"kind", v.kind}, {"keys", v.keys}, {"detail", v.detail}});
    }
    std::uint64_t params = 0;
    for (const auto& e : report.entries) params += shape_numel(e.shape);
    return {{"header_size", report.header_size},
            {"data_size", report.data_size ? json(*report.data_size) : json(nullptr)},
            {"tensor_count", report.tensor_count()},
            {"parameter_count", params},
            {"tensors", std::move(tensors)},
            {"metadata", report.metadata},
            {"violations", std::move(violations)}};
}

json to_json(const AlignmentReport& r) {
    return {{"only_in_finetuned", r.only_in_finetuned},
            {"only_in_base", r.only_in_base},
            {"shape_mismatch", r.shape_mismatch},
            {"dtype_mismatch", r.dtype_mismatch}};
}

json to_json(const ConsistencyReport& report) {
    json out = {{"labels", report.labels},
                {"cosine", matrix_json(report.cosine)},
                {"shared_keys", report.shared_keys},
                {"shared_elements", report.shared_elements}};
    if (!report.per_layer_cosine.empty()) {
        json per_layer = json::object();
        for (const auto& [k, m] : report.per_layer_cosine) per_layer[k] = matrix_json(m);
        out["per_layer_cosine"] = std::move(per_layer);
    }
    return out;
}

json to_json(const LayerStatsReport& report) {
    json layers = json::array();
    for (const auto& s : report.layers) {
        layers.push_back({{"key", s.key}, {"abs_norm", s.abs_norm}, {"rel_norm", s.rel_norm}, {"numel", s.numel}});
    }
    json out = {{"layers", std::move(layers)}, {"total_numel", report.total_numel}};
    if (!report.groups.empty()) {
        json groups = json::object();
        for (const auto& [c, g] : report.groups) {
            groups[std::string(layer_class_name(c))] = {{"keys", g.keys}, {"numel", g.numel}, {"abs_norm", g.abs_norm}};
        }
        out["groups"] = std::move(groups);
    }
    return out;
}

json to_json(const LinearityReport& report) {
    json steps = json::array();
    for (const auto& s : report.steps) {
        steps.push_back(
            {{"index", s.index}, {"norm", s.norm}, {"cosine", cosine_json(s.cosine)}, {"residual", s.residual}});
    }
    return {{"steps", std::move(steps)}, {"final_norm", report.final_norm}};
}

json to_json(const std::vector<VariationEntry>& ranking) {
    json out = json::array();
    for (const auto& e : ranking) {
        out.push_back({{"key", e.key},
                       {"relative_change", e.relative_change},
                       {"delta_norm", e.delta_norm},
                       {"base_norm", e.base_norm}});
    }
    return out;
}

json to_json(const ModelTopology& t) {
    json out = {{"block_pattern", t.block_pattern},
                {"n_blocks", t.n_blocks},
                {"embedding_patterns", t.embedding_patterns},
                {"split_index", t.split()}};
    return out;
}

json to_json(const MergePlan& plan) {
    json inputs = json::array();
    for (std::size_t i = 0; i < plan.inputs.size(); ++i) {
        const auto& in = plan.inputs[i];
        inputs.push_back({{"index", i},
                          {"source", in.label.empty() ? plan.deltas[i].id() : in.label},
                          {"kind", in.is_lora() ? "lora" : "task_vector"},
                          {"role", role_name(in.role)},
                          {"coefficient", in.coefficient},
                          {"effective_scale", in.effective_scale()},
                          {"keys", plan.deltas[i].delta.size()}});
    }
    json contributions = json::object();
    for (const auto& [k, cs] : plan.contributions) {
        json list = json::array();
        for (const auto& c : cs) list.push_back({{"input", c.input}, {"scale", c.scale}});
        contributions[k] = std::move(list);
    }
    json dropped = json::array();
    for (const auto& d : plan.dropped) {
        dropped.push_back({{"input", d.input}, {"key", d.key}, {"class", layer_class_name(d.layer_class)}});
    }
    json out = {{"strategy", strategy_name(plan.strategy)},
                {"base", plan.base_label},
                {"output", plan.output.string()},
                {"inputs", std::move(inputs)},
                {"contributions", std::move(contributions)},
                {"dropped", std::move(dropped)}};
    if (plan.topology) {
        out["topology"] = to_json(*plan.topology);
        json counts = json::object();
        for (auto c : {LayerClass::TextEmbedding, LayerClass::EarlyBlock, LayerClass::LateBlock, LayerClass::Other}) {
            counts[std::string(layer_class_name(c))] = 0;
        }
        for (const auto& [_, c] : plan.classes) {
            auto& n = counts[std::string(layer_class_name(c))];
            n = n.get<int>() + 1;
        }
        out["class_counts"] = std::move(counts);
    }
    return out;
}

} // namespace stylevec
