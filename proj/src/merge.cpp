#include "stylevec/merge.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "stylevec/error.hpp"
#include "stylevec/parallel.hpp"

namespace stylevec {

using nlohmann::json;

namespace {

std::string input_tag(std::size_t i) { return "input #" + std::to_string(i); }

// Materializes an input onto the base and checks every key against it.
TaskVector resolve_delta(const Checkpoint& base, const MergeInput& input, std::size_t index) {
    if (!std::isfinite(input.effective_scale())) {
        throw Error(ErrorCode::NonFiniteCoefficient, input_tag(index) + ": coefficient " +
                                                         format_real(input.coefficient));
    }
    try {
        if (const auto* adapter = std::get_if<LoraAdapter>(&input.source)) {
            return materialize_adapter(*adapter, base);
        }
        const auto& tau = std::get<TaskVector>(input.source);
        for (const auto& [k, t] : tau.delta) {
            auto it = base.entries.find(k);
            if (it == base.entries.end()) throw Error(ErrorCode::KeyNotInBase, "'" + k + "'");
            if (it->second.shape() != t.shape()) {
                throw Error(ErrorCode::ShapeMismatch, "'" + k + "': " + shape_to_string(t.shape()) + " vs base " +
                                                          shape_to_string(it->second.shape()));
            }
            if (it->second.dtype() != t.dtype()) {
                throw Error(ErrorCode::DtypeMismatch, "'" + k + "': " + std::string(dtype_name(t.dtype())) +
                                                          " vs base " + std::string(dtype_name(it->second.dtype())));
            }
        }
        return tau;
    } catch (const Error& e) {
        throw Error(e.code(), input_tag(index) + (input.label.empty() ? "" : " (" + input.label + ")") + ": " +
                                  e.what());
    }
}

bool routed(InputRole role, LayerClass c) {
    switch (role) {
    case InputRole::Dialect: return c == LayerClass::TextEmbedding || c == LayerClass::EarlyBlock;
    case InputRole::Emotion: return c == LayerClass::LateBlock;
    case InputRole::Generic: return true;
    }
    return false;
}

InputRole parse_role(const std::string& s) {
    if (s == "dialect") return InputRole::Dialect;
    if (s == "emotion") return InputRole::Emotion;
    if (s == "generic") return InputRole::Generic;
    throw Error(ErrorCode::SchemaError, "unknown role '" + s + "'");
}

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::SchemaError, what); }

const json& require(const json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field)) schema(where + ": missing \"" + field + "\"");
    return obj.at(field);
}

std::string require_string(const json& obj, const char* field, const std::string& where) {
    const auto& v = require(obj, field, where);
    if (!v.is_string()) schema(where + ": \"" + field + "\" must be a string");
    return v.get<std::string>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [k, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) schema(where + ": unknown field \"" + k + "\"");
    }
}

} // namespace

std::string_view strategy_name(MergeStrategy s) noexcept { return s == MergeStrategy::Full ? "full" : "hierarchical"; }

std::string_view role_name(InputRole r) noexcept {
    switch (r) {
    case InputRole::Dialect: return "dialect";
    case InputRole::Emotion: return "emotion";
    case InputRole::Generic: return "generic";
    }
    return "generic";
}

MergePlan plan_full(const Checkpoint& base, std::vector<MergeInput> inputs) {
    MergePlan plan;
    plan.strategy = MergeStrategy::Full;
    plan.base = base;
    for (std::size_t i = 0; i < inputs.size(); ++i) plan.deltas.push_back(resolve_delta(base, inputs[i], i));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (const auto& [k, _] : plan.deltas[i].delta) {
            plan.contributions[k].push_back({i, inputs[i].effective_scale()});
        }
    }
    plan.inputs = std::move(inputs);
    return plan;
}

MergePlan plan_hierarchical(const Checkpoint& base, MergeInput dialect, MergeInput emotion,
                            const ModelTopology& topology) {
    topology.validate();
    MergePlan plan;
    plan.strategy = MergeStrategy::Hierarchical;
    plan.base = base;
    plan.topology = topology;

    bool any_block = false;
    for (const auto& [k, _] : base.entries) {
        const auto c = classify_layer(k, topology);
        any_block = any_block || c == LayerClass::EarlyBlock || c == LayerClass::LateBlock;
        plan.classes.emplace(k, c);
    }
    if (!any_block) {
        throw Error(ErrorCode::TopologyMismatch, "no base key matches block pattern '" + topology.block_pattern + "'");
    }

    dialect.role = InputRole::Dialect;
    emotion.role = InputRole::Emotion;
    plan.inputs.push_back(std::move(dialect));
    plan.inputs.push_back(std::move(emotion));
    for (std::size_t i = 0; i < plan.inputs.size(); ++i) plan.deltas.push_back(resolve_delta(base, plan.inputs[i], i));

    for (std::size_t i = 0; i < plan.inputs.size(); ++i) {
        for (const auto& [k, _] : plan.deltas[i].delta) {
            const auto c = plan.classes.at(k);
            if (routed(plan.inputs[i].role, c)) {
                plan.contributions[k].push_back({i, plan.inputs[i].effective_scale()});
            } else {
                plan.dropped.push_back({i, k, c});
            }
        }
    }
    return plan;
}

Checkpoint execute_plan(const MergePlan& plan) {
    std::vector<const std::pair<const TensorKey, std::vector<Contribution>>*> work;
    for (const auto& entry : plan.contributions) work.push_back(&entry);

    std::vector<Tensor> merged(work.size());
    parallel_for(work.size(), [&](std::size_t w) {
        const auto& [key, contribs] = *work[w];
        const Tensor& base = plan.base.entries.at(key);
        std::vector<float> acc = base.to_floats();
        bool changed = false;
        for (const auto& c : contribs) {
            if (c.scale == 0.0) continue;
            const Tensor& delta = plan.deltas[c.input].delta.at(key);
            for (std::size_t i = 0; i < acc.size(); ++i) {
                const auto step = static_cast<float>(c.scale * static_cast<double>(delta.at(i)));
                if (step != 0.0f) {
                    acc[i] = acc[i] + step;
                    changed = true;
                }
            }
        }
        merged[w] = changed ? Tensor::from_floats(acc, base.shape(), base.dtype()) : base;
    });

    Checkpoint out = plan.base;
    for (std::size_t w = 0; w < work.size(); ++w) out.entries[work[w]->first] = std::move(merged[w]);
    out.metadata["stylevec.merge.strategy"] = std::string(strategy_name(plan.strategy));
    for (std::size_t i = 0; i < plan.inputs.size(); ++i) {
        const auto prefix = "stylevec.merge.input." + std::to_string(i);
        const auto& in = plan.inputs[i];
        out.metadata[prefix + ".source"] = in.label.empty() ? plan.deltas[i].id() : in.label;
        out.metadata[prefix + ".kind"] = in.is_lora() ? "lora" : "task_vector";
        out.metadata[prefix + ".role"] = std::string(role_name(in.role));
        out.metadata[prefix + ".coefficient"] = format_real(in.coefficient);
    }
    return out;
}

Checkpoint merge_full(const Checkpoint& base, std::vector<MergeInput> inputs) {
    return execute_plan(plan_full(base, std::move(inputs)));
}

HierarchicalMerge merge_hierarchical(const Checkpoint& base, MergeInput dialect, MergeInput emotion,
                                     const ModelTopology& topology) {
    auto plan = plan_hierarchical(base, std::move(dialect), std::move(emotion), topology);
    return {execute_plan(plan), plan.dropped};
}

MergeRecipe parse_recipe(std::string_view json_text, const std::filesystem::path& directory) {
    json doc;
    try {
        doc = json::parse(json_text.begin(), json_text.end());
    } catch (const json::exception& e) {
        schema(std::string("recipe is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) schema("recipe must be a JSON object");
    reject_unknown(doc, {"base", "strategy", "inputs", "topology", "output"}, "recipe");

    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || directory.empty() ? path : directory / path;
    };

    MergeRecipe r;
    r.base = resolve(require_string(doc, "base", "recipe"));
    r.output = resolve(require_string(doc, "output", "recipe"));
    const auto strategy = require_string(doc, "strategy", "recipe");
    if (strategy == "full") {
        r.strategy = MergeStrategy::Full;
    } else if (strategy == "hierarchical") {
        r.strategy = MergeStrategy::Hierarchical;
    } else {
        schema("unknown strategy '" + strategy + "'");
    }

    const auto& inputs = require(doc, "inputs", "recipe");
    if (!inputs.is_array()) schema("recipe: \"inputs\" must be an array");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto where = "inputs[" + std::to_string(i) + "]";
        const auto& in = inputs[i];
        if (!in.is_object()) schema(where + " must be an object");
        reject_unknown(in, {"path", "kind", "coefficient", "role"}, where);
        RecipeInput ri;
        ri.path = resolve(require_string(in, "path", where));
        const auto kind = require_string(in, "kind", where);
        if (kind != "task_vector" && kind != "lora") schema(where + ": unknown kind '" + kind + "'");
        ri.lora = kind == "lora";
        const auto& coeff = require(in, "coefficient", where);
        if (!coeff.is_number()) schema(where + ": \"coefficient\" must be a number");
        ri.coefficient = coeff.get<double>();
        if (!std::isfinite(ri.coefficient)) schema(where + ": coefficient must be finite");
        ri.role = parse_role(require_string(in, "role", where));
        r.inputs.push_back(std::move(ri));
    }

    if (doc.contains("topology")) {
        const auto& t = doc.at("topology");
        if (!t.is_object()) schema("recipe: \"topology\" must be an object");
        reject_unknown(t, {"block_pattern", "n_blocks", "embedding_patterns", "split_index"}, "topology");
        ModelTopology topo;
        topo.block_pattern = require_string(t, "block_pattern", "topology");
        const auto& nb = require(t, "n_blocks", "topology");
        if (!nb.is_number_integer() || nb.get<long long>() < 1 || nb.get<long long>() > 1'000'000) {
            schema("topology: \"n_blocks\" must be a positive integer");
        }
        topo.n_blocks = nb.get<int>();
        const auto& ep = require(t, "embedding_patterns", "topology");
        if (!ep.is_array()) schema("topology: \"embedding_patterns\" must be an array");
        topo.embedding_patterns.clear();
        for (const auto& p : ep) {
            if (!p.is_string()) schema("topology: embedding patterns must be strings");
            topo.embedding_patterns.push_back(p.get<std::string>());
        }
        if (t.contains("split_index") && !t.at("split_index").is_null()) {
            const auto& si = t.at("split_index");
            if (!si.is_number_integer()) schema("topology: \"split_index\" must be an integer");
            topo.split_index = si.get<int>();
        }
        topo.validate();
        r.topology = std::move(topo);
    }

    if (r.inputs.empty()) schema("recipe needs at least one input");
    if (r.strategy == MergeStrategy::Hierarchical) {
        if (!r.topology) schema("hierarchical recipe needs a topology");
        std::size_t dialects = 0;
        std::size_t emotions = 0;
        for (const auto& in : r.inputs) {
            dialects += in.role == InputRole::Dialect;
            emotions += in.role == InputRole::Emotion;
        }
        if (dialects != 1 || emotions != 1 || r.inputs.size() != 2) {
            throw Error(ErrorCode::RoleViolation, "hierarchical merging needs exactly one dialect and one emotion "
                                                  "input, got " +
                                                      std::to_string(dialects) + " dialect, " +
                                                      std::to_string(emotions) + " emotion, " +
                                                      std::to_string(r.inputs.size()) + " total");
        }
    }
    return r;
}

MergeRecipe load_recipe(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingInput, "cannot open recipe '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_recipe(ss.str(), path.parent_path());
}

MergePlan compile_recipe(const MergeRecipe& recipe) {
    auto load = [](const std::filesystem::path& p) {
        if (!std::filesystem::exists(p)) throw Error(ErrorCode::MissingInput, "'" + p.string() + "' does not exist");
        return read_checkpoint(p);
    };
    const auto base = load(recipe.base);
    std::vector<MergeInput> inputs;
    for (const auto& ri : recipe.inputs) {
        const auto ckpt = load(ri.path);
        MergeInput in;
        if (ri.lora) {
            in.source = lora_from_checkpoint(ckpt);
        } else {
            in.source = task_vector_from_checkpoint(ckpt);
        }
        in.coefficient = ri.coefficient;
        in.role = ri.role;
        in.label = ri.path.filename().string();
        inputs.push_back(std::move(in));
    }

    MergePlan plan;
    if (recipe.strategy == MergeStrategy::Full) {
        plan = plan_full(base, std::move(inputs));
    } else {
        auto& dialect = inputs[0].role == InputRole::Dialect ? inputs[0] : inputs[1];
        auto& emotion = inputs[0].role == InputRole::Dialect ? inputs[1] : inputs[0];
        plan = plan_hierarchical(base, std::move(dialect), std::move(emotion), *recipe.topology);
    }
    if (recipe.topology && !plan.topology) {
        plan.topology = recipe.topology;
        for (const auto& [k, _] : base.entries) plan.classes.emplace(k, classify_layer(k, *recipe.topology));
    }
    plan.base_label = recipe.base.filename().string();
    plan.output = recipe.output;
    return plan;
}

} // namespace stylevec
