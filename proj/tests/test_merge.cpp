#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "stylevec/error.hpp"
#include "stylevec/fixtures.hpp"
#include "stylevec/merge.hpp"
#include "stylevec/report_json.hpp"
#include "stylevec/topology.hpp"

using namespace stylevec;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::InvalidArgument;
}

MergeInput vector_input(TaskVector tau, double coefficient, InputRole role = InputRole::Generic) {
    return {std::move(tau), coefficient, role, {}};
}

bool changed(const Checkpoint& out, const Checkpoint& base, const TensorKey& k) {
    return !out.at(k).bit_equal(base.at(k));
}

// base + planted delta, rounded once to the storage dtype
bool matches_plant(const Tensor& got, const Tensor& base, const Tensor& planted) {
    for (std::size_t i = 0; i < got.numel(); ++i) {
        const double want = static_cast<double>(base.at(i)) + static_cast<double>(planted.at(i));
        const double scale = std::max(std::abs(want), static_cast<double>(std::abs(base.at(i))));
        if (!oracle::within_ulps(got.at(i), want, got.dtype(), scale, 1.0)) return false;
    }
    return true;
}

struct Planted {
    Checkpoint base;
    TaskVector dialect;
    TaskVector emotion;
    PlantLedger dialect_ledger;
    PlantLedger emotion_ledger;
};

Planted plant_everywhere(int n_blocks, Dtype dtype, std::uint64_t seed) {
    Planted p;
    p.base = gen_base({.n_blocks = n_blocks, .dtype = dtype, .seed = seed});
    const PlantTargets all{.classes = {LayerClass::TextEmbedding, LayerClass::EarlyBlock, LayerClass::LateBlock}};
    auto [d, dl] = gen_styled_variant(p.base, all, 1.0, seed + 1, "dialect");
    auto [e, el] = gen_styled_variant(p.base, all, 1.0, seed + 2, "emotion");
    p.dialect = build_task_vector(d, p.base);
    p.emotion = build_task_vector(e, p.base);
    p.dialect_ledger = std::move(dl);
    p.emotion_ledger = std::move(el);
    return p;
}

} // namespace

TEST_CASE("classify_layer") {
    auto topo = ModelTopology::with_blocks(4);
    CHECK(classify_layer("text_embed.proj.weight", topo) == LayerClass::TextEmbedding);
    CHECK(classify_layer("transformer_blocks.1.attn.weight", topo) == LayerClass::EarlyBlock);
    CHECK(classify_layer("transformer_blocks.2.attn.weight", topo) == LayerClass::LateBlock);
    CHECK(classify_layer("proj_out.weight", topo) == LayerClass::Other);
    CHECK(classify_layer("transformer_blocks.x.attn.weight", topo) == LayerClass::Other);
    CHECK(classify_layer("transformer_blocks.3", topo) == LayerClass::Other);
    CHECK(code_of([&] { classify_layer("transformer_blocks.4.attn.weight", topo); }) ==
          ErrorCode::BlockIndexOutOfRange);

    SUBCASE("odd block counts put the middle block late") {
        for (int n : {1, 3, 5, 7, 22}) {
            const auto t = ModelTopology::with_blocks(n);
            for (int i = 0; i < n; ++i) {
                const auto c = classify_layer("transformer_blocks." + std::to_string(i) + ".ff.w1.weight", t);
                CHECK(c == (2 * i < n - (n % 2) ? LayerClass::EarlyBlock : LayerClass::LateBlock));
            }
        }
        const auto five = ModelTopology::with_blocks(5);
        const LayerClass want[] = {LayerClass::EarlyBlock, LayerClass::EarlyBlock, LayerClass::LateBlock,
                                   LayerClass::LateBlock, LayerClass::LateBlock};
        for (int i = 0; i < 5; ++i) {
            CHECK(classify_layer("transformer_blocks." + std::to_string(i) + ".norm.weight", five) == want[i]);
        }
    }
    SUBCASE("explicit split index") {
        topo.split_index = 1;
        CHECK(classify_layer("transformer_blocks.1.attn.weight", topo) == LayerClass::LateBlock);
        topo.split_index = 4;
        CHECK(classify_layer("transformer_blocks.3.attn.weight", topo) == LayerClass::EarlyBlock);
        topo.split_index = 5;
        CHECK(code_of([&] { topo.validate(); }) == ErrorCode::SchemaError);
    }
    SUBCASE("ambiguous patterns") {
        topo.embedding_patterns = {"transformer_blocks.0."};
        CHECK(code_of([&] { classify_layer("transformer_blocks.0.attn.weight", topo); }) ==
              ErrorCode::TopologyMismatch);
    }
    SUBCASE("pattern validation") {
        topo.block_pattern = "blocks.";
        CHECK(code_of([&] { topo.validate(); }) == ErrorCode::SchemaError);
        topo.block_pattern = "blocks.{i}.{i}";
        CHECK(code_of([&] { topo.validate(); }) == ErrorCode::SchemaError);
    }
    SUBCASE("custom grammar") {
        ModelTopology t{.block_pattern = "model.layers.{i}.", .n_blocks = 6, .embedding_patterns = {"model.embed"}};
        CHECK(classify_layer("model.embed_tokens.weight", t) == LayerClass::TextEmbedding);
        CHECK(classify_layer("model.layers.2.mlp.weight", t) == LayerClass::EarlyBlock);
        CHECK(classify_layer("model.layers.3.mlp.weight", t) == LayerClass::LateBlock);
    }
    CHECK(parse_layer_class("early") == LayerClass::EarlyBlock);
    CHECK(parse_layer_class("late_block") == LayerClass::LateBlock);
    CHECK_FALSE(parse_layer_class("middle").has_value());
}

TEST_CASE("the routed classes partition every key set") {
    std::mt19937_64 rng(50);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 1 + static_cast<int>(rng() % 30);
        const auto topo = ModelTopology::with_blocks(n);
        std::set<TensorKey> dialect;
        std::set<TensorKey> emotion;
        std::set<TensorKey> other;
        std::vector<TensorKey> keys = {"text_embed.weight", "proj_out.weight", "rope.freqs"};
        for (int i = 0; i < n; ++i) keys.push_back("transformer_blocks." + std::to_string(i) + ".attn.to_q.weight");
        for (const auto& k : keys) {
            switch (classify_layer(k, topo)) {
            case LayerClass::TextEmbedding:
            case LayerClass::EarlyBlock: dialect.insert(k); break;
            case LayerClass::LateBlock: emotion.insert(k); break;
            case LayerClass::Other: other.insert(k); break;
            }
        }
        CHECK(dialect.size() + emotion.size() + other.size() == keys.size());
        CHECK(emotion.size() == static_cast<std::size_t>(n - n / 2));
    }
}

TEST_CASE("merge_full") {
    const auto p = plant_everywhere(4, Dtype::F32, 60);

    SUBCASE("one input equals a single application") {
        for (double c : {1.0, 3.0, 0.37}) {
            const auto merged = merge_full(p.base, {vector_input(p.dialect, c)});
            const auto applied = apply_evector(p.base, {p.dialect, c});
            for (const auto& [k, t] : applied.entries) CHECK(merged.at(k).bit_equal(t));
        }
    }
    SUBCASE("opposite inputs cancel to the base within 1 ulp") {
        const auto merged = merge_full(p.base, {vector_input(p.dialect, 1.0), vector_input(p.dialect, -1.0)});
        for (const auto& [k, t] : p.base.entries) {
            for (std::size_t i = 0; i < t.numel(); ++i) {
                const double scale = std::max<double>(std::abs(t.at(i)), std::abs(p.dialect.delta.at(k).at(i)));
                CHECK(oracle::within_ulps(merged.at(k).at(i), t.at(i), Dtype::F32, scale, 1.0));
            }
        }
    }
    SUBCASE("planted deltas on disjoint blocks are each recovered") {
        const auto base = gen_base({.n_blocks = 4, .seed = 61});
        const auto [d, dl] = gen_styled_variant(base, {.classes = {LayerClass::EarlyBlock}}, 1.0, 62);
        const auto [e, el] = gen_styled_variant(base, {.classes = {LayerClass::LateBlock}}, 1.0, 63);
        const auto merged = merge_full(base, {vector_input(build_task_vector(d, base), 1.0),
                                              vector_input(build_task_vector(e, base), 1.0)});
        for (const auto& [k, t] : base.entries) {
            CAPTURE(k);
            if (dl.deltas.count(k)) {
                CHECK(matches_plant(merged.at(k), t, dl.deltas.at(k)));
            } else if (el.deltas.count(k)) {
                CHECK(matches_plant(merged.at(k), t, el.deltas.at(k)));
            } else {
                CHECK(merged.at(k).bit_equal(t));
            }
        }
    }
    SUBCASE("input order changes elements by at most 2 ulp") {
        for (auto dt : {Dtype::F32, Dtype::F16, Dtype::BF16}) {
            const auto q = plant_everywhere(3, dt, 64);
            const auto ab = merge_full(q.base, {vector_input(q.dialect, 3.0), vector_input(q.emotion, 1.5)});
            const auto ba = merge_full(q.base, {vector_input(q.emotion, 1.5), vector_input(q.dialect, 3.0)});
            for (const auto& [k, t] : q.base.entries) {
                for (std::size_t i = 0; i < t.numel(); ++i) {
                    const double scale = std::max({static_cast<double>(std::abs(t.at(i))),
                                                   std::abs(3.0 * q.dialect.delta.at(k).at(i)),
                                                   std::abs(1.5 * q.emotion.delta.at(k).at(i))});
                    CHECK(oracle::within_ulps(ab.at(k).at(i), ba.at(k).at(i), dt, scale, 2.0));
                }
            }
        }
    }
    SUBCASE("LoRA inputs apply at coefficient squared") {
        LoraAdapter adapter;
        std::mt19937_64 rng(65);
        adapter.entries["transformer_blocks.0.attn.to_q.weight"] = {
            oracle::random_tensor(rng, {2, 16}, Dtype::F32, 0.1), oracle::random_tensor(rng, {16, 2}, Dtype::F32, 0.1)};
        const auto merged = merge_full(p.base, {{adapter, 1.12, InputRole::Generic, "lora"}});
        const auto applied = apply_lora(p.base, adapter, 1.12);
        for (const auto& [k, t] : applied.entries) CHECK(merged.at(k).bit_equal(t));
    }
    SUBCASE("errors name the input") {
        TaskVector stray;
        stray.delta["nope"] = Tensor::zeros(Dtype::F32, {1});
        try {
            merge_full(p.base, {vector_input(p.dialect, 1.0), vector_input(stray, 1.0)});
            FAIL("expected KeyNotInBase");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::KeyNotInBase);
            CHECK(std::string(e.what()).find("input #1") != std::string::npos);
        }
        CHECK(code_of([&] { merge_full(p.base, {vector_input(p.dialect, std::nan(""))}); }) ==
              ErrorCode::NonFiniteCoefficient);
    }
    SUBCASE("metadata records the recipe") {
        const auto merged = merge_full(p.base, {vector_input(p.dialect, 3.0)});
        CHECK(merged.metadata.at("stylevec.merge.strategy") == "full");
        CHECK(merged.metadata.at("stylevec.merge.input.0.coefficient") == "3");
    }
}

TEST_CASE("merge_hierarchical") {
    const auto topo = ModelTopology::with_blocks(4);

    SUBCASE("routing against the planted ledgers") {
        for (auto dt : {Dtype::F32, Dtype::F16, Dtype::BF16}) {
            const auto p = plant_everywhere(4, dt, 70);
            const auto [out, dropped] =
                merge_hierarchical(p.base, vector_input(p.dialect, 1.0), vector_input(p.emotion, 1.0), topo);
            std::size_t dialect_keys = 0;
            std::size_t emotion_keys = 0;
            for (const auto& [k, t] : p.base.entries) {
                CAPTURE(k);
                const auto c = classify_layer(k, topo);
                if (c == LayerClass::TextEmbedding || c == LayerClass::EarlyBlock) {
                    ++dialect_keys;
                    CHECK(matches_plant(out.at(k), t, p.dialect_ledger.deltas.at(k)));
                } else {
                    ++emotion_keys;
                    CHECK(matches_plant(out.at(k), t, p.emotion_ledger.deltas.at(k)));
                }
            }
            CHECK(dialect_keys == 15);
            CHECK(emotion_keys == 14);
            // each input drops exactly the keys routed to the other role
            CHECK(dropped.size() == p.base.entries.size());
            for (const auto& d : dropped) {
                const bool early = d.layer_class == LayerClass::TextEmbedding || d.layer_class == LayerClass::EarlyBlock;
                CHECK(early == (d.input == 1));
            }
        }
    }
    SUBCASE("an empty emotion input changes only dialect keys") {
        const auto p = plant_everywhere(4, Dtype::F32, 71);
        const auto [out, dropped] =
            merge_hierarchical(p.base, vector_input(p.dialect, 2.0), vector_input(TaskVector{}, 1.0), topo);
        for (const auto& [k, t] : p.base.entries) {
            const auto c = classify_layer(k, topo);
            CHECK(changed(out, p.base, k) == (c == LayerClass::TextEmbedding || c == LayerClass::EarlyBlock));
        }
    }
    SUBCASE("zero coefficients leave the base intact") {
        const auto p = plant_everywhere(4, Dtype::BF16, 72);
        const auto [out, dropped] =
            merge_hierarchical(p.base, vector_input(p.dialect, 0.0), vector_input(p.emotion, 0.0), topo);
        for (const auto& [k, t] : p.base.entries) CHECK(out.at(k).bit_equal(t));
    }
    SUBCASE("every changed key has exactly one contributor") {
        const auto p = plant_everywhere(5, Dtype::F16, 73);
        const auto t5 = ModelTopology::with_blocks(5);
        const auto plan = plan_hierarchical(p.base, vector_input(p.dialect, 3.0), vector_input(p.emotion, 2.0), t5);
        const auto out = execute_plan(plan);
        for (const auto& [k, t] : p.base.entries) {
            if (changed(out, p.base, k)) CHECK(plan.contributions.at(k).size() == 1);
        }
    }
    SUBCASE("all-early split with no emotion degrades to a full dialect merge") {
        const auto p = plant_everywhere(4, Dtype::F32, 74);
        auto all_early = topo;
        all_early.split_index = 4;
        const auto [out, dropped] =
            merge_hierarchical(p.base, vector_input(p.dialect, 3.0), vector_input(TaskVector{}, 1.0), all_early);
        const auto full = merge_full(p.base, {vector_input(p.dialect, 3.0)});
        for (const auto& [k, t] : full.entries) CHECK(out.at(k).bit_equal(t));
        CHECK(dropped.empty());
    }
    SUBCASE("keys outside every class are dropped and reported") {
        auto p = plant_everywhere(2, Dtype::F32, 75);
        p.base.entries["proj_out.weight"] = Tensor::zeros(Dtype::F32, {4});
        p.dialect.delta["proj_out.weight"] = Tensor::from_floats(std::vector<float>{1, 1, 1, 1}, {4});
        const auto [out, dropped] = merge_hierarchical(p.base, vector_input(p.dialect, 1.0),
                                                       vector_input(p.emotion, 1.0), ModelTopology::with_blocks(2));
        CHECK(out.at("proj_out.weight").all_zero());
        bool reported = false;
        for (const auto& d : dropped) reported = reported || (d.key == "proj_out.weight" && d.input == 0);
        CHECK(reported);
    }
    SUBCASE("a base without block keys is a topology mismatch") {
        Checkpoint flat;
        flat.entries["w"] = Tensor::zeros(Dtype::F32, {2});
        CHECK(code_of([&] {
                  merge_hierarchical(flat, vector_input(TaskVector{}, 1.0), vector_input(TaskVector{}, 1.0), topo);
              }) == ErrorCode::TopologyMismatch);
    }
}

TEST_CASE("recipes") {
    oracle::TempDir dir;
    const auto base = gen_base({.n_blocks = 4, .seed = 80});
    const auto [d, dl] = gen_styled_variant(base, {.classes = {LayerClass::EarlyBlock}}, 1.0, 81);
    const auto [e, el] = gen_styled_variant(base, {.classes = {LayerClass::LateBlock}}, 1.0, 82);
    write_checkpoint(base, dir / "base.safetensors");
    write_checkpoint(to_checkpoint(build_task_vector(d, base)), dir / "dialect.safetensors");
    write_checkpoint(to_checkpoint(build_task_vector(e, base)), dir / "emotion.safetensors");
    const std::string topology =
        R"("topology": {"block_pattern": "transformer_blocks.{i}.", "n_blocks": 4, "embedding_patterns": ["text_embed."]})";

    SUBCASE("full recipe with one input") {
        oracle::dump(dir / "r.json", R"({"base": "base.safetensors", "strategy": "full", "output": "out.safetensors",
            "inputs": [{"path": "dialect.safetensors", "kind": "task_vector", "coefficient": 3.0, "role": "generic"}]})");
        const auto recipe = load_recipe(dir / "r.json");
        CHECK(recipe.base == dir / "base.safetensors");
        const auto plan = compile_recipe(recipe);
        CHECK(plan.contributions.size() == base.entries.size());
        for (const auto& [k, cs] : plan.contributions) {
            REQUIRE(cs.size() == 1);
            CHECK(cs[0].input == 0);
            CHECK(cs[0].scale == 3.0);
        }
        CHECK(plan.output == dir / "out.safetensors");
    }
    SUBCASE("hierarchical recipe on the standard fixture") {
        oracle::dump(dir / "h.json", R"({"base": "base.safetensors", "strategy": "hierarchical", "output": "o.safetensors",
            "inputs": [{"path": "emotion.safetensors", "kind": "task_vector", "coefficient": 1.0, "role": "emotion"},
                       {"path": "dialect.safetensors", "kind": "task_vector", "coefficient": 3.0, "role": "dialect"}],
            )" + topology + "}");
        const auto plan = compile_recipe(load_recipe(dir / "h.json"));
        const auto doc = to_json(plan);
        CHECK(doc.at("class_counts").at("text_embedding") == 1);
        CHECK(doc.at("class_counts").at("early_block") == 14);
        CHECK(doc.at("class_counts").at("late_block") == 14);
        CHECK(doc.at("class_counts").at("other") == 0);
        CHECK(plan.inputs[0].role == InputRole::Dialect);
        CHECK(plan.inputs[0].label == "dialect.safetensors");
    }
    SUBCASE("role rules") {
        const std::string two_dialects = R"({"base": "b", "strategy": "hierarchical", "output": "o", "inputs": [
            {"path": "x", "kind": "task_vector", "coefficient": 1, "role": "dialect"},
            {"path": "y", "kind": "task_vector", "coefficient": 1, "role": "dialect"}], )" + topology + "}";
        CHECK(code_of([&] { parse_recipe(two_dialects); }) == ErrorCode::RoleViolation);
        const std::string three = R"({"base": "b", "strategy": "hierarchical", "output": "o", "inputs": [
            {"path": "x", "kind": "task_vector", "coefficient": 1, "role": "dialect"},
            {"path": "y", "kind": "task_vector", "coefficient": 1, "role": "emotion"},
            {"path": "z", "kind": "task_vector", "coefficient": 1, "role": "generic"}], )" + topology + "}";
        CHECK(code_of([&] { parse_recipe(three); }) == ErrorCode::RoleViolation);
        const std::string no_topology = R"({"base": "b", "strategy": "hierarchical", "output": "o", "inputs": [
            {"path": "x", "kind": "task_vector", "coefficient": 1, "role": "dialect"},
            {"path": "y", "kind": "task_vector", "coefficient": 1, "role": "emotion"}]})";
        CHECK(code_of([&] { parse_recipe(no_topology); }) == ErrorCode::SchemaError);
    }
    SUBCASE("schema violations") {
        const char* bad[] = {
            "[]",
            "{not json",
            R"({"base": "b", "strategy": "full", "output": "o", "inputs": [], "extra": 1})",
            R"({"base": "b", "strategy": "full", "output": "o", "inputs": []})",
            R"({"base": "b", "strategy": "sideways", "output": "o", "inputs": [{"path": "x", "kind": "task_vector", "coefficient": 1, "role": "generic"}]})",
            R"({"base": "b", "strategy": "full", "output": "o", "inputs": [{"path": "x", "kind": "dense", "coefficient": 1, "role": "generic"}]})",
            R"({"base": "b", "strategy": "full", "output": "o", "inputs": [{"path": "x", "kind": "lora", "coefficient": "1", "role": "generic"}]})",
            R"({"base": "b", "strategy": "full", "output": "o", "inputs": [{"path": "x", "kind": "lora", "coefficient": 1, "role": "tenor"}]})",
            R"({"base": "b", "strategy": "full", "inputs": [{"path": "x", "kind": "lora", "coefficient": 1, "role": "generic"}]})",
            R"({"base": "b", "strategy": "full", "output": "o", "inputs": [{"path": "x", "kind": "lora", "coefficient": 1, "role": "generic"}],
                "topology": {"block_pattern": "blocks.", "n_blocks": 2, "embedding_patterns": []}})",
            R"({"base": "b", "strategy": "full", "output": "o", "inputs": [{"path": "x", "kind": "lora", "coefficient": 1, "role": "generic"}],
                "topology": {"block_pattern": "b.{i}.", "n_blocks": 2, "embedding_patterns": [], "split_index": 3}})",
        };
        for (const char* text : bad) {
            CAPTURE(text);
            CHECK(code_of([&] { parse_recipe(text); }) == ErrorCode::SchemaError);
        }
    }
    SUBCASE("missing files") {
        CHECK(code_of([&] { load_recipe(dir / "absent.json"); }) == ErrorCode::MissingInput);
        oracle::dump(dir / "m.json", R"({"base": "base.safetensors", "strategy": "full", "output": "o.safetensors",
            "inputs": [{"path": "gone.safetensors", "kind": "task_vector", "coefficient": 1.0, "role": "generic"}]})");
        CHECK(code_of([&] { compile_recipe(load_recipe(dir / "m.json")); }) == ErrorCode::MissingInput);
    }
}
