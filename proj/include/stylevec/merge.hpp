#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "stylevec/checkpoint.hpp"
#include "stylevec/lora.hpp"
#include "stylevec/taskvector.hpp"
#include "stylevec/topology.hpp"

namespace stylevec {

enum class MergeStrategy { Full, Hierarchical };
enum class InputRole { Dialect, Emotion, Generic };

std::string_view strategy_name(MergeStrategy s) noexcept;
std::string_view role_name(InputRole r) noexcept;

/// One merge operand. Full task vectors apply at `coefficient`, LoRA
/// adapters at coefficient^2.
struct MergeInput {
    std::variant<TaskVector, LoraAdapter> source;
    double coefficient = 1.0;
    InputRole role = InputRole::Generic;
    std::string label;

    bool is_lora() const { return std::holds_alternative<LoraAdapter>(source); }
    double effective_scale() const { return is_lora() ? coefficient * coefficient : coefficient; }
};

struct Contribution {
    std::size_t input = 0;
    double scale = 0.0;
};

/// A key an input covers but is not routed to under hierarchical merging.
struct DroppedKey {
    std::size_t input = 0;
    TensorKey key;
    LayerClass layer_class = LayerClass::Other;
};

/// Fully resolved merge: for every output key, the ordered contributions.
/// Executing a plan needs nothing beyond the plan itself.
struct MergePlan {
    MergeStrategy strategy = MergeStrategy::Full;
    Checkpoint base;
    std::string base_label;
    std::vector<MergeInput> inputs;
    std::vector<TaskVector> deltas; // per input, cast and reshaped onto the base
    std::map<TensorKey, std::vector<Contribution>> contributions;
    std::optional<ModelTopology> topology;
    std::map<TensorKey, LayerClass> classes; // every base key, when a topology is set
    std::vector<DroppedKey> dropped;
    std::filesystem::path output;
};

MergePlan plan_full(const Checkpoint& base, std::vector<MergeInput> inputs);
MergePlan plan_hierarchical(const Checkpoint& base, MergeInput dialect, MergeInput emotion,
                            const ModelTopology& topology);

/// base + sum of scaled deltas per element, f32 accumulation in plan order,
/// rounded once to the base dtype. Keys without contributions pass through.
Checkpoint execute_plan(const MergePlan& plan);

Checkpoint merge_full(const Checkpoint& base, std::vector<MergeInput> inputs);

struct HierarchicalMerge {
    Checkpoint checkpoint;
    std::vector<DroppedKey> dropped;
};

HierarchicalMerge merge_hierarchical(const Checkpoint& base, MergeInput dialect, MergeInput emotion,
                                     const ModelTopology& topology);

// ---------------------------------------------------------------------------
// recipe files

struct RecipeInput {
    std::filesystem::path path;
    bool lora = false;
    double coefficient = 1.0;
    InputRole role = InputRole::Generic;
};

struct MergeRecipe {
    std::filesystem::path base;
    MergeStrategy strategy = MergeStrategy::Full;
    std::vector<RecipeInput> inputs;
    std::optional<ModelTopology> topology;
    std::filesystem::path output;
};

/// Throws SchemaError on any deviation from the recipe schema.
/// Relative paths are resolved against `directory`.
MergeRecipe parse_recipe(std::string_view json_text, const std::filesystem::path& directory = {});
MergeRecipe load_recipe(const std::filesystem::path& path);

/// Loads every referenced file and resolves the plan. Throws MissingInput
/// for absent files and RoleViolation for a hierarchical recipe without
/// exactly one dialect and one emotion input.
MergePlan compile_recipe(const MergeRecipe& recipe);

} // namespace stylevec
