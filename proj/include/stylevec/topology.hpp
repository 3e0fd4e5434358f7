#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stylevec {

enum class LayerClass { TextEmbedding, EarlyBlock, LateBlock, Other };

std::string_view layer_class_name(LayerClass c) noexcept;
std::optional<LayerClass> parse_layer_class(std::string_view name) noexcept;

/// Layer-partition description of a DiT-style checkpoint.
///
/// `block_pattern` contains exactly one "{i}" placeholder, e.g.
/// "transformer_blocks.{i}.". A key matches when it starts with the text
/// before the placeholder, continues with a decimal block index, and then
/// with the text after it. Embedding patterns are plain key prefixes.
///
/// Blocks with index < split() are early, the rest late. The default split
/// is floor(n_blocks / 2), so an odd middle block lands in the late half.
struct ModelTopology {
    std::string block_pattern = "transformer_blocks.{i}.";
    int n_blocks = 0;
    std::vector<std::string> embedding_patterns = {"text_embed."};
    std::optional<int> split_index;

    int split() const noexcept { return split_index.value_or(n_blocks / 2); }

    /// Throws SchemaError on a malformed pattern or split.
    void validate() const;

    /// Block index captured from `key`, if the block pattern matches.
    std::optional<long long> block_index(std::string_view key) const;
    bool is_embedding(std::string_view key) const;

    static ModelTopology with_blocks(int n_blocks);
};

/// Throws BlockIndexOutOfRange for a captured index >= n_blocks and
/// TopologyMismatch when both an embedding and the block pattern match.
LayerClass classify_layer(std::string_view key, const ModelTopology& topology);

} // namespace stylevec
