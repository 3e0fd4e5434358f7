#include "stylevec/topology.hpp"

#include "stylevec/error.hpp"

namespace stylevec {

namespace {
constexpr std::string_view kPlaceholder = "{i}";
}

std::string_view layer_class_name(LayerClass c) noexcept {
    switch (c) {
    case LayerClass::TextEmbedding: return "text_embedding";
    case LayerClass::EarlyBlock: return "early_block";
    case LayerClass::LateBlock: return "late_block";
    case LayerClass::Other: return "other";
    }
    return "other";
}

std::optional<LayerClass> parse_layer_class(std::string_view name) noexcept {
    if (name == "text_embedding" || name == "embedding") return LayerClass::TextEmbedding;
    if (name == "early_block" || name == "early") return LayerClass::EarlyBlock;
    if (name == "late_block" || name == "late") return LayerClass::LateBlock;
    if (name == "other") return LayerClass::Other;
    return std::nullopt;
}

void ModelTopology::validate() const {
    const auto first = block_pattern.find(kPlaceholder);
    if (first == std::string::npos || block_pattern.find(kPlaceholder, first + 1) != std::string::npos) {
        throw Error(ErrorCode::SchemaError, "block_pattern '" + block_pattern + "' needs exactly one {i}");
    }
    if (n_blocks < 0) throw Error(ErrorCode::SchemaError, "n_blocks must be non-negative");
    if (split_index && (*split_index < 0 || *split_index > n_blocks)) {
        throw Error(ErrorCode::SchemaError,
                    "split_index " + std::to_string(*split_index) + " outside [0, " + std::to_string(n_blocks) + "]");
    }
    for (const auto& p : embedding_patterns) {
        if (p.empty()) throw Error(ErrorCode::SchemaError, "empty embedding pattern");
    }
}

std::optional<long long> ModelTopology::block_index(std::string_view key) const {
    const auto pos = block_pattern.find(kPlaceholder);
    if (pos == std::string::npos) return std::nullopt;
    const std::string_view prefix(block_pattern.data(), pos);
    const std::string_view suffix = std::string_view(block_pattern).substr(pos + kPlaceholder.size());
    if (!key.starts_with(prefix)) return std::nullopt;
    std::size_t i = prefix.size();
    const std::size_t digits_begin = i;
    while (i < key.size() && key[i] >= '0' && key[i] <= '9') ++i;
    if (i == digits_begin || i - digits_begin > 18) return std::nullopt;
    if (!key.substr(i).starts_with(suffix)) return std::nullopt;
    return std::stoll(std::string(key.substr(digits_begin, i - digits_begin)));
}

bool ModelTopology::is_embedding(std::string_view key) const {
    for (const auto& p : embedding_patterns) {
        if (key.starts_with(p)) return true;
    }
    return false;
}

ModelTopology ModelTopology::with_blocks(int n_blocks) {
    ModelTopology t;
    t.n_blocks = n_blocks;
    return t;
}

LayerClass classify_layer(std::string_view key, const ModelTopology& topology) {
    const auto index = topology.block_index(key);
    const bool embedding = topology.is_embedding(key);
    if (embedding && index) {
        throw Error(ErrorCode::TopologyMismatch,
                    "key '" + std::string(key) + "' matches both an embedding pattern and the block pattern");
    }
    if (embedding) return LayerClass::TextEmbedding;
    if (!index) return LayerClass::Other;
    if (*index >= topology.n_blocks) {
        throw Error(ErrorCode::BlockIndexOutOfRange, "key '" + std::string(key) + "' has block index " +
                                                         std::to_string(*index) + " >= n_blocks " +
                                                         std::to_string(topology.n_blocks));
    }
    return *index < topology.split() ? LayerClass::EarlyBlock : LayerClass::LateBlock;
}

} // namespace stylevec
