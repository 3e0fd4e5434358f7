#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stylevec/tensor.hpp"

namespace stylevec {

using TensorKey = std::string;
using Metadata = std::map<std::string, std::string>;

/// Named tensors plus string metadata. std::map keeps entries in byte-wise
/// lexicographic key order, which is also the on-disk packing order.
struct Checkpoint {
    std::map<TensorKey, Tensor> entries;
    Metadata metadata;

    std::size_t parameter_count() const;
    bool contains(std::string_view key) const { return entries.find(std::string(key)) != entries.end(); }
    const Tensor& at(std::string_view key) const;
    std::vector<TensorKey> keys() const;

    /// Keys, dtypes, shapes, raw bytes and metadata all equal.
    bool bit_equal(const Checkpoint& other) const;
};

/// Throws MalformedHeader for empty keys, control characters or the reserved
/// "__metadata__" name.
void validate_tensor_key(std::string_view key);

// ---------------------------------------------------------------------------
// safetensors container
//
//   u64 little-endian N | N bytes UTF-8 JSON header | raw tensor bytes
//
// The header maps tensor names to {"dtype", "shape", "data_offsets"} with
// offsets relative to the start of the data section, plus an optional
// "__metadata__" object of string values.

struct HeaderEntry {
    TensorKey key;
    Dtype dtype;
    Shape shape;
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
};

struct HeaderViolation {
    std::string kind; // "overlap" | "gap" | "misorder" | "out_of_bounds" | "size_mismatch"
    std::vector<TensorKey> keys;
    std::string detail;
};

struct HeaderReport {
    std::uint64_t header_size = 0;
    std::optional<std::uint64_t> data_size; // known when the file size is known
    std::vector<HeaderEntry> entries;       // in key order
    Metadata metadata;
    std::vector<HeaderViolation> violations;

    std::size_t tensor_count() const { return entries.size(); }
    /// Violations that make the tensor data unreadable (everything but gap/misorder).
    bool readable() const;
};

/// Parses and checks the header in `prefix` (which must hold at least the
/// length prefix and the JSON header). `file_size` enables bounds checks.
HeaderReport validate_header(std::span<const std::byte> prefix,
                             std::optional<std::uint64_t> file_size = std::nullopt);

/// Reads only the header of a file on disk.
HeaderReport validate_file(const std::filesystem::path& path);

Checkpoint parse_checkpoint(std::span<const std::byte> file_bytes);
std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt);

Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

} // namespace stylevec
