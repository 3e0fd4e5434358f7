#include "stylevec/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

#include "stylevec/error.hpp"

namespace stylevec {

using nlohmann::json;

namespace {

constexpr std::string_view kMetadataKey = "__metadata__";

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedHeader, what); }

std::uint64_t read_u64_le(std::span<const std::byte> bytes) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint64_t>(bytes[static_cast<std::size_t>(i)]);
    return v;
}

void append_u64_le(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

json parse_header_json(std::string_view text) {
    // nlohmann keeps the last of duplicated object keys; duplicates are
    // rejected here instead.
    std::vector<std::set<std::string>> seen;
    bool duplicate = false;
    std::string duplicate_key;
    json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
        switch (event) {
        case json::parse_event_t::object_start:
            seen.emplace_back();
            break;
        case json::parse_event_t::object_end:
            if (!seen.empty()) seen.pop_back();
            break;
        case json::parse_event_t::key:
            if (!seen.empty() && !seen.back().insert(parsed.get<std::string>()).second) {
                duplicate = true;
                duplicate_key = parsed.get<std::string>();
            }
            break;
        default:
            break;
        }
        return true;
    };
    json doc;
    try {
        doc = json::parse(text.begin(), text.end(), cb);
    } catch (const json::exception& e) {
        malformed(std::string("invalid header JSON: ") + e.what());
    }
    if (duplicate) malformed("duplicate key '" + duplicate_key + "' in header");
    if (!doc.is_object()) malformed("header JSON is not an object");
    return doc;
}

std::uint64_t as_u64(const json& v, const std::string& what) {
    if (!v.is_number_unsigned()) malformed(what + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

HeaderEntry parse_entry(const std::string& key, const json& v) {
    validate_tensor_key(key);
    if (!v.is_object()) malformed("entry '" + key + "' is not an object");
    for (const auto& [field, _] : v.items()) {
        if (field != "dtype" && field != "shape" && field != "data_offsets") {
            malformed("entry '" + key + "' has unknown field '" + field + "'");
        }
    }
    if (!v.contains("dtype") || !v.contains("shape") || !v.contains("data_offsets")) {
        malformed("entry '" + key + "' needs dtype, shape and data_offsets");
    }
    const auto& dt = v.at("dtype");
    if (!dt.is_string()) malformed("entry '" + key + "' dtype is not a string");
    const auto dtype = parse_dtype(dt.get<std::string>());
    if (!dtype) {
        throw Error(ErrorCode::UnsupportedDtype, "entry '" + key + "' has dtype " + dt.get<std::string>());
    }

    HeaderEntry entry{key, *dtype, {}, 0, 0};
    const auto& shape = v.at("shape");
    if (!shape.is_array()) malformed("entry '" + key + "' shape is not an array");
    for (const auto& d : shape) {
        const auto dim = as_u64(d, "shape dimension of '" + key + "'");
        if (dim > static_cast<std::uint64_t>(INT64_MAX)) malformed("shape dimension overflow in '" + key + "'");
        entry.shape.push_back(static_cast<std::int64_t>(dim));
    }
    const auto& offsets = v.at("data_offsets");
    if (!offsets.is_array() || offsets.size() != 2) malformed("entry '" + key + "' data_offsets must be [begin, end]");
    entry.begin = as_u64(offsets[0], "data_offsets of '" + key + "'");
    entry.end = as_u64(offsets[1], "data_offsets of '" + key + "'");
    if (entry.begin > entry.end) malformed("entry '" + key + "' has begin > end");
    return entry;
}

bool expected_byte_size(const HeaderEntry& e, std::uint64_t& out) {
    std::uint64_t n = byte_width(e.dtype);
    for (auto d : e.shape) {
        if (__builtin_mul_overflow(n, static_cast<std::uint64_t>(d), &n)) return false;
    }
    out = n;
    return true;
}

void find_violations(HeaderReport& report) {
    auto& v = report.violations;
    for (const auto& e : report.entries) {
        std::uint64_t expected = 0;
        if (!expected_byte_size(e, expected) || expected != e.end - e.begin) {
            v.push_back({"size_mismatch", {e.key},
                         "range holds " + std::to_string(e.end - e.begin) + " bytes, shape needs " +
                             (expected_byte_size(e, expected) ? std::to_string(expected) : std::string("overflow"))});
        }
        if (report.data_size && e.end > *report.data_size) {
            v.push_back({"out_of_bounds", {e.key},
                         "end " + std::to_string(e.end) + " past data size " + std::to_string(*report.data_size)});
        }
    }

    std::vector<const HeaderEntry*> by_offset;
    for (const auto& e : report.entries) by_offset.push_back(&e);
    std::stable_sort(by_offset.begin(), by_offset.end(), [](const HeaderEntry* a, const HeaderEntry* b) {
        return a->begin != b->begin ? a->begin < b->begin : a->end < b->end;
    });

    // overlap: compare each non-empty range against the furthest-reaching one seen so far
    const HeaderEntry* reach = nullptr;
    std::uint64_t cursor = 0;
    for (const auto* e : by_offset) {
        if (e->begin == e->end) continue;
        if (reach && e->begin < reach->end) {
            v.push_back({"overlap", {reach->key, e->key},
                         "[" + std::to_string(e->begin) + ", " + std::to_string(e->end) + ") intersects [" +
                             std::to_string(reach->begin) + ", " + std::to_string(reach->end) + ")"});
        } else if (e->begin > cursor) {
            v.push_back({"gap", {e->key},
                         std::to_string(e->begin - cursor) + " unused bytes before offset " +
                             std::to_string(e->begin)});
        }
        if (!reach || e->end > reach->end) reach = e;
        cursor = std::max(cursor, e->end);
    }
    if (report.data_size && cursor < *report.data_size) {
        v.push_back({"gap", {}, std::to_string(*report.data_size - cursor) + " unused trailing bytes"});
    }

    // canonical files pack tensors in key order
    std::uint64_t last_begin = 0;
    const HeaderEntry* last = nullptr;
    for (const auto& e : report.entries) {
        if (e.begin == e.end) continue;
        if (last && e.begin < last_begin) {
            v.push_back({"misorder", {last->key, e.key}, "data order differs from key order"});
        }
        last_begin = e.begin;
        last = &e;
    }
}

} // namespace

std::size_t Checkpoint::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries) n += t.numel();
    return n;
}

const Tensor& Checkpoint::at(std::string_view key) const {
    auto it = entries.find(std::string(key));
    if (it == entries.end()) throw Error(ErrorCode::KeyNotFound, "no tensor named '" + std::string(key) + "'");
    return it->second;
}

std::vector<TensorKey> Checkpoint::keys() const {
    std::vector<TensorKey> out;
    out.reserve(entries.size());
    for (const auto& [k, _] : entries) out.push_back(k);
    return out;
}

bool Checkpoint::bit_equal(const Checkpoint& other) const {
    if (metadata != other.metadata || entries.size() != other.entries.size()) return false;
    auto it = other.entries.begin();
    for (const auto& [k, t] : entries) {
        if (k != it->first || !t.bit_equal(it->second)) return false;
        ++it;
    }
    return true;
}

void validate_tensor_key(std::string_view key) {
    if (key.empty()) malformed("empty tensor key");
    if (key == kMetadataKey) malformed("tensor key '__metadata__' is reserved");
    for (unsigned char c : key) {
        if (c < 0x20 || c == 0x7f) malformed("tensor key contains a control character");
    }
}

bool HeaderReport::readable() const {
    return std::none_of(violations.begin(), violations.end(),
                        [](const HeaderViolation& v) { return v.kind != "gap" && v.kind != "misorder"; });
}

HeaderReport validate_header(std::span<const std::byte> prefix, std::optional<std::uint64_t> file_size) {
    if (prefix.size() < 8) malformed("file shorter than the 8-byte length prefix");
    HeaderReport report;
    report.header_size = read_u64_le(prefix.first(8));
    if (file_size) {
        if (report.header_size > *file_size - 8) {
            malformed("declared header length " + std::to_string(report.header_size) + " exceeds file size " +
                      std::to_string(*file_size));
        }
        report.data_size = *file_size - 8 - report.header_size;
    }
    if (report.header_size > prefix.size() - 8) {
        malformed("declared header length " + std::to_string(report.header_size) + " exceeds available bytes");
    }
    const auto* text = reinterpret_cast<const char*>(prefix.data() + 8);
    const auto doc = parse_header_json(std::string_view(text, report.header_size));

    for (const auto& [key, value] : doc.items()) {
        if (key == kMetadataKey) {
            if (!value.is_object()) malformed("__metadata__ is not an object");
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) malformed("metadata value for '" + mk + "' is not a string");
                report.metadata.emplace(mk, mv.get<std::string>());
            }
            continue;
        }
        report.entries.push_back(parse_entry(key, value));
    }
    // nlohmann object iteration is already key-sorted
    find_violations(report);
    return report;
}

HeaderReport validate_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot stat '" + path.string() + "': " + ec.message());
    if (size < 8) malformed("file shorter than the 8-byte length prefix");
    std::vector<std::byte> head(8);
    in.read(reinterpret_cast<char*>(head.data()), 8);
    const auto n = read_u64_le(head);
    if (n > size - 8) {
        malformed("declared header length " + std::to_string(n) + " exceeds file size " + std::to_string(size));
    }
    head.resize(8 + n);
    in.read(reinterpret_cast<char*>(head.data() + 8), static_cast<std::streamsize>(n));
    if (!in) throw Error(ErrorCode::IoError, "short read on '" + path.string() + "'");
    return validate_header(head, size);
}

Checkpoint parse_checkpoint(std::span<const std::byte> file_bytes) {
    const auto report = validate_header(file_bytes, file_bytes.size());
    for (const auto& v : report.violations) {
        if (v.kind == "gap" || v.kind == "misorder") continue;
        std::string keys;
        for (const auto& k : v.keys) keys += (keys.empty() ? "" : ", ") + k;
        malformed(v.kind + " (" + keys + "): " + v.detail);
    }
    const auto data = file_bytes.subspan(8 + report.header_size);
    Checkpoint ckpt;
    ckpt.metadata = report.metadata;
    for (const auto& e : report.entries) {
        const auto range = data.subspan(e.begin, e.end - e.begin);
        ckpt.entries.emplace(e.key, Tensor(e.dtype, e.shape, std::vector<std::byte>(range.begin(), range.end())));
    }
    return ckpt;
}

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt) {
    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& [key, t] : ckpt.entries) {
        validate_tensor_key(key);
        const auto size = static_cast<std::uint64_t>(t.bytes().size());
        header[key] = {{"dtype", dtype_name(t.dtype())}, {"shape", t.shape()}, {"data_offsets", {offset, offset + size}}};
        offset += size;
    }
    if (!ckpt.metadata.empty()) header[std::string(kMetadataKey)] = ckpt.metadata;

    std::string text = header.dump();
    text.append((8 - text.size() % 8) % 8, ' ');

    std::vector<std::byte> out;
    out.reserve(8 + text.size() + offset);
    append_u64_le(out, text.size());
    for (char c : text) out.push_back(static_cast<std::byte>(c));
    for (const auto& [_, t] : ckpt.entries) out.insert(out.end(), t.bytes().begin(), t.bytes().end());
    return out;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot read '" + path.string() + "': " + ec.message());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");

    // check the declared header length before committing to a full-file buffer
    std::vector<std::byte> bytes(std::min<std::uintmax_t>(size, 8));
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (size < 8) malformed("file shorter than the 8-byte length prefix");
    if (read_u64_le(bytes) > size - 8) {
        malformed("declared header length " + std::to_string(read_u64_le(bytes)) + " exceeds file size " +
                  std::to_string(size));
    }
    bytes.resize(size);
    in.read(reinterpret_cast<char*>(bytes.data() + 8), static_cast<std::streamsize>(size - 8));
    if (!in) throw Error(ErrorCode::IoError, "short read on '" + path.string() + "'");
    return parse_checkpoint(bytes);
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::IoError, "write failed on '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot move output into '" + path.string() + "': " + ec.message());
}

} // namespace stylevec
