#pragma once

// Hand-crafted container files that a reader must reject, each paired with
// the error class it must raise.

#include <cstdint>
#include <string>
#include <vector>

#include "stylevec/error.hpp"

namespace corpus {

struct Case {
    std::string name;
    std::string bytes;
    stylevec::ErrorCode expected;
};

inline std::string u64le(std::uint64_t n) {
    std::string s(8, '\0');
    for (int i = 0; i < 8; ++i) s[i] = static_cast<char>((n >> (8 * i)) & 0xff);
    return s;
}

inline std::string container(const std::string& header, std::size_t data_bytes) {
    return u64le(header.size()) + header + std::string(data_bytes, '\x01');
}

inline std::vector<Case> malformed() {
    using stylevec::ErrorCode;
    const auto M = ErrorCode::MalformedHeader;
    const auto U = ErrorCode::UnsupportedDtype;
    const std::string ok_entry = R"("w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]})";
    return {
        {"shorter than the length prefix", std::string("\x04\x00\x00", 3), M},
        {"length prefix larger than file", u64le(4096) + "{}", M},
        {"length prefix near 2^64", u64le(~0ull - 3) + "{}", M},
        {"invalid JSON", container(R"({"w":{"dtype":"F32",)", 8), M},
        {"top-level array", container("[1,2]", 0), M},
        {"offsets past end of buffer", container(R"({"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})", 4), M},
        {"overlapping ranges",
         container(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}})",
                   12),
         M},
        {"range size disagrees with shape", container(R"({"w":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})", 8),
         M},
        {"begin after end", container(R"({"w":{"dtype":"F32","shape":[0],"data_offsets":[8,0]}})", 8), M},
        {"unsupported dtype F64", container(R"({"w":{"dtype":"F64","shape":[1],"data_offsets":[0,8]}})", 8), U},
        {"unsupported dtype I8", container(R"({"w":{"dtype":"I8","shape":[8],"data_offsets":[0,8]}})", 8), U},
        {"duplicate tensor name", container("{" + ok_entry + "," + ok_entry + "}", 8), M},
        {"missing data_offsets", container(R"({"w":{"dtype":"F32","shape":[2]}})", 8), M},
        {"negative dimension", container(R"({"w":{"dtype":"F32","shape":[-2],"data_offsets":[0,8]}})", 8), M},
        {"non-string metadata value", container(R"({"__metadata__":{"k":3},)" + ok_entry + "}", 8), M},
        {"unknown entry field", container(R"({"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8],"x":1}})", 8), M},
        {"control character in key", container("{\"w\\u0001\":{\"dtype\":\"F32\",\"shape\":[2],\"data_offsets\":[0,8]}}", 8),
         M},
        {"empty key", container(R"({"":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})", 8), M},
    };
}

} // namespace corpus
