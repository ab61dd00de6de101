#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ledgerstack {

using Byte = std::uint8_t;
using Bytes = std::vector<Byte>;
using ByteView = std::span<const Byte>;

/// Amounts are always integer minor units (cents, pence...).
using Minor = std::int64_t;

using Json = nlohmann::json;

[[nodiscard]] inline ByteView as_bytes(std::string_view s) noexcept {
    return {reinterpret_cast<const Byte*>(s.data()), s.size()};
}

[[nodiscard]] inline Bytes to_bytes(std::string_view s) {
    auto v = as_bytes(s);
    return {v.begin(), v.end()};
}

/// Lowercase hex, two characters per byte.
[[nodiscard]] std::string to_hex(ByteView data);

/// Accepts upper or lower case; throws Error(BadHex) on odd length or a
/// non-hex character.
[[nodiscard]] Bytes from_hex(std::string_view hex);

void put_u64_be(Bytes& out, std::uint64_t v);
void put_u32_be(Bytes& out, std::uint32_t v);
[[nodiscard]] std::uint64_t get_u64_be(ByteView in, std::size_t offset);
[[nodiscard]] std::uint32_t get_u32_be(ByteView in, std::size_t offset);

inline void append(Bytes& out, ByteView data) { out.insert(out.end(), data.begin(), data.end()); }

/// Key-sorted, minimal-whitespace UTF-8 JSON. nlohmann's default object type
/// is an ordered std::map, so dump() without indentation is already canonical.
[[nodiscard]] std::string canonical_json(const Json& value);

} // namespace ledgerstack
