#pragma once

#include <string>
#include <string_view>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/error.hpp"

namespace ledgerstack {

/// Required field of a JSON object; throws Error(ParseError) naming the key
/// when it is absent or of the wrong type.
template <class T>
[[nodiscard]] T field(const Json& j, std::string_view key) {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "expected an object holding '" + std::string(key) + "'");
    auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorCode::ParseError, "missing field '" + std::string(key) + "'");
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::ParseError, "field '" + std::string(key) + "' has the wrong type");
    }
}

template <class T>
[[nodiscard]] T field_or(const Json& j, std::string_view key, T fallback) {
    if (!j.is_object()) return fallback;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::ParseError, "field '" + std::string(key) + "' has the wrong type");
    }
}

} // namespace ledgerstack
