#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sqlpair/error.hpp"

namespace sqlpair::detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline json parse_json(std::string_view text, const std::string& what) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw DocumentError("", what + " is not valid JSON (byte " + std::to_string(e.byte) + ")");
    }
}

inline void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw DocumentError(path, "expected an object");
}

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (auto a : allowed) known = known || it.key() == a;
        if (!known) throw DocumentError(path, "unknown field '" + it.key() + "'");
    }
}

inline const json& require_field(const json& j, const std::string& path, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw DocumentError(path, std::string("missing field '") + key + "'");
    return *it;
}

inline std::string require_string(const json& j, const std::string& path, const char* key) {
    const auto& v = require_field(j, path, key);
    if (!v.is_string()) throw DocumentError(path + "." + key, "expected a string");
    return v.get<std::string>();
}

inline std::string field_path(const std::string& base, std::string_view key) {
    return base.empty() ? std::string(key) : base + "." + std::string(key);
}

inline std::string index_path(const std::string& base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
}

}  // namespace sqlpair::detail
