#include "sqlpair/value.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace sqlpair {

bool is_number(const Value& v) {
    return std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v);
}

double as_double(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
    return 0.0;
}

bool is_iso_timestamp(std::string_view s) {
    // YYYY-MM-DDTHH:MM:SS
    if (s.size() != 19) return false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        switch (i) {
            case 4:
            case 7:
                if (c != '-') return false;
                break;
            case 10:
                if (c != 'T') return false;
                break;
            case 13:
            case 16:
                if (c != ':') return false;
                break;
            default:
                if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        }
    }
    const int month = (s[5] - '0') * 10 + (s[6] - '0');
    const int day = (s[8] - '0') * 10 + (s[9] - '0');
    const int hour = (s[11] - '0') * 10 + (s[12] - '0');
    const int minute = (s[14] - '0') * 10 + (s[15] - '0');
    const int second = (s[17] - '0') * 10 + (s[18] - '0');
    return month >= 1 && month <= 12 && day >= 1 && day <= 31 && hour < 24 && minute < 60 && second < 60;
}

bool value_matches_type(const Value& v, const Column& column) {
    switch (column.data_type) {
        case DataType::Boolean:
            return std::holds_alternative<bool>(v);
        case DataType::Int:
            return std::holds_alternative<std::int64_t>(v);
        case DataType::Float:
        case DataType::Double:
        case DataType::Decimal:
            return is_number(v) && std::isfinite(as_double(v));
        case DataType::Text:
            return std::holds_alternative<std::string>(v);
        case DataType::Timestamp:
            return std::holds_alternative<std::string>(v) && is_iso_timestamp(std::get<std::string>(v));
        case DataType::Enum: {
            const auto* s = std::get_if<std::string>(&v);
            if (!s) return false;
            for (const auto& e : column.enum_values)
                if (e == *s) return true;
            return false;
        }
    }
    return false;
}

std::string format_double(double d) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), d);
    std::string out(buf.data(), ptr);
    // Keep a decimal point so the lexeme reads back as a double.
    if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
    return out;
}

std::string value_to_text(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) return "NULL";
            else if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
            else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
            else if constexpr (std::is_same_v<T, double>) return format_double(x);
            else return x;
        },
        v);
}

namespace {

int rank(const Value& v) {
    if (is_null(v)) return 0;
    if (std::holds_alternative<bool>(v)) return 1;
    if (is_number(v)) return 2;
    return 3;
}

}  // namespace

std::strong_ordering compare_values(const Value& a, const Value& b) {
    const int ra = rank(a), rb = rank(b);
    if (ra != rb) return ra <=> rb;
    switch (ra) {
        case 0:
            return std::strong_ordering::equal;
        case 1:
            return std::get<bool>(a) <=> std::get<bool>(b);
        case 2: {
            if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b))
                return std::get<std::int64_t>(a) <=> std::get<std::int64_t>(b);
            const double x = as_double(a), y = as_double(b);
            if (x < y) return std::strong_ordering::less;
            if (x > y) return std::strong_ordering::greater;
            return std::strong_ordering::equal;
        }
        default:
            return std::get<std::string>(a).compare(std::get<std::string>(b)) <=> 0;
    }
}

bool values_equal(const Value& a, const Value& b) { return compare_values(a, b) == std::strong_ordering::equal; }

}  // namespace sqlpair
