#include "wasmql/catalog/DataType.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>


using namespace wasmql;


DataType DataType::Char(std::size_t n)
{
    if (n < 1 or n > MAX_CHAR_LENGTH)
        throw TypeError("CHAR length must be in [1, 256], got " + std::to_string(n));
    return { CHAR, static_cast<std::uint16_t>(n) };
}

std::string DataType::to_string() const
{
    switch (kind) {
        case INT32:   return "INT32";
        case INT64:   return "INT64";
        case FLOAT64: return "FLOAT64";
        case BOOL:    return "BOOL";
        case CHAR:    return "CHAR(" + std::to_string(length) + ")";
    }
    return "?";
}

DataType DataType::parse(std::string_view text)
{
    std::string upper(text);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "INT32" or upper == "INT") return Int32();
    if (upper == "INT64" or upper == "BIGINT") return Int64();
    if (upper == "FLOAT64" or upper == "DOUBLE") return Float64();
    if (upper == "BOOL" or upper == "BOOLEAN") return Bool();
    if (upper.starts_with("CHAR(") and upper.ends_with(")")) {
        std::string_view digits(upper.data() + 5, upper.size() - 6);
        std::size_t n = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
        if (ec == std::errc() and ptr == digits.data() + digits.size())
            return Char(n);
    }
    throw TypeError("unknown type '" + std::string(text) + "'");
}

std::string wasmql::to_string(const Value &v)
{
    struct {
        std::string operator()(std::int32_t i) const { return std::to_string(i); }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(const std::string &s) const { return s; }
        std::string operator()(double d) const {
            if (std::isnan(d)) return "nan";
            if (std::isinf(d)) return d < 0 ? "-inf" : "inf";
            char buf[64];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
            return std::string(buf, ptr);
        }
    } visitor;
    return std::visit(visitor, v);
}

Value wasmql::default_value(DataType type)
{
    switch (type.kind) {
        case DataType::INT32:   return std::int32_t(0);
        case DataType::INT64:   return std::int64_t(0);
        case DataType::FLOAT64: return 0.0;
        case DataType::BOOL:    return false;
        case DataType::CHAR:    return std::string();
    }
    return std::int32_t(0);
}

bool wasmql::holds_type(const Value &v, DataType type)
{
    switch (type.kind) {
        case DataType::INT32:   return std::holds_alternative<std::int32_t>(v);
        case DataType::INT64:   return std::holds_alternative<std::int64_t>(v);
        case DataType::FLOAT64: return std::holds_alternative<double>(v);
        case DataType::BOOL:    return std::holds_alternative<bool>(v);
        case DataType::CHAR:    return std::holds_alternative<std::string>(v);
    }
    return false;
}
