#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>


namespace wasmql {

/** A fixed-width, null-free SQL type. */
struct DataType
{
    enum Kind : std::uint8_t { INT32, INT64, FLOAT64, BOOL, CHAR };

    static constexpr std::size_t MAX_CHAR_LENGTH = 256;

    Kind kind = INT32;
    std::uint16_t length = 0; ///< number of bytes of a `CHAR(n)`; 0 for all other kinds

    static constexpr DataType Int32() { return { INT32, 0 }; }
    static constexpr DataType Int64() { return { INT64, 0 }; }
    static constexpr DataType Float64() { return { FLOAT64, 0 }; }
    static constexpr DataType Bool() { return { BOOL, 0 }; }
    /** Throws `TypeError` unless `1 <= n <= 256`. */
    static DataType Char(std::size_t n);

    /** Width in bytes of one value. */
    constexpr std::size_t width() const {
        switch (kind) {
            case INT32:   return 4;
            case INT64:   return 8;
            case FLOAT64: return 8;
            case BOOL:    return 1;
            case CHAR:    return length;
        }
        return 0;
    }
    /** Alignment of a value in a tuple or column. */
    constexpr std::size_t alignment() const { return kind == CHAR ? 1 : width(); }

    constexpr bool is_integral() const { return kind == INT32 or kind == INT64; }
    constexpr bool is_numeric() const { return is_integral() or kind == FLOAT64; }
    constexpr bool is_char() const { return kind == CHAR; }
    constexpr bool is_bool() const { return kind == BOOL; }

    std::string to_string() const;
    /** Parses `INT32`, `INT64`, `FLOAT64`, `BOOL`, or `CHAR(n)` (case-insensitive). */
    static DataType parse(std::string_view text);

    friend constexpr bool operator==(DataType, DataType) = default;
};

/** A single SQL value.  `CHAR(n)` values are held as strings without their zero padding; bytewise comparison of the
 * padded representation is equivalent to `std::string` comparison of the unpadded one. */
using Value = std::variant<std::int32_t, std::int64_t, double, bool, std::string>;

/** Renders `v` for display and CSV output; floats use the shortest round-trip representation. */
std::string to_string(const Value &v);

/** Returns the zero value of `type`. */
Value default_value(DataType type);

/** Returns whether `v` holds the alternative that represents values of `type`. */
bool holds_type(const Value &v, DataType type);

}
