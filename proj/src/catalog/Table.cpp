#include "wasmql/catalog/Table.hpp"

#include "wasmql/util/error.hpp"
#include <cctype>
#include <cstring>
#include <set>


using namespace wasmql;


bool wasmql::is_identifier(std::string_view name)
{
    if (name.empty()) return false;
    if (not (std::isalpha(static_cast<unsigned char>(name[0])) or name[0] == '_')) return false;
    for (char c : name)
        if (not (std::isalnum(static_cast<unsigned char>(c)) or c == '_')) return false;
    return true;
}


/*======================================================================================================================
 * TableSchema
 *====================================================================================================================*/

void TableSchema::check() const
{
    if (not is_identifier(name))
        throw CatalogError("invalid table name '" + name + "'");
    if (columns.empty())
        throw CatalogError("table '" + name + "' has no columns");
    std::set<std::string_view> seen;
    for (auto &c : columns) {
        if (not is_identifier(c.name))
            throw CatalogError("invalid column name '" + c.name + "' in table '" + name + "'");
        if (not seen.insert(c.name).second)
            throw CatalogError("duplicate column '" + c.name + "' in table '" + name + "'");
    }
}

std::optional<std::size_t> TableSchema::find(std::string_view column) const
{
    for (std::size_t i = 0; i != columns.size(); ++i)
        if (columns[i].name == column) return i;
    return std::nullopt;
}

std::size_t TableSchema::row_width() const
{
    std::size_t w = 0;
    for (auto &c : columns) w += c.type.width();
    return w;
}

std::string TableSchema::to_string() const
{
    std::string s = name + "(";
    for (std::size_t i = 0; i != columns.size(); ++i) {
        if (i) s += ", ";
        if (not columns[i].qualifier.empty()) s += columns[i].qualifier + ".";
        s += columns[i].name + " " + columns[i].type.to_string();
    }
    return s + ")";
}


/*======================================================================================================================
 * Value encoding
 *====================================================================================================================*/

void wasmql::encode_value(const Value &v, DataType type, std::byte *out)
{
    if (not holds_type(v, type))
        throw CatalogError("value '" + to_string(v) + "' does not match type " + type.to_string());
    switch (type.kind) {
        case DataType::INT32: {
            auto x = std::get<std::int32_t>(v);
            std::memcpy(out, &x, 4);
            break;
        }
        case DataType::INT64: {
            auto x = std::get<std::int64_t>(v);
            std::memcpy(out, &x, 8);
            break;
        }
        case DataType::FLOAT64: {
            auto x = std::get<double>(v);
            std::memcpy(out, &x, 8);
            break;
        }
        case DataType::BOOL:
            out[0] = std::byte(std::get<bool>(v) ? 1 : 0);
            break;
        case DataType::CHAR: {
            auto &s = std::get<std::string>(v);
            if (s.size() > type.length)
                throw CatalogError("value '" + s + "' exceeds " + type.to_string());
            std::memset(out, 0, type.length);
            std::memcpy(out, s.data(), s.size());
            break;
        }
    }
}

Value wasmql::decode_value(const std::byte *in, DataType type)
{
    switch (type.kind) {
        case DataType::INT32: {
            std::int32_t x;
            std::memcpy(&x, in, 4);
            return x;
        }
        case DataType::INT64: {
            std::int64_t x;
            std::memcpy(&x, in, 8);
            return x;
        }
        case DataType::FLOAT64: {
            double x;
            std::memcpy(&x, in, 8);
            return x;
        }
        case DataType::BOOL:
            return in[0] != std::byte(0);
        case DataType::CHAR: {
            std::size_t n = type.length;
            while (n and in[n - 1] == std::byte(0)) --n;
            return std::string(reinterpret_cast<const char*>(in), n);
        }
    }
    return std::int32_t(0);
}


/*======================================================================================================================
 * ColumnBuffer / Table
 *====================================================================================================================*/

std::byte * ColumnBuffer::grow(std::size_t n)
{
    std::size_t old = size_;
    size_ += n;
    words_.resize((size_ + 7) / 8, 0);
    return data() + old;
}

Table::Table(TableSchema schema)
    : schema_(std::move(schema))
    , columns_(schema_.columns.size())
{ }

Value Table::get(std::size_t col, std::size_t row) const
{
    return decode_value(value_ptr(col, row), schema_.columns.at(col).type);
}

std::vector<Value> Table::row(std::size_t row) const
{
    std::vector<Value> r;
    r.reserve(num_columns());
    for (std::size_t c = 0; c != num_columns(); ++c)
        r.push_back(get(c, row));
    return r;
}

void Table::append_row(std::span<const Value> values)
{
    if (values.size() != num_columns())
        throw CatalogError("expected " + std::to_string(num_columns()) + " values, got " +
                           std::to_string(values.size()));
    /* Validate all values before mutating any column. */
    for (std::size_t c = 0; c != values.size(); ++c) {
        auto type = schema_.columns[c].type;
        if (not holds_type(values[c], type))
            throw CatalogError("value '" + to_string(values[c]) + "' does not match type " + type.to_string() +
                               " of column '" + schema_.columns[c].name + "'");
        if (type.is_char() and std::get<std::string>(values[c]).size() > type.length)
            throw CatalogError("value '" + std::get<std::string>(values[c]) + "' exceeds " + type.to_string());
    }
    for (std::size_t c = 0; c != values.size(); ++c) {
        auto type = schema_.columns[c].type;
        encode_value(values[c], type, columns_[c].grow(type.width()));
    }
    ++num_rows_;
}

void Table::append_raw(std::span<const std::byte *const> values)
{
    if (values.size() != num_columns())
        throw CatalogError("expected " + std::to_string(num_columns()) + " values, got " +
                           std::to_string(values.size()));
    for (std::size_t c = 0; c != values.size(); ++c) {
        auto w = schema_.columns[c].type.width();
        std::memcpy(columns_[c].grow(w), values[c], w);
    }
    ++num_rows_;
}

void Table::reserve(std::size_t rows)
{
    for (std::size_t c = 0; c != columns_.size(); ++c)
        columns_[c].reserve(rows * schema_.columns[c].type.width());
}

void Table::clear()
{
    for (auto &col : columns_) col.clear();
    num_rows_ = 0;
}
