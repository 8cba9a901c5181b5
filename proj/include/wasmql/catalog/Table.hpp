#pragma once

#include "wasmql/catalog/DataType.hpp"
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>


namespace wasmql {

/** A named, typed column.  The `qualifier` names the relation a column belongs to; it is empty in base table schemas
 * (where the table name acts as qualifier) and set in the schemas of intermediate and final results. */
struct Column
{
    std::string name;
    DataType type;
    std::string qualifier;

    friend bool operator==(const Column&, const Column&) = default;
};

struct TableSchema
{
    std::string name;
    std::vector<Column> columns;

    /** Throws `CatalogError` if the schema has no columns, an invalid identifier, or duplicate column names. */
    void check() const;

    std::optional<std::size_t> find(std::string_view column) const;
    std::size_t num_columns() const { return columns.size(); }
    /** Sum of all column widths. */
    std::size_t row_width() const;

    std::string to_string() const;

    friend bool operator==(const TableSchema&, const TableSchema&) = default;
};

bool is_identifier(std::string_view name);

/** A contiguous, 8-byte aligned byte buffer holding one column's fixed-width values. */
class ColumnBuffer
{
    std::vector<std::uint64_t> words_;
    std::size_t size_ = 0;

    public:
    std::size_t size() const { return size_; }
    const std::byte * data() const { return reinterpret_cast<const std::byte*>(words_.data()); }
    std::byte * data() { return reinterpret_cast<std::byte*>(words_.data()); }
    std::span<const std::byte> bytes() const { return { data(), size_ }; }

    void reserve(std::size_t bytes) { words_.reserve((bytes + 7) / 8); }
    /** Appends `n` zero bytes and returns a pointer to them. */
    std::byte * grow(std::size_t n);
    void clear() { words_.clear(); size_ = 0; }

    friend bool operator==(const ColumnBuffer &a, const ColumnBuffer &b) {
        return a.size_ == b.size_ and a.words_ == b.words_;
    }
};

/** A columnar, memory-resident relation without NULLs. */
class Table
{
    TableSchema schema_;
    std::size_t num_rows_ = 0;
    std::vector<ColumnBuffer> columns_;

    public:
    explicit Table(TableSchema schema);

    const TableSchema & schema() const { return schema_; }
    const std::string & name() const { return schema_.name; }
    std::size_t num_rows() const { return num_rows_; }
    std::size_t num_columns() const { return columns_.size(); }

    std::span<const std::byte> column_bytes(std::size_t col) const { return columns_.at(col).bytes(); }
    const std::byte * value_ptr(std::size_t col, std::size_t row) const {
        return columns_[col].data() + row * schema_.columns[col].type.width();
    }

    Value get(std::size_t col, std::size_t row) const;
    std::vector<Value> row(std::size_t row) const;

    /** Appends one row.  Throws `CatalogError` on arity or type mismatch or CHAR overflow. */
    void append_row(std::span<const Value> values);
    /** Appends one row given as raw, fixed-width bytes per column. */
    void append_raw(std::span<const std::byte *const> values);
    void reserve(std::size_t rows);
    void clear();

    friend bool operator==(const Table &a, const Table &b) {
        return a.schema_ == b.schema_ and a.num_rows_ == b.num_rows_ and a.columns_ == b.columns_;
    }
};

/** Encodes `v` into `out` using the fixed-width representation of `type`.  `out` must hold `type.width()` bytes. */
void encode_value(const Value &v, DataType type, std::byte *out);
/** Decodes one fixed-width value. */
Value decode_value(const std::byte *in, DataType type);

}
