#pragma once

#include "wasmql/catalog/Table.hpp"
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>


namespace wasmql {

/*======================================================================================================================
 * Synthetic data generation
 *====================================================================================================================*/

/** Uniformly distributed integers in `[lo, hi]`.  For `CHAR(n)` columns the decimal text of the integer is stored, for
 * `BOOL` columns the value is taken modulo 2, for `FLOAT64` columns the integer is converted. */
struct UniformInt { std::int64_t lo = 0; std::int64_t hi = 0; };
/** Uniformly distributed doubles in `[0, 1)`.  Only valid for `FLOAT64` columns. */
struct UniformFloat01 { };
/** The values `start, start + 1, ...` in row order. */
struct Sequential { std::int64_t start = 0; };
/** The same value in every row. */
struct Const { Value value; };

using Distribution = std::variant<UniformInt, UniformFloat01, Sequential, Const>;

struct GenSpec
{
    std::size_t rows = 0;
    std::vector<Distribution> columns;
    std::uint64_t seed = 0;
};

/** The counter-based generator behind `generate_table()`: SplitMix64 applied to a per-column counter.  Row `i` of
 * column `c` draws `splitmix64(seed ^ stream(c) + i * 0x9e3779b97f4a7c15)`, so every cell is a pure function of
 * `(seed, c, i)`. */
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t generator_draw(std::uint64_t seed, std::size_t column, std::size_t row);

/** Fills `table` (which must be empty) according to `spec`. */
void fill_table(Table &table, const GenSpec &spec);


/*======================================================================================================================
 * CSV
 *====================================================================================================================*/

/** Parses comma-separated `text` and appends the rows to `table`.  Returns the number of rows appended.  No quoting
 * or escaping; CHAR values longer than the column width are rejected.  Errors carry the 1-based line number. */
std::size_t read_csv(Table &table, std::string_view text, bool header);

/** Serializes `table` to CSV.  Floats use the shortest representation that round-trips. */
std::string write_csv(const Table &table, bool header);


/*======================================================================================================================
 * Catalog
 *====================================================================================================================*/

struct TableHandle
{
    std::size_t id = 0;
    friend bool operator==(TableHandle, TableHandle) = default;
};

/** Owns the memory-resident tables.  Tables are registered by name; names are unique. */
class Catalog
{
    std::vector<std::unique_ptr<Table>> tables_;
    std::map<std::string, std::size_t, std::less<>> by_name_;

    public:
    Catalog() = default;
    Catalog(const Catalog&) = delete;
    Catalog(Catalog&&) = default;
    Catalog & operator=(Catalog&&) = default;

    /** Registers an empty table.  Throws `CatalogError` if the schema is invalid or the name is taken. */
    TableHandle define_table(TableSchema schema);
    /** Appends the rows of CSV `text` to the table. */
    std::size_t ingest_csv(TableHandle handle, std::string_view text, bool header);
    /** Registers a table with generated contents.  Throws `CatalogError` if `spec` does not match the schema. */
    TableHandle generate_table(TableSchema schema, const GenSpec &spec);

    bool contains(std::string_view name) const { return by_name_.contains(name); }
    const Table & table(TableHandle handle) const { return *tables_.at(handle.id); }
    Table & table(TableHandle handle) { return *tables_.at(handle.id); }
    /** Throws `CatalogError` if there is no such table. */
    const Table & get(std::string_view name) const;
    TableHandle handle(std::string_view name) const;
    /** Index of the table in registration order; stable for the catalog's lifetime. */
    std::size_t id(std::string_view name) const { return handle(name).id; }
    std::size_t size() const { return tables_.size(); }
};

}
