#include "wasmql/catalog/Catalog.hpp"

#include "wasmql/util/error.hpp"
#include <charconv>
#include <cstring>
#include <limits>


using namespace wasmql;


/*======================================================================================================================
 * Generator
 *====================================================================================================================*/

std::uint64_t wasmql::splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t wasmql::generator_draw(std::uint64_t seed, std::size_t column, std::size_t row)
{
    const std::uint64_t stream = splitmix64(seed ^ splitmix64(0x5eed0000ULL + column));
    return splitmix64(stream + row * 0x9e3779b97f4a7c15ULL);
}

namespace {

std::int64_t uniform_in(std::uint64_t draw, std::int64_t lo, std::int64_t hi)
{
    const unsigned __int128 range = static_cast<unsigned __int128>(static_cast<__int128>(hi) - lo + 1);
    const auto offset = static_cast<std::uint64_t>((static_cast<unsigned __int128>(draw) * range) >> 64);
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + offset);
}

Value integer_as(std::int64_t v, DataType type, const Column &col)
{
    switch (type.kind) {
        case DataType::INT32:
            if (v < std::numeric_limits<std::int32_t>::min() or v > std::numeric_limits<std::int32_t>::max())
                throw CatalogError("generated value " + std::to_string(v) + " does not fit column '" + col.name + "'");
            return static_cast<std::int32_t>(v);
        case DataType::INT64:   return v;
        case DataType::FLOAT64: return static_cast<double>(v);
        case DataType::BOOL:    return (v & 1) != 0;
        case DataType::CHAR: {
            auto s = std::to_string(v);
            if (s.size() > type.length)
                throw CatalogError("generated value " + s + " does not fit column '" + col.name + "'");
            return s;
        }
    }
    return v;
}

}

void wasmql::fill_table(Table &table, const GenSpec &spec)
{
    auto &schema = table.schema();
    if (spec.columns.size() != schema.num_columns())
        throw CatalogError("generator spec has " + std::to_string(spec.columns.size()) + " columns, table '" +
                           schema.name + "' has " + std::to_string(schema.num_columns()));
    for (std::size_t c = 0; c != spec.columns.size(); ++c) {
        auto &col = schema.columns[c];
        if (auto u = std::get_if<UniformInt>(&spec.columns[c]); u and u->lo > u->hi)
            throw CatalogError("empty range for column '" + col.name + "'");
        if (std::holds_alternative<UniformFloat01>(spec.columns[c]) and col.type.kind != DataType::FLOAT64)
            throw CatalogError("UNIFORM_FLOAT01 requires a FLOAT64 column, '" + col.name + "' is " +
                               col.type.to_string());
        if (auto k = std::get_if<Const>(&spec.columns[c]); k and not holds_type(k->value, col.type))
            throw CatalogError("constant does not match type of column '" + col.name + "'");
    }

    table.reserve(spec.rows);
    std::vector<Value> row(schema.num_columns());
    for (std::size_t r = 0; r != spec.rows; ++r) {
        for (std::size_t c = 0; c != spec.columns.size(); ++c) {
            auto &col = schema.columns[c];
            row[c] = std::visit([&](auto &d) -> Value {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, UniformInt>) {
                    return integer_as(uniform_in(generator_draw(spec.seed, c, r), d.lo, d.hi), col.type, col);
                } else if constexpr (std::is_same_v<T, UniformFloat01>) {
                    return static_cast<double>(generator_draw(spec.seed, c, r) >> 11) * 0x1.0p-53;
                } else if constexpr (std::is_same_v<T, Sequential>) {
                    return integer_as(d.start + static_cast<std::int64_t>(r), col.type, col);
                } else {
                    return d.value;
                }
            }, spec.columns[c]);
        }
        table.append_row(row);
    }
}


/*======================================================================================================================
 * CSV
 *====================================================================================================================*/

namespace {

template<typename T>
bool parse_number(std::string_view field, T &out)
{
    if (field.empty()) return false;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
    return ec == std::errc() and ptr == field.data() + field.size();
}

Value parse_field(std::string_view field, const Column &col, std::size_t line)
{
    auto fail = [&](const char *what) -> Value {
        throw CsvError(line, std::string(what) + " '" + std::string(field) + "' for column '" + col.name + "' of type " +
                             col.type.to_string());
    };
    switch (col.type.kind) {
        case DataType::INT32: {
            std::int32_t v;
            return parse_number(field, v) ? Value(v) : fail("unparsable literal");
        }
        case DataType::INT64: {
            std::int64_t v;
            return parse_number(field, v) ? Value(v) : fail("unparsable literal");
        }
        case DataType::FLOAT64: {
            double v;
            return parse_number(field, v) ? Value(v) : fail("unparsable literal");
        }
        case DataType::BOOL:
            if (field == "true" or field == "TRUE" or field == "1") return true;
            if (field == "false" or field == "FALSE" or field == "0") return false;
            return fail("unparsable literal");
        case DataType::CHAR:
            if (field.size() > col.type.length) return fail("CHAR overflow:");
            return std::string(field);
    }
    return fail("unparsable literal");
}

}

std::size_t wasmql::read_csv(Table &table, std::string_view text, bool header)
{
    auto &schema = table.schema();
    std::vector<std::vector<Value>> rows;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (not line.empty() and line.back() == '\r') line.remove_suffix(1);
        if (header and line_no == 1) continue;

        std::vector<Value> row;
        std::size_t start = 0;
        for (;;) {
            std::size_t comma = line.find(',', start);
            std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
            if (row.size() == schema.num_columns())
                throw CsvError(line_no, "arity mismatch: expected " + std::to_string(schema.num_columns()) + " fields");
            row.push_back(parse_field(field, schema.columns[row.size()], line_no));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (row.size() != schema.num_columns())
            throw CsvError(line_no, "arity mismatch: expected " + std::to_string(schema.num_columns()) +
                                    " fields, got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    table.reserve(table.num_rows() + rows.size());
    for (auto &r : rows) table.append_row(r);
    return rows.size();
}

std::string wasmql::write_csv(const Table &table, bool header)
{
    std::string out;
    auto &schema = table.schema();
    if (header) {
        for (std::size_t c = 0; c != schema.num_columns(); ++c) {
            if (c) out += ',';
            out += schema.columns[c].name;
        }
        out += '\n';
    }
    for (std::size_t r = 0; r != table.num_rows(); ++r) {
        for (std::size_t c = 0; c != schema.num_columns(); ++c) {
            if (c) out += ',';
            out += to_string(table.get(c, r));
        }
        out += '\n';
    }
    return out;
}


/*======================================================================================================================
 * Catalog
 *====================================================================================================================*/

TableHandle Catalog::define_table(TableSchema schema)
{
    schema.check();
    if (contains(schema.name))
        throw CatalogError("table '" + schema.name + "' already exists");
    for (auto &c : schema.columns) c.qualifier.clear();
    std::size_t id = tables_.size();
    by_name_.emplace(schema.name, id);
    tables_.push_back(std::make_unique<Table>(std::move(schema)));
    return { id };
}

std::size_t Catalog::ingest_csv(TableHandle handle, std::string_view text, bool header)
{
    return read_csv(table(handle), text, header);
}

TableHandle Catalog::generate_table(TableSchema schema, const GenSpec &spec)
{
    schema.check();
    if (contains(schema.name))
        throw CatalogError("table '" + schema.name + "' already exists");
    for (auto &c : schema.columns) c.qualifier.clear();
    Table t(schema);
    fill_table(t, spec);
    auto h = define_table(std::move(schema));
    *tables_[h.id] = std::move(t);
    return h;
}

const Table & Catalog::get(std::string_view name) const
{
    return table(handle(name));
}

TableHandle Catalog::handle(std::string_view name) const
{
    auto it = by_name_.find(name);
    if (it == by_name_.end())
        throw CatalogError("unknown table '" + std::string(name) + "'");
    return { it->second };
}
