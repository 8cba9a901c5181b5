#pragma once

#include "wasmql/catalog/DataType.hpp"
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>


namespace wasmql::codegen {

/** One field of a fixed-width tuple.  `source` is the scope index of the column the field holds, if any. */
struct Field
{
    std::string name;
    DataType type;
    std::uint32_t offset;
    std::optional<std::size_t> source;
};

/** Byte layout of a materialized tuple.  Fields are placed in insertion order, each at its natural alignment, after
 * `header` reserved bytes.  The stride is a multiple of 8. */
class TupleLayout
{
    std::uint32_t header_ = 0;
    std::uint32_t end_ = 0;
    std::vector<Field> fields_;

    public:
    TupleLayout() = default;
    explicit TupleLayout(std::uint32_t header) : header_(header), end_(header) { }

    /** Appends a field and returns its index. */
    std::size_t add(std::string name, DataType type, std::optional<std::size_t> source = {});

    std::span<const Field> fields() const { return fields_; }
    const Field & field(std::size_t i) const { return fields_.at(i); }
    std::size_t size() const { return fields_.size(); }
    std::uint32_t header() const { return header_; }
    /** 0 for a layout without fields and header. */
    std::uint32_t stride() const { return end_ == 0 ? 0 : (end_ + 7) & ~7u; }

    /** Index of the field holding scope column `source`. */
    std::optional<std::size_t> find_source(std::size_t source) const;
    std::optional<std::size_t> find(std::string_view name) const;

    /** Throws `CodegenError` if fields overlap, are misaligned, or exceed the stride. */
    void check() const;
};

}
