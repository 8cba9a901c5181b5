#include "wasmql/codegen/Layout.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>


using namespace wasmql;
using namespace wasmql::codegen;


std::size_t TupleLayout::add(std::string name, DataType type, std::optional<std::size_t> source)
{
    const std::uint32_t align = static_cast<std::uint32_t>(type.alignment());
    const std::uint32_t offset = (end_ + align - 1) / align * align;
    fields_.push_back(Field{ std::move(name), type, offset, source });
    end_ = offset + static_cast<std::uint32_t>(type.width());
    return fields_.size() - 1;
}

std::optional<std::size_t> TupleLayout::find_source(std::size_t source) const
{
    for (std::size_t i = 0; i != fields_.size(); ++i)
        if (fields_[i].source == source) return i;
    return std::nullopt;
}

std::optional<std::size_t> TupleLayout::find(std::string_view name) const
{
    for (std::size_t i = 0; i != fields_.size(); ++i)
        if (fields_[i].name == name) return i;
    return std::nullopt;
}

void TupleLayout::check() const
{
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
    for (auto &f : fields_) {
        if (f.offset % f.type.alignment())
            throw CodegenError("field '" + f.name + "' is misaligned at offset " + std::to_string(f.offset));
        if (f.offset < header_) throw CodegenError("field '" + f.name + "' overlaps the tuple header");
        ranges.emplace_back(f.offset, f.offset + static_cast<std::uint32_t>(f.type.width()));
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i)
        if (ranges[i].first < ranges[i - 1].second) throw CodegenError("tuple fields overlap");
    if (not ranges.empty() and ranges.back().second > stride()) throw CodegenError("tuple fields exceed the stride");
    if (stride() % 8) throw CodegenError("tuple stride is not a multiple of 8");
}
