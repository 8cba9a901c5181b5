#pragma once

#include "wasmql/wasm/Builder.hpp"
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>


namespace wasmql::wasm {

/** A module in the binary format, split into its sections.  Only the MVP subset produced by `ModuleBuilder` is
 * understood: no tables, no element segments, no start function, no module-defined memories or globals. */
struct DecodedModule
{
    enum class ExternKind : std::uint8_t { FUNC = 0, TABLE = 1, MEMORY = 2, GLOBAL = 3 };

    struct Import
    {
        std::string module;
        std::string name;
        ExternKind kind;
        std::uint32_t type_index = 0; ///< FUNC
        ValType global_type = ValType::I32; ///< GLOBAL
        bool mut = false; ///< GLOBAL
        std::uint32_t min_pages = 0; ///< MEMORY
        std::optional<std::uint32_t> max_pages; ///< MEMORY
    };
    struct Export
    {
        std::string name;
        ExternKind kind;
        std::uint32_t index;
    };
    struct Code
    {
        std::vector<ValType> locals; ///< declared locals, runs expanded
        std::vector<std::uint8_t> body; ///< instruction bytes including the final `end`
    };
    struct Data
    {
        std::optional<std::uint32_t> global; ///< offset given by `global.get`, else by `offset`
        std::uint32_t offset = 0;
        std::vector<std::uint8_t> bytes;
    };

    std::vector<FuncType> types;
    std::vector<Import> imports;
    std::vector<std::uint32_t> functions; ///< type index of each defined function
    std::vector<Export> exports;
    std::vector<Code> code;
    std::vector<Data> data;
    std::vector<std::pair<std::uint32_t, std::string>> function_names; ///< from the "name" custom section

    std::size_t num_imported_functions() const;
    std::vector<std::size_t> imported_globals() const; ///< indices into `imports`
    const FuncType & function_type(std::uint32_t func) const;
    std::optional<std::uint32_t> find_export(std::string_view name, ExternKind kind) const;
};

/** Decodes the section structure.  Throws `ValidationError` on malformed input or unsupported constructs; function
 * bodies are not decoded. */
DecodedModule decode_module(std::span<const std::uint8_t> bytes);

/** Decodes one function body into instructions.  Throws `ValidationError` on unknown opcodes or truncated input. */
std::vector<Instr> decode_body(std::span<const std::uint8_t> body);

}
