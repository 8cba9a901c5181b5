#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>


namespace wasmql::test {

/** Whether an independent WebAssembly toolchain (the wasmtime C API) is linked into the tests. */
bool have_external_toolchain();

/** Validates `bytes` with the external toolchain.  Returns the error message, or nothing if the module is valid. */
std::optional<std::string> external_validate(std::span<const std::uint8_t> bytes);

/** Parses WAT text with the external toolchain.  Throws `std::runtime_error` with the parser's message. */
std::vector<std::uint8_t> external_wat2wasm(std::string_view wat);

/** Returns `bytes` without custom sections (id 0). */
std::vector<std::uint8_t> strip_custom_sections(std::span<const std::uint8_t> bytes);

}
