#pragma once

#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/runtime/Engine.hpp"
#include <string>
#include <vector>


namespace wasmql::test {

/** Two generated tables with small value domains, so that filters, groups and joins all hit:
 *   R(x INT32, y INT64, val FLOAT64, flag BOOL, name CHAR(6))
 *   S(id INT32, k INT64, w FLOAT64, tag CHAR(3)) */
Catalog mixed_catalog(std::size_t r_rows = 1000, std::size_t s_rows = 300, std::uint64_t seed = 1);

/** T(x INT32) holding 0, 1, ..., rows - 1. */
Catalog sequence_catalog(std::size_t rows);

/** Engines to test against: every built-in engine. */
inline std::vector<std::string> engines() { return available_engines(); }

}
