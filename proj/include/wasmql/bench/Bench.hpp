#pragma once

#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/compiler/QueryCompiler.hpp"
#include "wasmql/runtime/Engine.hpp"
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>


namespace wasmql::bench {

struct BenchOptions
{
    std::size_t rows = 1'000'000;
    unsigned repetitions = 5;
    FilterStyle filter_style = FilterStyle::BRANCHING;
    OptLevel opt_level = OptLevel::OPTIMIZING;
    std::optional<std::uint64_t> window_bytes;
    std::uint64_t seed = 1;
};

/** One line of the report: medians over the repetitions of one query and parameter.  Times in microseconds. */
struct BenchRow
{
    std::string suite;
    std::string query;
    std::string parameter;
    double t_codegen_us = 0;
    double t_engine_compile_us = 0;
    double t_exec_us = 0;
    std::uint64_t result_rows = 0;
};

/** selectivity, conj-selectivity, groupby, aggregates, join, sort, tpch */
const std::vector<std::string> & suites();

/** Runs every query of `suite`.  Each query is first checked against the reference interpreter; a mismatch throws
 * `InternalError` and nothing is recorded.  `progress` is called after each row.  Throws `PlanError` for an unknown
 * suite. */
std::vector<BenchRow> run_suite(std::string_view suite, std::shared_ptr<Engine> engine, const BenchOptions &options,
                                const std::function<void(const BenchRow&)> &progress = {});

/** Header `suite,query,parameter,t_codegen_us,t_engine_compile_us,t_exec_us,result_rows`, then one line per row. */
void write_csv(std::ostream &out, const std::vector<BenchRow> &rows);
void write_csv_header(std::ostream &out);
void write_csv_row(std::ostream &out, const BenchRow &row);


/*----- TPC-H at desk scale ------------------------------------------------------------------------------------------*/

/** A `lineitem` table with uniformly distributed values in TPC-H domains.  Dates are days since 1970-01-01 in an
 * `INT32` column; flags are `CHAR(1)`. */
Catalog tpch_lineitem(std::size_t rows, std::uint64_t seed = 1);

extern const char *const TPCH_Q1;
extern const char *const TPCH_Q6;

}
