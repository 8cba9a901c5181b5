#pragma once

#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/codegen/Expression.hpp"
#include "wasmql/codegen/Layout.hpp"
#include "wasmql/plan/Plan.hpp"
#include <cstdint>
#include <optional>
#include <string>
#include <vector>


namespace wasmql {

enum class FilterStyle { BRANCHING, BRANCHLESS };

struct CompileOptions
{
    /** `BRANCHLESS` masks filters whose consumer is a global aggregate, a sort, or the result, so that no branch
     * depends on the predicate.  Other filters always branch. */
    FilterStyle filter_style = FilterStyle::BRANCHING;
    codegen::ShortCircuit short_circuit = codegen::ShortCircuit::AUTO;
    /** Slots of every hash table when created; a power of two >= 8. */
    std::uint32_t initial_capacity = 256;
    bool emit_wat = false;
};

/*======================================================================================================================
 * Module ABI
 *
 * Memory starts with a 16-byte header: word 0 counts the rows in the result region, word 1 receives a `RuntimeError`
 * code before the module traps.  All other addresses come from immutable i32 globals imported from "env".
 *====================================================================================================================*/

namespace abi {

inline constexpr std::uint32_t HEADER_SIZE = 16;
inline constexpr std::uint32_t COUNT_WORD = 0;
inline constexpr std::uint32_t ERROR_WORD = 4;
/** Heap layout: the bump pointer at `heap_base`, then one state record per breaker. */
inline constexpr std::uint32_t HEAP_STATES = 8;
inline constexpr std::uint32_t STATE_SIZE = 32;

inline constexpr const char *RUN = "run";
inline constexpr const char *REWIRE = "rewire_next_chunk";
inline constexpr const char *FLUSH = "result_flush";
inline constexpr const char *HEAP_BASE = "heap_base";
inline constexpr const char *HEAP_END = "heap_end";
inline constexpr const char *RESULT_BASE = "result_base";
inline constexpr const char *RESULT_CAPACITY = "result_capacity";
inline constexpr const char *LITERAL_BASE = "lit_base";

std::string column_global(const std::string &table, const std::string &column);
std::string rows_global(const std::string &table);
std::string sort_base_global(std::size_t breaker);
std::string sort_end_global(std::size_t breaker);

}

/** What the host must provide for a compiled query, independent of the data. */
struct MemoryRequirements
{
    /** A base table read by the query.  `id` is the argument of `rewire_next_chunk`. */
    struct TableUse
    {
        std::string table;
        std::vector<std::size_t> columns; ///< schema indices of the columns the module reads, ascending
    };

    enum class BreakerKind { HASH_TABLE, AGGREGATE, SORT_ARRAY };

    struct BreakerUse
    {
        BreakerKind kind;
        std::uint32_t stride; ///< bytes per slot or array element
        const PlanNode *input; ///< the node whose tuples the breaker consumes
    };

    std::vector<TableUse> tables; ///< indexed by table id
    std::vector<BreakerUse> breakers; ///< indexed by breaker id
    std::uint32_t initial_capacity = 0;
    std::uint32_t load_num = 7, load_den = 10;
    std::vector<std::uint8_t> literals;
    codegen::TupleLayout result_layout;
};

struct CompiledQuery
{
    std::vector<std::uint8_t> binary;
    std::optional<std::string> wat;
    PlanPtr plan; ///< the annotated plan; `MemoryRequirements::BreakerUse::input` points into it
    TableSchema result_schema;
    MemoryRequirements memory;
    std::vector<std::string> global_imports;
    std::size_t num_functions = 0; ///< defined functions: one per pipeline, quicksorts, and `run`

    struct Stats
    {
        double codegen_us = 0;
        std::size_t binary_size = 0;
    } stats;
};

/** Compiles `plan` to a module: one function `f<i>` per pipeline, a quicksort per sort, and the export `run` calling
 * the pipelines in dependency order.  Deterministic in the plan, the table schemas, and `options`.  Throws
 * `PlanError`, `TypeError`, `CatalogError`, or `CodegenError`. */
CompiledQuery compile_query(const PlanPtr &plan, const Catalog &catalog, const CompileOptions &options = {});

/** Upper bound on the tuples `node` produces, from the table sizes in `catalog`.  For joins the product is capped at
 * `join_factor` times the larger input, so the result is an estimate there. */
std::uint64_t cardinality_bound(const PlanNode &node, const Catalog &catalog, std::uint64_t join_factor = 4);

}
