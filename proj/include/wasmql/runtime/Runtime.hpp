#pragma once

#include "wasmql/compiler/QueryCompiler.hpp"
#include "wasmql/runtime/Engine.hpp"
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>


namespace wasmql {

inline constexpr std::uint64_t PAGE_SIZE = 64 * 1024;
inline constexpr std::uint64_t MAX_MEMORY = std::uint64_t(1) << 32;

struct Segment
{
    enum Kind { LITERALS, COLUMN, HEAP, SORT_ARRAY, RESULT };

    Kind kind;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::string table;  ///< COLUMN
    std::string column; ///< COLUMN
    std::size_t breaker = 0; ///< SORT_ARRAY

    std::uint64_t end() const { return offset + length; }
};

const char * to_string(Segment::Kind kind);

/** Where a base table lives in module memory. */
struct TableMapping
{
    std::string table;
    std::uint64_t rows = 0;
    bool chunked = false;
    std::uint64_t rows_per_chunk = 0; ///< equals `rows` unless chunked
    std::vector<std::size_t> columns; ///< schema index per mapped column
    std::vector<std::size_t> segments; ///< index into `MemoryManifest::segments` per mapped column

    std::uint64_t num_chunks() const;
    std::uint64_t chunk_rows(std::uint64_t chunk) const;
};

/** Byte-exact layout of a module's linear memory.  Bytes [0, 16) hold the header: the result row count and the error
 * word. */
struct MemoryManifest
{
    std::uint32_t pages = 0;
    std::vector<Segment> segments; ///< ascending offsets
    std::optional<std::uint64_t> window; ///< byte budget per chunked table
    std::vector<std::pair<std::string, std::uint32_t>> globals; ///< import order
    std::vector<TableMapping> tables; ///< indexed by table id
    std::uint32_t result_capacity = 0; ///< rows
    codegen::TupleLayout result_layout;
    TableSchema result_schema;

    const Segment * find(Segment::Kind kind) const;
    std::uint32_t global(const std::string &name) const;
    /** Throws `InternalError` unless segments are disjoint, 8-byte aligned, in bounds, and every column global names
     * the offset of its segment. */
    void check() const;
    std::string to_string() const;
};

struct ExecOptions
{
    /** Tables whose mapped columns exceed this many bytes are streamed in chunks.  Unset: never chunk. */
    std::optional<std::uint64_t> window_bytes;
    std::uint64_t result_bytes = 1 << 20;
    /** Upper limit for the first heap size estimate; retries may double it. */
    std::uint64_t initial_heap_limit = 256 << 20;
    OptLevel opt_level = OptLevel::OPTIMIZING;
};

/** Multipliers applied by the retry policy, as powers of two. */
struct Scaling
{
    unsigned heap = 0;
    unsigned sort = 0;
};

/** Lays out memory for `compiled` over the current contents of `catalog`.  Throws `CapacityError` when the layout
 * does not fit 4 GiB or the window cannot hold one row. */
MemoryManifest plan_memory(const CompiledQuery &compiled, const Catalog &catalog, const ExecOptions &options,
                           Scaling scaling = {});

/** Decodes the rows counted in the header.  Throws `CorruptionError` if the count exceeds the region. */
Table extract_result(const MemoryManifest &manifest, std::span<const std::byte> memory);

struct ExecutionResult
{
    Table table;

    struct Timings
    {
        double t_codegen = 0;
        double t_engine_compile = 0;
        double t_setup = 0; ///< memory planning, instantiation, initial copies
        double t_exec = 0;
    } timings; ///< microseconds

    struct Counters
    {
        std::uint64_t chunks_served = 0;
        std::uint64_t result_flushes = 0;
        std::uint64_t retries = 0;
    } counters;

    MemoryManifest manifest; ///< of the final attempt
};

/** Runs compiled queries on one engine.  Compiled modules are cached by binary, so executing the same query again
 * reports `t_engine_compile` of zero. */
class Executor
{
    std::shared_ptr<Engine> engine_;
    std::map<std::pair<std::vector<std::uint8_t>, OptLevel>, std::shared_ptr<CompiledModule>> cache_;

    public:
    explicit Executor(std::shared_ptr<Engine> engine) : engine_(std::move(engine)) { }

    Engine & engine() const { return *engine_; }

    /** Throws `TrapError` if the module traps for a reason other than exhausted capacity, `CapacityError` if the
     * memory needed exceeds 4 GiB, and `EngineError` on adapter failure. */
    ExecutionResult execute(const CompiledQuery &compiled, const Catalog &catalog, const ExecOptions &options = {});

    void clear_cache() { cache_.clear(); }
};

/** Compiles `plan` and runs it on `engine`. */
ExecutionResult run_query(const PlanPtr &plan, const Catalog &catalog, Engine &engine,
                          const CompileOptions &compile = {}, const ExecOptions &exec = {});

}
