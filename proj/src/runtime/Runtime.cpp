#include "wasmql/runtime/Runtime.hpp"

#include "wasmql/codegen/Library.hpp"
#include "wasmql/util/error.hpp"
#include <algorithm>
#include <chrono>
#include <cstring>
#include <limits>
#include <sstream>


using namespace wasmql;

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point start)
{
    return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

std::uint64_t align8(std::uint64_t n) { return (n + 7) & ~std::uint64_t(7); }

/** Bytes all arrays of a hash table take after `n` inserts: the growth rule of the emitted code, replayed. */
std::uint64_t hash_table_bytes(std::uint64_t n, std::uint64_t stride, const MemoryRequirements &req)
{
    std::uint64_t cap = req.initial_capacity, total = cap;
    while (n * req.load_den > cap * req.load_num) {
        cap *= 2;
        total += cap;
    }
    return total * stride;
}

}

const char * wasmql::to_string(Segment::Kind kind)
{
    switch (kind) {
        case Segment::LITERALS:   return "LITERALS";
        case Segment::COLUMN:     return "COLUMN";
        case Segment::HEAP:       return "HEAP";
        case Segment::SORT_ARRAY: return "SORT_ARRAY";
        case Segment::RESULT:     return "RESULT";
    }
    return "?";
}

std::uint64_t TableMapping::num_chunks() const
{
    if (not chunked) return 1;
    return std::max<std::uint64_t>(1, (rows + rows_per_chunk - 1) / rows_per_chunk);
}

std::uint64_t TableMapping::chunk_rows(std::uint64_t chunk) const
{
    const std::uint64_t first = chunk * rows_per_chunk;
    if (first >= rows) return 0;
    return std::min(rows_per_chunk, rows - first);
}


/*======================================================================================================================
 * Manifest
 *====================================================================================================================*/

const Segment * MemoryManifest::find(Segment::Kind kind) const
{
    for (auto &s : segments)
        if (s.kind == kind) return &s;
    return nullptr;
}

std::uint32_t MemoryManifest::global(const std::string &name) const
{
    for (auto &[n, v] : globals)
        if (n == name) return v;
    throw InternalError("manifest has no global '" + name + "'");
}

void MemoryManifest::check() const
{
    std::uint64_t prev = abi::HEADER_SIZE;
    for (auto &s : segments) {
        if (s.offset % 8) throw InternalError("segment at " + std::to_string(s.offset) + " is not 8-byte aligned");
        if (s.offset < prev) throw InternalError("segment at " + std::to_string(s.offset) + " overlaps");
        prev = s.end();
    }
    if (prev > std::uint64_t(pages) * PAGE_SIZE or prev > MAX_MEMORY)
        throw InternalError("segments exceed the module memory");
    for (auto &s : segments)
        if (s.kind == Segment::COLUMN and global(abi::column_global(s.table, s.column)) != s.offset)
            throw InternalError("global of column " + s.table + "." + s.column + " does not match its segment");
    if (not find(Segment::RESULT)) throw InternalError("manifest without result region");
}

std::string MemoryManifest::to_string() const
{
    std::ostringstream os;
    os << "pages " << pages;
    if (window) os << ", window " << *window;
    os << '\n';
    for (auto &s : segments) {
        os << "  " << wasmql::to_string(s.kind) << " [" << s.offset << ", " << s.end() << ")";
        if (s.kind == Segment::COLUMN) os << ' ' << s.table << '.' << s.column;
        if (s.kind == Segment::SORT_ARRAY) os << " breaker " << s.breaker;
        os << '\n';
    }
    return os.str();
}

MemoryManifest wasmql::plan_memory(const CompiledQuery &compiled, const Catalog &catalog, const ExecOptions &options,
                                   Scaling scaling)
{
    auto &req = compiled.memory;
    MemoryManifest m;
    m.window = options.window_bytes;
    m.result_layout = req.result_layout;
    m.result_schema = compiled.result_schema;
    std::uint64_t top = abi::HEADER_SIZE;
    auto place = [&](Segment s) {
        s.offset = top;
        top = align8(s.end());
        m.segments.push_back(std::move(s));
        return m.segments.size() - 1;
    };
    std::map<std::string, std::uint64_t> values;

    if (not req.literals.empty()) {
        auto i = place({ Segment::LITERALS, 0, req.literals.size() });
        values[abi::LITERAL_BASE] = m.segments[i].offset;
    }

    for (auto &use : req.tables) {
        auto &table = catalog.get(use.table);
        auto &schema = table.schema();
        TableMapping t;
        t.table = use.table;
        t.rows = table.num_rows();
        t.columns = use.columns;
        std::uint64_t width = 0;
        for (auto c : use.columns) width += schema.columns[c].type.width();
        t.rows_per_chunk = t.rows;
        if (options.window_bytes and width * t.rows > *options.window_bytes) {
            if (*options.window_bytes < width)
                throw CapacityError("window of " + std::to_string(*options.window_bytes) +
                                    " bytes cannot hold one row of " + use.table + " (" + std::to_string(width) +
                                    " bytes)");
            t.chunked = true;
            t.rows_per_chunk = *options.window_bytes / width;
        }
        for (auto c : use.columns) {
            auto &col = schema.columns[c];
            Segment s{ Segment::COLUMN, 0, t.rows_per_chunk * col.type.width(), use.table, col.name };
            auto i = place(std::move(s));
            t.segments.push_back(i);
            values[abi::column_global(use.table, col.name)] = m.segments[i].offset;
        }
        values[abi::rows_global(use.table)] = t.chunk_rows(0);
        m.tables.push_back(std::move(t));
    }

    if (not req.breakers.empty()) {
        using Kind = MemoryRequirements::BreakerKind;
        std::uint64_t heap = align8(abi::HEAP_STATES + abi::STATE_SIZE * req.breakers.size());
        for (auto &b : req.breakers) {
            if (b.kind == Kind::HASH_TABLE)
                heap += hash_table_bytes(cardinality_bound(*b.input, catalog), b.stride, req);
            else if (b.kind == Kind::AGGREGATE)
                heap += b.stride;
        }
        heap = std::min(heap, std::max(options.initial_heap_limit, std::uint64_t(PAGE_SIZE)));
        heap <<= scaling.heap;
        if (heap >= MAX_MEMORY) throw CapacityError("query needs a heap of more than 4 GiB");
        auto i = place({ Segment::HEAP, 0, heap });
        values[abi::HEAP_BASE] = m.segments[i].offset;
        values[abi::HEAP_END] = m.segments[i].end();

        for (std::size_t id = 0; id != req.breakers.size(); ++id) {
            auto &b = req.breakers[id];
            if (b.kind != Kind::SORT_ARRAY) continue;
            std::uint64_t n = std::max<std::uint64_t>(1, cardinality_bound(*b.input, catalog));
            const std::uint64_t bytes = (n * b.stride) << scaling.sort;
            if (bytes >= MAX_MEMORY) throw CapacityError("sort input needs more than 4 GiB");
            Segment s{ Segment::SORT_ARRAY, 0, bytes };
            s.breaker = id;
            auto k = place(std::move(s));
            values[abi::sort_base_global(id)] = m.segments[k].offset;
            values[abi::sort_end_global(id)] = m.segments[k].end();
        }
    }

    const std::uint64_t stride = std::max<std::uint64_t>(8, req.result_layout.stride());
    m.result_capacity = static_cast<std::uint32_t>(
        std::clamp<std::uint64_t>(options.result_bytes / stride, 1, std::numeric_limits<std::int32_t>::max()));
    auto r = place({ Segment::RESULT, 0, m.result_capacity * stride });
    values[abi::RESULT_BASE] = m.segments[r].offset;
    values[abi::RESULT_CAPACITY] = m.result_capacity;

    if (top > MAX_MEMORY)
        throw CapacityError("query needs " + std::to_string(top) + " bytes of module memory; the limit is 4 GiB" +
                            (options.window_bytes ? "" : " (try a chunk window)"));
    m.pages = static_cast<std::uint32_t>(std::max<std::uint64_t>(1, (top + PAGE_SIZE - 1) / PAGE_SIZE));

    for (auto &name : compiled.global_imports) {
        auto it = values.find(name);
        if (it == values.end()) throw InternalError("no value for imported global '" + name + "'");
        m.globals.emplace_back(name, static_cast<std::uint32_t>(it->second));
    }
    m.check();
    return m;
}


/*======================================================================================================================
 * Results
 *====================================================================================================================*/

namespace {

std::uint32_t read_u32(std::span<const std::byte> memory, std::uint64_t at)
{
    std::uint32_t v;
    std::memcpy(&v, memory.data() + at, 4);
    return v;
}

void write_u32(std::span<std::byte> memory, std::uint64_t at, std::uint32_t v)
{
    std::memcpy(memory.data() + at, &v, 4);
}

void append_rows(Table &out, const MemoryManifest &m, std::span<const std::byte> memory)
{
    const std::uint32_t count = read_u32(memory, abi::COUNT_WORD);
    if (count > m.result_capacity)
        throw CorruptionError("result count " + std::to_string(count) + " exceeds the region capacity of " +
                              std::to_string(m.result_capacity) + " rows");
    auto &region = *m.find(Segment::RESULT);
    if (region.end() > memory.size()) throw CorruptionError("result region lies outside the module memory");
    auto &layout = m.result_layout;
    std::vector<const std::byte*> fields(m.result_schema.num_columns());
    out.reserve(out.num_rows() + count);
    for (std::uint32_t r = 0; r != count; ++r) {
        const std::byte *row = memory.data() + region.offset + std::uint64_t(r) * layout.stride();
        for (std::size_t c = 0; c != fields.size(); ++c) {
            auto &f = layout.field(*layout.find_source(c));
            fields[c] = row + f.offset;
        }
        out.append_raw(fields);
    }
}

}

Table wasmql::extract_result(const MemoryManifest &manifest, std::span<const std::byte> memory)
{
    Table t(manifest.result_schema);
    append_rows(t, manifest, memory);
    return t;
}


/*======================================================================================================================
 * Execution
 *====================================================================================================================*/

namespace {

/** Host side of one module instance: initial copies, chunk and flush callbacks. */
class Host
{
    const Catalog &catalog_;
    const MemoryManifest &m_;
    Instance *instance_ = nullptr;
    std::vector<std::uint64_t> current_; ///< resident chunk per table

    public:
    Table result;
    std::uint64_t chunks_served = 0, flushes = 0;

    Host(const Catalog &catalog, const MemoryManifest &m)
        : catalog_(catalog), m_(m), current_(m.tables.size(), 0), result(m.result_schema)
    { }

    ImportValues imports() {
        ImportValues iv;
        iv.memory_pages = m_.pages;
        for (auto &[name, v] : m_.globals) iv.globals.emplace(name, v);
        iv.functions.push_back({ abi::REWIRE, { { wasm::ValType::I32 }, { wasm::ValType::I32 } },
                                 [this](std::span<const RawValue> args) -> std::optional<RawValue> {
                                     return rewire(static_cast<std::uint32_t>(args[0]));
                                 } });
        iv.functions.push_back({ abi::FLUSH, { {}, {} },
                                 [this](std::span<const RawValue>) -> std::optional<RawValue> {
                                     flush();
                                     return std::nullopt;
                                 } });
        return iv;
    }

    void attach(Instance &instance) {
        instance_ = &instance;
        for (std::size_t t = 0; t != m_.tables.size(); ++t) {
            load_chunk(t, 0);
            if (m_.tables[t].chunked) ++chunks_served;
        }
    }

    void load_chunk(std::size_t id, std::uint64_t chunk) {
        auto &t = m_.tables[id];
        auto &table = catalog_.get(t.table);
        auto memory = instance_->memory();
        const std::uint64_t first = chunk * t.rows_per_chunk, n = t.chunk_rows(chunk);
        for (std::size_t k = 0; k != t.columns.size(); ++k) {
            const std::size_t width = table.schema().columns[t.columns[k]].type.width();
            auto bytes = table.column_bytes(t.columns[k]);
            auto &seg = m_.segments[t.segments[k]];
            if (n) std::memcpy(memory.data() + seg.offset, bytes.data() + first * width, n * width);
        }
        current_[id] = chunk;
    }

    std::uint32_t rewire(std::uint32_t id) {
        if (id >= m_.tables.size()) throw EngineError("rewire_next_chunk: unknown table id " + std::to_string(id));
        auto &t = m_.tables[id];
        if (not t.chunked) return 0;
        const std::uint64_t next = current_[id] + 1;
        if (next < t.num_chunks()) {
            load_chunk(id, next);
            ++chunks_served;
            return static_cast<std::uint32_t>(t.chunk_rows(next));
        }
        /* Exhausted: restore the first chunk for a later scan of the same table. */
        if (current_[id] != 0) load_chunk(id, 0);
        return 0;
    }

    void flush() {
        ++flushes;
        drain();
    }

    void drain() {
        auto memory = instance_->memory();
        append_rows(result, m_, memory);
        write_u32(memory, abi::COUNT_WORD, 0);
    }

    std::uint32_t error_code() const { return read_u32(instance_->memory(), abi::ERROR_WORD); }
};

}

ExecutionResult Executor::execute(const CompiledQuery &compiled, const Catalog &catalog, const ExecOptions &options)
{
    ExecutionResult out{ Table(compiled.result_schema), {}, {}, {} };
    out.timings.t_codegen = compiled.stats.codegen_us;

    auto key = std::make_pair(compiled.binary, options.opt_level);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
        const auto start = Clock::now();
        std::shared_ptr<CompiledModule> module = engine_->compile(compiled.binary, options.opt_level);
        out.timings.t_engine_compile = micros_since(start);
        it = cache_.emplace(std::move(key), std::move(module)).first;
    }

    Scaling scaling;
    for (;;) {
        auto setup = Clock::now();
        out.manifest = plan_memory(compiled, catalog, options, scaling);
        Host host(catalog, out.manifest);
        auto instance = it->second->instantiate(host.imports());
        host.attach(*instance);
        out.timings.t_setup += micros_since(setup);

        const auto start = Clock::now();
        try {
            instance->call(abi::RUN);
        } catch (const TrapError &) {
            out.timings.t_exec += micros_since(start);
            const auto code = host.error_code();
            if (code == static_cast<std::uint32_t>(codegen::RuntimeError::HEAP_EXHAUSTED)) ++scaling.heap;
            else if (code == static_cast<std::uint32_t>(codegen::RuntimeError::ARRAY_FULL)) ++scaling.sort;
            else throw;
            ++out.counters.retries;
            continue;
        }
        host.drain();
        out.timings.t_exec += micros_since(start);
        out.table = std::move(host.result);
        out.counters.chunks_served = host.chunks_served;
        out.counters.result_flushes = host.flushes;
        return out;
    }
}

ExecutionResult wasmql::run_query(const PlanPtr &plan, const Catalog &catalog, Engine &engine,
                                  const CompileOptions &compile, const ExecOptions &exec)
{
    auto compiled = compile_query(plan, catalog, compile);
    Executor executor(std::shared_ptr<Engine>(&engine, [](Engine*) { }));
    return executor.execute(compiled, catalog, exec);
}
