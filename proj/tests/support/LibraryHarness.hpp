#pragma once

#include "wasmql/codegen/Library.hpp"
#include "wasmql/runtime/Engine.hpp"
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>


namespace wasmql::test {

/** A module exercising the sort library for one order and layout, instantiated on one engine.  Exports `cmp(l, r)`,
 * `swap(l, r)`, `part(begin, end, pivot)`, `part_le(begin, end, pivot)`, `med(a, b, c)`, and `qsort(begin, end)`.
 * Tuples are `int64` columns named `x`, `y`, `z`, ... (or `CHAR(n)` where requested). */
class SortHarness
{
    std::unique_ptr<CompiledModule> module_;
    std::unique_ptr<Instance> instance_;
    codegen::TupleLayout layout_;
    TableSchema schema_;

    public:
    static constexpr std::uint32_t DATA = 1024; ///< address of the tuple array

    /** `order` is parsed from `keys`, e.g. `{"R.x + R.y", "R.z DESC"}`, over table `R` with `schema`. */
    SortHarness(Engine &engine, TableSchema schema, const std::vector<std::string> &keys,
                std::size_t max_tuples);

    const codegen::TupleLayout & layout() const { return layout_; }
    const TableSchema & schema() const { return schema_; }
    std::span<std::byte> memory();
    std::uint32_t address(std::size_t i) const { return DATA + static_cast<std::uint32_t>(i) * layout_.stride(); }

    void write(std::size_t i, std::span<const Value> row);
    std::vector<Value> read(std::size_t i);
    void write_all(const std::vector<std::vector<Value>> &rows);
    std::vector<std::vector<Value>> read_all(std::size_t n);

    bool less(std::size_t i, std::size_t j);
    void swap(std::size_t i, std::size_t j);
    /** Partitions tuples `[begin, end)` around tuple `pivot`; returns the index of the first right tuple. */
    std::size_t partition(std::size_t begin, std::size_t end, std::size_t pivot, bool not_after = false);
    std::size_t median(std::size_t a, std::size_t b, std::size_t c);
    void sort(std::size_t begin, std::size_t end);

    /** The emitted function bodies, for structural checks. */
    struct Bodies
    {
        std::vector<wasm::Instr> cmp, swap, part, med, qsort;
        wasm::FuncIndex qsort_index;
    };
    static Bodies bodies(TableSchema schema, const std::vector<std::string> &keys);
};

/** Host oracle for the order used by a `SortHarness`: returns -1, 0, 1 comparing two rows lexicographically under
 * the parsed order keys (evaluated by the reference evaluator). */
class OrderOracle
{
    OrderSpec order_;
    TableSchema schema_;

    public:
    OrderOracle(TableSchema schema, const std::vector<std::string> &keys);
    int compare(std::span<const Value> a, std::span<const Value> b) const;
    bool less(std::span<const Value> a, std::span<const Value> b) const { return compare(a, b) < 0; }
    const OrderSpec & order() const { return order_; }
};

OrderSpec parse_order(const TableSchema &schema, const std::vector<std::string> &keys);

/** Host FNV-1a-64, with the same conventions as the emitted code. */
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t h = codegen::FNV_OFFSET_BASIS);
std::uint64_t host_hash(std::span<const Value> keys, std::span<const DataType> types);

/** A module exercising a hash table with the given key and payload types.  Exports `insert_or_get(ptr, n)` reading
 * `n` key tuples from `ptr` and writing the resulting slot addresses to `SLOTS`, `insert(ptr, n)` (always creating
 * slots), `count_matches(ptr) -> i32` probing one key tuple, `count_slots() -> i32` scanning all slots, and `hash(ptr) -> i64`. */
class HashTableHarness
{
    std::unique_ptr<CompiledModule> module_;
    std::unique_ptr<Instance> instance_;
    codegen::HashTableSpec spec_;
    codegen::TupleLayout key_layout_;
    codegen::TupleLayout slot_;

    public:
    static constexpr std::uint32_t STATE = 16;  ///< base, capacity, count
    static constexpr std::uint32_t TOP = 32;    ///< heap pointer
    static constexpr std::uint32_t INPUT = 1024;
    static constexpr std::uint32_t SLOTS = 512 << 10; ///< slot addresses returned by the insert functions
    static constexpr std::uint32_t HEAP = 1 << 20;

    HashTableHarness(Engine &engine, std::vector<DataType> keys, std::vector<DataType> payload,
                     std::uint32_t initial_capacity, std::uint32_t pages = 64);

    std::span<std::byte> memory();
    const codegen::TupleLayout & slot_layout() const { return slot_; }
    std::uint32_t heap_end() const;

    /** Inserts every key row; returns the slot address per row. */
    std::vector<std::uint32_t> insert_or_get(const std::vector<std::vector<Value>> &keys);
    std::vector<std::uint32_t> insert(const std::vector<std::vector<Value>> &keys);
    std::uint32_t count_matches(const std::vector<Value> &key);
    std::uint32_t count_slots();
    /** Hash of one key tuple as computed by the emitted code. */
    std::uint64_t hash(const std::vector<Value> &key);

    std::uint32_t base();
    std::uint32_t capacity();
    std::uint32_t count();
    /** Key tuples of all occupied slots, decoded from memory. */
    std::vector<std::vector<Value>> stored_keys();

    private:
    void write_keys(const std::vector<std::vector<Value>> &keys);
};

/** Returns `n` distinct non-negative `INT32` keys whose FNV-1a-64 hashes agree in the low `bits` bits. */
std::vector<std::int32_t> colliding_keys(std::size_t n, unsigned bits);

}
