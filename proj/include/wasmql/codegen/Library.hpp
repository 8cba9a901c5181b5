#pragma once

#include "wasmql/codegen/Expression.hpp"
#include "wasmql/codegen/Layout.hpp"
#include "wasmql/plan/Plan.hpp"
#include "wasmql/wasm/Builder.hpp"
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>


namespace wasmql::codegen {

/*======================================================================================================================
 * Sorting
 *
 * Tuples live in arrays of `layout.stride()` bytes per element; all pointers are byte addresses.  Order keys are
 * annotated expressions whose column references are resolved through the `source` of the layout's fields.
 *====================================================================================================================*/

/** Emits an in-place exchange of the tuples at `l` and `r`, 8 bytes at a time. */
void emit_swap(wasm::FuncBuilder &fb, const TupleLayout &layout, wasm::LocalIndex l, wasm::LocalIndex r);

/** Emits a lexicographic comparison of the tuples at `l` and `r` and returns a local that is 1 iff `l` sorts
 * strictly before `r`.  Per key, `v = 2v + gt - lt` (lt and gt swapped for `DESC`); the result is `v < 0`. */
wasm::LocalIndex emit_compare(wasm::FuncBuilder &fb, const OrderSpec &order, const TupleLayout &layout,
                              wasm::LocalIndex l, wasm::LocalIndex r, const ExprEnv &env = {});

enum class PartitionBy
{
    LESS,     ///< left partition holds tuples ordered before the pivot
    NOT_AFTER ///< left partition holds tuples not ordered after the pivot
};

/** Emits branch-free Hoare partitioning of `[begin, end)` around the tuple at `pivot`, which must lie outside the
 * range.  Returns a local pointing to the first tuple of the right partition. */
wasm::LocalIndex emit_partition(wasm::FuncBuilder &fb, const OrderSpec &order, const TupleLayout &layout,
                                wasm::LocalIndex begin, wasm::LocalIndex end, wasm::LocalIndex pivot,
                                const ExprEnv &env = {}, PartitionBy by = PartitionBy::LESS);

/** Returns a local holding whichever of `a`, `b`, `c` points to the median tuple.  Branch-free. */
wasm::LocalIndex emit_median_of_three(wasm::FuncBuilder &fb, const OrderSpec &order, const TupleLayout &layout,
                                      wasm::LocalIndex a, wasm::LocalIndex b, wasm::LocalIndex c,
                                      const ExprEnv &env = {});

/** Defines `qsort(begin: i32, end: i32)` sorting `[begin, end)` by `order`.  Recurses on the right partition and
 * loops on the left.  Runs of keys equal to a minimal pivot are split off in a second partitioning pass so that
 * duplicate-heavy inputs do not degrade to one element per round. */
wasm::FuncIndex emit_quicksort(wasm::ModuleBuilder &module, const OrderSpec &order, const TupleLayout &layout,
                               const ExprEnv &env = {}, std::string name = "qsort");


/*======================================================================================================================
 * Hashing
 *====================================================================================================================*/

inline constexpr std::uint64_t FNV_OFFSET_BASIS = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t FNV_PRIME = 0x100000001b3ull;

/** Incremental inline FNV-1a-64 over the little-endian bytes of typed values.  `FLOAT64` values are hashed as
 * `v + 0.0` so that `-0.0` and `0.0` hash alike.  `CHAR(n)` values shorter than the hashed length are padded with
 * zero bytes. */
class FnvEmitter
{
    wasm::FuncBuilder &fb_;
    wasm::LocalIndex h_;

    public:
    explicit FnvEmitter(wasm::FuncBuilder &fb);

    /** Mixes in the value on top of the stack.  For `CHAR`, the value is its address. */
    void add(DataType type);
    /** Mixes in the `length` bytes at `ptr`, followed by `hashed_length - length` zero bytes. */
    void add_chars(wasm::LocalIndex ptr, std::uint32_t length, std::uint32_t hashed_length);
    wasm::LocalIndex result() const { return h_; }
};

/** Emits FNV-1a-64 over `keys` (field indices of `layout`) of the tuple at `ptr`, in key order.  Throws
 * `CodegenError` if `keys` is empty. */
wasm::LocalIndex emit_hash(wasm::FuncBuilder &fb, std::span<const std::size_t> keys, const TupleLayout &layout,
                           wasm::LocalIndex ptr);


/*======================================================================================================================
 * Heap
 *====================================================================================================================*/

/** Bump allocator state: the current heap pointer is the `i32` word at address `top`; allocations may not pass the
 * address `end`. */
struct Heap
{
    MemRef top;
    MemRef end;
    /** Header word written before trapping on exhaustion. */
    std::uint32_t error_word = 4;
};

/** Error codes written to the error word. */
enum class RuntimeError : std::uint32_t { NONE = 0, HEAP_EXHAUSTED = 1, ARRAY_FULL = 2 };

/** Emits an allocation of `size` bytes (an `i64` on top of the stack) and returns a local holding the address.  The
 * memory is zero, since the heap is never reused.  On exhaustion writes `HEAP_EXHAUSTED` and traps. */
wasm::LocalIndex emit_alloc(wasm::FuncBuilder &fb, const Heap &heap);

/** Writes `code` to the error word and traps. */
void emit_fail(wasm::FuncBuilder &fb, std::uint32_t error_word, RuntimeError code);


/*======================================================================================================================
 * Hash tables
 *====================================================================================================================*/

struct HashTableSpec
{
    struct Entry
    {
        std::string name;
        DataType type;
        std::optional<std::size_t> source;
    };

    std::vector<Entry> keys;
    std::vector<Entry> payload;
    std::uint32_t initial_capacity = 8;
    /** Grow when `count > load_num / load_den * capacity` after an insertion. */
    std::uint32_t load_num = 7;
    std::uint32_t load_den = 10;

    /** Byte 0 is the occupancy tag, then keys, then payload. */
    TupleLayout slot_layout() const;
    /** Throws `CodegenError` unless the capacity is a power of two >= 8, the load factor is in (0, 1), and key and
     * payload names are disjoint. */
    void check() const;
};

/** A key value for insertion or lookup: a local holding a value of `type`.  `CHAR` values may be shorter than the
 * key's declared type and compare as if zero-padded. */
struct KeyValue
{
    wasm::LocalIndex local;
    DataType type;
};

/** Emits inline code operating on one open-addressing, linear-probing hash table.  The table's state (array base,
 * capacity, count) is kept in locals of the function and persisted to 12 bytes at `state`. */
class HashTableEmitter
{
    wasm::FuncBuilder &fb_;
    HashTableSpec spec_;
    TupleLayout slot_;
    Heap heap_;
    MemRef state_;
    wasm::LocalIndex base_, cap_, count_;

    public:
    HashTableEmitter(wasm::FuncBuilder &fb, HashTableSpec spec, Heap heap, MemRef state);

    const TupleLayout & slot_layout() const { return slot_; }
    wasm::LocalIndex base() const { return base_; }
    wasm::LocalIndex capacity() const { return cap_; }
    wasm::LocalIndex count() const { return count_; }

    /** Allocates the initial array and resets the count. */
    void init();
    /** Loads the state into locals. */
    void load();
    /** Stores the locals back to the state. */
    void store();

    /** Finds the slot for `keys`, creating it if absent (tag set, keys stored, payload zero).  Returns a local
     * holding the slot address; `is_new` receives 1 iff the slot was created. */
    wasm::LocalIndex insert_or_get(std::span<const KeyValue> keys, std::optional<wasm::LocalIndex> is_new = {});
    /** Creates a new slot even if the key exists. */
    wasm::LocalIndex insert(std::span<const KeyValue> keys);
    /** Calls `body` once for every slot whose keys equal `keys`.  Branching to the label passed to `body` continues
     * with the next match. */
    void probe(std::span<const KeyValue> keys,
               const std::function<void(wasm::LocalIndex slot, wasm::Label next)> &body);
    /** Calls `body` once per occupied slot; branching to the label continues with the next slot. */
    void scan(const std::function<void(wasm::LocalIndex slot, wasm::Label next)> &body);

    private:
    wasm::LocalIndex hash_values(std::span<const KeyValue> keys);
    void push_keys_equal(wasm::LocalIndex slot, std::span<const KeyValue> keys);
    void store_keys(wasm::LocalIndex slot, std::span<const KeyValue> keys);
    void push_needs_growth();
    void grow();
    /** Emits `slot = base + (pos & (cap - 1)) * stride`. */
    void slot_at(wasm::LocalIndex pos, wasm::LocalIndex slot);
};

}
