#pragma once

#include "wasmql/codegen/Layout.hpp"
#include "wasmql/plan/Expr.hpp"
#include "wasmql/wasm/Builder.hpp"
#include <map>
#include <optional>
#include <variant>
#include <vector>


namespace wasmql::codegen {

/*======================================================================================================================
 * Value representation
 *====================================================================================================================*/

/** `INT32` and `BOOL` are `i32`, `INT64` is `i64`, `FLOAT64` is `f64`, and `CHAR(n)` is the `i32` address of its
 * `n` bytes. */
wasm::ValType val_type(DataType type);

/** Pushes the value of type `type` stored at the address on top of the stack (plus `offset`). */
void emit_load(wasm::FuncBuilder &fb, DataType type, std::uint32_t offset = 0);
/** Stores a numeric or `BOOL` value.  Expects address and value on the stack. */
void emit_store(wasm::FuncBuilder &fb, DataType type, std::uint32_t offset = 0);
/** Converts the value on top of the stack from `from` to `to`.  Only `INT32` to `INT64` widens; same types are a
 * no-op. */
void emit_convert(wasm::FuncBuilder &fb, DataType from, DataType to);

/** Copies `n` bytes from `src + src_offset` to `dst + dst_offset`.  Unaligned. */
void emit_copy_bytes(wasm::FuncBuilder &fb, wasm::LocalIndex dst, std::uint32_t dst_offset, wasm::LocalIndex src,
                     std::uint32_t src_offset, std::uint32_t n);
/** Copies `n` bytes, `n` a multiple of 8, between 8-byte aligned addresses. */
void emit_copy_words(wasm::FuncBuilder &fb, wasm::LocalIndex dst, wasm::LocalIndex src, std::uint32_t n);

/** Pushes -1, 0, or 1 comparing the zero-padded byte strings `a[0, la)` and `b[0, lb)` lexicographically. */
void emit_char_compare(wasm::FuncBuilder &fb, wasm::LocalIndex a, std::uint32_t la, wasm::LocalIndex b,
                       std::uint32_t lb);

/** An address in linear memory: the value of an (immutable `i32`) global plus an offset, or an absolute offset. */
struct MemRef
{
    std::optional<wasm::GlobalIndex> base;
    std::uint32_t offset = 0;

    /** Pushes the base address; the caller uses `offset` as the memory instruction's static offset. */
    void push_base(wasm::FuncBuilder &fb) const;
};


/*======================================================================================================================
 * Bindings
 *====================================================================================================================*/

/** Column `row` of a column segment starting at the value of `base`. */
struct SegmentSlot
{
    wasm::GlobalIndex base;
    wasm::LocalIndex row;
};

/** A field of a tuple at the address held by `ptr`. */
struct TupleSlot
{
    wasm::LocalIndex ptr;
    std::uint32_t offset;
};

/** A value already held in a local. */
struct LocalSlot
{
    wasm::LocalIndex local;
};

struct Binding
{
    DataType type;
    std::variant<SegmentSlot, TupleSlot, LocalSlot> where;
};

/** Access recipes for the columns of an expression scope, indexed by scope position.  Unbound columns are empty. */
using Bindings = std::vector<std::optional<Binding>>;

/** Binds every field of `layout` that has a source to the tuple at `ptr`. */
Bindings bind_tuple(const TupleLayout &layout, wasm::LocalIndex ptr, std::size_t scope_size);
/** Binds scope column `i` to field `i` of `layout` for all fields. */
Bindings bind_fields(const TupleLayout &layout, wasm::LocalIndex ptr);


/*======================================================================================================================
 * Expression compilation
 *====================================================================================================================*/

enum class ShortCircuit { AUTO, ALWAYS, NEVER };

/** CHAR literals, laid out one after another in a data segment. */
class LiteralPool
{
    std::map<std::pair<std::string, std::uint16_t>, std::uint32_t> offsets_;
    std::vector<std::uint8_t> bytes_;

    public:
    /** Returns the offset of `text` padded to `length` bytes, adding it if needed. */
    std::uint32_t intern(const std::string &text, std::uint16_t length);
    /** Adds all CHAR literals in `expr`. */
    void collect(const Expr &expr);
    std::optional<std::uint32_t> find(const std::string &text, std::uint16_t length) const;
    const std::vector<std::uint8_t> & bytes() const { return bytes_; }
    bool empty() const { return bytes_.empty(); }
};

struct ExprEnv
{
    const LiteralPool *literals = nullptr;
    std::optional<wasm::GlobalIndex> literal_base;
    ShortCircuit short_circuit = ShortCircuit::AUTO;
};

/** Emits inline code for annotated expressions. */
class ExprCompiler
{
    wasm::FuncBuilder &fb_;
    const Bindings &bindings_;
    ExprEnv env_;

    public:
    ExprCompiler(wasm::FuncBuilder &fb, const Bindings &bindings, ExprEnv env = {})
        : fb_(fb), bindings_(bindings), env_(env)
    { }

    /** Pushes the value of `expr` in its own type. */
    void push(const Expr &expr);
    /** Pushes the value of `expr` converted to `type`. */
    void push_as(const Expr &expr, DataType type);
    /** Evaluates `expr` into a fresh local. */
    wasm::LocalIndex compile(const Expr &expr);
    wasm::LocalIndex compile_as(const Expr &expr, DataType type);

    /** Pushes the value bound by `b`; for `CHAR` columns, its address. */
    static void push_binding(wasm::FuncBuilder &fb, const Binding &b);

    private:
    void push_column(const ColumnRef &ref);
    void push_literal(const Literal &lit);
    void push_arith(const Arith &a, DataType type);
    void push_cmp(const Cmp &c);
    void push_logic(const Logic &l);
};

/** `compile_expression(fb, expr, bindings)`: evaluates `expr` into a fresh local. */
wasm::LocalIndex compile_expression(wasm::FuncBuilder &fb, const Expr &expr, const Bindings &bindings,
                                    ExprEnv env = {});

}
