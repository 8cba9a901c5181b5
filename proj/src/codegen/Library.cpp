#include "wasmql/codegen/Library.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>
#include <bit>
#include <set>


using namespace wasmql;
using namespace wasmql::codegen;
using wasm::FuncBuilder;
using wasm::LocalIndex;
using wasm::Op;
using wasm::ValType;


namespace {

void set_i32(FuncBuilder &fb, LocalIndex l, std::int32_t v)
{
    fb.i32_const(v);
    fb.local_set(l);
}

/** `dst = a + k` with `k` a signed constant. */
void add_const(FuncBuilder &fb, LocalIndex dst, LocalIndex a, std::int64_t k)
{
    fb.local_get(a);
    fb.i32_const(static_cast<std::int32_t>(k));
    fb.emit(Op::I32_ADD);
    fb.local_set(dst);
}

LocalIndex copy_of(FuncBuilder &fb, LocalIndex a)
{
    auto l = fb.fresh_local(ValType::I32);
    fb.local_get(a);
    fb.local_set(l);
    return l;
}

/** Pushes `x * k` for a non-negative `i32` constant `k`. */
void mul_const(FuncBuilder &fb, std::uint32_t k)
{
    if (k == 1) return;
    if (std::has_single_bit(k)) {
        fb.i32_const(std::countr_zero(k));
        fb.emit(Op::I32_SHL);
    } else {
        fb.i32_const(static_cast<std::int32_t>(k));
        fb.emit(Op::I32_MUL);
    }
}

std::size_t scope_size(const TupleLayout &layout)
{
    std::size_t n = 0;
    for (auto &f : layout.fields())
        if (f.source) n = std::max(n, *f.source + 1);
    return n;
}

void check_stride(const TupleLayout &layout)
{
    if (layout.stride() == 0) throw CodegenError("tuple layout has stride 0");
}

}


/*======================================================================================================================
 * Sorting
 *====================================================================================================================*/

void codegen::emit_swap(FuncBuilder &fb, const TupleLayout &layout, LocalIndex l, LocalIndex r)
{
    check_stride(layout);
    const std::uint32_t stride = layout.stride();
    auto word = [&](LocalIndex pl, LocalIndex pr, std::uint32_t k) {
        /* Both loads happen before either store, so no temporary is needed beyond the operand stack. */
        fb.local_get(pl);
        fb.local_get(pr);
        fb.load(Op::I64_LOAD, k);
        fb.local_get(pr);
        fb.local_get(pl);
        fb.load(Op::I64_LOAD, k);
        fb.store(Op::I64_STORE, k);
        fb.store(Op::I64_STORE, k);
    };
    if (stride <= 256) {
        for (std::uint32_t k = 0; k != stride; k += 8) word(l, r, k);
        return;
    }
    auto pl = copy_of(fb, l), pr = copy_of(fb, r);
    auto stop = fb.fresh_local(ValType::I32);
    add_const(fb, stop, l, stride);
    auto loop = fb.loop();
    word(pl, pr, 0);
    add_const(fb, pl, pl, 8);
    add_const(fb, pr, pr, 8);
    fb.local_get(pl);
    fb.local_get(stop);
    fb.emit(Op::I32_NE);
    fb.br_if(loop);
    fb.end();
}

LocalIndex codegen::emit_compare(FuncBuilder &fb, const OrderSpec &order, const TupleLayout &layout, LocalIndex l,
                                 LocalIndex r, const ExprEnv &env)
{
    if (order.keys.empty() or order.keys.size() > OrderSpec::MAX_KEYS)
        throw CodegenError("order must have 1 to " + std::to_string(OrderSpec::MAX_KEYS) + " keys");
    const auto n = scope_size(layout);
    const Bindings bl = bind_tuple(layout, l, n), br = bind_tuple(layout, r, n);
    ExprCompiler cl(fb, bl, env), cr(fb, br, env);

    auto v = fb.fresh_local(ValType::I32);
    set_i32(fb, v, 0);
    for (auto &key : order.keys) {
        if (not key.expr or not key.expr->type) throw CodegenError("order key is not annotated");
        const DataType t = *key.expr->type;
        const bool desc = key.direction == Direction::DESC;
        auto vl = cl.compile(*key.expr);
        auto vr = cr.compile(*key.expr);

        /* v = 2v + gt - lt */
        fb.local_get(v);
        fb.i32_const(1);
        fb.emit(Op::I32_SHL);
        if (t.is_char()) {
            if (desc) emit_char_compare(fb, vr, t.length, vl, t.length);
            else emit_char_compare(fb, vl, t.length, vr, t.length);
        } else {
            Op lt, gt;
            switch (t.kind) {
                case DataType::INT32:   lt = Op::I32_LT_S; gt = Op::I32_GT_S; break;
                case DataType::INT64:   lt = Op::I64_LT_S; gt = Op::I64_GT_S; break;
                case DataType::FLOAT64: lt = Op::F64_LT;   gt = Op::F64_GT;   break;
                default: throw CodegenError(t.to_string() + " is not a valid sort key");
            }
            if (desc) std::swap(lt, gt);
            fb.local_get(vl);
            fb.local_get(vr);
            fb.emit(gt);
            fb.local_get(vl);
            fb.local_get(vr);
            fb.emit(lt);
            fb.emit(Op::I32_SUB);
        }
        fb.emit(Op::I32_ADD);
        fb.local_set(v);
    }
    auto c = fb.fresh_local(ValType::I32);
    fb.local_get(v);
    fb.i32_const(0);
    fb.emit(Op::I32_LT_S);
    fb.local_set(c);
    return c;
}

LocalIndex codegen::emit_partition(FuncBuilder &fb, const OrderSpec &order, const TupleLayout &layout,
                                   LocalIndex begin, LocalIndex end, LocalIndex pivot, const ExprEnv &env,
                                   PartitionBy by)
{
    check_stride(layout);
    const std::uint32_t stride = layout.stride();
    auto l = copy_of(fb, begin);
    auto r = copy_of(fb, end);
    auto rm1 = fb.fresh_local(ValType::I32);

    auto exit = fb.block();
    auto loop = fb.loop();
    fb.local_get(l);
    fb.local_get(r);
    fb.emit(Op::I32_GE_U);
    fb.br_if(exit);
    add_const(fb, rm1, r, -static_cast<std::int64_t>(stride));
    emit_swap(fb, layout, l, rm1);

    /* cr is the complement of the left predicate, so every iteration either advances a cursor or sets up a swap
     * that lets both advance next time, even when both ends equal the pivot. */
    LocalIndex cl, cr;
    if (by == PartitionBy::LESS) {
        cl = emit_compare(fb, order, layout, l, pivot, env);
        cr = emit_compare(fb, order, layout, rm1, pivot, env);
        fb.local_get(cr);
        fb.emit(Op::I32_EQZ);
        fb.local_set(cr);
    } else {
        cl = emit_compare(fb, order, layout, pivot, l, env);
        fb.local_get(cl);
        fb.emit(Op::I32_EQZ);
        fb.local_set(cl);
        cr = emit_compare(fb, order, layout, pivot, rm1, env);
    }
    fb.local_get(l);
    fb.local_get(cl);
    mul_const(fb, stride);
    fb.emit(Op::I32_ADD);
    fb.local_set(l);
    fb.local_get(r);
    fb.local_get(cr);
    mul_const(fb, stride);
    fb.emit(Op::I32_SUB);
    fb.local_set(r);
    fb.br(loop);
    fb.end();
    fb.end();
    return l;
}

LocalIndex codegen::emit_median_of_three(FuncBuilder &fb, const OrderSpec &order, const TupleLayout &layout,
                                         LocalIndex a, LocalIndex b, LocalIndex c, const ExprEnv &env)
{
    auto ab = emit_compare(fb, order, layout, a, b, env);
    auto bc = emit_compare(fb, order, layout, b, c, env);
    auto ac = emit_compare(fb, order, layout, a, c, env);
    /* a < b:  b < c ? b : (a < c ? c : a)
     * b <= a: a < c ? a : (b < c ? c : b) */
    fb.local_get(b);
    fb.local_get(c);
    fb.local_get(a);
    fb.local_get(ac);
    fb.emit(Op::SELECT);
    fb.local_get(bc);
    fb.emit(Op::SELECT);
    fb.local_get(a);
    fb.local_get(c);
    fb.local_get(b);
    fb.local_get(bc);
    fb.emit(Op::SELECT);
    fb.local_get(ac);
    fb.emit(Op::SELECT);
    fb.local_get(ab);
    fb.emit(Op::SELECT);
    auto m = fb.fresh_local(ValType::I32);
    fb.local_set(m);
    return m;
}

wasm::FuncIndex codegen::emit_quicksort(wasm::ModuleBuilder &module, const OrderSpec &order, const TupleLayout &layout,
                                        const ExprEnv &env, std::string name)
{
    check_stride(layout);
    const std::uint32_t stride = layout.stride();
    auto &fb = module.begin_function(wasm::FuncType{ { ValType::I32, ValType::I32 }, {} }, std::move(name));
    const auto begin = fb.param(0), end = fb.param(1);
    auto mid = fb.fresh_local(ValType::I32);
    auto last = fb.fresh_local(ValType::I32);
    auto first = fb.fresh_local(ValType::I32);
    auto before_mid = fb.fresh_local(ValType::I32);

    auto done = fb.block();
    auto loop = fb.loop();
    /* while (end - begin > 2 elements) */
    fb.local_get(end);
    fb.local_get(begin);
    fb.emit(Op::I32_SUB);
    fb.i32_const(static_cast<std::int32_t>(2 * stride));
    fb.emit(Op::I32_LE_U);
    fb.br_if(done);

    /* mid = begin + (n / 2) * stride */
    fb.local_get(begin);
    fb.local_get(end);
    fb.local_get(begin);
    fb.emit(Op::I32_SUB);
    fb.i32_const(static_cast<std::int32_t>(stride));
    fb.emit(Op::I32_DIV_U);
    fb.i32_const(1);
    fb.emit(Op::I32_SHR_U);
    mul_const(fb, stride);
    fb.emit(Op::I32_ADD);
    fb.local_set(mid);
    add_const(fb, last, end, -static_cast<std::int64_t>(stride));

    auto m = emit_median_of_three(fb, order, layout, begin, mid, last, env);
    emit_swap(fb, layout, begin, m);
    add_const(fb, first, begin, stride);
    auto split = emit_partition(fb, order, layout, first, end, begin, env, PartitionBy::LESS);
    add_const(fb, before_mid, split, -static_cast<std::int64_t>(stride));
    emit_swap(fb, layout, begin, before_mid);

    /* Nothing sorts before the pivot: split off the keys equal to it, which are in their final place. */
    fb.local_get(split);
    fb.local_get(first);
    fb.emit(Op::I32_EQ);
    fb.if_();
    auto equal_end = emit_partition(fb, order, layout, split, end, begin, env, PartitionBy::NOT_AFTER);
    fb.local_get(equal_end);
    fb.local_set(begin);
    fb.br(loop);
    fb.end();

    /* if (end - mid >= 2 elements) qsort(mid, end) */
    fb.local_get(end);
    fb.local_get(split);
    fb.emit(Op::I32_SUB);
    fb.i32_const(static_cast<std::int32_t>(2 * stride));
    fb.emit(Op::I32_GE_U);
    fb.if_();
    fb.local_get(split);
    fb.local_get(end);
    fb.call(fb.index());
    fb.end();
    fb.local_get(before_mid);
    fb.local_set(end);
    fb.br(loop);
    fb.end();
    fb.end();

    /* Two elements left: one compare and a guarded swap. */
    auto skip = fb.block();
    fb.local_get(end);
    fb.local_get(begin);
    fb.emit(Op::I32_SUB);
    fb.i32_const(static_cast<std::int32_t>(2 * stride));
    fb.emit(Op::I32_NE);
    fb.br_if(skip);
    auto second = fb.fresh_local(ValType::I32);
    add_const(fb, second, begin, stride);
    auto less = emit_compare(fb, order, layout, second, begin, env);
    fb.local_get(less);
    fb.emit(Op::I32_EQZ);
    fb.br_if(skip);
    emit_swap(fb, layout, begin, second);
    fb.end();
    fb.finish();
    return fb.index();
}


/*======================================================================================================================
 * Hashing
 *====================================================================================================================*/

FnvEmitter::FnvEmitter(FuncBuilder &fb) : fb_(fb), h_(fb.fresh_local(ValType::I64))
{
    fb_.i64_const(static_cast<std::int64_t>(FNV_OFFSET_BASIS));
    fb_.local_set(h_);
}

void FnvEmitter::add(DataType type)
{
    std::uint32_t bytes = 0;
    switch (type.kind) {
        case DataType::INT32:   fb_.emit(Op::I64_EXTEND_I32_U); bytes = 4; break;
        case DataType::BOOL:    fb_.emit(Op::I64_EXTEND_I32_U); bytes = 1; break;
        case DataType::INT64:   bytes = 8; break;
        case DataType::FLOAT64:
            fb_.f64_const(0.0);
            fb_.emit(Op::F64_ADD);
            fb_.emit(Op::I64_REINTERPRET_F64);
            bytes = 8;
            break;
        case DataType::CHAR: {
            auto p = fb_.fresh_local(ValType::I32);
            fb_.local_set(p);
            add_chars(p, type.length, type.length);
            return;
        }
    }
    auto x = fb_.fresh_local(ValType::I64);
    fb_.local_set(x);
    for (std::uint32_t k = 0; k != bytes; ++k) {
        fb_.local_get(h_);
        fb_.local_get(x);
        if (k) {
            fb_.i64_const(8 * k);
            fb_.emit(Op::I64_SHR_U);
        }
        fb_.i64_const(0xff);
        fb_.emit(Op::I64_AND);
        fb_.emit(Op::I64_XOR);
        fb_.i64_const(static_cast<std::int64_t>(FNV_PRIME));
        fb_.emit(Op::I64_MUL);
        fb_.local_set(h_);
    }
}

void FnvEmitter::add_chars(LocalIndex ptr, std::uint32_t length, std::uint32_t hashed_length)
{
    if (hashed_length < length) throw CodegenError("hashed length is shorter than the value");
    auto byte = [&](auto push_address, std::uint32_t offset) {
        fb_.local_get(h_);
        push_address();
        fb_.load(Op::I64_LOAD8_U, offset);
        fb_.emit(Op::I64_XOR);
        fb_.i64_const(static_cast<std::int64_t>(FNV_PRIME));
        fb_.emit(Op::I64_MUL);
        fb_.local_set(h_);
    };
    if (length <= 8) {
        for (std::uint32_t k = 0; k != length; ++k) byte([&] { fb_.local_get(ptr); }, k);
    } else {
        auto i = fb_.fresh_local(ValType::I32);
        set_i32(fb_, i, 0);
        auto loop = fb_.loop();
        byte([&] {
            fb_.local_get(ptr);
            fb_.local_get(i);
            fb_.emit(Op::I32_ADD);
        }, 0);
        fb_.local_get(i);
        fb_.i32_const(1);
        fb_.emit(Op::I32_ADD);
        fb_.local_tee(i);
        fb_.i32_const(static_cast<std::int32_t>(length));
        fb_.emit(Op::I32_LT_U);
        fb_.br_if(loop);
        fb_.end();
    }
    if (hashed_length > length) {
        /* Zero bytes leave the xor unchanged, so padding is a multiplication by a power of the prime. */
        std::uint64_t p = 1;
        for (std::uint32_t k = length; k != hashed_length; ++k) p *= FNV_PRIME;
        fb_.local_get(h_);
        fb_.i64_const(static_cast<std::int64_t>(p));
        fb_.emit(Op::I64_MUL);
        fb_.local_set(h_);
    }
}

LocalIndex codegen::emit_hash(FuncBuilder &fb, std::span<const std::size_t> keys, const TupleLayout &layout,
                              LocalIndex ptr)
{
    if (keys.empty()) throw CodegenError("hash over no keys");
    FnvEmitter fnv(fb);
    for (auto k : keys) {
        auto &f = layout.field(k);
        fb.local_get(ptr);
        emit_load(fb, f.type, f.offset);
        fnv.add(f.type);
    }
    return fnv.result();
}


/*======================================================================================================================
 * Heap
 *====================================================================================================================*/

void codegen::emit_fail(FuncBuilder &fb, std::uint32_t error_word, RuntimeError code)
{
    fb.i32_const(0);
    fb.i32_const(static_cast<std::int32_t>(code));
    fb.store(Op::I32_STORE, error_word);
    fb.emit(Op::UNREACHABLE);
}

LocalIndex codegen::emit_alloc(FuncBuilder &fb, const Heap &heap)
{
    auto size = fb.fresh_local(ValType::I64);
    auto next = fb.fresh_local(ValType::I64);
    auto p = fb.fresh_local(ValType::I32);
    fb.local_set(size);
    heap.top.push_base(fb);
    fb.load(Op::I32_LOAD, heap.top.offset);
    fb.local_tee(p);
    fb.emit(Op::I64_EXTEND_I32_U);
    fb.local_get(size);
    fb.emit(Op::I64_ADD);
    fb.local_tee(next);
    heap.end.push_base(fb);
    if (heap.end.offset) {
        fb.i32_const(static_cast<std::int32_t>(heap.end.offset));
        fb.emit(Op::I32_ADD);
    }
    fb.emit(Op::I64_EXTEND_I32_U);
    fb.emit(Op::I64_GT_U);
    fb.if_();
    emit_fail(fb, heap.error_word, RuntimeError::HEAP_EXHAUSTED);
    fb.end();
    heap.top.push_base(fb);
    fb.local_get(next);
    fb.emit(Op::I32_WRAP_I64);
    fb.store(Op::I32_STORE, heap.top.offset);
    return p;
}


/*======================================================================================================================
 * Hash tables
 *====================================================================================================================*/

TupleLayout HashTableSpec::slot_layout() const
{
    TupleLayout layout(1);
    for (auto &k : keys) layout.add(k.name, k.type, k.source);
    for (auto &p : payload) layout.add(p.name, p.type, p.source);
    return layout;
}

void HashTableSpec::check() const
{
    if (initial_capacity < 8 or not std::has_single_bit(initial_capacity))
        throw CodegenError("hash table capacity " + std::to_string(initial_capacity) +
                           " is not a power of two >= 8");
    if (load_num == 0 or load_num >= load_den) throw CodegenError("hash table load factor must be in (0, 1)");
    if (keys.empty()) throw CodegenError("hash table without keys");
    std::set<std::string> names;
    for (auto &k : keys)
        if (not names.insert(k.name).second) throw CodegenError("duplicate hash table key '" + k.name + "'");
    for (auto &p : payload)
        if (not names.insert(p.name).second) throw CodegenError("hash table field '" + p.name + "' is not unique");
}

HashTableEmitter::HashTableEmitter(FuncBuilder &fb, HashTableSpec spec, Heap heap, MemRef state)
    : fb_(fb), spec_(std::move(spec)), heap_(heap), state_(state)
{
    spec_.check();
    slot_ = spec_.slot_layout();
    base_ = fb_.fresh_local(ValType::I32);
    cap_ = fb_.fresh_local(ValType::I32);
    count_ = fb_.fresh_local(ValType::I32);
}

void HashTableEmitter::init()
{
    set_i32(fb_, cap_, static_cast<std::int32_t>(spec_.initial_capacity));
    fb_.i64_const(std::int64_t(spec_.initial_capacity) * slot_.stride());
    auto p = emit_alloc(fb_, heap_);
    fb_.local_get(p);
    fb_.local_set(base_);
    set_i32(fb_, count_, 0);
}

void HashTableEmitter::load()
{
    const LocalIndex locals[] = { base_, cap_, count_ };
    for (std::uint32_t i = 0; i != 3; ++i) {
        state_.push_base(fb_);
        fb_.load(Op::I32_LOAD, state_.offset + 4 * i);
        fb_.local_set(locals[i]);
    }
}

void HashTableEmitter::store()
{
    const LocalIndex locals[] = { base_, cap_, count_ };
    for (std::uint32_t i = 0; i != 3; ++i) {
        state_.push_base(fb_);
        fb_.local_get(locals[i]);
        fb_.store(Op::I32_STORE, state_.offset + 4 * i);
    }
}

LocalIndex HashTableEmitter::hash_values(std::span<const KeyValue> keys)
{
    if (keys.size() != spec_.keys.size())
        throw CodegenError("hash table expects " + std::to_string(spec_.keys.size()) + " keys, got " +
                           std::to_string(keys.size()));
    FnvEmitter fnv(fb_);
    for (std::size_t i = 0; i != keys.size(); ++i) {
        const DataType kt = spec_.keys[i].type;
        if (kt.is_char()) {
            if (not keys[i].type.is_char()) throw CodegenError("non-CHAR value for CHAR key");
            fnv.add_chars(keys[i].local, keys[i].type.length, kt.length);
        } else {
            fb_.local_get(keys[i].local);
            emit_convert(fb_, keys[i].type, kt);
            fnv.add(kt);
        }
    }
    return fnv.result();
}

void HashTableEmitter::push_keys_equal(LocalIndex slot, std::span<const KeyValue> keys)
{
    for (std::size_t i = 0; i != keys.size(); ++i) {
        auto &f = slot_.field(i);
        if (f.type.is_char()) {
            auto p = fb_.fresh_local(ValType::I32);
            add_const(fb_, p, slot, f.offset);
            emit_char_compare(fb_, p, f.type.length, keys[i].local, keys[i].type.length);
            fb_.emit(Op::I32_EQZ);
        } else {
            fb_.local_get(slot);
            emit_load(fb_, f.type, f.offset);
            fb_.local_get(keys[i].local);
            emit_convert(fb_, keys[i].type, f.type);
            switch (f.type.kind) {
                case DataType::INT64:   fb_.emit(Op::I64_EQ); break;
                case DataType::FLOAT64: fb_.emit(Op::F64_EQ); break;
                default:                fb_.emit(Op::I32_EQ); break;
            }
        }
        if (i) fb_.emit(Op::I32_AND);
    }
}

void HashTableEmitter::store_keys(LocalIndex slot, std::span<const KeyValue> keys)
{
    fb_.local_get(slot);
    fb_.i32_const(1);
    fb_.store(Op::I32_STORE8, 0);
    for (std::size_t i = 0; i != keys.size(); ++i) {
        auto &f = slot_.field(i);
        if (f.type.is_char()) {
            emit_copy_bytes(fb_, slot, f.offset, keys[i].local, 0, keys[i].type.length);
        } else {
            fb_.local_get(slot);
            fb_.local_get(keys[i].local);
            emit_convert(fb_, keys[i].type, f.type);
            emit_store(fb_, f.type, f.offset);
        }
    }
}

void HashTableEmitter::push_needs_growth()
{
    /* (count + 1) * den > cap * num, in 64 bits */
    fb_.local_get(count_);
    fb_.emit(Op::I64_EXTEND_I32_U);
    fb_.i64_const(1);
    fb_.emit(Op::I64_ADD);
    fb_.i64_const(spec_.load_den);
    fb_.emit(Op::I64_MUL);
    fb_.local_get(cap_);
    fb_.emit(Op::I64_EXTEND_I32_U);
    fb_.i64_const(spec_.load_num);
    fb_.emit(Op::I64_MUL);
    fb_.emit(Op::I64_GT_U);
}

void HashTableEmitter::slot_at(LocalIndex pos, LocalIndex slot)
{
    fb_.local_get(base_);
    fb_.local_get(pos);
    mul_const(fb_, slot_.stride());
    fb_.emit(Op::I32_ADD);
    fb_.local_set(slot);
}

void HashTableEmitter::grow()
{
    const std::uint32_t stride = slot_.stride();
    auto new_cap = fb_.fresh_local(ValType::I32);
    auto i = fb_.fresh_local(ValType::I32);
    auto old = fb_.fresh_local(ValType::I32);
    auto dst = fb_.fresh_local(ValType::I32);
    auto pos = fb_.fresh_local(ValType::I32);

    fb_.local_get(cap_);
    fb_.i32_const(1);
    fb_.emit(Op::I32_SHL);
    fb_.local_tee(new_cap);
    fb_.emit(Op::I64_EXTEND_I32_U);
    fb_.i64_const(stride);
    fb_.emit(Op::I64_MUL);
    auto new_base = emit_alloc(fb_, heap_);

    /* Rehash every occupied slot into the new array. */
    std::vector<std::size_t> key_fields(spec_.keys.size());
    for (std::size_t k = 0; k != key_fields.size(); ++k) key_fields[k] = k;
    set_i32(fb_, i, 0);
    auto exit = fb_.block();
    auto each = fb_.loop();
    fb_.local_get(i);
    fb_.local_get(cap_);
    fb_.emit(Op::I32_GE_U);
    fb_.br_if(exit);
    slot_at(i, old);
    fb_.local_get(old);
    fb_.load(Op::I32_LOAD8_U);
    fb_.if_();
    auto h = emit_hash(fb_, key_fields, slot_, old);
    fb_.local_get(h);
    fb_.emit(Op::I32_WRAP_I64);
    fb_.local_get(new_cap);
    fb_.i32_const(1);
    fb_.emit(Op::I32_SUB);
    fb_.emit(Op::I32_AND);
    fb_.local_set(pos);
    auto placed = fb_.block();
    auto find = fb_.loop();
    fb_.local_get(new_base);
    fb_.local_get(pos);
    mul_const(fb_, stride);
    fb_.emit(Op::I32_ADD);
    fb_.local_tee(dst);
    fb_.load(Op::I32_LOAD8_U);
    fb_.emit(Op::I32_EQZ);
    fb_.if_();
    emit_copy_words(fb_, dst, old, stride);
    fb_.br(placed);
    fb_.end();
    fb_.local_get(pos);
    fb_.i32_const(1);
    fb_.emit(Op::I32_ADD);
    fb_.local_get(new_cap);
    fb_.i32_const(1);
    fb_.emit(Op::I32_SUB);
    fb_.emit(Op::I32_AND);
    fb_.local_set(pos);
    fb_.br(find);
    fb_.end();
    fb_.end();
    fb_.end();
    add_const(fb_, i, i, 1);
    fb_.br(each);
    fb_.end();
    fb_.end();

    fb_.local_get(new_base);
    fb_.local_set(base_);
    fb_.local_get(new_cap);
    fb_.local_set(cap_);
}

namespace {

/** pos = (pos + 1) & (cap - 1) */
void advance(FuncBuilder &fb, LocalIndex pos, LocalIndex cap)
{
    fb.local_get(pos);
    fb.i32_const(1);
    fb.emit(Op::I32_ADD);
    fb.local_get(cap);
    fb.i32_const(1);
    fb.emit(Op::I32_SUB);
    fb.emit(Op::I32_AND);
    fb.local_set(pos);
}

void start_position(FuncBuilder &fb, LocalIndex h, LocalIndex cap, LocalIndex pos)
{
    fb.local_get(h);
    fb.emit(Op::I32_WRAP_I64);
    fb.local_get(cap);
    fb.i32_const(1);
    fb.emit(Op::I32_SUB);
    fb.emit(Op::I32_AND);
    fb.local_set(pos);
}

}

LocalIndex HashTableEmitter::insert_or_get(std::span<const KeyValue> keys, std::optional<LocalIndex> is_new)
{
    auto h = hash_values(keys);
    auto slot = fb_.fresh_local(ValType::I32);
    auto pos = fb_.fresh_local(ValType::I32);

    auto done = fb_.block();
    auto restart = fb_.loop();
    start_position(fb_, h, cap_, pos);
    auto probe = fb_.loop();
    slot_at(pos, slot);
    fb_.local_get(slot);
    fb_.load(Op::I32_LOAD8_U);
    fb_.emit(Op::I32_EQZ);
    fb_.if_();
    push_needs_growth();
    fb_.if_();
    grow();
    fb_.br(restart);
    fb_.end();
    store_keys(slot, keys);
    add_const(fb_, count_, count_, 1);
    if (is_new) set_i32(fb_, *is_new, 1);
    fb_.br(done);
    fb_.end();
    push_keys_equal(slot, keys);
    fb_.if_();
    if (is_new) set_i32(fb_, *is_new, 0);
    fb_.br(done);
    fb_.end();
    advance(fb_, pos, cap_);
    fb_.br(probe);
    fb_.end();
    fb_.end();
    fb_.end();
    return slot;
}

LocalIndex HashTableEmitter::insert(std::span<const KeyValue> keys)
{
    auto h = hash_values(keys);
    auto slot = fb_.fresh_local(ValType::I32);
    auto pos = fb_.fresh_local(ValType::I32);

    auto done = fb_.block();
    auto restart = fb_.loop();
    start_position(fb_, h, cap_, pos);
    auto probe = fb_.loop();
    slot_at(pos, slot);
    fb_.local_get(slot);
    fb_.load(Op::I32_LOAD8_U);
    fb_.emit(Op::I32_EQZ);
    fb_.if_();
    push_needs_growth();
    fb_.if_();
    grow();
    fb_.br(restart);
    fb_.end();
    store_keys(slot, keys);
    add_const(fb_, count_, count_, 1);
    fb_.br(done);
    fb_.end();
    advance(fb_, pos, cap_);
    fb_.br(probe);
    fb_.end();
    fb_.end();
    fb_.end();
    return slot;
}

void HashTableEmitter::probe(std::span<const KeyValue> keys,
                             const std::function<void(LocalIndex slot, wasm::Label next)> &body)
{
    auto h = hash_values(keys);
    auto slot = fb_.fresh_local(ValType::I32);
    auto pos = fb_.fresh_local(ValType::I32);
    start_position(fb_, h, cap_, pos);
    auto exit = fb_.block();
    auto loop = fb_.loop();
    slot_at(pos, slot);
    fb_.local_get(slot);
    fb_.load(Op::I32_LOAD8_U);
    fb_.emit(Op::I32_EQZ);
    fb_.br_if(exit);
    advance(fb_, pos, cap_);
    auto next = fb_.block();
    push_keys_equal(slot, keys);
    fb_.emit(Op::I32_EQZ);
    fb_.br_if(next);
    body(slot, next);
    fb_.end();
    fb_.br(loop);
    fb_.end();
    fb_.end();
}

void HashTableEmitter::scan(const std::function<void(LocalIndex slot, wasm::Label next)> &body)
{
    auto i = fb_.fresh_local(ValType::I32);
    auto slot = fb_.fresh_local(ValType::I32);
    set_i32(fb_, i, 0);
    auto exit = fb_.block();
    auto loop = fb_.loop();
    fb_.local_get(i);
    fb_.local_get(cap_);
    fb_.emit(Op::I32_GE_U);
    fb_.br_if(exit);
    slot_at(i, slot);
    add_const(fb_, i, i, 1);
    auto next = fb_.block();
    fb_.local_get(slot);
    fb_.load(Op::I32_LOAD8_U);
    fb_.emit(Op::I32_EQZ);
    fb_.br_if(next);
    body(slot, next);
    fb_.end();
    fb_.br(loop);
    fb_.end();
    fb_.end();
}
