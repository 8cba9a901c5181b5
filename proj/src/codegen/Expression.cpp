#include "wasmql/codegen/Expression.hpp"

#include "wasmql/util/error.hpp"
#include <bit>


using namespace wasmql;
using namespace wasmql::codegen;
using wasm::Op;
using wasm::ValType;
using wasm::LocalIndex;


/*======================================================================================================================
 * Value representation
 *====================================================================================================================*/

ValType codegen::val_type(DataType type)
{
    switch (type.kind) {
        case DataType::INT64:   return ValType::I64;
        case DataType::FLOAT64: return ValType::F64;
        default:                return ValType::I32;
    }
}

void codegen::emit_load(wasm::FuncBuilder &fb, DataType type, std::uint32_t offset)
{
    switch (type.kind) {
        case DataType::INT32:   fb.load(Op::I32_LOAD, offset); break;
        case DataType::INT64:   fb.load(Op::I64_LOAD, offset); break;
        case DataType::FLOAT64: fb.load(Op::F64_LOAD, offset); break;
        case DataType::BOOL:    fb.load(Op::I32_LOAD8_U, offset); break;
        case DataType::CHAR:
            if (offset) {
                fb.i32_const(static_cast<std::int32_t>(offset));
                fb.emit(Op::I32_ADD);
            }
            break;
    }
}

void codegen::emit_store(wasm::FuncBuilder &fb, DataType type, std::uint32_t offset)
{
    switch (type.kind) {
        case DataType::INT32:   fb.store(Op::I32_STORE, offset); break;
        case DataType::INT64:   fb.store(Op::I64_STORE, offset); break;
        case DataType::FLOAT64: fb.store(Op::F64_STORE, offset); break;
        case DataType::BOOL:    fb.store(Op::I32_STORE8, offset); break;
        case DataType::CHAR:    throw CodegenError("CHAR values are copied, not stored");
    }
}

void codegen::emit_convert(wasm::FuncBuilder &fb, DataType from, DataType to)
{
    if (from.kind == to.kind) return;
    if (from.kind == DataType::INT32 and to.kind == DataType::INT64) {
        fb.emit(Op::I64_EXTEND_I32_S);
        return;
    }
    throw CodegenError("no conversion from " + from.to_string() + " to " + to.to_string());
}

void codegen::emit_copy_bytes(wasm::FuncBuilder &fb, LocalIndex dst, std::uint32_t dst_offset, LocalIndex src,
                              std::uint32_t src_offset, std::uint32_t n)
{
    std::uint32_t k = 0;
    auto chunk = [&](std::uint32_t w, Op load, Op store) {
        while (n - k >= w) {
            fb.local_get(dst);
            fb.local_get(src);
            fb.load(load, src_offset + k, 0);
            fb.store(store, dst_offset + k, 0);
            k += w;
        }
    };
    chunk(8, Op::I64_LOAD, Op::I64_STORE);
    chunk(4, Op::I32_LOAD, Op::I32_STORE);
    chunk(2, Op::I32_LOAD16_U, Op::I32_STORE16);
    chunk(1, Op::I32_LOAD8_U, Op::I32_STORE8);
}

void codegen::emit_copy_words(wasm::FuncBuilder &fb, LocalIndex dst, LocalIndex src, std::uint32_t n)
{
    if (n % 8) throw CodegenError("word copy of " + std::to_string(n) + " bytes");
    if (n <= 128) {
        for (std::uint32_t k = 0; k != n; k += 8) {
            fb.local_get(dst);
            fb.local_get(src);
            fb.load(Op::I64_LOAD, k);
            fb.store(Op::I64_STORE, k);
        }
        return;
    }
    auto i = fb.fresh_local(ValType::I32);
    fb.i32_const(0);
    fb.local_set(i);
    auto loop = fb.loop();
    fb.local_get(dst);
    fb.local_get(i);
    fb.emit(Op::I32_ADD);
    fb.local_get(src);
    fb.local_get(i);
    fb.emit(Op::I32_ADD);
    fb.load(Op::I64_LOAD);
    fb.store(Op::I64_STORE);
    fb.local_get(i);
    fb.i32_const(8);
    fb.emit(Op::I32_ADD);
    fb.local_tee(i);
    fb.i32_const(static_cast<std::int32_t>(n));
    fb.emit(Op::I32_LT_U);
    fb.br_if(loop);
    fb.end();
}

void codegen::emit_char_compare(wasm::FuncBuilder &fb, LocalIndex a, std::uint32_t la, LocalIndex b, std::uint32_t lb)
{
    auto res = fb.fresh_local(ValType::I32);
    auto i = fb.fresh_local(ValType::I32);
    auto x = fb.fresh_local(ValType::I32);
    auto y = fb.fresh_local(ValType::I32);
    const std::uint32_t common = std::min(la, lb);
    fb.i32_const(0);
    fb.local_set(res);
    fb.i32_const(0);
    fb.local_set(i);

    auto done = fb.block();
    if (common) {
        auto loop = fb.loop();
        fb.local_get(a);
        fb.local_get(i);
        fb.emit(Op::I32_ADD);
        fb.load(Op::I32_LOAD8_U);
        fb.local_set(x);
        fb.local_get(b);
        fb.local_get(i);
        fb.emit(Op::I32_ADD);
        fb.load(Op::I32_LOAD8_U);
        fb.local_set(y);
        fb.local_get(x);
        fb.local_get(y);
        fb.emit(Op::I32_GT_U);
        fb.local_get(x);
        fb.local_get(y);
        fb.emit(Op::I32_LT_U);
        fb.emit(Op::I32_SUB);
        fb.local_tee(res);
        fb.br_if(done);
        fb.local_get(i);
        fb.i32_const(1);
        fb.emit(Op::I32_ADD);
        fb.local_tee(i);
        fb.i32_const(static_cast<std::int32_t>(common));
        fb.emit(Op::I32_LT_U);
        fb.br_if(loop);
        fb.end();
    }
    if (la != lb) {
        /* The longer string is greater iff its tail has a nonzero byte. */
        auto longer = la > lb ? a : b;
        auto loop = fb.loop();
        if (la < lb) fb.i32_const(0);
        fb.local_get(longer);
        fb.local_get(i);
        fb.emit(Op::I32_ADD);
        fb.load(Op::I32_LOAD8_U);
        fb.i32_const(0);
        fb.emit(Op::I32_NE);
        if (la < lb) fb.emit(Op::I32_SUB);
        fb.local_tee(res);
        fb.br_if(done);
        fb.local_get(i);
        fb.i32_const(1);
        fb.emit(Op::I32_ADD);
        fb.local_tee(i);
        fb.i32_const(static_cast<std::int32_t>(std::max(la, lb)));
        fb.emit(Op::I32_LT_U);
        fb.br_if(loop);
        fb.end();
    }
    fb.end();
    fb.local_get(res);
}

void MemRef::push_base(wasm::FuncBuilder &fb) const
{
    if (base) fb.global_get(*base);
    else fb.i32_const(0);
}


/*======================================================================================================================
 * Bindings
 *====================================================================================================================*/

Bindings codegen::bind_tuple(const TupleLayout &layout, LocalIndex ptr, std::size_t scope_size)
{
    Bindings b(scope_size);
    for (auto &f : layout.fields()) {
        if (not f.source) continue;
        if (*f.source >= scope_size) throw CodegenError("layout field '" + f.name + "' is outside the scope");
        b[*f.source] = Binding{ f.type, TupleSlot{ ptr, f.offset } };
    }
    return b;
}

Bindings codegen::bind_fields(const TupleLayout &layout, LocalIndex ptr)
{
    Bindings b;
    for (auto &f : layout.fields()) b.push_back(Binding{ f.type, TupleSlot{ ptr, f.offset } });
    return b;
}


/*======================================================================================================================
 * LiteralPool
 *====================================================================================================================*/

std::uint32_t LiteralPool::intern(const std::string &text, std::uint16_t length)
{
    auto [it, fresh] = offsets_.try_emplace({ text, length }, static_cast<std::uint32_t>(bytes_.size()));
    if (fresh) {
        bytes_.insert(bytes_.end(), text.begin(), text.end());
        bytes_.resize(it->second + length, 0);
    }
    return it->second;
}

void LiteralPool::collect(const Expr &expr)
{
    std::visit([&](auto &n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Literal>) {
            if (n.type.is_char()) intern(std::get<std::string>(n.value), n.type.length);
        } else if constexpr (std::is_same_v<T, Arith> or std::is_same_v<T, Cmp>) {
            collect(*n.left);
            collect(*n.right);
        } else if constexpr (std::is_same_v<T, Logic>) {
            for (auto &o : n.operands) collect(*o);
        }
    }, expr.node);
}

std::optional<std::uint32_t> LiteralPool::find(const std::string &text, std::uint16_t length) const
{
    auto it = offsets_.find({ text, length });
    if (it == offsets_.end()) return std::nullopt;
    return it->second;
}


/*======================================================================================================================
 * ExprCompiler
 *====================================================================================================================*/

namespace {

DataType type_of(const Expr &e)
{
    if (not e.type) throw CodegenError("expression is not annotated: " + to_string(e));
    return *e.type;
}

}

void ExprCompiler::push_binding(wasm::FuncBuilder &fb, const Binding &b)
{
    std::visit([&](auto &w) {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, LocalSlot>) {
            fb.local_get(w.local);
        } else if constexpr (std::is_same_v<T, TupleSlot>) {
            fb.local_get(w.ptr);
            emit_load(fb, b.type, w.offset);
        } else {
            const auto width = static_cast<std::uint32_t>(b.type.width());
            fb.global_get(w.base);
            fb.local_get(w.row);
            if (std::has_single_bit(width)) {
                if (width > 1) {
                    fb.i32_const(std::countr_zero(width));
                    fb.emit(Op::I32_SHL);
                }
            } else {
                fb.i32_const(static_cast<std::int32_t>(width));
                fb.emit(Op::I32_MUL);
            }
            fb.emit(Op::I32_ADD);
            emit_load(fb, b.type);
        }
    }, b.where);
}

void ExprCompiler::push(const Expr &expr)
{
    std::visit([&](auto &n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ColumnRef>) push_column(n);
        else if constexpr (std::is_same_v<T, Literal>) push_literal(n);
        else if constexpr (std::is_same_v<T, Arith>) push_arith(n, type_of(expr));
        else if constexpr (std::is_same_v<T, Cmp>) push_cmp(n);
        else push_logic(n);
    }, expr.node);
}

void ExprCompiler::push_as(const Expr &expr, DataType type)
{
    push(expr);
    emit_convert(fb_, type_of(expr), type);
}

LocalIndex ExprCompiler::compile(const Expr &expr)
{
    push(expr);
    auto l = fb_.fresh_local(val_type(type_of(expr)));
    fb_.local_set(l);
    return l;
}

LocalIndex ExprCompiler::compile_as(const Expr &expr, DataType type)
{
    push_as(expr, type);
    auto l = fb_.fresh_local(val_type(type));
    fb_.local_set(l);
    return l;
}

void ExprCompiler::push_column(const ColumnRef &ref)
{
    if (not ref.index) throw CodegenError("column reference '" + ref.column + "' is not annotated");
    if (*ref.index >= bindings_.size() or not bindings_[*ref.index])
        throw CodegenError("unbound column '" + (ref.table.empty() ? "" : ref.table + ".") + ref.column + "'");
    push_binding(fb_, *bindings_[*ref.index]);
}

void ExprCompiler::push_literal(const Literal &lit)
{
    switch (lit.type.kind) {
        case DataType::INT32:   fb_.i32_const(std::get<std::int32_t>(lit.value)); break;
        case DataType::INT64:   fb_.i64_const(std::get<std::int64_t>(lit.value)); break;
        case DataType::FLOAT64: fb_.f64_const(std::get<double>(lit.value)); break;
        case DataType::BOOL:    fb_.i32_const(std::get<bool>(lit.value) ? 1 : 0); break;
        case DataType::CHAR: {
            std::optional<std::uint32_t> off;
            if (env_.literals) off = env_.literals->find(std::get<std::string>(lit.value), lit.type.length);
            if (not off or not env_.literal_base)
                throw CodegenError("CHAR literal '" + std::get<std::string>(lit.value) + "' is not in the literal pool");
            fb_.global_get(*env_.literal_base);
            if (*off) {
                fb_.i32_const(static_cast<std::int32_t>(*off));
                fb_.emit(Op::I32_ADD);
            }
            break;
        }
    }
}

void ExprCompiler::push_arith(const Arith &a, DataType type)
{
    push_as(*a.left, type);
    push_as(*a.right, type);
    static constexpr Op I32[] = { Op::I32_ADD, Op::I32_SUB, Op::I32_MUL, Op::I32_DIV_S };
    static constexpr Op I64[] = { Op::I64_ADD, Op::I64_SUB, Op::I64_MUL, Op::I64_DIV_S };
    static constexpr Op F64[] = { Op::F64_ADD, Op::F64_SUB, Op::F64_MUL, Op::F64_DIV };
    const auto k = static_cast<std::size_t>(a.op);
    switch (type.kind) {
        case DataType::INT32:   fb_.emit(I32[k]); break;
        case DataType::INT64:   fb_.emit(I64[k]); break;
        case DataType::FLOAT64: fb_.emit(F64[k]); break;
        default: throw CodegenError("arithmetic over " + type.to_string());
    }
}

void ExprCompiler::push_cmp(const Cmp &c)
{
    const DataType lt = type_of(*c.left), rt = type_of(*c.right);
    auto common = common_type(lt, rt);
    if (not common) throw CodegenError("comparison of " + lt.to_string() + " and " + rt.to_string());
    const auto k = static_cast<std::size_t>(c.op); // LT, LE, EQ, NE, GE, GT
    static constexpr Op I32S[] = { Op::I32_LT_S, Op::I32_LE_S, Op::I32_EQ, Op::I32_NE, Op::I32_GE_S, Op::I32_GT_S };
    static constexpr Op I32U[] = { Op::I32_LT_U, Op::I32_LE_U, Op::I32_EQ, Op::I32_NE, Op::I32_GE_U, Op::I32_GT_U };
    static constexpr Op I64S[] = { Op::I64_LT_S, Op::I64_LE_S, Op::I64_EQ, Op::I64_NE, Op::I64_GE_S, Op::I64_GT_S };
    static constexpr Op F64[] = { Op::F64_LT, Op::F64_LE, Op::F64_EQ, Op::F64_NE, Op::F64_GE, Op::F64_GT };

    if (common->is_char()) {
        auto a = compile(*c.left);
        auto b = compile(*c.right);
        emit_char_compare(fb_, a, lt.length, b, rt.length);
        fb_.i32_const(0);
        fb_.emit(I32S[k]);
        return;
    }
    push_as(*c.left, *common);
    push_as(*c.right, *common);
    switch (common->kind) {
        case DataType::INT32:   fb_.emit(I32S[k]); break;
        case DataType::BOOL:    fb_.emit(I32U[k]); break;
        case DataType::INT64:   fb_.emit(I64S[k]); break;
        case DataType::FLOAT64: fb_.emit(F64[k]); break;
        default: break;
    }
}

void ExprCompiler::push_logic(const Logic &l)
{
    if (l.op == LogicOp::NOT) {
        push(*l.operands.at(0));
        fb_.emit(Op::I32_EQZ);
        return;
    }
    bool short_circuit = env_.short_circuit == ShortCircuit::ALWAYS;
    if (env_.short_circuit == ShortCircuit::AUTO) {
        /* Only worth a branch if a later operand is costly to evaluate. */
        for (std::size_t i = 1; i < l.operands.size(); ++i)
            if (classify_predicate(l.operands[i]) == CheapnessClass::COSTLY) short_circuit = true;
    }
    const bool is_and = l.op == LogicOp::AND;
    if (not short_circuit) {
        push(*l.operands[0]);
        for (std::size_t i = 1; i != l.operands.size(); ++i) {
            push(*l.operands[i]);
            fb_.emit(is_and ? Op::I32_AND : Op::I32_OR);
        }
        return;
    }
    /* a AND b AND c  =>  a ? (b ? c : 0) : 0;  a OR b OR c  =>  a ? 1 : (b ? 1 : c) */
    push(*l.operands[0]);
    auto rest = [&](auto &self, std::size_t i) -> void {
        if (i == l.operands.size()) return;
        fb_.if_(ValType::I32);
        if (is_and) {
            push(*l.operands[i]);
            self(self, i + 1);
            fb_.else_();
            fb_.i32_const(0);
        } else {
            fb_.i32_const(1);
            fb_.else_();
            push(*l.operands[i]);
            self(self, i + 1);
        }
        fb_.end();
    };
    rest(rest, 1);
}

LocalIndex codegen::compile_expression(wasm::FuncBuilder &fb, const Expr &expr, const Bindings &bindings, ExprEnv env)
{
    return ExprCompiler(fb, bindings, env).compile(expr);
}
