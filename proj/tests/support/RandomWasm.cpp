#include "support/RandomWasm.hpp"

#include <cstring>
#include <string_view>


using namespace wasmql;
using namespace wasmql::wasm;
using wasmql::test::RandomModuleShape;


namespace {

constexpr ValType TYPES[] = { ValType::I32, ValType::I64, ValType::F32, ValType::F64 };

bool is_float(ValType t) { return t == ValType::F32 or t == ValType::F64; }

struct Gen
{
    std::mt19937_64 &rng;
    ModuleBuilder &mb;
    bool deterministic;
    GlobalIndex base, acc;
    std::optional<FuncIndex> host;
    FuncBuilder *fb = nullptr;
    std::vector<LocalIndex> locals;
    unsigned budget = 0; ///< remaining instructions for the current function

    std::vector<Op> numeric, loads, stores;

    Gen(std::mt19937_64 &rng, ModuleBuilder &mb, bool deterministic)
        : rng(rng), mb(mb), deterministic(deterministic)
    {
        for (unsigned c = 0; c != 256; ++c) {
            auto &info = op_info(std::uint8_t(c));
            std::string_view name = info.name ? info.name : "";
            switch (info.cls) {
                case OpClass::NUMERIC: {
                    const bool int_result = info.out and not is_float(*info.out);
                    const bool traps = (name.find("div") != name.npos and not is_float(*info.out)) or
                                       name.find("rem") != name.npos or
                                       (name.find(".trunc_") != name.npos and int_result);
                    const bool nan_bits = name.find("reinterpret") != name.npos or
                                          name.find("copysign") != name.npos;
                    if (deterministic and (traps or nan_bits)) continue;
                    numeric.push_back(Op(c));
                    break;
                }
                case OpClass::LOAD: loads.push_back(Op(c)); break;
                case OpClass::STORE: stores.push_back(Op(c)); break;
                default: break;
            }
        }
    }

    unsigned uniform(unsigned n) { return std::uniform_int_distribution<unsigned>(0, n - 1)(rng); }
    bool chance(double p) { return std::bernoulli_distribution(p)(rng); }
    ValType any_type() { return TYPES[uniform(4)]; }

    void constant(ValType t)
    {
        static constexpr std::int64_t SPECIAL[] = { 0, 1, -1, 2, 7, 31, 32, 63, 64, 255, 0x7fffffff, -0x80000000ll,
                                                    0x7fffffffffffffffll, std::numeric_limits<std::int64_t>::min() };
        std::int64_t v = chance(0.5) ? SPECIAL[uniform(std::size(SPECIAL))] : std::int64_t(rng());
        switch (t) {
            case ValType::I32: fb->i32_const(std::int32_t(v)); break;
            case ValType::I64: fb->i64_const(v); break;
            case ValType::F32: {
                static constexpr float F[] = { 0.f, -0.f, 1.f, -1.5f, 3.14f, 1e30f, -1e-30f,
                                               std::numeric_limits<float>::infinity() };
                fb->f32_const(chance(0.7) ? F[uniform(std::size(F))] : float(std::int32_t(v)) / 1024.f);
                break;
            }
            case ValType::F64: {
                static constexpr double F[] = { 0., -0., 1., -2.5, 3.14, 1e300, -1e-300,
                                                -std::numeric_limits<double>::infinity() };
                fb->f64_const(chance(0.7) ? F[uniform(std::size(F))] : double(v) / 4096.);
                break;
            }
        }
    }

    std::optional<LocalIndex> local_of(ValType t)
    {
        std::vector<LocalIndex> c;
        for (auto l : locals)
            if (fb->local_type(l) == t) c.push_back(l);
        if (c.empty()) return std::nullopt;
        return c[uniform(c.size())];
    }

    /** Pushes an address for an access of `width` bytes at static offset `offset`. */
    void address(unsigned width, std::uint32_t offset, bool float_store)
    {
        const std::uint32_t lo = float_store ? RandomModuleShape::INT_REGION : 0;
        const std::uint32_t span = RandomModuleShape::INT_REGION - width - offset;
        std::uint32_t a = lo + uniform(span + 1);
        a &= ~(width - 1); // aligned, to keep static alignment hints truthful
        if (chance(0.3)) {
            fb->global_get(base); // base is 0 at instantiation in the harness
            fb->i32_const(std::int32_t(a));
            fb->emit(Op::I32_ADD);
        } else {
            fb->i32_const(std::int32_t(a));
        }
    }

    static unsigned width_of(Op op)
    {
        std::string_view n = op_info(op).name;
        if (n.ends_with("8") or n.find("8_") != n.npos) return 1;
        if (n.ends_with("16") or n.find("16_") != n.npos) return 2;
        if (n.ends_with("32") or n.find("32_") != n.npos) return 4;
        return op_info(op).align == 3 ? 8 : 4;
    }

    void load(ValType t)
    {
        std::vector<Op> c;
        for (auto op : loads)
            if (*op_info(op).out == t) c.push_back(op);
        Op op = c[uniform(c.size())];
        unsigned w = width_of(op);
        std::uint32_t off = chance(0.5) ? 0 : w * uniform(4);
        address(w, off, false);
        if (is_float(t) and chance(0.5)) {
            // float loads may read the float region, shift the address up
            fb->i32_const(std::int32_t(RandomModuleShape::INT_REGION));
            fb->emit(Op::I32_ADD);
        }
        fb->load(op, off, chance(0.2) ? std::optional<std::uint8_t>(0) : std::nullopt);
    }

    void expr(ValType t, unsigned depth)
    {
        if (budget) --budget;
        const bool leaf = depth == 0 or budget == 0;
        unsigned choice = leaf ? uniform(3) : uniform(12);
        switch (choice) {
            case 0: constant(t); return;
            case 1:
                if (auto l = local_of(t)) { fb->local_get(*l); return; }
                constant(t);
                return;
            case 2:
                if (t == ValType::I64) { fb->global_get(acc); return; }
                if (t == ValType::I32) { fb->global_get(base); return; }
                constant(t);
                return;
            case 3: case 4: case 5: case 6: {
                std::vector<Op> c;
                for (auto op : numeric)
                    if (*op_info(op).out == t) c.push_back(op);
                Op op = c[uniform(c.size())];
                auto &info = op_info(op);
                expr(info.in[0], depth - 1);
                if (info.arity == 2) expr(info.in[1], depth - 1);
                fb->emit(op);
                return;
            }
            case 7: load(t); return;
            case 8:
                expr(t, depth - 1);
                expr(t, depth - 1);
                expr(ValType::I32, depth - 1);
                fb->emit(Op::SELECT);
                return;
            case 9: {
                expr(ValType::I32, depth - 1);
                fb->if_(t);
                stmts(depth - 1, 2);
                expr(t, depth - 1);
                fb->else_();
                expr(t, depth - 1);
                fb->end();
                return;
            }
            case 10: {
                /* A block that may leave early with a value. */
                auto l = fb->block(t);
                stmts(depth - 1, 2);
                if (chance(0.5)) {
                    expr(t, depth - 1);
                    expr(ValType::I32, depth - 1);
                    fb->br_if(l);
                    fb->emit(Op::DROP);
                }
                expr(t, depth - 1);
                fb->end();
                return;
            }
            default: {
                if (auto l = local_of(t); l and chance(0.5)) {
                    expr(t, depth - 1);
                    fb->local_tee(*l);
                    return;
                }
                if (not call(t, depth)) constant(t);
                return;
            }
        }
    }

    /** Emits a call to an earlier function returning `t`; false if there is none. */
    bool call(std::optional<ValType> t, unsigned depth)
    {
        std::vector<FuncIndex> c;
        for (std::uint32_t i = 0; i + 1 < mb.num_functions(); ++i) {
            auto &ft = mb.function_type(FuncIndex{ i });
            std::optional<ValType> r = ft.results.empty() ? std::nullopt : std::optional(ft.results[0]);
            if (r == t) c.push_back(FuncIndex{ i });
        }
        if (c.empty()) return false;
        auto f = c[uniform(c.size())];
        for (auto p : mb.function_type(f).params) expr(p, depth ? depth - 1 : 0);
        fb->call(f);
        return true;
    }

    void stmt(unsigned depth)
    {
        if (budget) --budget;
        switch (depth == 0 or budget == 0 ? uniform(3) : uniform(9)) {
            case 0: {
                ValType t = any_type();
                if (auto l = local_of(t)) {
                    expr(t, depth);
                    fb->local_set(*l);
                    return;
                }
                [[fallthrough]];
            }
            case 1: {
                Op op = stores[uniform(stores.size())];
                ValType t = op_info(op).in[1];
                unsigned w = width_of(op);
                std::uint32_t off = chance(0.5) ? 0 : w * uniform(4);
                address(w, off, is_float(t));
                expr(t, depth);
                fb->store(op, off);
                return;
            }
            case 2:
                expr(ValType::I64, depth);
                fb->global_set(acc);
                return;
            case 3:
                expr(any_type(), depth);
                fb->emit(Op::DROP);
                return;
            case 4:
                expr(ValType::I32, depth - 1);
                fb->if_();
                stmts(depth - 1, 3);
                if (chance(0.5)) {
                    fb->else_();
                    stmts(depth - 1, 3);
                }
                fb->end();
                return;
            case 5: {
                /* Bounded loop: counter from n down to 0. */
                auto counter = fb->fresh_local(ValType::I32);
                fb->i32_const(std::int32_t(1 + uniform(6)));
                fb->local_set(counter);
                auto l = fb->loop();
                stmts(depth - 1, 3);
                fb->local_get(counter);
                fb->i32_const(1);
                fb->emit(Op::I32_SUB);
                fb->local_tee(counter);
                fb->br_if(l);
                fb->end();
                return;
            }
            case 6: {
                auto l = fb->block();
                stmts(depth - 1, 2);
                expr(ValType::I32, depth - 1);
                fb->br_if(l);
                stmts(depth - 1, 2);
                fb->end();
                return;
            }
            case 7:
                if (host) {
                    expr(ValType::I64, depth - 1);
                    fb->call(*host);
                    fb->global_set(acc);
                    return;
                }
                [[fallthrough]];
            default:
                if (not call(std::nullopt, depth)) {
                    expr(ValType::I32, depth);
                    fb->emit(Op::DROP);
                }
                return;
        }
    }

    void stmts(unsigned depth, unsigned max)
    {
        for (unsigned n = uniform(max + 1); n; --n) stmt(depth);
    }

    void function(FuncType type, std::string name)
    {
        fb = &mb.begin_function(type, name);
        budget = 200;
        locals.clear();
        for (std::size_t i = 0; i != type.params.size(); ++i) locals.push_back(fb->param(i));
        for (unsigned n = uniform(5); n; --n) locals.push_back(fb->fresh_local(any_type()));
        stmts(4, 5);
        if (not type.results.empty()) {
            if (chance(0.2)) {
                expr(type.results[0], 3);
                fb->emit(Op::RETURN);
                // code after return is unreachable but must still type-check
                if (chance(0.5)) fb->emit(Op::DROP);
                expr(type.results[0], 1);
            } else {
                expr(type.results[0], 4);
            }
        }
        fb->finish();
        mb.export_function(name, fb->index());
    }
};

}

ModuleBuilder test::random_module(std::mt19937_64 &rng, bool deterministic, bool with_host)
{
    ModuleBuilder mb;
    mb.import_memory(1);
    Gen g(rng, mb, deterministic);
    g.base = mb.import_global("base", ValType::I32, false);
    g.acc = mb.import_global("acc", ValType::I64, true);
    if (with_host) g.host = mb.import_function("mix", { { ValType::I64 }, { ValType::I64 } });

    std::vector<std::uint8_t> init(RandomModuleShape::DATA_BYTES);
    for (std::size_t i = 0; i < init.size(); i += 8) {
        auto r = rng();
        std::memcpy(init.data() + i, &r, 8);
    }
    mb.add_data(std::nullopt, 0, init);

    for (unsigned n = g.uniform(4); n; --n) {
        FuncType t;
        for (unsigned p = g.uniform(4); p; --p) t.params.push_back(g.any_type());
        if (g.chance(0.8)) t.results.push_back(g.any_type());
        g.function(t, "f" + std::to_string(mb.num_functions()));
    }
    g.function({ {}, { ValType::I64 } }, "main");
    return mb;
}
