#include "support/RandomWasm.hpp"
#include "wasmql/runtime/Engine.hpp"
#include "wasmql/util/error.hpp"
#include "wasmql/wasm/Decoder.hpp"

#include <bit>
#include <catch_amalgamated.hpp>
#include <cmath>
#include <cstring>


using namespace wasmql;
using namespace wasmql::wasm;
using Catch::Matchers::ContainsSubstring;


namespace {

constexpr ValType I32 = ValType::I32;
constexpr ValType I64 = ValType::I64;
constexpr ValType F64 = ValType::F64;

/** A module with one exported function `f` of type `type`, built by `body`. */
template<typename Body>
std::vector<std::uint8_t> single(FuncType type, Body body, std::uint32_t pages = 1)
{
    ModuleBuilder mb;
    mb.import_memory(pages);
    auto &f = mb.begin_function(type, "f");
    body(f);
    f.finish();
    mb.export_function("f", f.index());
    return mb.finish();
}

std::vector<std::string> engines() { return available_engines(); }

ImportValues random_imports()
{
    ImportValues iv;
    iv.memory_pages = 1;
    iv.globals = { { "base", 0 }, { "acc", 0x1234 } };
    iv.functions.push_back({ "mix", { { I64 }, { I64 } }, [](std::span<const RawValue> a) -> std::optional<RawValue> {
        return a[0] * 31 + 7;
    } });
    return iv;
}

struct Outcome
{
    std::optional<std::string> trap;
    RawValue result = 0;
    RawValue acc = 0;
    std::vector<std::byte> ints; ///< the integer region of memory

    bool operator==(const Outcome &o) const
    {
        if (trap or o.trap) return trap.has_value() == o.trap.has_value();
        // main returns an i64; NaN never reaches it in deterministic programs
        return result == o.result and acc == o.acc and ints == o.ints;
    }
};

Outcome run_random(Engine &engine, std::span<const std::uint8_t> bytes)
{
    auto inst = engine.compile(bytes)->instantiate(random_imports());
    Outcome out;
    try {
        out.result = inst->call("main").value();
    } catch (const TrapError &e) {
        out.trap = e.what();
    }
    out.acc = inst->global("acc");
    auto mem = inst->memory();
    out.ints.assign(mem.begin(), mem.begin() + test::RandomModuleShape::INT_REGION);
    return out;
}

}


TEST_CASE("engines run a scan loop", "[engine]")
{
    for (auto &name : engines()) {
        INFO(name);
        auto engine = make_engine(name);
        CHECK(engine->name() == name);

        /* sum of i32 values in [ptr, ptr + 4n) */
        auto bytes = single({ { I32, I32 }, { I64 } }, [](FuncBuilder &f) {
            auto sum = f.fresh_local(I64);
            auto end = f.fresh_local(I32);
            f.local_get(f.param(0));
            f.local_get(f.param(1));
            f.i32_const(4);
            f.emit(Op::I32_MUL);
            f.emit(Op::I32_ADD);
            f.local_set(end);
            auto exit = f.block();
            auto loop = f.loop();
            f.local_get(f.param(0));
            f.local_get(end);
            f.emit(Op::I32_GE_U);
            f.br_if(exit);
            f.local_get(sum);
            f.local_get(f.param(0));
            f.load(Op::I64_LOAD32_S);
            f.emit(Op::I64_ADD);
            f.local_set(sum);
            f.local_get(f.param(0));
            f.i32_const(4);
            f.emit(Op::I32_ADD);
            f.local_set(f.param(0));
            f.br(loop);
            f.end();
            f.end();
            f.local_get(sum);
        });
        for (auto level : { OptLevel::FAST, OptLevel::OPTIMIZING }) {
            auto inst = engine->compile(bytes, level)->instantiate({});
            auto mem = inst->memory();
            REQUIRE(mem.size() == ModuleBuilder::PAGE_SIZE);
            std::int64_t expect = 0;
            for (std::int32_t i = 0; i != 1000; ++i) {
                std::int32_t v = i * 7919 - 3000000;
                std::memcpy(mem.data() + 64 + 4 * i, &v, 4);
                expect += v;
            }
            RawValue args[] = { 64, 1000 };
            CHECK(std::int64_t(inst->call("f", args).value()) == expect);
        }
    }
}

TEST_CASE("traps are reported alike", "[engine]")
{
    struct Case
    {
        const char *name;
        std::vector<std::uint8_t> bytes;
        const char *reason;
    };
    std::vector<Case> cases;
    cases.push_back({ "div by zero", single({ {}, { I32 } }, [](FuncBuilder &f) {
        f.i32_const(1);
        f.i32_const(0);
        f.emit(Op::I32_DIV_S);
    }), "integer divide by zero" });
    cases.push_back({ "INT_MIN / -1", single({ {}, { I64 } }, [](FuncBuilder &f) {
        f.i64_const(std::numeric_limits<std::int64_t>::min());
        f.i64_const(-1);
        f.emit(Op::I64_DIV_S);
    }), "integer overflow" });
    cases.push_back({ "out of bounds", single({ {}, { I32 } }, [](FuncBuilder &f) {
        f.i32_const(65533);
        f.load(Op::I32_LOAD);
    }), "out of bounds memory access" });
    cases.push_back({ "offset out of bounds", single({ {}, {} }, [](FuncBuilder &f) {
        f.i32_const(-1);
        f.i32_const(0);
        f.store(Op::I32_STORE8, 1);
    }), "out of bounds memory access" });
    cases.push_back({ "unreachable", single({ {}, {} }, [](FuncBuilder &f) { f.emit(Op::UNREACHABLE); }), "unreachable" });
    cases.push_back({ "NaN to int", single({ {}, { I32 } }, [](FuncBuilder &f) {
        f.f64_const(std::nan(""));
        f.emit(Op::I32_TRUNC_F64_S);
    }), "invalid conversion to integer" });
    cases.push_back({ "trunc overflow", single({ {}, { I32 } }, [](FuncBuilder &f) {
        f.f64_const(4294967296.0);
        f.emit(Op::I32_TRUNC_F64_U);
    }), "integer overflow" });
    cases.push_back({ "infinite recursion", single({ {}, {} }, [](FuncBuilder &f) { f.call(f.index()); }),
                      "call stack exhausted" });

    for (auto &name : engines()) {
        auto engine = make_engine(name);
        for (auto &c : cases) {
            INFO(name << ": " << c.name);
            auto inst = engine->compile(c.bytes)->instantiate({});
            CHECK_THROWS_WITH(inst->call("f"), ContainsSubstring(c.reason));
        }
    }
}

TEST_CASE("numeric edge cases agree with hand-computed values", "[engine]")
{
    struct Case
    {
        std::function<void(FuncBuilder&)> body;
        ValType type;
        RawValue expect;
    };
    auto bin = [](Op op, auto a, auto b) {
        return [=](FuncBuilder &f) {
            if constexpr (std::is_same_v<decltype(a), std::int32_t>) { f.i32_const(a); f.i32_const(b); }
            else if constexpr (std::is_same_v<decltype(a), std::int64_t>) { f.i64_const(a); f.i64_const(b); }
            else { f.f64_const(a); f.f64_const(b); }
            f.emit(op);
        };
    };
    std::vector<Case> cases = {
        { bin(Op::I32_REM_S, std::int32_t(INT32_MIN), std::int32_t(-1)), I32, 0 },
        { bin(Op::I32_SHL, std::int32_t(1), std::int32_t(33)), I32, 2 },
        { bin(Op::I32_SHR_S, std::int32_t(-8), std::int32_t(1)), I32, 0xfffffffcu },
        { bin(Op::I32_ROTL, std::int32_t(0x80000001), std::int32_t(1)), I32, 3 },
        { bin(Op::I64_MUL, std::int64_t(INT64_MAX), std::int64_t(2)), I64, RawValue(-2) },
        { bin(Op::I32_ADD, std::int32_t(INT32_MAX), std::int32_t(1)), I32, 0x80000000u },
        { bin(Op::F64_MIN, -0.0, 0.0), F64, std::bit_cast<RawValue>(-0.0) },
        { bin(Op::F64_MAX, -0.0, 0.0), F64, 0 },
        { [](FuncBuilder &f) { f.f64_const(2.5); f.emit(Op::F64_NEAREST); }, F64, std::bit_cast<RawValue>(2.0) },
        { [](FuncBuilder &f) { f.f64_const(-3.5); f.emit(Op::F64_NEAREST); }, F64, std::bit_cast<RawValue>(-4.0) },
        { [](FuncBuilder &f) { f.i32_const(0); f.emit(Op::I32_CLZ); }, I32, 32 },
        { [](FuncBuilder &f) { f.i64_const(-1); f.emit(Op::F64_CONVERT_I64_U); }, F64,
          std::bit_cast<RawValue>(18446744073709551616.0) },
        { [](FuncBuilder &f) { f.f64_const(-0.9); f.emit(Op::I32_TRUNC_F64_U); }, I32, 0 },
        { [](FuncBuilder &f) { f.f64_const(-2147483648.9); f.emit(Op::I32_TRUNC_F64_S); }, I32, 0x80000000u },
        { [](FuncBuilder &f) { f.i32_const(-5); f.emit(Op::I64_EXTEND_I32_U); }, I64, 0xfffffffbu },
        { [](FuncBuilder &f) { f.i32_const(-5); f.emit(Op::I64_EXTEND_I32_S); }, I64, RawValue(-5) },
    };
    for (auto &name : engines()) {
        auto engine = make_engine(name);
        for (std::size_t i = 0; i != cases.size(); ++i) {
            INFO(name << " case " << i);
            auto bytes = single({ {}, { cases[i].type } }, cases[i].body);
            CHECK(engine->compile(bytes)->instantiate({})->call("f") == cases[i].expect);
        }
    }
}

TEST_CASE("host functions, globals and data segments", "[engine]")
{
    ModuleBuilder mb;
    mb.import_memory(2);
    auto base = mb.import_global("base", I32);
    auto counter = mb.import_global("counter", I64, true);
    auto host = mb.import_function("twice", { { I32 }, { I32 } });
    auto fail = mb.import_function("fail", { {}, {} });
    mb.add_data(base, 0, { 1, 2, 3, 4 });
    auto &f = mb.begin_function({ { I32 }, { I32 } }, "f");
    f.global_get(counter);
    f.i64_const(1);
    f.emit(Op::I64_ADD);
    f.global_set(counter);
    f.global_get(base);
    f.load(Op::I32_LOAD);
    f.local_get(f.param(0));
    f.call(host);
    f.emit(Op::I32_ADD);
    f.finish();
    mb.export_function("f", f.index());
    auto &g = mb.begin_function({ {}, {} }, "g");
    g.call(fail);
    g.finish();
    mb.export_function("g", g.index());
    auto bytes = mb.finish();

    for (auto &name : engines()) {
        INFO(name);
        auto engine = make_engine(name);
        auto compiled = engine->compile(bytes);
        ImportValues iv;
        iv.memory_pages = 2;
        iv.globals = { { "base", 70000 }, { "counter", 41 } };
        int calls = 0;
        iv.functions.push_back({ "twice", { { I32 }, { I32 } }, [&](std::span<const RawValue> a) -> std::optional<RawValue> {
            ++calls;
            return RawValue(std::uint32_t(a[0]) * 2);
        } });
        iv.functions.push_back({ "fail", { {}, {} }, [](std::span<const RawValue>) -> std::optional<RawValue> {
            throw std::logic_error("host says no");
        } });
        auto inst = compiled->instantiate(iv);
        REQUIRE(inst->memory().size() == 2 * ModuleBuilder::PAGE_SIZE);
        RawValue arg[] = { 5 };
        CHECK(inst->call("f", arg) == RawValue(0x04030201 + 10));
        CHECK(inst->global("counter") == 42);
        CHECK(calls == 1);
        CHECK_THROWS_WITH(inst->call("g"), "host says no");
        CHECK(inst->call("f", arg) == RawValue(0x04030201 + 10));

        ImportValues missing = iv;
        missing.globals.erase("base");
        CHECK_THROWS_AS(compiled->instantiate(missing), EngineError);
        ImportValues small = iv;
        small.memory_pages = 1;
        CHECK_THROWS_AS(compiled->instantiate(small), EngineError);
        ImportValues wrong = iv;
        wrong.functions[0].type = { { I64 }, { I32 } };
        CHECK_THROWS_AS(compiled->instantiate(wrong), EngineError);
    }
}

TEST_CASE("engines reject invalid binaries", "[engine]")
{
    /* (func (result i32) i64.const 0) encoded by hand */
    std::vector<std::uint8_t> bad = { 0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00,
                                      0x01, 0x05, 0x01, 0x60, 0x00, 0x01, 0x7f,
                                      0x03, 0x02, 0x01, 0x00,
                                      0x0a, 0x06, 0x01, 0x04, 0x00, 0x42, 0x00, 0x0b };
    std::vector<std::uint8_t> truncated(bad.begin(), bad.end() - 3);
    for (auto &name : engines()) {
        INFO(name);
        auto engine = make_engine(name);
        CHECK_THROWS_AS(engine->compile(bad), EngineError);
        CHECK_THROWS_AS(engine->compile(truncated), EngineError);
        bad[24] = 0x41; // i32.const: now valid
        CHECK_NOTHROW(engine->compile(bad));
        bad[24] = 0x42;
    }
    CHECK_THROWS_AS(make_engine("nope"), EngineError);
}

TEST_CASE("decoder inverts the encoder", "[engine][fuzz]")
{
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        std::mt19937_64 rng(seed);
        auto mb = test::random_module(rng, true, seed % 2);
        auto bytes = mb.finish();
        auto d = decode_module(bytes);
        REQUIRE(d.code.size() + d.num_imported_functions() == mb.num_functions());
        for (std::uint32_t i = 0; i != d.code.size(); ++i) {
            auto &f = mb.function(FuncIndex{ std::uint32_t(i + d.num_imported_functions()) });
            REQUIRE(std::equal(d.code[i].locals.begin(), d.code[i].locals.end(), f.declared_locals().begin(),
                               f.declared_locals().end()));
            auto decoded = decode_body(d.code[i].body);
            auto body = f.body();
            REQUIRE(decoded.size() == body.size());
            for (std::size_t k = 0; k != body.size(); ++k) {
                INFO("seed " << seed << " function " << i << " instruction " << k);
                REQUIRE(decoded[k].op == body[k].op);
                REQUIRE(decoded[k].imm == body[k].imm);
                REQUIRE(decoded[k].offset == body[k].offset);
                REQUIRE(decoded[k].align == body[k].align);
            }
        }
        REQUIRE(d.function_names.size() == mb.num_functions()); // imports are named too
    }
}

TEST_CASE("interpreter agrees with wasmtime on random programs", "[engine][fuzz]")
{
    auto names = engines();
    if (names.size() < 2) SKIP("only one engine available");
    auto a = make_engine("wasmtime");
    auto b = make_engine("interp");
    std::size_t trapped = 0;
    for (std::uint64_t seed = 1; seed <= 400; ++seed) {
        INFO("seed " << seed);
        std::mt19937_64 rng(seed * 7919);
        const bool deterministic = seed % 4 != 0;
        auto bytes = test::random_module(rng, deterministic, true).finish();
        auto x = run_random(*a, bytes);
        auto y = run_random(*b, bytes);
        INFO("wasmtime trap: " << x.trap.value_or("-") << ", interp trap: " << y.trap.value_or("-"));
        if (deterministic) {
            REQUIRE_FALSE(x.trap);
            REQUIRE(x == y);
        } else {
            REQUIRE(x.trap.has_value() == y.trap.has_value());
            if (x.trap) {
                ++trapped;
                REQUIRE(*x.trap == *y.trap);
            }
        }
    }
    CHECK(trapped > 0);
}
