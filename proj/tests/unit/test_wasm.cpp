#include "support/ExternalWasm.hpp"
#include "support/RandomWasm.hpp"
#include "wasmql/util/error.hpp"
#include "wasmql/wasm/Builder.hpp"

#include <catch_amalgamated.hpp>


using namespace wasmql;
using namespace wasmql::wasm;
using Catch::Matchers::ContainsSubstring;


namespace {

constexpr ValType I32 = ValType::I32;
constexpr ValType I64 = ValType::I64;
constexpr ValType F64 = ValType::F64;

void require_valid(std::span<const std::uint8_t> bytes)
{
    if (not test::have_external_toolchain()) SKIP("no external WebAssembly toolchain");
    auto err = test::external_validate(bytes);
    INFO(err.value_or(""));
    REQUIRE_FALSE(err);
}

/** `SELECT 1 FROM R WHERE R.val < 3.14` by hand: scan the f64 column `val`, write a 1 for each qualifying row. */
ModuleBuilder filter_module()
{
    ModuleBuilder mb;
    mb.import_memory(1);
    auto col = mb.import_global("col_R_val", I32);
    auto rows = mb.import_global("rows_R", I32);
    auto res = mb.import_global("result_base", I32);
    auto &f = mb.begin_function({ {}, { I32 } }, "run");
    auto ptr = f.fresh_local(I32);
    auto end = f.fresh_local(I32);
    auto out = f.fresh_local(I32);
    auto count = f.fresh_local(I32);
    f.global_get(col);
    f.local_tee(ptr);
    f.global_get(rows);
    f.i32_const(8);
    f.emit(Op::I32_MUL);
    f.emit(Op::I32_ADD);
    f.local_set(end);
    f.global_get(res);
    f.local_set(out);
    auto exit = f.block();
    f.local_get(ptr);
    f.local_get(end);
    f.emit(Op::I32_GE_U);
    f.br_if(exit);
    auto loop = f.loop();
    f.local_get(ptr);
    f.load(Op::F64_LOAD);
    f.f64_const(3.14);
    f.emit(Op::F64_LT);
    f.if_();
    f.local_get(out);
    f.i32_const(1);
    f.store(Op::I32_STORE);
    f.local_get(out);
    f.i32_const(4);
    f.emit(Op::I32_ADD);
    f.local_set(out);
    f.local_get(count);
    f.i32_const(1);
    f.emit(Op::I32_ADD);
    f.local_set(count);
    f.end();
    f.local_get(ptr);
    f.i32_const(8);
    f.emit(Op::I32_ADD);
    f.local_tee(ptr);
    f.local_get(end);
    f.emit(Op::I32_LT_U);
    f.br_if(loop);
    f.end();
    f.end();
    f.local_get(count);
    f.finish();
    mb.export_function("run", f.index());
    return mb;
}

}


TEST_CASE("locals and function indices", "[wasm]")
{
    ModuleBuilder mb;
    mb.import_memory(1);
    auto &f = mb.begin_function({ { I32, I32 }, {} });
    CHECK(f.param(0).value == 0);
    CHECK(f.param(1).value == 1);
    CHECK(f.local_type(f.param(0)) == I32);
    CHECK(f.local_type(f.param(1)) == I32);
    CHECK(f.fresh_local(I64).value == 2);
    f.finish();
    CHECK_THROWS_AS(f.fresh_local(I32), ValidationError);

    auto &g = mb.begin_function({ {}, {} });
    CHECK(g.fresh_local(I32).value == 0);
    CHECK(g.fresh_local(F64).value == 1);
    g.finish();
    CHECK(f.index().value == 0);
    CHECK(g.index().value == 1);

    ModuleBuilder m2;
    m2.import_memory(1);
    auto &h = m2.begin_function({ { I32 }, {} });
    CHECK(h.fresh_local(I32).value == 1);
}

TEST_CASE("imported functions precede defined ones", "[wasm]")
{
    ModuleBuilder mb;
    mb.import_memory(1);
    auto imp = mb.import_function("host", { { I32 }, { I32 } });
    auto &f = mb.begin_function({ {}, {} });
    CHECK(imp.value == 0);
    CHECK(f.index().value == 1);
    CHECK_THROWS_AS(mb.import_function("late", { {}, {} }), ValidationError);
}

TEST_CASE("missing result is reported at finish", "[wasm]")
{
    ModuleBuilder mb;
    mb.import_memory(1);
    auto &f = mb.begin_function({ {}, { I64 } }, "g");
    REQUIRE_THROWS_AS(f.finish(), ValidationError);
    f.i32_const(1);
    REQUIRE_THROWS_AS(f.finish(), ValidationError); // wrong type
}

TEST_CASE("instruction typing", "[wasm]")
{
    ModuleBuilder mb;
    mb.import_memory(1);
    auto &f = mb.begin_function({ { I32 }, { I32 } }, "cmp");

    SECTION("f64.lt yields i32")
    {
        f.local_get(f.param(0));
        f.load(Op::F64_LOAD);
        f.f64_const(3.14);
        f.emit(Op::F64_LT);
        CHECK(f.top() == I32);
        CHECK(f.stack_height() == 1);
        f.finish();
    }

    SECTION("br_if back-edge in loop")
    {
        auto l = f.loop();
        f.local_get(f.param(0));
        f.br_if(l);
        f.end();
        auto &g = mb.begin_function({ {}, {} });
        g.loop();
        g.i32_const(0);
        g.br_if(0);
        g.end();
        g.finish();
        f.i32_const(0);
        f.finish();
        require_valid(mb.finish());
    }

    SECTION("operand underflow names the instruction")
    {
        f.i32_const(1);
        CHECK_THROWS_WITH(f.emit(Op::I32_ADD), ContainsSubstring("'cmp'") and ContainsSubstring("instruction 1") and
                                                   ContainsSubstring("underflow"));
    }

    SECTION("type mismatch")
    {
        f.i32_const(1);
        f.i64_const(2);
        CHECK_THROWS_WITH(f.emit(Op::I32_ADD), ContainsSubstring("expected i32"));
    }

    SECTION("select needs equal operands")
    {
        f.i32_const(1);
        f.i64_const(2);
        f.i32_const(0);
        CHECK_THROWS_AS(f.emit(Op::SELECT), ValidationError);
    }

    SECTION("stores and loads check alignment and value type")
    {
        f.i32_const(0);
        CHECK_THROWS_AS(f.load(Op::I32_LOAD, 0, 3), ValidationError);
        f.i64_const(1);
        CHECK_THROWS_AS(f.store(Op::I32_STORE), ValidationError);
    }

    SECTION("immutable globals cannot be set")
    {
        ModuleBuilder m;
        m.import_memory(1);
        auto g = m.import_global("g", I32);
        auto &h = m.begin_function({ {}, {} });
        h.i32_const(1);
        CHECK_THROWS_AS(h.global_set(g), ValidationError);
    }

    SECTION("if with a result needs an else")
    {
        f.i32_const(1);
        f.if_(I32);
        f.i32_const(2);
        CHECK_THROWS_AS(f.end(), ValidationError);
    }

    SECTION("branch values are checked")
    {
        auto b = f.block(I32);
        f.i64_const(1);
        CHECK_THROWS_AS(f.br(b), ValidationError);
    }

    SECTION("code after br is polymorphic")
    {
        auto b = f.block(I32);
        f.i32_const(7);
        f.br(b);
        f.emit(Op::I32_ADD); // operands of unreachable code match anything
        f.end();
        f.finish();
        require_valid(mb.finish());
    }

    SECTION("leftover operands at block end")
    {
        f.block();
        f.i32_const(1);
        CHECK_THROWS_WITH(f.end(), ContainsSubstring("unconsumed"));
    }

    SECTION("branch to a closed block")
    {
        auto b = f.block();
        f.end();
        CHECK_THROWS_AS(f.br(b), ValidationError);
    }
}

TEST_CASE("module encoding", "[wasm]")
{
    SECTION("empty module")
    {
        ModuleBuilder mb;
        mb.import_memory(1);
        auto bytes = mb.finish();
        CHECK(bytes.size() < 100);
        require_valid(bytes);
        if (test::have_external_toolchain()) {
            auto ref = test::external_wat2wasm(R"((module (import "env" "memory" (memory 1))))");
            CHECK(bytes.size() == ref.size());
        }
        CHECK(mb.render_wat().starts_with("(module"));
    }

    SECTION("no memory")
    {
        ModuleBuilder mb;
        CHECK_THROWS_AS(mb.finish(), ValidationError);
    }

    SECTION("unbalanced blocks name the function")
    {
        ModuleBuilder mb;
        mb.import_memory(1);
        auto &f = mb.begin_function({ {}, {} }, "scan");
        f.block();
        f.loop();
        f.end();
        CHECK_THROWS_WITH(f.finish(), ContainsSubstring("'scan'") and ContainsSubstring("unclosed"));
        CHECK_THROWS_WITH(mb.finish(), ContainsSubstring("'scan'") and ContainsSubstring("not finished"));
    }

    SECTION("filter module")
    {
        auto mb = filter_module();
        auto bytes = mb.finish();
        CHECK(bytes.size() <= 2048);
        require_valid(bytes);
        auto wat = mb.render_wat();
        CHECK_THAT(wat, ContainsSubstring("if") and ContainsSubstring("f64.lt"));
        CHECK_THAT(wat, ContainsSubstring("f64.const 3.14"));
    }

    SECTION("data segments")
    {
        ModuleBuilder mb;
        mb.import_memory(1);
        auto base = mb.import_global("lit_base", I32);
        auto mut = mb.import_global("m", I32, true);
        mb.add_data(base, 0, { 1, 2, 3 });
        mb.add_data(std::nullopt, 100, { '"', '\\', 0 });
        CHECK_THROWS_AS(mb.add_data(mut, 0, { 1 }), ValidationError);
        CHECK_THROWS_AS(mb.add_data(base, 4, { 1 }), ValidationError);
        auto bytes = mb.finish();
        require_valid(bytes);
        if (test::have_external_toolchain())
            CHECK(test::strip_custom_sections(test::external_wat2wasm(mb.render_wat())) == test::strip_custom_sections(bytes));
    }

    SECTION("duplicate export")
    {
        ModuleBuilder mb;
        mb.import_memory(1);
        auto &f = mb.begin_function({ {}, {} });
        f.finish();
        mb.export_function("a", f.index());
        CHECK_THROWS_AS(mb.export_function("a", f.index()), ValidationError);
    }
}

TEST_CASE("WAT rendering round-trips through an external parser", "[wasm]")
{
    if (not test::have_external_toolchain()) SKIP("no external WebAssembly toolchain");
    auto mb = filter_module();
    auto bytes = mb.finish();
    auto reparsed = test::external_wat2wasm(mb.render_wat());
    CHECK(test::strip_custom_sections(reparsed) == test::strip_custom_sections(bytes));

    SECTION("special float constants")
    {
        ModuleBuilder m;
        m.import_memory(1);
        auto &f = m.begin_function({ {}, { F64 } });
        f.f64_const(std::numeric_limits<double>::quiet_NaN());
        f.f64_const(-std::numeric_limits<double>::infinity());
        f.emit(Op::F64_ADD);
        f.f64_const(-0.0);
        f.emit(Op::F64_ADD);
        f.f64_const(5e-324);
        f.emit(Op::F64_ADD);
        f.f64_const(0.1);
        f.emit(Op::F64_MUL);
        f.finish();
        auto b = m.finish();
        CHECK(test::strip_custom_sections(test::external_wat2wasm(m.render_wat())) == test::strip_custom_sections(b));
    }
}

TEST_CASE("random well-typed programs validate and round-trip", "[wasm][fuzz]")
{
    const bool external = test::have_external_toolchain();
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        INFO("seed " << seed);
        std::mt19937_64 rng(seed);
        auto mb = test::random_module(rng, seed % 2 == 0, seed % 3 == 0);
        auto bytes = mb.finish();

        std::mt19937_64 rng2(seed);
        auto again = test::random_module(rng2, seed % 2 == 0, seed % 3 == 0).finish();
        REQUIRE(bytes == again);

        /* Local counts in the encoding equal the requests. */
        for (std::uint32_t i = mb.function_imports().size(); i != mb.num_functions(); ++i) {
            auto &f = mb.function(FuncIndex{ i });
            REQUIRE(f.num_locals() == f.type().params.size() + f.declared_locals().size());
        }

        if (not external) continue;
        auto err = test::external_validate(bytes);
        INFO(mb.render_wat());
        REQUIRE_FALSE(err);
        REQUIRE(test::strip_custom_sections(test::external_wat2wasm(mb.render_wat())) == test::strip_custom_sections(bytes));
    }
}

TEST_CASE("opcode table", "[wasm]")
{
    CHECK(op_info(Op::F64_LT).out == I32);
    CHECK(op_info(Op::I64_EXTEND_I32_S).in[0] == I32);
    CHECK(op_info(Op::I64_EXTEND_I32_S).arity == 1);
    CHECK(op_info(Op::I64_LOAD).align == 3);
    CHECK(op_info(std::uint8_t(0xfc)).cls == OpClass::INVALID);
    unsigned numeric = 0;
    for (unsigned c = 0; c != 256; ++c) numeric += op_info(std::uint8_t(c)).cls == OpClass::NUMERIC;
    CHECK(numeric == 0xbf - 0x45 + 1);
}
