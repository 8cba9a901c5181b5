#include "support/Compare.hpp"
#include "support/Fixtures.hpp"
#include "wasmql/plan/Parser.hpp"
#include "wasmql/ref/Interpreter.hpp"
#include "wasmql/runtime/Runtime.hpp"
#include "wasmql/util/error.hpp"
#include "wasmql/wasm/Builder.hpp"

#include <catch_amalgamated.hpp>
#include <cstring>


using namespace wasmql;
using namespace wasmql::test;


namespace {

Catalog int64_catalog(std::initializer_list<std::pair<const char*, std::size_t>> tables)
{
    Catalog cat;
    for (auto [name, rows] : tables)
        cat.generate_table(TableSchema{ name, { { "x", DataType::Int64(), {} } } }, GenSpec{ rows, { Sequential{ 0 } } });
    return cat;
}

constexpr std::uint64_t KiB = 1024, MiB = 1024 * KiB;

}

TEST_CASE("plan_memory layout", "[runtime]")
{
    Catalog cat;
    cat.generate_table(TableSchema{ "R", { { "x", DataType::Int32(), {} } } }, GenSpec{ 1000, { Sequential{} } });
    auto q = compile_query(parse_plan("Scan R\n"), cat);
    auto m = plan_memory(q, cat, ExecOptions{ .result_bytes = 4096 });
    REQUIRE(m.segments.size() == 2);
    CHECK(m.segments[0].kind == Segment::COLUMN);
    CHECK(m.segments[0].offset == 16);
    CHECK(m.segments[0].length == 4000);
    CHECK(m.segments[1].kind == Segment::RESULT);
    CHECK(m.segments[1].offset == 4016);
    CHECK(m.result_capacity == 4096 / 8);
    CHECK(m.global("col_R_x") == 16);
    CHECK(m.global("rows_R") == 1000);
    CHECK(m.global("result_base") == 4016);
    CHECK_FALSE(m.tables[0].chunked);
    CHECK(m.pages == 1);

    SECTION("breakers get a heap and sort arrays, in that order") {
        auto s = compile_query(parse_plan("Sort keys=(x ASC)\n  HashGroupBy keys=(R.x) aggs=(COUNT(*) AS c)\n"
                                          "    Scan R\n"), cat);
        auto ms = plan_memory(s, cat, {});
        std::vector<Segment::Kind> kinds;
        for (auto &seg : ms.segments) kinds.push_back(seg.kind);
        CHECK(kinds == std::vector{ Segment::COLUMN, Segment::HEAP, Segment::SORT_ARRAY, Segment::RESULT });
        for (auto &seg : ms.segments) CHECK(seg.offset % 8 == 0);
        /* group slots hold tag, key and count: 16 bytes; sort elements key and count: 16 bytes */
        CHECK(ms.find(Segment::SORT_ARRAY)->length == 1000 * 16);
    }
}

TEST_CASE("tables beyond the window are chunked", "[runtime]")
{
    auto cat = int64_catalog({ { "T", 20000 } });
    auto q = compile_query(parse_plan("Scan T\n"), cat);
    auto m = plan_memory(q, cat, ExecOptions{ .window_bytes = 64 * KiB });
    REQUIRE(m.tables.size() == 1);
    CHECK(m.tables[0].chunked);
    CHECK(m.tables[0].rows_per_chunk == 8192);
    CHECK(m.tables[0].num_chunks() == 3);
    CHECK(m.global("rows_T") == 8192);
    CHECK(m.segments[0].length == 64 * KiB);

    CHECK_FALSE(plan_memory(q, cat, ExecOptions{ .window_bytes = 160000 }).tables[0].chunked);
    CHECK_THROWS_AS(plan_memory(q, cat, ExecOptions{ .window_bytes = 4 }), CapacityError);
}

TEST_CASE("two tables, one of them windowed", "[runtime]")
{
    /* A = 1 MiB, B = 5 MiB, 2 MiB window, 1 MiB result region */
    auto cat = int64_catalog({ { "A", MiB / 8 }, { "B", 5 * MiB / 8 } });
    auto plan = parse_plan("HashJoin on=((A.x = B.x))\n  Scan A\n  Scan B\n");
    auto engine = make_engine();
    auto r = run_query(plan, cat, *engine, {}, ExecOptions{ .window_bytes = 2 * MiB, .result_bytes = MiB });
    CHECK(r.counters.chunks_served == 3);
    CHECK(r.manifest.tables[0].chunked == false);
    CHECK(r.manifest.tables[1].chunked == true);
    CHECK(r.table.num_rows() == MiB / 8);
    CHECK(r.counters.result_flushes >= 1);
    CHECK_FALSE(compare_tables(ref::interpret(plan, cat), r.table));
}

TEST_CASE("chunked execution equals unchunked execution", "[runtime]")
{
    auto cat = mixed_catalog(1000, 300);
    const char *plans[] = {
        "Filter pred=(R.x < 5)\n  Scan R\n",
        "HashGroupBy keys=(R.x) aggs=(COUNT(*), SUM(R.val))\n  Scan R\n",
        "HashJoin on=((a.x = b.x))\n  Filter pred=(a.y < 0)\n    Scan R AS a\n  Scan R AS b\n",
        "Sort keys=(S.k DESC, R.y ASC)\n  HashJoin on=((S.id = R.x))\n    Scan S\n    Scan R\n",
    };
    for (auto &name : engines()) {
        auto engine = make_engine(name);
        for (auto text : plans) {
            CAPTURE(name, text);
            auto plan = parse_plan(text);
            auto whole = run_query(plan, cat, *engine);
            CHECK(whole.counters.chunks_served == 0);
            for (std::uint64_t window : { 1000, 4096, 9000 }) {
                auto chunked = run_query(plan, cat, *engine, {}, ExecOptions{ .window_bytes = window });
                CHECK(chunked.counters.chunks_served > 0);
                auto diff = compare_to_reference(annotate_plan(plan, cat), whole.table, chunked.table);
                INFO((diff ? *diff : ""));
                CHECK_FALSE(diff);
            }
        }
    }
}

TEST_CASE("chunks served per window", "[runtime]")
{
    auto cat = int64_catalog({ { "T", MiB / 8 } });
    auto plan = parse_plan("HashGroupBy keys=() aggs=(SUM(T.x), COUNT(*))\n  Scan T\n");
    auto engine = make_engine();
    auto expected = ref::interpret(plan, cat);
    for (auto [window, chunks] : { std::pair<std::optional<std::uint64_t>, std::uint64_t>{ 64 * KiB, 16 },
                                   { 128 * KiB, 8 }, { std::nullopt, 0 } }) {
        auto r = run_query(plan, cat, *engine, {}, ExecOptions{ .window_bytes = window });
        CHECK(r.counters.chunks_served == chunks);
        CHECK_FALSE(compare_tables(expected, r.table));
    }
}

TEST_CASE("result region overflow flushes", "[runtime]")
{
    auto cat = mixed_catalog(1000, 300);
    auto plan = parse_plan("Project exprs=(R.x, R.name, R.val)\n  Scan R\n");
    for (auto &name : engines()) {
        auto engine = make_engine(name);
        auto r = run_query(plan, cat, *engine, {}, ExecOptions{ .result_bytes = 24 * 100 });
        CHECK(r.counters.result_flushes == 10);
        CHECK(r.table.num_rows() == 1000);
        CHECK_FALSE(compare_tables(ref::interpret(plan, cat), r.table));
        auto sorted = parse_plan("Sort keys=(R.name ASC, R.x DESC)\n  Scan R\n");
        auto s = run_query(sorted, cat, *engine, {}, ExecOptions{ .result_bytes = 1 });
        CHECK(s.counters.result_flushes >= 999);
        CHECK_FALSE(compare_to_reference(annotate_plan(sorted, cat), ref::interpret(sorted, cat), s.table));
    }
}

TEST_CASE("capacity retries", "[runtime]")
{
    auto engine = make_engine();
    SECTION("heap") {
        auto cat = sequence_catalog(20000);
        auto plan = parse_plan("HashGroupBy keys=(T.x) aggs=(COUNT(*))\n  Scan T\n");
        auto r = run_query(plan, cat, *engine, {}, ExecOptions{ .initial_heap_limit = 4096 });
        CHECK(r.counters.retries > 0);
        CHECK(r.table.num_rows() == 20000);
    }
    SECTION("sort array") {
        /* Every tuple joins every other: 40 000 results against a bound of 4 * 200. */
        Catalog cat;
        for (auto t : { "A", "B" })
            cat.generate_table(TableSchema{ t, { { "k", DataType::Int32(), {} }, { "v", DataType::Int32(), {} } } },
                               GenSpec{ 200, { Const{ std::int32_t(7) }, Sequential{} } });
        auto plan = parse_plan("Sort keys=(A.v ASC, B.v DESC)\n  HashJoin on=((A.k = B.k))\n    Scan A\n    Scan B\n");
        auto r = run_query(plan, cat, *engine);
        CHECK(r.counters.retries >= 1);
        CHECK_FALSE(compare_to_reference(annotate_plan(plan, cat), ref::interpret(plan, cat), r.table));
    }
}

TEST_CASE("engine compilation is cached", "[runtime]")
{
    auto cat = mixed_catalog();
    auto q = compile_query(parse_plan("Filter pred=(R.x < 5)\n  Scan R\n"), cat);
    Executor ex(make_engine());
    auto first = ex.execute(q, cat);
    auto second = ex.execute(q, cat);
    CHECK(first.timings.t_engine_compile > 0);
    CHECK(second.timings.t_engine_compile == 0);
    CHECK(second.timings.t_exec >= 0);
    CHECK(second.timings.t_codegen == q.stats.codegen_us);
    CHECK(first.table == second.table);
}

TEST_CASE("extract_result", "[runtime]")
{
    MemoryManifest m;
    m.result_schema = TableSchema{ "result", { { "a", DataType::Int32(), {} }, { "b", DataType::Float64(), {} } } };
    m.result_layout.add("a", DataType::Int32(), 0);
    m.result_layout.add("b", DataType::Float64(), 1);
    m.segments.push_back(Segment{ Segment::RESULT, 16, 64 });
    m.result_capacity = 4;
    m.pages = 1;

    /* A module that writes three rows and the count. */
    wasm::ModuleBuilder mb;
    mb.import_memory(1);
    auto &fb = mb.begin_function({ {}, {} }, "run");
    const std::int32_t as[] = { 7, -1, 2147483647 };
    const double bs[] = { 0.1, -0.0, 1e300 };
    for (int i = 0; i != 3; ++i) {
        fb.i32_const(16 + 16 * i);
        fb.i32_const(as[i]);
        fb.store(wasm::Op::I32_STORE);
        fb.i32_const(16 + 16 * i);
        fb.f64_const(bs[i]);
        fb.store(wasm::Op::F64_STORE, 8);
    }
    fb.i32_const(0);
    fb.i32_const(3);
    fb.store(wasm::Op::I32_STORE);
    fb.finish();
    mb.export_function("run", fb.index());
    auto binary = mb.finish();

    for (auto &name : engines()) {
        auto instance = make_engine(name)->compile(binary)->instantiate(ImportValues{});
        auto memory = instance->memory();
        CHECK(extract_result(m, memory).num_rows() == 0);
        instance->call("run");
        auto t = extract_result(m, memory);
        REQUIRE(t.num_rows() == 3);
        for (std::size_t i = 0; i != 3; ++i) {
            CHECK(t.get(0, i) == Value(as[i]));
            double b = std::get<double>(t.get(1, i));
            CHECK(std::memcmp(&b, &bs[i], 8) == 0);
        }
        std::uint32_t bad = 5;
        std::memcpy(memory.data(), &bad, 4);
        CHECK_THROWS_AS(extract_result(m, memory), CorruptionError);
    }
}
