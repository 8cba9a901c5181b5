#include "support/Compare.hpp"
#include "support/Fixtures.hpp"
#include "wasmql/pipeline/Pipeline.hpp"
#include "wasmql/plan/Parser.hpp"
#include "wasmql/ref/Interpreter.hpp"
#include "wasmql/runtime/Runtime.hpp"
#include "wasmql/sql/Sql.hpp"
#include "wasmql/util/error.hpp"

#include <catch_amalgamated.hpp>


using namespace wasmql;
using namespace wasmql::test;


namespace {

Catalog pipeline_example()
{
    Catalog cat;
    auto r = cat.define_table(TableSchema{ "R", { { "x", DataType::Int32(), {} }, { "id", DataType::Int32(), {} } } });
    auto s = cat.define_table(TableSchema{ "S", { { "x", DataType::Int32(), {} }, { "rid", DataType::Int32(), {} } } });
    cat.ingest_csv(r, "1,10\n2,20\n50,30\n1,40\n", false);
    cat.ingest_csv(s, "5,10\n3,10\n7,20\n9,30\n4,40\n", false);
    return cat;
}

const char *const EXAMPLE = "SELECT R.x, MIN(S.x) FROM R, S WHERE R.x < 42 AND R.id = S.rid GROUP BY R.x";

}

TEST_CASE("the pipeline example query", "[sql]")
{
    auto cat = pipeline_example();
    auto plan = parse_sql(EXAMPLE, &cat);

    /* projection over grouping over a join whose build side is the filtered R */
    REQUIRE(plan->kind() == PlanNode::PROJECT);
    auto &group = plan->child();
    REQUIRE(group.kind() == PlanNode::GROUP_BY);
    auto &join = group.child();
    REQUIRE(join.kind() == PlanNode::JOIN);
    REQUIRE(join.child(0).kind() == PlanNode::FILTER);
    CHECK(join.child(0).child().as<ScanOp>().table == "R");
    REQUIRE(join.child(1).kind() == PlanNode::SCAN);
    CHECK(join.child(1).as<ScanOp>().table == "S");
    CHECK(dissect(annotate_plan(plan, cat)).pipelines.size() == 3);

    auto schema = validate(plan, cat);
    CHECK(schema.columns.at(0).name == "x");
    CHECK(schema.columns.at(1).name == "min_x");

    Table expected(schema);
    expected.append_row(std::vector<Value>{ std::int32_t(1), std::int32_t(3) });
    expected.append_row(std::vector<Value>{ std::int32_t(2), std::int32_t(7) });
    CHECK_FALSE(compare_tables(expected, ref::interpret(plan, cat)));
    CHECK_FALSE(compare_tables(expected, ref::interpret(plan, cat, ref::JoinStrategy::NESTED_LOOP)));
    for (auto &name : engines()) {
        auto engine = make_engine(name);
        CHECK_FALSE(compare_tables(expected, run_query(plan, cat, *engine).table));
    }
    SECTION("without a catalog, qualified columns suffice") {
        CHECK(to_text(*parse_sql(EXAMPLE)) == to_text(*plan));
    }
}

TEST_CASE("count with a filter", "[sql]")
{
    auto plan = parse_sql("SELECT COUNT(*) FROM T WHERE T.x < 10");
    REQUIRE(plan->kind() == PlanNode::PROJECT);
    REQUIRE(plan->child().kind() == PlanNode::GROUP_BY);
    CHECK(plan->child().as<GroupByOp>().keys.empty());
    REQUIRE(plan->child().child().kind() == PlanNode::FILTER);
    CHECK(plan->child().child().child().kind() == PlanNode::SCAN);

    auto cat = sequence_catalog(100);
    auto r = ref::interpret(plan, cat);
    REQUIRE(r.num_rows() == 1);
    CHECK(r.get(0, 0) == Value(std::int64_t(10)));
    CHECK(r.schema().columns[0].name == "count");
}

TEST_CASE("syntax errors carry offsets", "[sql]")
{
    auto offset_of = [](const char *text) -> std::optional<std::size_t> {
        try {
            parse_sql(text);
        } catch (const ParseError &e) {
            return e.offset;
        }
        return std::nullopt;
    };
    CHECK(offset_of("SELEC 1") == 0u);
    CHECK(offset_of("SELECT FROM T") == 7u);
    CHECK(offset_of("SELECT T.x FROM") == 15u);
    CHECK(offset_of("SELECT T.x FROM T WHERE") == 23u);
    CHECK(offset_of("SELECT T.x FROM T WHERE SUM(T.x) > 1") == 24u);
    CHECK(offset_of("SELECT SUM(MIN(T.x)) FROM T") == 11u);
    CHECK(offset_of("SELECT T.x FROM T ORDER T.x") == 24u);
    CHECK(offset_of("SELECT T.x FROM T extra junk") == 24u);
    CHECK_FALSE(offset_of("select t.x from t where t.x < 1;"));
}

TEST_CASE("queries outside the subset", "[sql]")
{
    auto cat = mixed_catalog(10, 10);
    CHECK_THROWS_AS(parse_sql("SELECT R.x, S.id FROM R, S", &cat), PlanError);
    CHECK_THROWS_AS(parse_sql("SELECT R.x, R.y FROM R GROUP BY R.x", &cat), PlanError);
    CHECK_NOTHROW(parse_sql("SELECT R.x FROM R ORDER BY R.y", &cat));
    CHECK_THROWS_AS(parse_sql("SELECT * FROM R GROUP BY R.x", &cat), PlanError);
    CHECK_THROWS_AS(parse_sql("SELECT x FROM R, S WHERE R.x = S.id"), PlanError);
    CHECK_THROWS_AS(parse_sql("SELECT nope FROM R", &cat), PlanError);
    CHECK_THROWS_AS(parse_sql("SELECT R.x FROM R, R", &cat), PlanError);
    CHECK_THROWS_AS(parse_sql("SELECT Q.x FROM Q", &cat), CatalogError);
}

TEST_CASE("SQL queries run like the reference", "[sql]")
{
    auto cat = mixed_catalog(800, 200);
    const char *queries[] = {
        "SELECT * FROM R WHERE x < 3",
        "SELECT x, y * 2 AS yy FROM R WHERE flag AND val < 0.5 ORDER BY yy DESC, x",
        "SELECT name, COUNT(*) AS n, AVG(val) FROM R GROUP BY name ORDER BY n DESC, name",
        "SELECT x * 2, SUM(y) FROM R GROUP BY x * 2",
        "SELECT COUNT(*), SUM(val), MIN(y), MAX(x) FROM R WHERE x > 0 AND x < 20",
        "SELECT R.x, MIN(S.w) FROM R, S WHERE R.x < 42 AND R.x = S.id GROUP BY R.x",
        "SELECT a.x, b.tag FROM R a, S b WHERE a.x = b.id AND a.val < b.w ORDER BY a.x, b.tag",
        "SELECT S.k, COUNT(*) FROM S, R WHERE S.id = R.x AND S.tag = R.name GROUP BY S.k",
        "SELECT MAX(x) - MIN(x) AS spread FROM R",
        "SELECT x FROM R GROUP BY x ORDER BY SUM(val) DESC, x",
    };
    auto engine = make_engine();
    for (auto sql : queries) {
        CAPTURE(sql);
        auto plan = parse_sql(sql, &cat);
        auto result = run_query(plan, cat, *engine);
        auto diff = compare_to_reference(annotate_plan(plan, cat), ref::interpret(plan, cat), result.table);
        INFO((diff ? *diff : ""));
        CHECK_FALSE(diff);
    }
}
