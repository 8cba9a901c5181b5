#include "support/Compare.hpp"
#include "support/Fixtures.hpp"
#include "support/RandomPlan.hpp"
#include "wasmql/plan/Parser.hpp"
#include "wasmql/ref/Interpreter.hpp"
#include "wasmql/util/error.hpp"

#include <catch_amalgamated.hpp>
#include <limits>


using namespace wasmql;
using namespace wasmql::test;


namespace {

Value eval(const std::string &text, const TableSchema &schema, std::vector<Value> row)
{
    const TableSchema scope[] = { schema };
    return ref::eval_expr(*annotate(parse_expression(text), scope), row);
}

Catalog small()
{
    Catalog cat;
    auto t = cat.define_table(TableSchema{ "T", { { "k", DataType::Char(3), {} }, { "v", DataType::Int32(), {} },
                                                  { "f", DataType::Float64(), {} } } });
    cat.ingest_csv(t, "b,3,0.5\na,1,1.5\nb,-2,2.0\nc,7,-1.0\na,1,0.25\n", false);
    return cat;
}

}

TEST_CASE("expression evaluation", "[ref]")
{
    TableSchema s{ "R", { { "a", DataType::Int32(), {} }, { "b", DataType::Int64(), {} },
                          { "f", DataType::Float64(), {} }, { "s", DataType::Char(4), {} } } };
    const std::int32_t max32 = std::numeric_limits<std::int32_t>::max();
    std::vector<Value> row{ max32, std::int64_t(-7), 2.5, std::string("ab") };
    CHECK(eval("R.a + 1", s, row) == Value(std::numeric_limits<std::int32_t>::min()));
    CHECK(eval("R.a + R.b", s, row) == Value(std::int64_t(max32) - 7));
    CHECK(eval("R.b / 2", s, row) == Value(std::int64_t(-3)));
    CHECK(eval("R.f * 2.0 - 1.0", s, row) == Value(4.0));
    CHECK(eval("R.s < 'abc'", s, row) == Value(true));
    CHECK(eval("R.s = 'ab'", s, row) == Value(true));
    CHECK(eval("NOT (R.b < 0) OR R.f > 2.0", s, row) == Value(true));
    CHECK_THROWS_AS(eval("R.a / (R.b + 7)", s, row), EvalError);
    std::vector<Value> min_row{ std::numeric_limits<std::int32_t>::min(), std::int64_t(-1), 0.0, std::string() };
    CHECK_THROWS_AS(eval("R.a / -1", s, min_row), EvalError);
    /* AND stops at the first false operand */
    CHECK(eval("R.b > 0 AND R.a / (R.b + 7) > 0", s, row) == Value(false));
}

TEST_CASE("grouping, sorting and joining by hand", "[ref]")
{
    auto cat = small();
    auto g = ref::interpret(parse_plan("HashGroupBy keys=(T.k) aggs=(COUNT(*) AS c, SUM(T.v) AS s, MIN(T.f) AS lo, "
                                       "AVG(T.v) AS m)\n  Scan T\n"), cat);
    REQUIRE(g.num_rows() == 3);
    /* groups in order of first occurrence */
    CHECK(g.row(0) == std::vector<Value>{ std::string("b"), std::int64_t(2), std::int64_t(1), 0.5, 0.5 });
    CHECK(g.row(1) == std::vector<Value>{ std::string("a"), std::int64_t(2), std::int64_t(2), 0.25, 1.0 });
    CHECK(g.row(2) == std::vector<Value>{ std::string("c"), std::int64_t(1), std::int64_t(7), -1.0, 7.0 });

    auto e = ref::interpret(parse_plan("HashGroupBy keys=() aggs=(COUNT(*), MIN(T.v), AVG(T.f))\n"
                                       "  Filter pred=(T.v > 100)\n    Scan T\n"), cat);
    REQUIRE(e.num_rows() == 1);
    CHECK(e.row(0) == std::vector<Value>{ std::int64_t(0), std::int32_t(0), 0.0 });

    /* stable: equal keys keep input order */
    auto s = ref::interpret(parse_plan("Sort keys=(T.k DESC)\n  Scan T\n"), cat);
    std::vector<Value> v;
    for (std::size_t i = 0; i != s.num_rows(); ++i) v.push_back(s.get(1, i));
    CHECK(v == std::vector<Value>{ std::int32_t(7), std::int32_t(3), std::int32_t(-2), std::int32_t(1),
                                   std::int32_t(1) });

    auto j = ref::interpret(parse_plan("HashJoin on=((a.v = b.v))\n  Scan T AS a\n  Scan T AS b\n"), cat);
    CHECK(j.num_rows() == 1 + 4 + 1 + 1); // 3, the pair of 1s squared, -2, 7
}

TEST_CASE("hash and nested-loop joins agree", "[ref]")
{
    auto cat = random_plan_catalog(600);
    RandomPlanGenerator gen(cat, 99);
    int joins = 0;
    for (int i = 0; i != 60; ++i) {
        auto plan = gen.next();
        bool has_join = false;
        for_each_node(*plan, [&](const PlanNode &n) { has_join |= n.kind() == PlanNode::JOIN; });
        if (not has_join) continue;
        ++joins;
        CAPTURE(to_text(*plan));
        auto diff = compare_to_reference(annotate_plan(plan, cat), ref::interpret(plan, cat),
                                         ref::interpret(plan, cat, ref::JoinStrategy::NESTED_LOOP));
        INFO((diff ? *diff : ""));
        CHECK_FALSE(diff);
    }
    CHECK(joins > 10);
}
