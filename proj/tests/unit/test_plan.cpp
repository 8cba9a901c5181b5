#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/plan/Parser.hpp"
#include "wasmql/util/error.hpp"

#include <catch_amalgamated.hpp>


using namespace wasmql;


namespace {

Catalog make_catalog()
{
    Catalog cat;
    cat.define_table(TableSchema{ "R", { { "x", DataType::Int32(), {} }, { "y", DataType::Int32(), {} },
                                         { "z", DataType::Int64(), {} }, { "val", DataType::Float64(), {} },
                                         { "id", DataType::Int32(), {} } } });
    cat.define_table(TableSchema{ "S", { { "x", DataType::Int32(), {} }, { "rid", DataType::Int32(), {} },
                                         { "name", DataType::Char(32), {} }, { "tag", DataType::Char(4), {} },
                                         { "flag", DataType::Bool(), {} } } });
    cat.define_table(TableSchema{ "T", { { "x", DataType::Int32(), {} } } });
    return cat;
}

std::vector<TableSchema> scope_of(const Catalog &cat, std::initializer_list<const char*> names)
{
    std::vector<TableSchema> s;
    for (auto n : names) s.push_back(cat.get(n).schema());
    return s;
}

}

TEST_CASE("typecheck", "[plan]")
{
    auto cat = make_catalog();
    auto scope = scope_of(cat, { "R", "S" });

    CHECK(typecheck(parse_expression("R.x + R.y"), scope) == DataType::Int32());
    CHECK(typecheck(parse_expression("R.x + R.z"), scope) == DataType::Int64());
    CHECK(typecheck(parse_expression("R.x < 5000000000"), scope) == DataType::Bool());
    CHECK(typecheck(parse_expression("(R.x < 42) AND (R.y > 13)"), scope) == DataType::Bool());
    CHECK(typecheck(parse_expression("S.name = 'abc'"), scope) == DataType::Bool());
    CHECK_THROWS_AS(typecheck(parse_expression("R.x < 3.14"), scope), TypeError);
    CHECK_THROWS_AS(typecheck(parse_expression("R.nope"), scope), TypeError);
    CHECK_THROWS_AS(typecheck(parse_expression("x"), scope), TypeError); // ambiguous
    CHECK_THROWS_AS(typecheck(parse_expression("S.name + 1"), scope), TypeError);
    CHECK_THROWS_AS(typecheck(parse_expression("S.flag + S.flag"), scope), TypeError);
    CHECK_THROWS_AS(typecheck(parse_expression("R.x AND S.flag"), scope), TypeError);
    CHECK_THROWS_AS(typecheck(parse_expression("S.flag < 1"), scope), TypeError);
    CHECK(typecheck(parse_expression("rid"), scope) == DataType::Int32());

    SECTION("idempotent") {
        auto once = annotate(parse_expression("(R.x + R.z) * 2 < R.z"), scope);
        auto twice = annotate(once, scope);
        CHECK(equal(*once, *twice));
        CHECK(once->type == twice->type);
        auto &cmp = *twice->as<Cmp>();
        CHECK(cmp.left->type == DataType::Int64());
        CHECK(cmp.right->as<ColumnRef>()->index == 2u);
    }
}

TEST_CASE("classify_predicate", "[plan]")
{
    auto cat = make_catalog();
    auto scope = scope_of(cat, { "R", "S" });
    auto cls = [&](const char *text) { return classify_predicate(annotate(parse_expression(text), scope)); };

    CHECK(cls("R.x < 42 AND R.y > 13") == CheapnessClass::CHEAP);
    CHECK(cls("S.name = 'abc'") == CheapnessClass::COSTLY);
    CHECK(cls("S.tag = 'ab' AND R.x < 1") == CheapnessClass::CHEAP);
    CHECK(cls("NOT (S.tag = '123456789')") == CheapnessClass::COSTLY);
    CHECK_THROWS_AS(classify_predicate(parse_expression("R.x < 1")), TypeError);

    SECTION("exhaustive over tiny CHAR comparisons") {
        /* The rule: costly iff some CHAR comparison has max(n, m) > 8. */
        for (std::size_t n = 1; n <= 12; ++n) {
            for (std::size_t m = 1; m <= 12; ++m) {
                TableSchema s{ "C", { { "a", DataType::Char(n), {} }, { "b", DataType::Char(m), {} },
                                      { "i", DataType::Int32(), {} } } };
                std::vector<TableSchema> sc{ s };
                for (auto op : { "=", "<", ">=", "<>" }) {
                    auto e = annotate(parse_expression(std::string("a ") + op + " b"), sc);
                    auto expected = std::max(n, m) > 8 ? CheapnessClass::COSTLY : CheapnessClass::CHEAP;
                    CHECK(classify_predicate(e) == expected);
                    auto conj = annotate(parse_expression(std::string("i < 3 OR a ") + op + " b"), sc);
                    CHECK(classify_predicate(conj) == expected);
                }
            }
        }
    }
}

TEST_CASE("validate", "[plan]")
{
    auto cat = make_catalog();

    auto r = validate(make_scan("R"), cat);
    CHECK(r.columns.size() == 5);
    CHECK(r.columns[0].name == "x");

    auto p = validate(make_project({ parse_expression("R.x") },
                                   make_filter(parse_expression("R.val < 3.14"), make_scan("R"))), cat);
    REQUIRE(p.columns.size() == 1);
    CHECK(p.columns[0].name == "x");
    CHECK(p.columns[0].type == DataType::Int32());

    auto g = validate(make_group_by({ parse_expression("T.x") }, { AggFn{ AggKind::COUNT_STAR, nullptr, {} } },
                                    make_scan("T")), cat);
    REQUIRE(g.columns.size() == 2);
    CHECK(g.columns[0].name == "x");
    CHECK(g.columns[1].name == "count");
    CHECK(g.columns[1].type == DataType::Int64());

    SECTION("aggregate result types") {
        auto s = validate(make_group_by({}, { AggFn{ AggKind::SUM, parse_expression("R.x"), {} },
                                              AggFn{ AggKind::SUM, parse_expression("R.val"), {} },
                                              AggFn{ AggKind::MIN, parse_expression("R.x"), {} },
                                              AggFn{ AggKind::AVG, parse_expression("R.x"), "a" } },
                                        make_scan("R")), cat);
        CHECK(s.columns[0].type == DataType::Int64());
        CHECK(s.columns[1].type == DataType::Float64());
        CHECK(s.columns[2].type == DataType::Int32());
        CHECK(s.columns[3].type == DataType::Float64());
        CHECK(s.columns[3].name == "a");
        CHECK_THROWS_AS(validate(make_group_by({}, { AggFn{ AggKind::SUM, parse_expression("S.name"), {} } },
                                               make_scan("S")), cat), TypeError);
    }
    SECTION("joins orient keys") {
        auto plan = annotate_plan(make_hash_join(parse_expression("S.rid = R.id"), make_scan("R"), make_scan("S")),
                                  cat);
        auto &j = plan->as<JoinOp>();
        REQUIRE(j.keys.size() == 1);
        CHECK(j.keys[0].first->as<ColumnRef>()->column == "id");
        CHECK(j.keys[0].second->as<ColumnRef>()->column == "rid");
        CHECK(plan->output().columns.size() == 10);
        CHECK_THROWS_AS(annotate_plan(make_hash_join(parse_expression("R.x < S.x"), make_scan("R"), make_scan("S")),
                                      cat), PlanError);
        CHECK_THROWS_AS(annotate_plan(make_hash_join(parse_expression("R.x = S.name"), make_scan("R"),
                                                     make_scan("S")), cat), TypeError);
    }
    SECTION("errors") {
        CHECK_THROWS_AS(validate(make_scan("Q"), cat), CatalogError);
        CHECK_THROWS_AS(validate(make_filter(parse_expression("R.x + 1"), make_scan("R")), cat), TypeError);
        auto shared = make_scan("R");
        CHECK_THROWS_AS(validate(make_hash_join(parse_expression("R.x = R.x"), shared, shared), cat), PlanError);
        CHECK_THROWS_AS(validate(make_sort(OrderSpec{ { { parse_expression("S.flag"), Direction::ASC } } },
                                           make_scan("S")), cat), TypeError);
        CHECK_THROWS_AS(validate(make_sort(OrderSpec{}, make_scan("S")), cat), PlanError);
    }
}

TEST_CASE("expression text", "[plan]")
{
    for (const char *text : { "((R.x + R.y) * 2)", "(NOT (a < -5))", "((a = 'it''s') OR (b <> 2.5))",
                              "(x < 5000000000)", "(y >= 7L)", "(((a AND b) AND c) OR TRUE)", "(f = -0.25)" }) {
        auto e = parse_expression(text);
        CHECK(to_string(*e) == to_string(*parse_expression(to_string(*e))));
    }
    CHECK(parse_expression("1")->type == DataType::Int32());
    CHECK(parse_expression("-2147483648")->type == DataType::Int32());
    CHECK(parse_expression("2147483648")->type == DataType::Int64());
    CHECK(parse_expression("1L")->type == DataType::Int64());
    CHECK(parse_expression("1e3")->type == DataType::Float64());
    CHECK(parse_expression("'abc'")->type == DataType::Char(3));
    CHECK(to_string(*parse_expression("1.0")) == "1.0");
    CHECK(to_string(*parse_expression("a AND b AND c")) == "(a AND b AND c)");
    try {
        parse_expression("1 +");
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        CHECK(e.offset == 3);
    }
    CHECK_THROWS_AS(parse_expression("-x"), ParseError);
    CHECK_THROWS_AS(parse_expression("'abc"), ParseError);
    CHECK_THROWS_AS(parse_expression("a b"), ParseError);
}

TEST_CASE("plan text", "[plan]")
{
    auto cat = make_catalog();
    const char *text =
        "Sort keys=((R.x + R.y) ASC, R.z DESC)\n"
        "  Project exprs=(R.x AS a, R.y, R.z)\n"
        "    HashJoin on=((R.id = S.rid))\n"
        "      Filter pred=(R.x < 42)\n"
        "        Scan R\n"
        "      HashGroupBy keys=(S.rid) aggs=(COUNT(*), MIN(S.x) AS m)\n"
        "        Scan S AS S\n";
    auto plan = parse_plan(text);
    CHECK(plan->kind() == PlanNode::SORT);
    CHECK(to_text(*plan) == to_text(*parse_plan(to_text(*plan))));

    SECTION("annotated plans render to parseable text") {
        auto a = annotate_plan(parse_plan("HashJoin on=((T.x = R.x))\n  Scan R\n  Scan T\n"), cat);
        auto again = annotate_plan(parse_plan(to_text(*a)), cat);
        CHECK(to_text(*again) == to_text(*a));
    }
    SECTION("comments and blank lines") {
        auto p = parse_plan("-- a comment\n\nFilter pred=(x < 1)\n  Scan T\n");
        CHECK(validate(p, cat).columns.size() == 1);
    }
    SECTION("errors carry offsets") {
        try {
            parse_plan("Filter pred=(x <)\n  Scan T\n");
            FAIL("expected ParseError");
        } catch (const ParseError &e) {
            CHECK(e.offset == 16);
        }
        CHECK_THROWS_AS(parse_plan("Scan T\nScan R\n"), ParseError);
        CHECK_THROWS_AS(parse_plan("  Scan T\n"), ParseError);
        CHECK_THROWS_AS(parse_plan("Filter pred=(x < 1)\n      Scan T\n"), ParseError);
        CHECK_THROWS_AS(parse_plan(""), ParseError);
        CHECK_THROWS_AS(parse_plan("Explode T\n"), ParseError);
    }
}
