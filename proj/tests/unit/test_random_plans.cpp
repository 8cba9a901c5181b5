#include "support/Compare.hpp"
#include "support/Fixtures.hpp"
#include "support/RandomPlan.hpp"
#include "wasmql/plan/Parser.hpp"
#include "wasmql/ref/Interpreter.hpp"
#include "wasmql/runtime/Runtime.hpp"

#include <catch_amalgamated.hpp>


using namespace wasmql;
using namespace wasmql::test;


TEST_CASE("random plans are valid and reproducible", "[random]")
{
    auto cat = random_plan_catalog(2000);
    RandomPlanGenerator a(cat, 7), b(cat, 7);
    OperatorCounts counts{};
    for (int i = 0; i != 60; ++i) {
        auto p = a.next();
        CHECK(to_text(*p) == to_text(*b.next()));
        CHECK_NOTHROW(validate(p, cat));
        count_operators(*p, counts);
    }
    for (auto n : counts) CHECK(n > 0);
}

TEST_CASE("random plans agree with the reference", "[random]")
{
    auto cat = random_plan_catalog(2000);
    RandomPlanGenerator gen(cat, 11);
    for (auto &name : engines()) {
        auto engine = make_engine(name);
        for (int i = 0; i != 25; ++i) {
            auto plan = gen.next();
            CAPTURE(name, to_text(*plan));
            CompileOptions opts;
            if (i % 2) opts.filter_style = FilterStyle::BRANCHLESS;
            auto result = run_query(plan, cat, *engine, opts);
            auto diff = compare_to_reference(annotate_plan(plan, cat), ref::interpret(plan, cat), result.table);
            INFO((diff ? *diff : ""));
            CHECK_FALSE(diff);
        }
    }
}
