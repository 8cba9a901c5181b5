#include "wasmql/bench/Bench.hpp"
#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/util/error.hpp"

#include <catch_amalgamated.hpp>
#include <map>
#include <sstream>


using namespace wasmql;


TEST_CASE("every suite runs and validates at small scale", "[bench]")
{
    bench::BenchOptions o;
    o.rows = 1000;
    o.repetitions = 1;
    const std::map<std::string, std::size_t> expected_rows{ { "selectivity", 11 }, { "conj-selectivity", 11 },
                                                            { "groupby", 4 }, { "aggregates", 8 }, { "join", 1 },
                                                            { "sort", 1 }, { "tpch", 2 } };
    std::shared_ptr<Engine> engine = make_engine();
    for (auto &suite : bench::suites()) {
        CAPTURE(suite);
        std::size_t progress = 0;
        auto rows = bench::run_suite(suite, engine, o, [&](auto &) { ++progress; });
        CHECK(rows.size() == expected_rows.at(suite));
        CHECK(progress == rows.size());
        for (auto &r : rows) {
            CHECK(r.suite == suite);
            CHECK(r.t_codegen_us > 0);
            CHECK(r.t_engine_compile_us > 0);
        }
        if (suite == "sort") CHECK(rows[0].result_rows == 1000);
        if (suite == "join") CHECK(rows[0].parameter == "0.001");
    }
    CHECK_THROWS_AS(bench::run_suite("nope", engine, o), PlanError);
}

TEST_CASE("report format", "[bench]")
{
    std::ostringstream out;
    bench::write_csv(out, { { "s", "q", "p", 1.5, 2, 3, 4 } });
    CHECK(out.str() == "suite,query,parameter,t_codegen_us,t_engine_compile_us,t_exec_us,result_rows\n"
                       "s,q,p,1.5,2,3,4\n");
}

TEST_CASE("lineitem domains", "[bench]")
{
    auto cat = bench::tpch_lineitem(2000, 3);
    auto &t = cat.get("lineitem");
    REQUIRE(t.num_rows() == 2000);
    for (std::size_t i = 0; i != t.num_rows(); ++i) {
        auto q = std::get<double>(t.get(0, i));
        auto d = std::get<double>(t.get(2, i));
        auto date = std::get<std::int32_t>(t.get(6, i));
        REQUIRE((q >= 1 and q <= 50));
        REQUIRE((d >= 0 and d <= 0.1));
        REQUIRE((date >= 8036 and date <= 10561));
    }
}
