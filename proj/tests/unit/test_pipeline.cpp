#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/pipeline/Pipeline.hpp"
#include "wasmql/plan/Parser.hpp"
#include "wasmql/util/error.hpp"

#include <algorithm>
#include <catch_amalgamated.hpp>
#include <numeric>


using namespace wasmql;


namespace {

Catalog make_catalog()
{
    Catalog cat;
    for (const char *t : { "R", "S", "A", "B", "C" })
        cat.define_table(TableSchema{ t, { { "x", DataType::Int32(), {} }, { "id", DataType::Int32(), {} },
                                           { "rid", DataType::Int32(), {} } } });
    return cat;
}

PipelineGraph dissect_text(const Catalog &cat, const char *text)
{
    return dissect(annotate_plan(parse_plan(text), cat));
}

/** Lexicographically smallest permutation of 0..n-1 that respects `deps`, by enumeration. */
std::vector<std::size_t> brute_force_order(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>> &deps)
{
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        std::vector<std::size_t> pos(n);
        for (std::size_t i = 0; i != n; ++i) pos[perm[i]] = i;
        if (std::all_of(deps.begin(), deps.end(), [&](auto d) { return pos[d.first] < pos[d.second]; })) return perm;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {};
}

}

TEST_CASE("dissect", "[pipeline]")
{
    auto cat = make_catalog();

    SECTION("three pipelines of the grouping join") {
        auto g = dissect_text(cat,
            "Project exprs=(R.x, m)\n"
            "  HashGroupBy keys=(R.x) aggs=(MIN(S.x) AS m)\n"
            "    HashJoin on=((R.id = S.rid))\n"
            "      Filter pred=(R.x < 42)\n"
            "        Scan R\n"
            "      Scan S\n");
        CHECK(dump(g) ==
              "P0: Scan R -> Filter -> BuildHashTable #0\n"
              "P1: Scan S -> Probe #0 -> BuildHashTable #1 [after P0]\n"
              "P2: ScanHashTable #1 -> Project -> Result [after P1]\n");
        CHECK(topo_order(g) == std::vector<std::size_t>{ 0, 1, 2 });
        CHECK(g.breakers.size() == 2);
    }
    SECTION("single scan") {
        auto g = dissect_text(cat, "Scan R\n");
        CHECK(dump(g) == "P0: Scan R -> Result\n");
        CHECK(topo_order(g) == std::vector<std::size_t>{ 0 });
    }
    SECTION("sort") {
        auto g = dissect_text(cat, "Sort keys=(R.x ASC)\n  Filter pred=(R.x < 1)\n    Scan R\n");
        CHECK(dump(g) ==
              "P0: Scan R -> Filter -> MaterializeSortArray #0\n"
              "P1: ScanSortArray #0 -> Result [after P0]\n");
    }
    SECTION("two independent builds feeding one probe") {
        auto g = dissect_text(cat,
            "HashJoin on=((A.id = C.rid))\n"
            "  Scan A\n"
            "  HashJoin on=((B.id = C.x))\n"
            "    Scan B\n"
            "    Scan C\n");
        CHECK(dump(g) ==
              "P0: Scan A -> BuildHashTable #0\n"
              "P1: Scan B -> BuildHashTable #1\n"
              "P2: Scan C -> Probe #1 -> Probe #0 -> Result [after P0, P1]\n");
        CHECK(topo_order(g) == brute_force_order(3, g.deps));
    }
}

TEST_CASE("topo_order", "[pipeline]")
{
    SECTION("matches the smallest valid permutation on random DAGs") {
        Catch::Generators::RandomIntegerGenerator<int> rng(0, 1 << 30, 99);
        for (int round = 0; round != 200; ++round) {
            std::size_t n = 1 + rng.get() % 7;
            rng.next();
            /* Random edges over a random hidden permutation keep the graph acyclic. */
            std::vector<std::size_t> hidden(n);
            std::iota(hidden.begin(), hidden.end(), 0);
            for (std::size_t i = n; i > 1; --i) {
                std::swap(hidden[i - 1], hidden[rng.get() % i]);
                rng.next();
            }
            std::vector<std::pair<std::size_t, std::size_t>> deps;
            for (std::size_t i = 0; i != n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) {
                    if (rng.get() % 3 == 0) deps.emplace_back(hidden[i], hidden[j]);
                    rng.next();
                }
            CHECK(topo_order(n, deps) == brute_force_order(n, deps));
        }
    }
    SECTION("cycles are internal errors") {
        CHECK_THROWS_AS(topo_order(2, { { 0, 1 }, { 1, 0 } }), InternalError);
    }
}
