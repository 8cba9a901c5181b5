#pragma once

#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/plan/Plan.hpp"
#include <array>
#include <cstdint>
#include <random>


namespace wasmql::test {

/** Three tables with known, small value domains:
 *   A(id INT32 0..n-1, g INT32 0..99, v INT64 -1000..1000, f FLOAT64 [0,1), b BOOL, s CHAR(4) '0'..'49')   n rows
 *   B(id INT32 0..9999, g INT32 0..99, w FLOAT64 [0,1), s CHAR(4) '0'..'49')                                 n/5 rows
 *   C(g INT32 0..99, k INT64 0..9, name CHAR(6) '0'..'20', x FLOAT64 [0,1))                                    n/50 rows */
Catalog random_plan_catalog(std::size_t rows = 10000, std::uint64_t seed = 42);

struct RandomPlanOptions
{
    std::size_t max_depth = 4;    ///< operators on the longest path above a scan
    std::uint64_t max_join_rows = 60000; ///< plans with a larger join result are regenerated
};

/** Generates valid plans over `random_plan_catalog()` from a seed.  Filters, keys and sort keys only use columns whose
 * values do not depend on evaluation order, so results are comparable across implementations. */
class RandomPlanGenerator
{
    const Catalog &catalog_;
    RandomPlanOptions options_;
    std::mt19937_64 rng_;
    std::size_t names_ = 0;
    std::size_t aliases_ = 0;

    public:
    RandomPlanGenerator(const Catalog &catalog, std::uint64_t seed, RandomPlanOptions options = {})
        : catalog_(catalog), options_(options), rng_(seed)
    { }

    PlanPtr next();

    private:
    struct Node;
    struct Column;
    Node generate(std::size_t depth);
    Node scan();
    Node filter(Node child);
    Node project(Node child);
    Node group_by(Node child);
    Node join(Node build, Node probe);
    Node sort(Node child);
    std::vector<Column> columns(const Node &n, bool exact_only) const;

    ExprPtr int_expr(const std::vector<Column> &cols, int depth);
    ExprPtr float_expr(const std::vector<Column> &cols, int depth);
    ExprPtr char_expr(const std::vector<Column> &cols);
    ExprPtr predicate(const std::vector<Column> &cols, int depth);
    ExprPtr any_expr(const std::vector<Column> &cols, DataType::Kind &kind);

    std::size_t uniform(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
    std::string fresh_name(const char *prefix) { return prefix + std::to_string(names_++); }
};

/** Operator counts over a set of plans, indexed by `PlanNode::Kind`. */
using OperatorCounts = std::array<std::size_t, 6>;
void count_operators(const PlanNode &plan, OperatorCounts &counts);

}
