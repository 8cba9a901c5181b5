#include "wasmql/bench/Bench.hpp"

#include "wasmql/ref/Compare.hpp"
#include "wasmql/ref/Interpreter.hpp"
#include "wasmql/runtime/Runtime.hpp"
#include "wasmql/sql/Sql.hpp"
#include "wasmql/util/error.hpp"
#include <algorithm>
#include <array>
#include <random>
#include <sstream>


using namespace wasmql;
using namespace wasmql::bench;


const char *const bench::TPCH_Q1 =
    "SELECT l_returnflag, l_linestatus, SUM(l_quantity) AS sum_qty, SUM(l_extendedprice) AS sum_base_price, "
    "SUM(l_extendedprice * (1.0 - l_discount)) AS sum_disc_price, "
    "SUM(l_extendedprice * (1.0 - l_discount) * (1.0 + l_tax)) AS sum_charge, AVG(l_quantity) AS avg_qty, "
    "AVG(l_extendedprice) AS avg_price, AVG(l_discount) AS avg_disc, COUNT(*) AS count_order "
    "FROM lineitem WHERE l_shipdate <= 10471 "
    "GROUP BY l_returnflag, l_linestatus ORDER BY l_returnflag, l_linestatus";

const char *const bench::TPCH_Q6 =
    "SELECT SUM(l_extendedprice * l_discount) AS revenue FROM lineitem "
    "WHERE l_shipdate >= 8766 AND l_shipdate < 9131 AND l_discount >= 0.05 AND l_discount <= 0.07 "
    "AND l_quantity < 24.0";

Catalog bench::tpch_lineitem(std::size_t rows, std::uint64_t seed)
{
    Catalog cat;
    auto h = cat.define_table(TableSchema{ "lineitem", {
        { "l_quantity", DataType::Float64(), {} },
        { "l_extendedprice", DataType::Float64(), {} },
        { "l_discount", DataType::Float64(), {} },
        { "l_tax", DataType::Float64(), {} },
        { "l_returnflag", DataType::Char(1), {} },
        { "l_linestatus", DataType::Char(1), {} },
        { "l_shipdate", DataType::Int32(), {} },
    } });
    auto &t = cat.table(h);
    t.reserve(rows);
    std::mt19937_64 rng(seed);
    auto draw = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
    static const char *flags[] = { "A", "N", "R" }, *status[] = { "F", "O" };
    for (std::size_t i = 0; i != rows; ++i) {
        const auto quantity = draw(1, 50);
        const auto cents = quantity * draw(90000, 200000) / 100;
        std::array<Value, 7> row{
            double(quantity),
            double(cents) / 100.0,
            double(draw(0, 10)) / 100.0,
            double(draw(0, 8)) / 100.0,
            std::string(flags[draw(0, 2)]),
            std::string(status[draw(0, 1)]),
            std::int32_t(draw(8036, 10561)), // 1992-01-02 to 1998-12-01
        };
        t.append_row(row);
    }
    return cat;
}


/*======================================================================================================================
 * Suites
 *====================================================================================================================*/

namespace {

struct Query
{
    std::string id;
    std::string parameter;
    std::string sql;
    std::shared_ptr<const Catalog> catalog;
    std::vector<std::pair<std::string, Direction>> order; ///< output columns the result must be sorted by
};

std::shared_ptr<const Catalog> generated(TableSchema schema, GenSpec spec)
{
    auto cat = std::make_shared<Catalog>();
    cat->generate_table(std::move(schema), spec);
    return cat;
}

Column int32(std::string name) { return { std::move(name), DataType::Int32(), {} }; }
Column int64(std::string name) { return { std::move(name), DataType::Int64(), {} }; }

const std::vector<int> PERCENTS{ 1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 99 };

std::vector<Query> selectivity(const BenchOptions &o)
{
    auto cat = generated(TableSchema{ "T", { int32("x") } }, GenSpec{ o.rows, { UniformInt{ 0, 99 } }, o.seed });
    std::vector<Query> qs;
    for (int p : PERCENTS)
        qs.push_back({ "count_lt", std::to_string(p), "SELECT COUNT(*) FROM T WHERE x < " + std::to_string(p), cat,
                       {} });
    return qs;
}

std::vector<Query> conj_selectivity(const BenchOptions &o)
{
    auto cat = generated(TableSchema{ "T", { int32("x"), int32("y") } },
                         GenSpec{ o.rows, { UniformInt{ 0, 99 }, UniformInt{ 0, 99 } }, o.seed });
    std::vector<Query> qs;
    for (int p : PERCENTS) {
        auto v = std::to_string(p);
        qs.push_back({ "count_lt_and_lt", v, "SELECT COUNT(*) FROM T WHERE x < " + v + " AND y < " + v, cat, {} });
    }
    return qs;
}

std::vector<Query> groupby(const BenchOptions &o)
{
    std::vector<Query> qs;
    for (std::size_t d = 1; d <= std::max<std::size_t>(o.rows, 1); d *= 10) {
        auto cat = generated(TableSchema{ "T", { int32("g"), int64("v") } },
                             GenSpec{ o.rows, { UniformInt{ 0, std::int64_t(d) - 1 }, UniformInt{ -1000, 1000 } },
                                      o.seed });
        qs.push_back({ "group_count_sum", std::to_string(d), "SELECT g, COUNT(*), SUM(v) FROM T GROUP BY g", cat,
                       {} });
    }
    return qs;
}

std::vector<Query> aggregates(const BenchOptions &o)
{
    constexpr int MAX = 8;
    TableSchema schema{ "T", {} };
    GenSpec spec{ o.rows, {}, o.seed };
    for (int i = 0; i != MAX; ++i) {
        schema.columns.push_back(int64("c" + std::to_string(i)));
        spec.columns.push_back(UniformInt{ -1000, 1000 });
    }
    auto cat = generated(schema, spec);
    std::vector<Query> qs;
    std::string items;
    for (int k = 1; k <= MAX; ++k) {
        if (k > 1) items += ", ";
        items += "SUM(c" + std::to_string(k - 1) + ")";
        qs.push_back({ "sums", std::to_string(k), "SELECT " + items + " FROM T", cat, {} });
    }
    return qs;
}

std::vector<Query> join(const BenchOptions &o)
{
    /* every S row matches exactly one R row: |R join S| / (|R| |S|) = 1 / rows */
    auto cat = std::make_shared<Catalog>();
    const auto n = std::max<std::size_t>(o.rows, 1);
    cat->generate_table(TableSchema{ "R", { int32("id"), int64("a") } },
                        GenSpec{ n, { Sequential{ 0 }, UniformInt{ 0, 1000 } }, o.seed });
    cat->generate_table(TableSchema{ "S", { int32("fk"), int64("b") } },
                        GenSpec{ n, { UniformInt{ 0, std::int64_t(n) - 1 }, UniformInt{ 0, 1000 } }, o.seed + 1 });
    std::ostringstream sel;
    sel << 1.0 / double(n);
    return { { "count_join", sel.str(), "SELECT COUNT(*), SUM(R.a + S.b) FROM R, S WHERE R.id = S.fk", cat, {} } };
}

std::vector<Query> sort(const BenchOptions &o)
{
    auto cat = generated(TableSchema{ "T", { int32("a"), int64("b") } },
                         GenSpec{ o.rows, { UniformInt{ 0, 999 }, UniformInt{ -1'000'000, 1'000'000 } }, o.seed });
    return { { "order_2_keys", "2", "SELECT a, b FROM T ORDER BY a, b DESC", cat,
               { { "a", Direction::ASC }, { "b", Direction::DESC } } } };
}

std::vector<Query> tpch(const BenchOptions &o)
{
    std::shared_ptr<const Catalog> cat = std::make_shared<Catalog>(tpch_lineitem(o.rows, o.seed));
    auto rows = std::to_string(o.rows);
    return { { "Q1", rows, TPCH_Q1, cat, { { "l_returnflag", Direction::ASC }, { "l_linestatus", Direction::ASC } } },
             { "Q6", rows, TPCH_Q6, cat, {} } };
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

void validate(const Query &q, const PlanPtr &plan, const Table &actual)
{
    auto annotated = annotate_plan(plan, *q.catalog);
    auto diff = ref::compare_to_reference(annotated, ref::interpret(plan, *q.catalog), actual);
    if (not diff and not q.order.empty()) {
        OrderSpec order;
        const TableSchema scope[] = { actual.schema() };
        for (auto &[name, dir] : q.order) order.keys.push_back({ annotate(make_column({}, name), scope), dir });
        diff = ref::check_order(actual, order);
    }
    if (diff) throw InternalError("benchmark query " + q.id + " (" + q.parameter + ") differs from the reference: " +
                                  *diff);
}

}

const std::vector<std::string> & bench::suites()
{
    static const std::vector<std::string> names{ "selectivity", "conj-selectivity", "groupby", "aggregates", "join",
                                                 "sort", "tpch" };
    return names;
}

std::vector<BenchRow> bench::run_suite(std::string_view suite, std::shared_ptr<Engine> engine,
                                       const BenchOptions &options,
                                       const std::function<void(const BenchRow&)> &progress)
{
    std::vector<Query> queries;
    if (suite == "selectivity") queries = selectivity(options);
    else if (suite == "conj-selectivity") queries = conj_selectivity(options);
    else if (suite == "groupby") queries = groupby(options);
    else if (suite == "aggregates") queries = aggregates(options);
    else if (suite == "join") queries = join(options);
    else if (suite == "sort") queries = sort(options);
    else if (suite == "tpch") queries = tpch(options);
    else throw PlanError("unknown benchmark suite '" + std::string(suite) + "'");

    CompileOptions copt;
    copt.filter_style = options.filter_style;
    ExecOptions eopt;
    eopt.window_bytes = options.window_bytes;
    eopt.opt_level = options.opt_level;
    Executor executor(std::move(engine));

    std::vector<BenchRow> rows;
    for (auto &q : queries) {
        auto plan = parse_sql(q.sql, q.catalog.get());
        std::vector<double> codegen, engine_compile, exec;
        std::uint64_t result_rows = 0;
        for (unsigned rep = 0; rep != std::max(options.repetitions, 1u); ++rep) {
            auto compiled = compile_query(plan, *q.catalog, copt);
            executor.clear_cache();
            auto r = executor.execute(compiled, *q.catalog, eopt);
            if (rep == 0) validate(q, plan, r.table);
            codegen.push_back(r.timings.t_codegen);
            engine_compile.push_back(r.timings.t_engine_compile);
            exec.push_back(r.timings.t_exec);
            result_rows = r.table.num_rows();
        }
        rows.push_back({ std::string(suite), q.id, q.parameter, median(codegen), median(engine_compile), median(exec),
                         result_rows });
        if (progress) progress(rows.back());
    }
    return rows;
}

void bench::write_csv_header(std::ostream &out)
{
    out << "suite,query,parameter,t_codegen_us,t_engine_compile_us,t_exec_us,result_rows\n";
}

void bench::write_csv_row(std::ostream &out, const BenchRow &r)
{
    out << r.suite << ',' << r.query << ',' << r.parameter << ',' << r.t_codegen_us << ',' << r.t_engine_compile_us
        << ',' << r.t_exec_us << ',' << r.result_rows << '\n';
}

void bench::write_csv(std::ostream &out, const std::vector<BenchRow> &rows)
{
    write_csv_header(out);
    for (auto &r : rows) write_csv_row(out, r);
}
