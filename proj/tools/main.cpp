#include "wasmql/bench/Bench.hpp"
#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/compiler/QueryCompiler.hpp"
#include "wasmql/plan/Parser.hpp"
#include "wasmql/runtime/Runtime.hpp"
#include "wasmql/sql/Sql.hpp"
#include "wasmql/util/error.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>


using namespace wasmql;


namespace {

struct UsageError : Error
{
    using Error::Error;
};

std::string read_file(const std::string &path)
{
    if (path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    std::ifstream in(path, std::ios::binary);
    if (not in) throw UsageError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\n");
    if (b == s.npos) return {};
    auto e = s.find_last_not_of(" \t\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> words(const std::string &s)
{
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::int64_t to_int(const std::string &s, const std::string &spec)
{
    try {
        std::size_t end;
        auto v = std::stoll(s, &end);
        if (end == s.size()) return v;
    } catch (const std::exception&) { }
    throw UsageError("bad number '" + s + "' in '" + spec + "'");
}

/* NAME(col TYPE [distribution], ...)=REST.  Distributions: uniform LO HI | seq [START] | const V | float01. */
struct TableSpec
{
    TableSchema schema;
    std::vector<std::optional<Distribution>> dists;
    std::string rest;
};

TableSpec parse_table_spec(const std::string &spec)
{
    auto open = spec.find('(');
    if (open == spec.npos) throw UsageError("expected NAME(columns)=... in '" + spec + "'");
    std::size_t close = open, depth = 0;
    for (; close < spec.size(); ++close) {
        if (spec[close] == '(') ++depth;
        else if (spec[close] == ')' and --depth == 0) break;
    }
    if (close == spec.size() or close + 1 >= spec.size() or spec[close + 1] != '=')
        throw UsageError("expected NAME(columns)=... in '" + spec + "'");

    TableSpec t;
    t.schema.name = trim(spec.substr(0, open));
    t.rest = spec.substr(close + 2);
    std::vector<std::string> cols;
    std::string cur;
    depth = 0;
    for (char c : spec.substr(open + 1, close - open - 1)) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' and depth == 0) {
            cols.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    cols.push_back(cur);
    for (auto &col : cols) {
        auto w = words(col);
        if (w.size() < 2) throw UsageError("expected 'name TYPE' for column '" + trim(col) + "'");
        t.schema.columns.push_back({ w[0], DataType::parse(w[1]), {} });
        std::optional<Distribution> d;
        if (w.size() > 2) {
            const auto &kind = w[2];
            if (kind == "uniform" and w.size() == 5) d = UniformInt{ to_int(w[3], spec), to_int(w[4], spec) };
            else if (kind == "seq" and w.size() <= 4) d = Sequential{ w.size() == 4 ? to_int(w[3], spec) : 0 };
            else if (kind == "float01" and w.size() == 3) d = UniformFloat01{};
            else if (kind == "const" and w.size() == 4) {
                Table one(TableSchema{ "c", { t.schema.columns.back() } });
                read_csv(one, w[3] + "\n", false);
                d = Const{ one.get(0, 0) };
            } else {
                throw UsageError("bad distribution in column '" + trim(col) + "'");
            }
        }
        t.dists.push_back(d);
    }
    t.schema.check();
    return t;
}

Distribution default_distribution(DataType type, std::size_t rows)
{
    switch (type.kind) {
        case DataType::FLOAT64: return UniformFloat01{};
        case DataType::BOOL:    return UniformInt{ 0, 1 };
        default:                return UniformInt{ 0, std::int64_t(std::max<std::size_t>(rows, 1)) - 1 };
    }
}

struct DataOptions
{
    std::vector<std::string> tables;
    std::vector<std::string> generated;
    bool csv_header = false;
    std::uint64_t seed = 1;
};

Catalog load_catalog(const DataOptions &o)
{
    Catalog cat;
    for (auto &spec : o.tables) {
        auto t = parse_table_spec(spec);
        for (auto &d : t.dists)
            if (d) throw UsageError("distributions are only allowed with --gen: '" + spec + "'");
        auto h = cat.define_table(t.schema);
        cat.ingest_csv(h, read_file(t.rest), o.csv_header);
    }
    std::uint64_t seed = o.seed;
    for (auto &spec : o.generated) {
        auto t = parse_table_spec(spec);
        GenSpec g{ std::size_t(to_int(t.rest, spec)), {}, seed++ };
        for (std::size_t i = 0; i != t.dists.size(); ++i)
            g.columns.push_back(t.dists[i] ? *t.dists[i] : default_distribution(t.schema.columns[i].type, g.rows));
        cat.generate_table(t.schema, g);
    }
    return cat;
}

void print_table(std::ostream &out, const Table &t)
{
    const auto &cols = t.schema().columns;
    std::vector<std::vector<std::string>> cells(t.num_rows());
    std::vector<std::size_t> width(cols.size());
    for (std::size_t c = 0; c != cols.size(); ++c) width[c] = cols[c].name.size();
    for (std::size_t r = 0; r != t.num_rows(); ++r)
        for (std::size_t c = 0; c != cols.size(); ++c) {
            cells[r].push_back(to_string(t.get(c, r)));
            width[c] = std::max(width[c], cells[r].back().size());
        }
    auto line = [&](auto &&cell) {
        for (std::size_t c = 0; c != cols.size(); ++c) {
            if (c) out << " | ";
            std::string s = cell(c);
            bool right = cols[c].type.is_numeric();
            if (right) out << std::string(width[c] - s.size(), ' ') << s;
            else out << s << std::string(c + 1 == cols.size() ? 0 : width[c] - s.size(), ' ');
        }
        out << '\n';
    };
    line([&](std::size_t c) { return cols[c].name; });
    for (std::size_t c = 0; c != cols.size(); ++c) out << (c ? "-+-" : "") << std::string(width[c], '-');
    out << '\n';
    for (auto &row : cells) line([&](std::size_t c) { return row[c]; });
    out << '(' << t.num_rows() << (t.num_rows() == 1 ? " row)\n" : " rows)\n");
}

OptLevel parse_opt(const std::string &s) { return s == "fast" ? OptLevel::FAST : OptLevel::OPTIMIZING; }

void add_data_options(CLI::App *cmd, DataOptions &o)
{
    cmd->add_option("--table", o.tables,
                    "Load a CSV file: 'NAME(col TYPE, ...)=path.csv'")->allow_extra_args(false);
    cmd->add_option("--gen", o.generated,
                    "Generate a table: 'NAME(col TYPE [uniform LO HI|seq [START]|const V|float01], ...)=ROWS'")
        ->allow_extra_args(false);
    cmd->add_flag("--csv-header", o.csv_header, "CSV files start with a header line");
    cmd->add_option("--seed", o.seed, "Seed of generated tables");
}

}


int main(int argc, char **argv)
{
    CLI::App app{ "Compiles SQL queries to WebAssembly and runs them." };
    app.require_subcommand(1);

    std::string engine_name;
    std::string engine_opt = "full";
    bool branchless = false;
    std::optional<std::uint64_t> window;
    auto add_exec_options = [&](CLI::App *cmd) {
        cmd->add_option("--engine", engine_name, "Engine name (default: $WASMQL_ENGINE or the first available)");
        cmd->add_option("--engine-opt", engine_opt, "Engine optimization level")
            ->check(CLI::IsMember({ "fast", "full" }));
        cmd->add_flag("--branchless-filter", branchless, "Mask filters instead of branching where possible");
        cmd->add_option("--window-bytes", window, "Stream tables larger than this many bytes in chunks");
    };

    auto *exec = app.add_subcommand("exec", "Run one SQL query and print its result");
    std::string sql_path;
    bool dump_wat = false, explain = false;
    std::string format = "table";
    DataOptions data;
    exec->add_option("file", sql_path, "SQL file, or - for standard input")->required();
    exec->add_flag("--dump-wat", dump_wat, "Write the module in text format to standard error");
    exec->add_flag("--explain", explain, "Write the plan to standard error");
    exec->add_option("--format", format, "Result format")->check(CLI::IsMember({ "table", "csv" }));
    add_exec_options(exec);
    add_data_options(exec, data);

    auto *bench_cmd = app.add_subcommand("bench", "Run a benchmark suite and write a CSV report");
    std::string suite;
    std::string out_path;
    bench::BenchOptions bopt;
    std::vector<std::string> suite_names = bench::suites();
    suite_names.push_back("all");
    bench_cmd->add_option("suite", suite, "Suite name")->required()->check(CLI::IsMember(suite_names));
    bench_cmd->add_option("--rows", bopt.rows, "Rows per generated table");
    bench_cmd->add_option("--reps", bopt.repetitions, "Repetitions per query; medians are reported");
    bench_cmd->add_option("--seed", bopt.seed, "Data seed");
    bench_cmd->add_option("--out", out_path, "Write the CSV here instead of standard output");
    add_exec_options(bench_cmd);

    auto *engines_cmd = app.add_subcommand("engines", "List the available engines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*engines_cmd) {
            for (auto &n : available_engines()) std::cout << n << '\n';
            return 0;
        }

        std::shared_ptr<Engine> engine = make_engine(engine_name);

        if (*exec) {
            auto text = read_file(sql_path);
            auto catalog = load_catalog(data);
            auto plan = parse_sql(text, &catalog);
            if (explain) std::cerr << to_text(*annotate_plan(plan, catalog));

            CompileOptions copt;
            copt.filter_style = branchless ? FilterStyle::BRANCHLESS : FilterStyle::BRANCHING;
            copt.emit_wat = dump_wat;
            auto compiled = compile_query(plan, catalog, copt);
            if (dump_wat and compiled.wat) std::cerr << *compiled.wat;

            ExecOptions eopt;
            eopt.window_bytes = window;
            eopt.opt_level = parse_opt(engine_opt);
            Executor executor(engine);
            auto r = executor.execute(compiled, catalog, eopt);

            if (format == "csv") std::cout << write_csv(r.table, true);
            else print_table(std::cout, r.table);
            std::cout.flush();

            auto &t = r.timings;
            std::fprintf(stderr,
                         "rows %zu, codegen %.0f us, engine compile %.0f us, setup %.0f us, exec %.0f us, "
                         "module %zu bytes, chunks %llu, flushes %llu, retries %llu, engine %s\n",
                         r.table.num_rows(), t.t_codegen, t.t_engine_compile, t.t_setup, t.t_exec,
                         compiled.binary.size(), (unsigned long long) r.counters.chunks_served,
                         (unsigned long long) r.counters.result_flushes, (unsigned long long) r.counters.retries,
                         std::string(engine->name()).c_str());
            return 0;
        }

        if (*bench_cmd) {
            bopt.filter_style = branchless ? FilterStyle::BRANCHLESS : FilterStyle::BRANCHING;
            bopt.opt_level = parse_opt(engine_opt);
            bopt.window_bytes = window;
            std::ofstream file;
            if (not out_path.empty()) {
                file.open(out_path);
                if (not file) throw UsageError("cannot write '" + out_path + "'");
            }
            std::ostream &out = out_path.empty() ? std::cout : file;
            bench::write_csv_header(out);
            std::vector<std::string> run = suite == "all" ? bench::suites() : std::vector{ suite };
            for (auto &s : run)
                bench::run_suite(s, engine, bopt, [&](const bench::BenchRow &row) {
                    bench::write_csv_row(out, row);
                    out.flush();
                    std::fprintf(stderr, "%s %s %s: exec %.0f us\n", row.suite.c_str(), row.query.c_str(),
                                 row.parameter.c_str(), row.t_exec_us);
                });
            return 0;
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.user_error() ? 1 : 2;
    } catch (const std::exception &e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
