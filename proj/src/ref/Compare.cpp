#include "wasmql/ref/Compare.hpp"

#include "wasmql/ref/Interpreter.hpp"
#include <algorithm>
#include <cmath>
#include <sstream>


using namespace wasmql;

namespace {

using Row = std::vector<Value>;

/** Total order on rows for canonical sorting; NaN is not expected. */
bool row_less(const Row &a, const Row &b)
{
    for (std::size_t i = 0; i != a.size(); ++i) {
        const int c = ref::compare_values(a[i], b[i]);
        if (c) return c < 0;
    }
    return false;
}

bool value_close(const Value &a, const Value &b, double rel_tol)
{
    auto x = std::get_if<double>(&a), y = std::get_if<double>(&b);
    if (not x or not y) return a == b;
    if (*x == *y) return true;
    if (std::isnan(*x) and std::isnan(*y)) return true;
    const double scale = std::max({ std::abs(*x), std::abs(*y), 1.0 });
    return std::abs(*x - *y) <= rel_tol * scale;
}

std::vector<Row> rows_of(const Table &t)
{
    std::vector<Row> rows;
    rows.reserve(t.num_rows());
    for (std::size_t i = 0; i != t.num_rows(); ++i) rows.push_back(t.row(i));
    return rows;
}

}

std::string ref::format_row(const std::vector<Value> &row)
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i != row.size(); ++i) {
        if (i) os << ", ";
        std::visit([&](auto &v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::string>) os << '\'' << v << '\'';
            else if constexpr (std::is_same_v<T, bool>) os << (v ? "true" : "false");
            else os << v;
        }, row[i]);
    }
    os << ')';
    return os.str();
}

std::optional<std::string> ref::compare_tables(const Table &expected, const Table &actual, double rel_tol)
{
    if (expected.num_columns() != actual.num_columns())
        return "column count " + std::to_string(actual.num_columns()) + ", expected " +
               std::to_string(expected.num_columns());
    if (expected.num_rows() != actual.num_rows())
        return "row count " + std::to_string(actual.num_rows()) + ", expected " + std::to_string(expected.num_rows());
    auto e = rows_of(expected), a = rows_of(actual);
    std::sort(e.begin(), e.end(), row_less);
    std::sort(a.begin(), a.end(), row_less);
    for (std::size_t r = 0; r != e.size(); ++r)
        for (std::size_t c = 0; c != e[r].size(); ++c)
            if (not value_close(e[r][c], a[r][c], rel_tol))
                return "row " + format_row(a[r]) + ", expected " + format_row(e[r]);
    return std::nullopt;
}

std::optional<std::string> ref::check_order(const Table &t, const OrderSpec &order)
{
    std::optional<Row> prev;
    for (std::size_t i = 0; i != t.num_rows(); ++i) {
        auto row = t.row(i);
        Row keys;
        for (auto &k : order.keys) keys.push_back(ref::eval_expr(*k.expr, row));
        if (prev) {
            for (std::size_t k = 0; k != keys.size(); ++k) {
                int c = ref::compare_values((*prev)[k], keys[k]);
                if (order.keys[k].direction == Direction::DESC) c = -c;
                if (c < 0) break;
                if (c > 0) return "rows " + std::to_string(i - 1) + " and " + std::to_string(i) + " out of order";
            }
        }
        prev = std::move(keys);
    }
    return std::nullopt;
}

std::optional<std::string> ref::compare_to_reference(const PlanPtr &annotated, const Table &expected,
                                                      const Table &actual, double rel_tol)
{
    if (auto diff = compare_tables(expected, actual, rel_tol)) return diff;
    if (annotated->kind() == PlanNode::SORT) return check_order(actual, annotated->as<SortOp>().order);
    return std::nullopt;
}
