#include "wasmql/ref/Interpreter.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>
#include <cstring>
#include <limits>
#include <map>


using namespace wasmql;
using namespace wasmql::ref;

using Row = std::vector<Value>;


/*======================================================================================================================
 * Expressions
 *====================================================================================================================*/

namespace {

std::int64_t as_int64(const Value &v)
{
    if (auto p = std::get_if<std::int32_t>(&v)) return *p;
    return std::get<std::int64_t>(v);
}

template<typename T>
T arith(ArithOp op, T a, T b)
{
    using U = std::make_unsigned_t<T>;
    switch (op) {
        case ArithOp::ADD: return static_cast<T>(static_cast<U>(a) + static_cast<U>(b));
        case ArithOp::SUB: return static_cast<T>(static_cast<U>(a) - static_cast<U>(b));
        case ArithOp::MUL: return static_cast<T>(static_cast<U>(a) * static_cast<U>(b));
        case ArithOp::DIV:
            if (b == 0) throw EvalError("division by zero");
            if (a == std::numeric_limits<T>::min() and b == -1) throw EvalError("integer overflow in division");
            return a / b;
    }
    return 0;
}

double arith(ArithOp op, double a, double b)
{
    switch (op) {
        case ArithOp::ADD: return a + b;
        case ArithOp::SUB: return a - b;
        case ArithOp::MUL: return a * b;
        case ArithOp::DIV: return a / b;
    }
    return 0;
}

bool holds(int c, CmpOp op)
{
    switch (op) {
        case CmpOp::LT: return c < 0;
        case CmpOp::LE: return c <= 0;
        case CmpOp::EQ: return c == 0;
        case CmpOp::NE: return c != 0;
        case CmpOp::GE: return c >= 0;
        case CmpOp::GT: return c > 0;
    }
    return false;
}

}

int ref::compare_values(const Value &a, const Value &b)
{
    auto sign = [](auto x, auto y) { return (x > y) - (x < y); };
    const bool ia = std::holds_alternative<std::int32_t>(a) or std::holds_alternative<std::int64_t>(a);
    const bool ib = std::holds_alternative<std::int32_t>(b) or std::holds_alternative<std::int64_t>(b);
    if (ia and ib) return sign(as_int64(a), as_int64(b));
    if (a.index() != b.index()) throw InternalError("comparison of incompatible values");
    if (auto x = std::get_if<double>(&a)) return sign(*x, std::get<double>(b));
    if (auto x = std::get_if<bool>(&a)) return sign(int(*x), int(std::get<bool>(b)));
    auto &x = std::get<std::string>(a), &y = std::get<std::string>(b);
    const int c = std::memcmp(x.data(), y.data(), std::min(x.size(), y.size()));
    if (c) return c < 0 ? -1 : 1;
    /* A longer string with the shorter as prefix has a nonzero byte where the shorter is padded. */
    return sign(x.size(), y.size());
}

Value ref::eval_expr(const Expr &expr, std::span<const Value> row)
{
    return std::visit([&](auto &n) -> Value {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ColumnRef>) {
            if (not n.index or *n.index >= row.size()) throw InternalError("unresolved column '" + n.column + "'");
            return row[*n.index];
        } else if constexpr (std::is_same_v<T, Literal>) {
            return n.value;
        } else if constexpr (std::is_same_v<T, Arith>) {
            const Value a = eval_expr(*n.left, row), b = eval_expr(*n.right, row);
            switch (expr.type->kind) {
                case DataType::INT32:
                    return arith(n.op, std::get<std::int32_t>(a), std::get<std::int32_t>(b));
                case DataType::INT64:
                    return arith(n.op, as_int64(a), as_int64(b));
                case DataType::FLOAT64:
                    return arith(n.op, std::get<double>(a), std::get<double>(b));
                default:
                    throw InternalError("arithmetic over " + expr.type->to_string());
            }
        } else if constexpr (std::is_same_v<T, Cmp>) {
            return holds(compare_values(eval_expr(*n.left, row), eval_expr(*n.right, row)), n.op);
        } else {
            switch (n.op) {
                case LogicOp::NOT: return not std::get<bool>(eval_expr(*n.operands[0], row));
                case LogicOp::AND:
                    for (auto &o : n.operands)
                        if (not std::get<bool>(eval_expr(*o, row))) return false;
                    return true;
                case LogicOp::OR:
                    for (auto &o : n.operands)
                        if (std::get<bool>(eval_expr(*o, row))) return true;
                    return false;
            }
            return false;
        }
    }, expr.node);
}


/*======================================================================================================================
 * Plans
 *====================================================================================================================*/

namespace {

/** Key normalization for hashing and grouping: integers widen, `-0.0` becomes `0.0`. */
Value normalize(const Value &v)
{
    if (auto p = std::get_if<std::int32_t>(&v)) return std::int64_t(*p);
    if (auto d = std::get_if<double>(&v)) return *d + 0.0;
    return v;
}

struct KeyLess
{
    bool operator()(const Row &a, const Row &b) const {
        for (std::size_t i = 0; i != a.size(); ++i) {
            const int c = compare_values(a[i], b[i]);
            if (c) return c < 0;
        }
        return false;
    }
};

struct Accumulator
{
    std::int64_t count = 0;
    std::int64_t isum = 0;
    double fsum = 0;
    std::optional<Value> extreme;
};

Value finish(const AggFn &agg, const Accumulator &acc)
{
    switch (agg.kind) {
        case AggKind::COUNT_STAR: return acc.count;
        case AggKind::SUM:
            if (agg.arg->type->is_integral()) return acc.isum;
            return acc.fsum;
        case AggKind::MIN:
        case AggKind::MAX:
            return acc.extreme ? *acc.extreme : default_value(*agg.arg->type);
        case AggKind::AVG:
            if (acc.count == 0) return 0.0;
            if (agg.arg->type->is_integral()) return double(acc.isum) / double(acc.count);
            return acc.fsum / double(acc.count);
    }
    return std::int64_t(0);
}

void update(const AggFn &agg, Accumulator &acc, std::span<const Value> row)
{
    ++acc.count;
    if (agg.kind == AggKind::COUNT_STAR) return;
    const Value v = eval_expr(*agg.arg, row);
    switch (agg.kind) {
        case AggKind::SUM:
        case AggKind::AVG:
            if (agg.arg->type->is_integral())
                acc.isum = static_cast<std::int64_t>(static_cast<std::uint64_t>(acc.isum) +
                                                     static_cast<std::uint64_t>(as_int64(v)));
            else
                acc.fsum += std::get<double>(v);
            break;
        case AggKind::MIN:
            if (not acc.extreme or compare_values(v, *acc.extreme) < 0) acc.extreme = v;
            break;
        case AggKind::MAX:
            if (not acc.extreme or compare_values(v, *acc.extreme) > 0) acc.extreme = v;
            break;
        default:
            break;
    }
}

struct Interpreter
{
    const Catalog &catalog;
    JoinStrategy joins;

    std::vector<Row> run(const PlanNode &node) {
        switch (node.kind()) {
            case PlanNode::SCAN: {
                auto &t = catalog.get(node.as<ScanOp>().table);
                std::vector<Row> rows;
                rows.reserve(t.num_rows());
                for (std::size_t i = 0; i != t.num_rows(); ++i) rows.push_back(t.row(i));
                return rows;
            }
            case PlanNode::FILTER: {
                auto &pred = *node.as<FilterOp>().predicate;
                std::vector<Row> out;
                for (auto &r : run(node.child()))
                    if (std::get<bool>(eval_expr(pred, r))) out.push_back(std::move(r));
                return out;
            }
            case PlanNode::PROJECT: {
                auto &p = node.as<ProjectOp>();
                std::vector<Row> out;
                for (auto &r : run(node.child())) {
                    Row o;
                    for (auto &e : p.exprs) o.push_back(eval_expr(*e, r));
                    out.push_back(std::move(o));
                }
                return out;
            }
            case PlanNode::GROUP_BY: return group(node);
            case PlanNode::JOIN:     return join(node);
            case PlanNode::SORT:     return sort(node);
        }
        return {};
    }

    std::vector<Row> group(const PlanNode &node) {
        auto &g = node.as<GroupByOp>();
        auto input = run(node.child());
        std::map<Row, std::size_t, KeyLess> index;
        std::vector<std::pair<Row, std::vector<Accumulator>>> groups;
        if (g.keys.empty()) groups.emplace_back(Row{}, std::vector<Accumulator>(g.aggs.size()));
        for (auto &r : input) {
            Row key;
            for (auto &k : g.keys) key.push_back(eval_expr(*k, r));
            std::size_t gi = 0;
            if (not g.keys.empty()) {
                auto [it, fresh] = index.try_emplace(key, groups.size());
                if (fresh) groups.emplace_back(std::move(key), std::vector<Accumulator>(g.aggs.size()));
                gi = it->second;
            }
            for (std::size_t a = 0; a != g.aggs.size(); ++a) update(g.aggs[a], groups[gi].second[a], r);
        }
        std::vector<Row> out;
        for (auto &[key, accs] : groups) {
            Row o = key;
            for (std::size_t a = 0; a != g.aggs.size(); ++a) o.push_back(finish(g.aggs[a], accs[a]));
            out.push_back(std::move(o));
        }
        return out;
    }

    std::vector<Row> join(const PlanNode &node) {
        auto &j = node.as<JoinOp>();
        auto build = run(node.child(0));
        auto probe = run(node.child(1));
        auto keys_of = [&](const Row &r, bool build_side) {
            Row k;
            for (auto &[b, p] : j.keys) k.push_back(normalize(eval_expr(build_side ? *b : *p, r)));
            return k;
        };
        std::vector<Row> out;
        auto emit = [&](const Row &b, const Row &p) {
            Row o = b;
            o.insert(o.end(), p.begin(), p.end());
            out.push_back(std::move(o));
        };
        if (joins == JoinStrategy::HASH) {
            std::map<Row, std::vector<std::size_t>, KeyLess> table;
            for (std::size_t i = 0; i != build.size(); ++i) table[keys_of(build[i], true)].push_back(i);
            for (auto &p : probe) {
                auto it = table.find(keys_of(p, false));
                if (it == table.end()) continue;
                for (auto i : it->second) emit(build[i], p);
            }
        } else {
            std::vector<Row> build_keys;
            for (auto &b : build) build_keys.push_back(keys_of(b, true));
            for (auto &p : probe) {
                auto pk = keys_of(p, false);
                for (std::size_t i = 0; i != build.size(); ++i)
                    if (not KeyLess{}(pk, build_keys[i]) and not KeyLess{}(build_keys[i], pk)) emit(build[i], p);
            }
        }
        return out;
    }

    std::vector<Row> sort(const PlanNode &node) {
        auto &order = node.as<SortOp>().order;
        auto input = run(node.child());
        std::vector<std::pair<Row, std::size_t>> keyed;
        for (std::size_t i = 0; i != input.size(); ++i) {
            Row k;
            for (auto &key : order.keys) k.push_back(eval_expr(*key.expr, input[i]));
            keyed.emplace_back(std::move(k), i);
        }
        std::stable_sort(keyed.begin(), keyed.end(), [&](auto &a, auto &b) {
            for (std::size_t i = 0; i != order.keys.size(); ++i) {
                int c = compare_values(a.first[i], b.first[i]);
                if (order.keys[i].direction == Direction::DESC) c = -c;
                if (c) return c < 0;
            }
            return false;
        });
        std::vector<Row> out;
        for (auto &[k, i] : keyed) out.push_back(std::move(input[i]));
        return out;
    }
};

}

Table ref::interpret(const PlanPtr &plan, const Catalog &catalog, JoinStrategy joins)
{
    auto annotated = annotate_plan(plan, catalog);
    auto rows = Interpreter{ catalog, joins }.run(*annotated);
    Table result(annotated->output());
    result.reserve(rows.size());
    for (auto &r : rows) result.append_row(r);
    return result;
}
