#include "RandomPlan.hpp"

#include "wasmql/ref/Interpreter.hpp"
#include "wasmql/util/error.hpp"
#include <algorithm>
#include <map>


using namespace wasmql;
using namespace wasmql::test;


Catalog test::random_plan_catalog(std::size_t rows, std::uint64_t seed)
{
    Catalog cat;
    cat.generate_table(TableSchema{ "A", { { "id", DataType::Int32(), {} }, { "g", DataType::Int32(), {} },
                                           { "v", DataType::Int64(), {} }, { "f", DataType::Float64(), {} },
                                           { "b", DataType::Bool(), {} }, { "s", DataType::Char(4), {} } } },
                       GenSpec{ rows, { Sequential{ 0 }, UniformInt{ 0, 99 }, UniformInt{ -1000, 1000 },
                                        UniformFloat01{}, UniformInt{ 0, 1 }, UniformInt{ 0, 49 } }, seed });
    cat.generate_table(TableSchema{ "B", { { "id", DataType::Int32(), {} }, { "g", DataType::Int32(), {} },
                                           { "w", DataType::Float64(), {} }, { "s", DataType::Char(4), {} } } },
                       GenSpec{ rows / 5, { UniformInt{ 0, 9999 }, UniformInt{ 0, 99 }, UniformFloat01{},
                                            UniformInt{ 0, 49 } }, seed + 1 });
    cat.generate_table(TableSchema{ "C", { { "g", DataType::Int32(), {} }, { "k", DataType::Int64(), {} },
                                           { "name", DataType::Char(6), {} }, { "x", DataType::Float64(), {} } } },
                       GenSpec{ std::max<std::size_t>(rows / 50, 1), { UniformInt{ 0, 99 }, UniformInt{ 0, 9 },
                                                                      UniformInt{ 0, 20 }, UniformFloat01{} },
                                seed + 2 });
    return cat;
}

/* A generated subplan with its annotated schema and, per output column, whether its values are exact: independent of
 * the order in which rows are processed.  Float sums and averages are not. */
struct RandomPlanGenerator::Node
{
    PlanPtr plan;
    TableSchema schema;
    std::vector<bool> exact;
};

struct RandomPlanGenerator::Column
{
    ExprPtr ref;
    DataType type;
    bool exact;
};

namespace {

struct Retry { };

bool uses_only(const Expr &e, const std::map<std::string, bool> &exact_by_ref)
{
    bool ok = true;
    for_each_column(e, [&](const ColumnRef &r) {
        auto it = exact_by_ref.find(r.table + "." + r.column);
        ok = ok and it != exact_by_ref.end() and it->second;
    });
    return ok;
}

}

std::vector<RandomPlanGenerator::Column> RandomPlanGenerator::columns(const Node &n, bool exact_only) const
{
    auto &cols = n.schema.columns;
    auto qualifier = [&](std::size_t i) -> const std::string& {
        return cols[i].qualifier.empty() ? n.schema.name : cols[i].qualifier;
    };
    std::vector<Column> out;
    for (std::size_t i = 0; i != cols.size(); ++i) {
        if (exact_only and not n.exact[i]) continue;
        std::size_t same_name = 0, same_both = 0;
        for (std::size_t j = 0; j != cols.size(); ++j) {
            if (cols[j].name != cols[i].name) continue;
            ++same_name;
            if (qualifier(j) == qualifier(i)) ++same_both;
        }
        if (same_name == 1)
            out.push_back({ make_column(qualifier(i), cols[i].name), cols[i].type, n.exact[i] });
        else if (same_both == 1 and not qualifier(i).empty())
            out.push_back({ make_column(qualifier(i), cols[i].name), cols[i].type, n.exact[i] });
    }
    return out;
}


/*----- Expressions --------------------------------------------------------------------------------------------------*/

ExprPtr RandomPlanGenerator::int_expr(const std::vector<Column> &cols, int depth)
{
    std::vector<const Column*> ints;
    for (auto &c : cols) if (c.type.is_integral()) ints.push_back(&c);
    auto r = uniform(10);
    if ((depth <= 0 or r < 5) and not ints.empty())
        return ints[uniform(ints.size())]->ref;
    if (depth <= 0 or r < 6 or ints.empty()) {
        if (chance(0.5)) return make_literal(std::int32_t(uniform(120)) - 10);
        return make_literal(std::int64_t(uniform(2001)) - 1000);
    }
    auto op = std::array{ ArithOp::ADD, ArithOp::SUB, ArithOp::MUL, ArithOp::DIV }[uniform(4)];
    auto left = int_expr(cols, depth - 1);
    if (op == ArithOp::DIV) return make_arith(op, left, make_literal(std::int32_t(1 + uniform(7))));
    if (op == ArithOp::MUL) return make_arith(op, left, make_literal(std::int32_t(uniform(5)) - 2));
    return make_arith(op, left, int_expr(cols, depth - 1));
}

ExprPtr RandomPlanGenerator::float_expr(const std::vector<Column> &cols, int depth)
{
    std::vector<const Column*> floats;
    for (auto &c : cols) if (c.type.kind == DataType::FLOAT64) floats.push_back(&c);
    auto r = uniform(10);
    if ((depth <= 0 or r < 5) and not floats.empty())
        return floats[uniform(floats.size())]->ref;
    if (depth <= 0 or r < 6 or floats.empty())
        return make_literal(double(uniform(101)) / 100.0);
    auto op = std::array{ ArithOp::ADD, ArithOp::SUB, ArithOp::MUL, ArithOp::DIV }[uniform(4)];
    auto left = float_expr(cols, depth - 1);
    if (op == ArithOp::DIV) return make_arith(op, left, make_literal(double(1 + uniform(4)) / 2.0));
    return make_arith(op, left, float_expr(cols, depth - 1));
}

ExprPtr RandomPlanGenerator::char_expr(const std::vector<Column> &cols)
{
    std::vector<const Column*> chars;
    for (auto &c : cols) if (c.type.is_char()) chars.push_back(&c);
    if (chars.empty() or chance(0.3)) return make_literal(std::to_string(uniform(50)));
    return chars[uniform(chars.size())]->ref;
}

ExprPtr RandomPlanGenerator::predicate(const std::vector<Column> &cols, int depth)
{
    auto r = uniform(10);
    if (depth > 0 and r < 3) {
        auto op = std::array{ LogicOp::AND, LogicOp::OR, LogicOp::NOT }[uniform(3)];
        if (op == LogicOp::NOT) return make_not(predicate(cols, depth - 1));
        return make_logic(op, { predicate(cols, depth - 1), predicate(cols, depth - 1) });
    }
    std::vector<const Column*> bools;
    for (auto &c : cols) if (c.type.is_bool()) bools.push_back(&c);
    if (r == 3 and not bools.empty()) return bools[uniform(bools.size())]->ref;

    auto cmp = CmpOp(uniform(6));
    bool has_char = std::any_of(cols.begin(), cols.end(), [](auto &c) { return c.type.is_char(); });
    bool has_float = std::any_of(cols.begin(), cols.end(), [](auto &c) { return c.type.kind == DataType::FLOAT64; });
    auto pick = uniform(10);
    if (pick < 2 and has_char) {
        /* prefer column against literal so that the selectivity is not extreme */
        auto l = char_expr(cols);
        return make_cmp(cmp, l, l->is<Literal>() ? char_expr(cols) : make_literal(std::to_string(uniform(50))));
    }
    if (pick < 5 and has_float)
        return make_cmp(cmp, float_expr(cols, 1), chance(0.7) ? make_literal(double(uniform(101)) / 100.0)
                                                              : float_expr(cols, 1));
    return make_cmp(cmp, int_expr(cols, 1), chance(0.7) ? make_literal(std::int32_t(uniform(120)) - 10)
                                                        : int_expr(cols, 1));
}

ExprPtr RandomPlanGenerator::any_expr(const std::vector<Column> &cols, DataType::Kind &kind)
{
    switch (uniform(8)) {
        case 0: case 1: case 2:
            if (not cols.empty()) {
                auto &c = cols[uniform(cols.size())];
                kind = c.type.kind;
                return c.ref;
            }
            [[fallthrough]];
        case 3: case 4:
            kind = DataType::INT64;
            return int_expr(cols, 2);
        case 5: case 6:
            kind = DataType::FLOAT64;
            return float_expr(cols, 2);
        default:
            kind = DataType::BOOL;
            return predicate(cols, 1);
    }
}


/*----- Operators ----------------------------------------------------------------------------------------------------*/

RandomPlanGenerator::Node RandomPlanGenerator::scan()
{
    const char *tables[] = { "A", "A", "B", "B", "C" };
    std::string table = tables[uniform(5)];
    auto plan = make_scan(table, "t" + std::to_string(aliases_++));
    auto annotated = annotate_plan(plan, catalog_);
    return { plan, annotated->output(), std::vector<bool>(annotated->output().num_columns(), true) };
}

namespace {

std::map<std::string, bool> exactness(const auto &cols)
{
    std::map<std::string, bool> m;
    for (auto &c : cols) {
        auto &ref = *c.ref->template as<ColumnRef>();
        m[ref.table + "." + ref.column] = c.exact;
    }
    return m;
}

}

RandomPlanGenerator::Node RandomPlanGenerator::filter(Node child)
{
    auto cols = columns(child, true);
    if (cols.empty()) throw Retry{};
    auto plan = make_filter(predicate(cols, 2), child.plan);
    return { plan, child.schema, child.exact };
}

RandomPlanGenerator::Node RandomPlanGenerator::project(Node child)
{
    auto all = columns(child, false);
    auto exact = columns(child, true);
    auto by_ref = exactness(all);
    std::vector<ExprPtr> exprs;
    std::vector<std::string> names;
    std::vector<bool> out_exact;
    auto n = 1 + uniform(4);
    for (std::size_t i = 0; i != n; ++i) {
        ExprPtr e;
        if (chance(0.5) and not all.empty()) {
            e = all[uniform(all.size())].ref; // pass-through, may be inexact
        } else {
            DataType::Kind kind;
            e = any_expr(exact, kind);
        }
        exprs.push_back(e);
        names.push_back(fresh_name("p"));
        out_exact.push_back(uses_only(*e, by_ref));
    }
    auto plan = make_project(exprs, child.plan, names);
    return { plan, {}, out_exact };
}

RandomPlanGenerator::Node RandomPlanGenerator::group_by(Node child)
{
    auto cols = columns(child, true);
    std::vector<ExprPtr> keys;
    auto nkeys = uniform(4); // 0 to 3; 0 is a global aggregate
    for (std::size_t i = 0; i != nkeys and not cols.empty(); ++i) {
        ExprPtr k;
        if (chance(0.8)) {
            std::vector<const Column*> candidates;
            for (auto &c : cols) if (c.type.kind != DataType::FLOAT64 or chance(0.3)) candidates.push_back(&c);
            if (candidates.empty()) continue;
            k = candidates[uniform(candidates.size())]->ref;
        } else {
            k = make_arith(ArithOp::DIV, int_expr(cols, 1), make_literal(std::int32_t(2 + uniform(20))));
        }
        if (std::any_of(keys.begin(), keys.end(), [&](auto &o) { return equal(*o, *k); })) continue;
        keys.push_back(k);
    }

    std::vector<bool> out_exact(keys.size(), true);
    std::vector<AggFn> aggs;
    auto naggs = 1 + uniform(3);
    std::vector<const Column*> numeric;
    for (auto &c : cols) if (c.type.is_numeric()) numeric.push_back(&c);
    for (std::size_t i = 0; i != naggs; ++i) {
        auto kind = AggKind(uniform(5));
        if (numeric.empty()) kind = AggKind::COUNT_STAR;
        ExprPtr arg;
        bool is_float = false;
        if (kind != AggKind::COUNT_STAR) {
            if (chance(0.7)) {
                auto c = numeric[uniform(numeric.size())];
                arg = c->ref;
                is_float = c->type.kind == DataType::FLOAT64;
            } else if (chance(0.5)) {
                arg = int_expr(cols, 1);
            } else {
                arg = float_expr(cols, 1);
                is_float = true;
            }
        }
        bool exact = not (is_float and (kind == AggKind::SUM or kind == AggKind::AVG));
        aggs.push_back(AggFn{ kind, arg, fresh_name("a") });
        out_exact.push_back(exact);
    }
    auto plan = make_group_by(keys, aggs, child.plan);
    return { plan, {}, out_exact };
}

RandomPlanGenerator::Node RandomPlanGenerator::join(Node build, Node probe)
{
    auto bc = columns(build, true);
    auto pc = columns(probe, true);
    std::vector<std::pair<ExprPtr, ExprPtr>> candidates;
    for (auto &b : bc)
        for (auto &p : pc) {
            bool ok = (b.type.is_integral() and p.type.is_integral()) or (b.type.is_char() and p.type.is_char())
                      or (b.type == p.type and b.type.kind != DataType::FLOAT64);
            if (ok) candidates.emplace_back(b.ref, p.ref);
        }
    if (candidates.empty()) throw Retry{};
    std::shuffle(candidates.begin(), candidates.end(), rng_);
    /* prefer keys with matching names; they share a domain */
    std::stable_partition(candidates.begin(), candidates.end(), [](auto &kp) {
        return kp.first->template as<ColumnRef>()->column == kp.second->template as<ColumnRef>()->column;
    });
    std::vector<std::pair<ExprPtr, ExprPtr>> keys{ candidates[0] };
    if (candidates.size() > 1 and chance(0.25)) keys.push_back(candidates[1]);
    auto plan = make_hash_join(keys, build.plan, probe.plan);
    auto exact = build.exact;
    exact.insert(exact.end(), probe.exact.begin(), probe.exact.end());
    return { plan, {}, exact };
}

RandomPlanGenerator::Node RandomPlanGenerator::sort(Node child)
{
    auto cols = columns(child, true);
    OrderSpec order;
    auto n = 1 + uniform(3);
    for (std::size_t i = 0; i != n; ++i) {
        ExprPtr e;
        if (chance(0.8)) {
            std::vector<const Column*> sortable;
            for (auto &c : cols) if (not c.type.is_bool()) sortable.push_back(&c);
            if (sortable.empty()) continue;
            e = sortable[uniform(sortable.size())]->ref;
        } else {
            e = int_expr(cols, 1);
        }
        order.keys.push_back({ e, chance(0.5) ? Direction::ASC : Direction::DESC });
    }
    if (order.keys.empty()) throw Retry{};
    auto plan = make_sort(order, child.plan);
    return { plan, child.schema, child.exact };
}

RandomPlanGenerator::Node RandomPlanGenerator::generate(std::size_t depth)
{
    if (depth == 0 or chance(0.15)) return scan();
    Node n;
    switch (uniform(5)) {
        case 0: n = filter(generate(depth - 1)); break;
        case 1: n = project(generate(depth - 1)); break;
        case 2: n = group_by(generate(depth - 1)); break;
        case 3: {
            auto build = generate(depth - 1);
            n = join(std::move(build), generate(depth - 1));
            break;
        }
        default: n = sort(generate(depth - 1)); break;
    }
    n.schema = annotate_plan(n.plan, catalog_)->output();
    return n;
}

namespace {

/* Number of rows a join produces, counted without materializing it.  The inputs are interpreted. */
std::uint64_t join_rows(const PlanPtr &join, const Catalog &catalog)
{
    auto annotated = annotate_plan(join, catalog);
    auto &keys = annotated->as<JoinOp>().keys;
    auto key_of = [&](const Table &t, std::size_t row, bool build) {
        auto values = t.row(row);
        std::vector<Value> key;
        for (auto &[b, p] : keys) {
            auto v = ref::eval_expr(build ? *b : *p, values);
            if (auto i = std::get_if<std::int32_t>(&v)) v = std::int64_t(*i);
            key.push_back(std::move(v));
        }
        return key;
    };
    auto build = ref::interpret(join->children[0], catalog);
    auto probe = ref::interpret(join->children[1], catalog);
    std::map<std::vector<Value>, std::uint64_t> counts;
    for (std::size_t r = 0; r != build.num_rows(); ++r) ++counts[key_of(build, r, true)];
    std::uint64_t n = 0;
    for (std::size_t r = 0; r != probe.num_rows(); ++r) {
        auto it = counts.find(key_of(probe, r, false));
        if (it != counts.end()) n += it->second;
    }
    return n;
}

}

PlanPtr RandomPlanGenerator::next()
{
    for (;;) {
        aliases_ = 0;
        try {
            auto n = generate(options_.max_depth);
            /* reject plans whose joins explode; inner joins are checked first, so every input is bounded */
            std::vector<PlanPtr> joins;
            std::function<void(const PlanPtr&)> collect = [&](const PlanPtr &p) {
                for (auto &c : p->children) collect(c);
                if (p->kind() == PlanNode::JOIN) joins.push_back(p);
            };
            collect(n.plan);
            bool ok = true;
            for (auto &j : joins) {
                if (join_rows(j, catalog_) > options_.max_join_rows) {
                    ok = false;
                    break;
                }
            }
            if (ok) return n.plan;
        } catch (const Retry&) {
        } catch (const Error&) {
            /* a generated expression failed to type-check; draw again */
        }
    }
}

void test::count_operators(const PlanNode &plan, OperatorCounts &counts)
{
    for_each_node(plan, [&](const PlanNode &n) { ++counts[n.kind()]; });
}
