#include "wasmql/plan/Plan.hpp"

#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/util/error.hpp"
#include <cctype>
#include <set>


using namespace wasmql;


/*======================================================================================================================
 * Aggregates
 *====================================================================================================================*/

DataType AggFn::result_type() const
{
    switch (kind) {
        case AggKind::COUNT_STAR: return DataType::Int64();
        case AggKind::AVG:        return DataType::Float64();
        case AggKind::SUM:
            if (not arg or not arg->type) throw TypeError("aggregate argument is not annotated");
            return arg->type->is_integral() ? DataType::Int64() : DataType::Float64();
        case AggKind::MIN:
        case AggKind::MAX:
            if (not arg or not arg->type) throw TypeError("aggregate argument is not annotated");
            return *arg->type;
    }
    return DataType::Int64();
}

std::string wasmql::to_string(AggKind kind)
{
    switch (kind) {
        case AggKind::COUNT_STAR: return "COUNT";
        case AggKind::SUM:        return "SUM";
        case AggKind::MIN:        return "MIN";
        case AggKind::MAX:        return "MAX";
        case AggKind::AVG:        return "AVG";
    }
    return "?";
}

std::string wasmql::to_string(const AggFn &agg)
{
    if (agg.kind == AggKind::COUNT_STAR) return "COUNT(*)";
    return to_string(agg.kind) + "(" + (agg.arg ? to_string(*agg.arg) : std::string()) + ")";
}


/*======================================================================================================================
 * PlanNode
 *====================================================================================================================*/

const TableSchema & PlanNode::output() const
{
    if (not schema) throw InternalError("plan node is not annotated");
    return *schema;
}

const char * wasmql::to_string(PlanNode::Kind kind)
{
    switch (kind) {
        case PlanNode::SCAN:     return "Scan";
        case PlanNode::FILTER:   return "Filter";
        case PlanNode::PROJECT:  return "Project";
        case PlanNode::GROUP_BY: return "HashGroupBy";
        case PlanNode::JOIN:     return "HashJoin";
        case PlanNode::SORT:     return "Sort";
    }
    return "?";
}

namespace {

PlanPtr node(decltype(PlanNode::op) op, std::vector<PlanPtr> children)
{
    for (auto &c : children)
        if (not c) throw PlanError("missing child plan");
    return std::make_shared<const PlanNode>(PlanNode{ std::move(op), std::move(children), std::nullopt });
}

}

PlanPtr wasmql::make_scan(std::string table, std::string alias)
{
    return node(ScanOp{ std::move(table), std::move(alias) }, {});
}

PlanPtr wasmql::make_filter(ExprPtr predicate, PlanPtr child)
{
    return node(FilterOp{ std::move(predicate) }, { std::move(child) });
}

PlanPtr wasmql::make_project(std::vector<ExprPtr> exprs, PlanPtr child, std::vector<std::string> names)
{
    return node(ProjectOp{ std::move(exprs), std::move(names) }, { std::move(child) });
}

PlanPtr wasmql::make_group_by(std::vector<ExprPtr> keys, std::vector<AggFn> aggs, PlanPtr child)
{
    return node(GroupByOp{ std::move(keys), std::move(aggs) }, { std::move(child) });
}

PlanPtr wasmql::make_hash_join(std::vector<std::pair<ExprPtr, ExprPtr>> keys, PlanPtr build, PlanPtr probe)
{
    return node(JoinOp{ std::move(keys), nullptr }, { std::move(build), std::move(probe) });
}

PlanPtr wasmql::make_hash_join(ExprPtr predicate, PlanPtr build, PlanPtr probe)
{
    return node(JoinOp{ {}, std::move(predicate) }, { std::move(build), std::move(probe) });
}

PlanPtr wasmql::make_sort(OrderSpec order, PlanPtr child)
{
    return node(SortOp{ std::move(order) }, { std::move(child) });
}

void wasmql::for_each_node(const PlanNode &plan, const std::function<void(const PlanNode&)> &fn)
{
    fn(plan);
    for (auto &c : plan.children) for_each_node(*c, fn);
}


/*======================================================================================================================
 * Annotation
 *====================================================================================================================*/

namespace {

/** Output column for expression `e` (annotated against `scope`) at position `i`. */
Column output_column(const ExprPtr &e, Scope scope, const std::string &name, std::size_t i)
{
    Column col{ name, *e->type, {} };
    if (auto ref = e->as<ColumnRef>()) {
        if (col.name.empty()) col.name = ref->column;
        col.qualifier = scope_qualifier(scope, *ref->index);
    }
    if (col.name.empty()) col.name = "col" + std::to_string(i);
    return col;
}

std::string agg_name(const AggFn &agg)
{
    if (not agg.name.empty()) return agg.name;
    std::string kind = to_string(agg.kind);
    for (auto &c : kind) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (agg.kind == AggKind::COUNT_STAR) return kind;
    if (auto ref = agg.arg->as<ColumnRef>()) return kind + "_" + ref->column;
    return kind;
}

void split_conjuncts(const ExprPtr &e, std::vector<ExprPtr> &out)
{
    if (auto l = e->as<Logic>(); l and l->op == LogicOp::AND) {
        for (auto &o : l->operands) split_conjuncts(o, out);
        return;
    }
    out.push_back(e);
}

bool resolves(const ExprPtr &e, Scope scope)
{
    bool ok = true;
    for_each_column(*e, [&](const ColumnRef &ref) {
        try {
            resolve_column(ref, scope);
        } catch (const TypeError&) {
            ok = false;
        }
    });
    return ok;
}

struct Annotator
{
    const Catalog &catalog;
    std::set<const PlanNode*> seen;

    PlanPtr operator()(const PlanPtr &plan) {
        if (not plan) throw PlanError("missing plan node");
        if (not seen.insert(plan.get()).second)
            throw PlanError("plan is not a tree: a " + std::string(to_string(plan->kind())) +
                            " node has more than one parent");
        const std::size_t arity = plan->kind() == PlanNode::SCAN ? 0 : plan->kind() == PlanNode::JOIN ? 2 : 1;
        if (plan->children.size() != arity)
            throw PlanError(std::string(to_string(plan->kind())) + " expects " + std::to_string(arity) +
                            " children, got " + std::to_string(plan->children.size()));

        std::vector<PlanPtr> children;
        for (auto &c : plan->children) children.push_back((*this)(c));

        PlanNode out{ plan->op, children, std::nullopt };
        TableSchema schema;
        std::visit([&](auto &op) {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, ScanOp>) {
                schema = catalog.get(op.table).schema();
                const std::string &q = op.alias.empty() ? op.table : op.alias;
                if (not is_identifier(q)) throw PlanError("invalid alias '" + q + "'");
                schema.name = q;
                for (auto &c : schema.columns) c.qualifier = q;
            } else if constexpr (std::is_same_v<T, FilterOp>) {
                Scope scope(&children[0]->output(), 1);
                auto pred = annotate(op.predicate, scope);
                if (not pred->type->is_bool())
                    throw TypeError("filter predicate has type " + pred->type->to_string() + ", expected BOOL");
                out.op = FilterOp{ pred };
                schema = children[0]->output();
            } else if constexpr (std::is_same_v<T, ProjectOp>) {
                Scope scope(&children[0]->output(), 1);
                if (op.exprs.empty()) throw PlanError("projection without expressions");
                if (not op.names.empty() and op.names.size() != op.exprs.size())
                    throw PlanError("projection has " + std::to_string(op.exprs.size()) + " expressions but " +
                                    std::to_string(op.names.size()) + " names");
                ProjectOp p;
                for (std::size_t i = 0; i != op.exprs.size(); ++i) {
                    auto e = annotate(op.exprs[i], scope);
                    std::string name = op.names.empty() ? std::string() : op.names[i];
                    schema.columns.push_back(output_column(e, scope, name, i));
                    p.exprs.push_back(std::move(e));
                    p.names.push_back(schema.columns.back().name);
                }
                out.op = std::move(p);
            } else if constexpr (std::is_same_v<T, GroupByOp>) {
                Scope scope(&children[0]->output(), 1);
                if (op.keys.empty() and op.aggs.empty()) throw PlanError("grouping without keys or aggregates");
                GroupByOp g;
                for (std::size_t i = 0; i != op.keys.size(); ++i) {
                    auto e = annotate(op.keys[i], scope);
                    schema.columns.push_back(output_column(e, scope, {}, i));
                    g.keys.push_back(std::move(e));
                }
                for (auto &agg : op.aggs) {
                    AggFn a{ agg.kind, nullptr, agg.name };
                    if (agg.kind == AggKind::COUNT_STAR) {
                        if (agg.arg) throw PlanError("COUNT(*) takes no argument");
                    } else {
                        if (not agg.arg) throw PlanError(to_string(agg.kind) + " requires an argument");
                        a.arg = annotate(agg.arg, scope);
                        if (not a.arg->type->is_numeric())
                            throw TypeError(to_string(agg.kind) + " over non-numeric type " +
                                            a.arg->type->to_string());
                    }
                    a.name = agg_name(a);
                    schema.columns.push_back(Column{ a.name, a.result_type(), {} });
                    g.aggs.push_back(std::move(a));
                }
                out.op = std::move(g);
            } else if constexpr (std::is_same_v<T, JoinOp>) {
                Scope build(&children[0]->output(), 1);
                Scope probe(&children[1]->output(), 1);
                std::vector<std::pair<ExprPtr, ExprPtr>> keys = op.keys;
                if (op.predicate) {
                    std::vector<ExprPtr> conjuncts;
                    split_conjuncts(op.predicate, conjuncts);
                    for (auto &c : conjuncts) {
                        auto cmp = c->as<Cmp>();
                        if (not cmp or cmp->op != CmpOp::EQ)
                            throw PlanError("join predicate must be a conjunction of equalities, got " +
                                            to_string(*c));
                        if (resolves(cmp->left, build) and resolves(cmp->right, probe))
                            keys.emplace_back(cmp->left, cmp->right);
                        else if (resolves(cmp->right, build) and resolves(cmp->left, probe))
                            keys.emplace_back(cmp->right, cmp->left);
                        else
                            throw PlanError("join condition " + to_string(*c) + " does not relate build and probe");
                    }
                }
                if (keys.empty()) throw PlanError("join without keys");
                JoinOp j;
                for (auto &[b, p] : keys) {
                    auto eb = annotate(b, build);
                    auto ep = annotate(p, probe);
                    if (not common_type(*eb->type, *ep->type))
                        throw TypeError("join keys of incompatible types " + eb->type->to_string() + " and " +
                                        ep->type->to_string());
                    j.keys.emplace_back(std::move(eb), std::move(ep));
                }
                out.op = std::move(j);
                for (auto *side : { &children[0]->output(), &children[1]->output() })
                    for (auto &c : side->columns)
                        schema.columns.push_back(Column{ c.name, c.type, c.qualifier.empty() ? side->name : c.qualifier });
            } else {
                Scope scope(&children[0]->output(), 1);
                if (op.order.keys.empty() or op.order.keys.size() > OrderSpec::MAX_KEYS)
                    throw PlanError("sort requires 1 to " + std::to_string(OrderSpec::MAX_KEYS) + " keys");
                SortOp s;
                for (auto &k : op.order.keys) {
                    auto e = annotate(k.expr, scope);
                    if (e->type->is_bool()) throw TypeError("BOOL is not a valid sort key");
                    s.order.keys.push_back(OrderKey{ std::move(e), k.direction });
                }
                out.op = std::move(s);
                schema = children[0]->output();
            }
        }, plan->op);
        out.schema = std::move(schema);
        return std::make_shared<const PlanNode>(std::move(out));
    }
};

}

PlanPtr wasmql::annotate_plan(const PlanPtr &plan, const Catalog &catalog)
{
    return Annotator{ catalog, {} }(plan);
}

TableSchema wasmql::validate(const PlanPtr &plan, const Catalog &catalog)
{
    return annotate_plan(plan, catalog)->output();
}
