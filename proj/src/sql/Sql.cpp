#include "wasmql/sql/Sql.hpp"

#include "wasmql/plan/Parser.hpp"
#include "wasmql/util/error.hpp"
#include <algorithm>
#include <cctype>
#include <functional>
#include <set>


using namespace wasmql;

namespace {

constexpr char AGG_PREFIX = '$';

struct SelectItem
{
    ExprPtr expr;
    std::string alias;
};

struct TableRef
{
    std::string table;
    std::string alias;

    const std::string & qualifier() const { return alias.empty() ? table : alias; }
};

struct Query
{
    bool star = false;
    std::vector<SelectItem> select;
    std::vector<TableRef> from;
    ExprPtr where;
    std::vector<ExprPtr> group_by;
    std::vector<OrderKey> order_by;
    std::vector<AggFn> aggs; ///< referenced as columns `$<i>`
};

class SqlParser : public Parser
{
    Query q_;
    bool aggs_allowed_ = false;

    public:
    using Parser::Parser;

    Query parse() {
        expect_keyword("SELECT");
        aggs_allowed_ = true;
        if (accept_punct("*")) {
            q_.star = true;
        } else {
            do {
                SelectItem item{ parse_expr(), {} };
                item.alias = alias();
                q_.select.push_back(std::move(item));
            } while (accept_punct(","));
        }
        aggs_allowed_ = false;
        expect_keyword("FROM");
        do {
            TableRef t{ expect_ident(), {} };
            t.alias = alias();
            q_.from.push_back(std::move(t));
        } while (accept_punct(","));
        if (accept_keyword("WHERE")) q_.where = parse_expr();
        if (accept_keyword("GROUP")) {
            expect_keyword("BY");
            do q_.group_by.push_back(parse_expr()); while (accept_punct(","));
        }
        if (accept_keyword("ORDER")) {
            expect_keyword("BY");
            aggs_allowed_ = true;
            do {
                OrderKey k{ parse_expr(), Direction::ASC };
                if (accept_keyword("DESC")) k.direction = Direction::DESC;
                else accept_keyword("ASC");
                q_.order_by.push_back(std::move(k));
            } while (accept_punct(","));
            aggs_allowed_ = false;
        }
        accept_punct(";");
        if (not at_end()) fail("unexpected input after query");
        return std::move(q_);
    }

    protected:
    ExprPtr parse_extension() override {
        static constexpr std::pair<const char*, AggKind> KINDS[] = {
            { "COUNT", AggKind::COUNT_STAR }, { "SUM", AggKind::SUM }, { "MIN", AggKind::MIN },
            { "MAX", AggKind::MAX }, { "AVG", AggKind::AVG },
        };
        if (peek().kind != Token::IDENT or not at_punct("(", 1)) return nullptr;
        for (auto [name, kind] : KINDS) {
            if (not at_keyword(name)) continue;
            const Token &at = peek();
            if (not aggs_allowed_) fail(at, "aggregate not allowed here");
            next();
            expect_punct("(");
            AggFn a{ kind, nullptr, {} };
            aggs_allowed_ = false;
            /* Without NULLs, COUNT(e) counts rows just like COUNT(*). */
            if (kind != AggKind::COUNT_STAR) a.arg = parse_expr();
            else if (not accept_punct("*")) parse_expr();
            aggs_allowed_ = true;
            expect_punct(")");
            return make_column({}, std::string(1, AGG_PREFIX) + std::to_string(intern(std::move(a))));
        }
        return nullptr;
    }

    private:
    std::string alias() {
        if (accept_keyword("AS")) return expect_ident();
        if (peek().kind == Token::IDENT and not is_keyword(peek().text)) return next().text;
        return {};
    }

    std::size_t intern(AggFn a) {
        for (std::size_t i = 0; i != q_.aggs.size(); ++i) {
            auto &b = q_.aggs[i];
            if (a.kind == b.kind and ((not a.arg and not b.arg) or (a.arg and b.arg and equal(*a.arg, *b.arg))))
                return i;
        }
        q_.aggs.push_back(std::move(a));
        return q_.aggs.size() - 1;
    }
};

bool is_agg_ref(const ColumnRef &ref) { return ref.table.empty() and ref.column.starts_with(AGG_PREFIX); }

ExprPtr transform(const ExprPtr &e, const std::function<ExprPtr(const ExprPtr&)> &fn)
{
    if (auto r = fn(e)) return r;
    return std::visit([&](auto &n) -> ExprPtr {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Arith>) {
            return make_arith(n.op, transform(n.left, fn), transform(n.right, fn));
        } else if constexpr (std::is_same_v<T, Cmp>) {
            return make_cmp(n.op, transform(n.left, fn), transform(n.right, fn));
        } else if constexpr (std::is_same_v<T, Logic>) {
            std::vector<ExprPtr> ops;
            for (auto &o : n.operands) ops.push_back(transform(o, fn));
            return make_logic(n.op, std::move(ops));
        } else {
            return e;
        }
    }, e->node);
}

std::string default_agg_name(const AggFn &a)
{
    std::string kind = to_string(a.kind);
    for (auto &c : kind) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (a.kind == AggKind::COUNT_STAR) return kind;
    if (auto ref = a.arg->as<ColumnRef>()) return kind + "_" + ref->column;
    return kind;
}

void split(const ExprPtr &e, std::vector<ExprPtr> &out)
{
    if (auto l = e->as<Logic>(); l and l->op == LogicOp::AND) {
        for (auto &o : l->operands) split(o, out);
        return;
    }
    out.push_back(e);
}

ExprPtr conjunction(const std::vector<ExprPtr> &cs)
{
    if (cs.size() == 1) return cs[0];
    return make_logic(LogicOp::AND, cs);
}

class Planner
{
    Query &q_;
    const Catalog *catalog_;

    public:
    Planner(Query &q, const Catalog *catalog) : q_(q), catalog_(catalog) { }

    PlanPtr plan() {
        check_tables();
        for (auto &item : q_.select) item.expr = qualify(item.expr);
        for (auto &a : q_.aggs)
            if (a.arg) a.arg = qualify(a.arg);
        for (auto &g : q_.group_by) g = qualify(g);
        if (q_.where) q_.where = qualify(q_.where);
        for (auto &k : q_.order_by) k.expr = qualify(substitute_aliases(k.expr));

        PlanPtr node = joins();
        const bool grouped = not q_.group_by.empty() or not q_.aggs.empty();
        if (grouped) {
            if (q_.star) throw PlanError("SELECT * cannot be combined with grouping or aggregates");
            std::vector<AggFn> aggs = q_.aggs;
            for (std::size_t i = 0; i != aggs.size(); ++i) aggs[i].name = AGG_PREFIX + std::to_string(i);
            node = make_group_by(q_.group_by, std::move(aggs), std::move(node));
            for (auto &item : q_.select) item.expr = regroup(item.expr, "selected expression");
            for (auto &k : q_.order_by) k.expr = regroup(k.expr, "ORDER BY expression");
        }
        if (not q_.order_by.empty()) node = make_sort(OrderSpec{ q_.order_by }, std::move(node));
        if (q_.star) return node;

        std::vector<ExprPtr> exprs;
        std::vector<std::string> names;
        for (auto &item : q_.select) {
            std::string name = item.alias;
            if (auto ref = item.expr->as<ColumnRef>(); name.empty() and ref and is_agg_ref(*ref))
                name = default_agg_name(q_.aggs[std::stoul(ref->column.substr(1))]);
            exprs.push_back(item.expr);
            names.push_back(std::move(name));
        }
        if (std::all_of(names.begin(), names.end(), [](auto &n) { return n.empty(); })) names.clear();
        return make_project(std::move(exprs), std::move(node), std::move(names));
    }

    private:
    void check_tables() {
        std::set<std::string> seen;
        for (auto &t : q_.from) {
            if (not seen.insert(t.qualifier()).second) throw PlanError("table '" + t.qualifier() + "' appears twice in FROM");
            if (catalog_ and not catalog_->contains(t.table)) throw CatalogError("unknown table '" + t.table + "'");
        }
    }

    std::size_t table_index(const std::string &qualifier) const {
        for (std::size_t i = 0; i != q_.from.size(); ++i)
            if (q_.from[i].qualifier() == qualifier) return i;
        throw PlanError("unknown table '" + qualifier + "'");
    }

    ExprPtr qualify(const ExprPtr &e) const {
        return transform(e, [&](const ExprPtr &x) -> ExprPtr {
            auto ref = x->as<ColumnRef>();
            if (not ref) return nullptr;
            if (is_agg_ref(*ref)) return x;
            if (not ref->table.empty()) {
                table_index(ref->table);
                return x;
            }
            std::vector<std::size_t> owners;
            for (std::size_t i = 0; i != q_.from.size(); ++i) {
                if (catalog_) {
                    if (catalog_->get(q_.from[i].table).schema().find(ref->column)) owners.push_back(i);
                } else if (q_.from.size() == 1) {
                    owners.push_back(i);
                }
            }
            if (owners.empty() and not catalog_)
                throw PlanError("column '" + ref->column + "' must be qualified when selecting from several tables");
            if (owners.empty()) throw PlanError("unknown column '" + ref->column + "'");
            if (owners.size() > 1) throw PlanError("ambiguous column '" + ref->column + "'");
            return make_column(q_.from[owners[0]].qualifier(), ref->column);
        });
    }

    ExprPtr substitute_aliases(const ExprPtr &e) const {
        return transform(e, [&](const ExprPtr &x) -> ExprPtr {
            auto ref = x->as<ColumnRef>();
            if (not ref or not ref->table.empty()) return nullptr;
            for (auto &item : q_.select)
                if (item.alias == ref->column) return item.expr;
            return nullptr;
        });
    }

    std::set<std::size_t> tables_of(const Expr &e) const {
        std::set<std::size_t> out;
        for_each_column(e, [&](const ColumnRef &ref) { out.insert(table_index(ref.table)); });
        return out;
    }

    PlanPtr joins() {
        std::vector<ExprPtr> conjuncts;
        if (q_.where) split(q_.where, conjuncts);
        std::vector<bool> used(conjuncts.size());
        for (auto &c : conjuncts)
            for_each_column(*c, [](const ColumnRef &ref) {
                if (is_agg_ref(ref)) throw PlanError("aggregate in WHERE");
            });

        auto scan = [&](std::size_t i) {
            PlanPtr node = make_scan(q_.from[i].table, q_.from[i].alias);
            std::vector<ExprPtr> local;
            for (std::size_t k = 0; k != conjuncts.size(); ++k) {
                auto ts = tables_of(*conjuncts[k]);
                if (used[k] or ts.size() > 1 or (ts.empty() and i != 0) or (ts.size() == 1 and *ts.begin() != i))
                    continue;
                local.push_back(conjuncts[k]);
                used[k] = true;
            }
            if (not local.empty()) node = make_filter(conjunction(local), std::move(node));
            return node;
        };
        auto below = [](const std::set<std::size_t> &ts, std::size_t i) {
            return not ts.empty() and *ts.rbegin() < i;
        };

        PlanPtr node = scan(0);
        for (std::size_t i = 1; i != q_.from.size(); ++i) {
            std::vector<std::pair<ExprPtr, ExprPtr>> keys;
            for (std::size_t k = 0; k != conjuncts.size(); ++k) {
                auto cmp = conjuncts[k]->as<Cmp>();
                if (used[k] or not cmp or cmp->op != CmpOp::EQ) continue;
                auto l = tables_of(*cmp->left), r = tables_of(*cmp->right);
                const std::set<std::size_t> self{ i };
                if (below(l, i) and r == self) keys.emplace_back(cmp->left, cmp->right);
                else if (below(r, i) and l == self) keys.emplace_back(cmp->right, cmp->left);
                else continue;
                used[k] = true;
            }
            if (keys.empty())
                throw PlanError("no equality joins '" + q_.from[i].qualifier() + "' to the tables before it");
            node = make_hash_join(std::move(keys), std::move(node), scan(i));
            std::vector<ExprPtr> residual;
            for (std::size_t k = 0; k != conjuncts.size(); ++k) {
                if (used[k]) continue;
                auto ts = tables_of(*conjuncts[k]);
                if (not ts.empty() and *ts.rbegin() == i) {
                    residual.push_back(conjuncts[k]);
                    used[k] = true;
                }
            }
            if (not residual.empty()) node = make_filter(conjunction(residual), std::move(node));
        }
        return node;
    }

    /** Rewrites `e` over the grouping output: grouped expressions become references to the key columns. */
    ExprPtr regroup(const ExprPtr &e, const char *what) const {
        auto out = transform(e, [&](const ExprPtr &x) -> ExprPtr {
            for (std::size_t i = 0; i != q_.group_by.size(); ++i) {
                if (not equal(*x, *q_.group_by[i])) continue;
                if (x->is<ColumnRef>()) return x;
                return make_column({}, "col" + std::to_string(i));
            }
            return nullptr;
        });
        for_each_column(*out, [&](const ColumnRef &ref) {
            if (is_agg_ref(ref) or ref.table.empty()) return;
            const bool grouped = std::any_of(q_.group_by.begin(), q_.group_by.end(), [&](auto &g) {
                auto k = g->template as<ColumnRef>();
                return k and k->table == ref.table and k->column == ref.column;
            });
            if (not grouped)
                throw PlanError(std::string(what) + " uses " + ref.table + "." + ref.column +
                                ", which is neither grouped nor aggregated");
        });
        return out;
    }
};

}

PlanPtr wasmql::parse_sql(std::string_view text, const Catalog *catalog)
{
    auto query = SqlParser(text).parse();
    return Planner(query, catalog).plan();
}
