#include "wasmql/plan/Expr.hpp"

#include "wasmql/util/error.hpp"
#include <charconv>
#include <cmath>


using namespace wasmql;


/*======================================================================================================================
 * Construction
 *====================================================================================================================*/

ExprPtr wasmql::make_column(std::string table, std::string column)
{
    return std::make_shared<const Expr>(Expr{ ColumnRef{ std::move(table), std::move(column), std::nullopt }, {} });
}

ExprPtr wasmql::make_literal(Value value, DataType type)
{
    if (not holds_type(value, type))
        throw TypeError("literal '" + to_string(value) + "' does not match type " + type.to_string());
    if (type.is_char() and std::get<std::string>(value).size() > type.length)
        throw TypeError("literal '" + to_string(value) + "' exceeds " + type.to_string());
    return std::make_shared<const Expr>(Expr{ Literal{ type, std::move(value) }, type });
}

ExprPtr wasmql::make_literal(std::int32_t v) { return make_literal(Value(v), DataType::Int32()); }
ExprPtr wasmql::make_literal(std::int64_t v) { return make_literal(Value(v), DataType::Int64()); }
ExprPtr wasmql::make_literal(double v) { return make_literal(Value(v), DataType::Float64()); }
ExprPtr wasmql::make_literal(bool v) { return make_literal(Value(v), DataType::Bool()); }
ExprPtr wasmql::make_literal(const std::string &s)
{
    return make_literal(Value(s), DataType::Char(std::max<std::size_t>(1, s.size())));
}

ExprPtr wasmql::make_arith(ArithOp op, ExprPtr left, ExprPtr right)
{
    return std::make_shared<const Expr>(Expr{ Arith{ op, std::move(left), std::move(right) }, {} });
}

ExprPtr wasmql::make_cmp(CmpOp op, ExprPtr left, ExprPtr right)
{
    return std::make_shared<const Expr>(Expr{ Cmp{ op, std::move(left), std::move(right) }, {} });
}

ExprPtr wasmql::make_logic(LogicOp op, std::vector<ExprPtr> operands)
{
    return std::make_shared<const Expr>(Expr{ Logic{ op, std::move(operands) }, {} });
}

ExprPtr wasmql::make_and(ExprPtr left, ExprPtr right)
{
    return make_logic(LogicOp::AND, { std::move(left), std::move(right) });
}

ExprPtr wasmql::make_or(ExprPtr left, ExprPtr right)
{
    return make_logic(LogicOp::OR, { std::move(left), std::move(right) });
}

ExprPtr wasmql::make_not(ExprPtr operand)
{
    return make_logic(LogicOp::NOT, { std::move(operand) });
}


/*======================================================================================================================
 * Type checking
 *====================================================================================================================*/

const Column & wasmql::scope_column(Scope scope, std::size_t i)
{
    for (auto &schema : scope) {
        if (i < schema.columns.size()) return schema.columns[i];
        i -= schema.columns.size();
    }
    throw InternalError("scope index out of range");
}

const std::string & wasmql::scope_qualifier(Scope scope, std::size_t i)
{
    for (auto &schema : scope) {
        if (i < schema.columns.size())
            return schema.columns[i].qualifier.empty() ? schema.name : schema.columns[i].qualifier;
        i -= schema.columns.size();
    }
    throw InternalError("scope index out of range");
}

std::size_t wasmql::resolve_column(const ColumnRef &ref, Scope scope)
{
    std::optional<std::size_t> found;
    std::size_t idx = 0;
    for (auto &schema : scope) {
        for (auto &col : schema.columns) {
            const std::string &qualifier = col.qualifier.empty() ? schema.name : col.qualifier;
            if (col.name == ref.column and (ref.table.empty() or ref.table == qualifier)) {
                if (found)
                    throw TypeError("ambiguous column '" + (ref.table.empty() ? "" : ref.table + ".") + ref.column + "'");
                found = idx;
            }
            ++idx;
        }
    }
    if (not found)
        throw TypeError("unresolved column '" + (ref.table.empty() ? "" : ref.table + ".") + ref.column + "'");
    return *found;
}

std::optional<DataType> wasmql::common_type(DataType a, DataType b)
{
    if (a.is_integral() and b.is_integral())
        return (a.kind == DataType::INT64 or b.kind == DataType::INT64) ? DataType::Int64() : DataType::Int32();
    if (a.kind == DataType::FLOAT64 and b.kind == DataType::FLOAT64) return DataType::Float64();
    if (a.is_bool() and b.is_bool()) return DataType::Bool();
    if (a.is_char() and b.is_char()) return DataType::Char(std::max(a.length, b.length));
    return std::nullopt;
}

namespace {

ExprPtr with_node(const Expr &e, decltype(Expr::node) node, DataType type)
{
    (void) e;
    return std::make_shared<const Expr>(Expr{ std::move(node), type });
}

}

ExprPtr wasmql::annotate(const ExprPtr &expr, Scope scope)
{
    if (not expr) throw TypeError("missing expression");
    return std::visit([&](auto &n) -> ExprPtr {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ColumnRef>) {
            std::size_t idx = resolve_column(n, scope);
            ColumnRef ref{ n.table, n.column, idx };
            return with_node(*expr, ref, scope_column(scope, idx).type);
        } else if constexpr (std::is_same_v<T, Literal>) {
            if (not holds_type(n.value, n.type))
                throw TypeError("literal '" + to_string(n.value) + "' does not match type " + n.type.to_string());
            return expr;
        } else if constexpr (std::is_same_v<T, Arith>) {
            auto l = annotate(n.left, scope);
            auto r = annotate(n.right, scope);
            if (not l->type->is_numeric() or not r->type->is_numeric())
                throw TypeError("arithmetic over " + l->type->to_string() + " and " + r->type->to_string() + " in " +
                                to_string(*expr));
            auto t = common_type(*l->type, *r->type);
            if (not t)
                throw TypeError("type mismatch: " + l->type->to_string() + " " + to_string(n.op) + " " +
                                r->type->to_string() + " in " + to_string(*expr));
            return with_node(*expr, Arith{ n.op, l, r }, *t);
        } else if constexpr (std::is_same_v<T, Cmp>) {
            auto l = annotate(n.left, scope);
            auto r = annotate(n.right, scope);
            if (not common_type(*l->type, *r->type))
                throw TypeError("type mismatch: " + l->type->to_string() + " " + to_string(n.op) + " " +
                                r->type->to_string() + " in " + to_string(*expr));
            return with_node(*expr, Cmp{ n.op, l, r }, DataType::Bool());
        } else {
            if (n.op == LogicOp::NOT ? n.operands.size() != 1 : n.operands.size() < 2)
                throw TypeError("wrong number of operands in " + to_string(*expr));
            std::vector<ExprPtr> ops;
            for (auto &o : n.operands) {
                auto a = annotate(o, scope);
                if (not a->type->is_bool())
                    throw TypeError("logical operand of type " + a->type->to_string() + " in " + to_string(*expr));
                ops.push_back(std::move(a));
            }
            return with_node(*expr, Logic{ n.op, std::move(ops) }, DataType::Bool());
        }
    }, expr->node);
}

DataType wasmql::typecheck(const ExprPtr &expr, Scope scope)
{
    return *annotate(expr, scope)->type;
}


/*======================================================================================================================
 * Predicate cost
 *====================================================================================================================*/

CheapnessClass wasmql::classify_predicate(const ExprPtr &pred)
{
    bool costly = false;
    std::function<void(const Expr&)> walk = [&](const Expr &e) {
        std::visit([&](auto &n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Arith>) {
                walk(*n.left);
                walk(*n.right);
            } else if constexpr (std::is_same_v<T, Cmp>) {
                if (not n.left->type or not n.right->type)
                    throw TypeError("predicate must be annotated before classification");
                auto lt = *n.left->type, rt = *n.right->type;
                if (lt.is_char() and rt.is_char() and std::max(lt.length, rt.length) > COSTLY_CHAR_LENGTH)
                    costly = true;
                walk(*n.left);
                walk(*n.right);
            } else if constexpr (std::is_same_v<T, Logic>) {
                for (auto &o : n.operands) walk(*o);
            }
        }, e.node);
    };
    walk(*pred);
    return costly ? CheapnessClass::COSTLY : CheapnessClass::CHEAP;
}


/*======================================================================================================================
 * Utilities
 *====================================================================================================================*/

std::string wasmql::to_string(ArithOp op)
{
    switch (op) {
        case ArithOp::ADD: return "+";
        case ArithOp::SUB: return "-";
        case ArithOp::MUL: return "*";
        case ArithOp::DIV: return "/";
    }
    return "?";
}

std::string wasmql::to_string(CmpOp op)
{
    switch (op) {
        case CmpOp::LT: return "<";
        case CmpOp::LE: return "<=";
        case CmpOp::EQ: return "=";
        case CmpOp::NE: return "<>";
        case CmpOp::GE: return ">=";
        case CmpOp::GT: return ">";
    }
    return "?";
}

namespace {

std::string literal_text(const Literal &l)
{
    switch (l.type.kind) {
        case DataType::INT32: return std::to_string(std::get<std::int32_t>(l.value));
        case DataType::INT64: return std::to_string(std::get<std::int64_t>(l.value)) + "L";
        case DataType::BOOL:  return std::get<bool>(l.value) ? "TRUE" : "FALSE";
        case DataType::FLOAT64: {
            double d = std::get<double>(l.value);
            std::string s = to_string(Value(d));
            if (std::isfinite(d) and s.find_first_of(".e") == std::string::npos) s += ".0";
            return s;
        }
        case DataType::CHAR: {
            std::string s = "'";
            for (char c : std::get<std::string>(l.value)) {
                if (c == '\'') s += '\'';
                s += c;
            }
            return s + "'";
        }
    }
    return "?";
}

}

std::string wasmql::to_string(const Expr &expr)
{
    return std::visit([&](auto &n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ColumnRef>) {
            return n.table.empty() ? n.column : n.table + "." + n.column;
        } else if constexpr (std::is_same_v<T, Literal>) {
            return literal_text(n);
        } else if constexpr (std::is_same_v<T, Arith>) {
            return "(" + to_string(*n.left) + " " + to_string(n.op) + " " + to_string(*n.right) + ")";
        } else if constexpr (std::is_same_v<T, Cmp>) {
            return "(" + to_string(*n.left) + " " + to_string(n.op) + " " + to_string(*n.right) + ")";
        } else {
            if (n.op == LogicOp::NOT) return "(NOT " + to_string(*n.operands[0]) + ")";
            std::string s = "(";
            for (std::size_t i = 0; i != n.operands.size(); ++i) {
                if (i) s += n.op == LogicOp::AND ? " AND " : " OR ";
                s += to_string(*n.operands[i]);
            }
            return s + ")";
        }
    }, expr.node);
}

bool wasmql::equal(const Expr &a, const Expr &b)
{
    if (a.node.index() != b.node.index()) return false;
    return std::visit([&](auto &n) -> bool {
        using T = std::decay_t<decltype(n)>;
        auto &m = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, ColumnRef>) {
            return n.table == m.table and n.column == m.column;
        } else if constexpr (std::is_same_v<T, Literal>) {
            return n.type == m.type and n.value == m.value;
        } else if constexpr (std::is_same_v<T, Arith> or std::is_same_v<T, Cmp>) {
            return n.op == m.op and equal(*n.left, *m.left) and equal(*n.right, *m.right);
        } else {
            if (n.op != m.op or n.operands.size() != m.operands.size()) return false;
            for (std::size_t i = 0; i != n.operands.size(); ++i)
                if (not equal(*n.operands[i], *m.operands[i])) return false;
            return true;
        }
    }, a.node);
}

void wasmql::for_each_column(const Expr &expr, const std::function<void(const ColumnRef&)> &fn)
{
    std::visit([&](auto &n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ColumnRef>) {
            fn(n);
        } else if constexpr (std::is_same_v<T, Arith> or std::is_same_v<T, Cmp>) {
            for_each_column(*n.left, fn);
            for_each_column(*n.right, fn);
        } else if constexpr (std::is_same_v<T, Logic>) {
            for (auto &o : n.operands) for_each_column(*o, fn);
        }
    }, expr.node);
}
