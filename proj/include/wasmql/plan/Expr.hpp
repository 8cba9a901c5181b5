#pragma once

#include "wasmql/catalog/Table.hpp"
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>


namespace wasmql {

struct Expr;
/** Expressions are immutable trees that may be shared freely. */
using ExprPtr = std::shared_ptr<const Expr>;

/** Reference to a column by qualifier (table name or alias; may be empty) and name.  `index` is the position of the
 * column in the scope and is set by `annotate()`. */
struct ColumnRef
{
    std::string table;
    std::string column;
    std::optional<std::size_t> index;
};

struct Literal
{
    DataType type;
    Value value;
};

enum class ArithOp { ADD, SUB, MUL, DIV };
enum class CmpOp { LT, LE, EQ, NE, GE, GT };
enum class LogicOp { AND, OR, NOT };

struct Arith
{
    ArithOp op;
    ExprPtr left;
    ExprPtr right;
};

struct Cmp
{
    CmpOp op;
    ExprPtr left;
    ExprPtr right;
};

/** `AND` and `OR` take two or more operands, `NOT` exactly one. */
struct Logic
{
    LogicOp op;
    std::vector<ExprPtr> operands;
};

struct Expr
{
    std::variant<ColumnRef, Literal, Arith, Cmp, Logic> node;
    std::optional<DataType> type; ///< set for literals at construction and for all nodes by `annotate()`

    template<typename T> const T * as() const { return std::get_if<T>(&node); }
    template<typename T> bool is() const { return std::holds_alternative<T>(node); }
};

/*----- Construction -------------------------------------------------------------------------------------------------*/

ExprPtr make_column(std::string table, std::string column);
ExprPtr make_literal(Value value, DataType type);
ExprPtr make_literal(std::int32_t v);
ExprPtr make_literal(std::int64_t v);
ExprPtr make_literal(double v);
ExprPtr make_literal(bool v);
/** A `CHAR(max(1, |s|))` literal. */
ExprPtr make_literal(const std::string &s);
ExprPtr make_arith(ArithOp op, ExprPtr left, ExprPtr right);
ExprPtr make_cmp(CmpOp op, ExprPtr left, ExprPtr right);
ExprPtr make_logic(LogicOp op, std::vector<ExprPtr> operands);
ExprPtr make_and(ExprPtr left, ExprPtr right);
ExprPtr make_or(ExprPtr left, ExprPtr right);
ExprPtr make_not(ExprPtr operand);

/*----- Type checking ------------------------------------------------------------------------------------------------*/

/** The columns visible to an expression.  Column `i` of the scope is the `i`-th column of the concatenated schemas. */
using Scope = std::span<const TableSchema>;

/** Returns a copy of `expr` where every node carries its type and every column reference its scope index.  Integer
 * operands of mixed width are widened to `INT64`; there is no implicit conversion between integers and floats.
 * Throws `TypeError` on unresolved or ambiguous columns and on type mismatches.  Idempotent. */
ExprPtr annotate(const ExprPtr &expr, Scope scope);
/** Type of `expr` in `scope`; equivalent to `*annotate(expr, scope)->type`. */
DataType typecheck(const ExprPtr &expr, Scope scope);

/** Resolves a column reference in `scope`.  Returns the scope index or throws `TypeError`. */
std::size_t resolve_column(const ColumnRef &ref, Scope scope);
/** The column at scope index `i`. */
const Column & scope_column(Scope scope, std::size_t i);
/** The qualifier of column `i` in scope: its own qualifier, or the name of its schema if it has none. */
const std::string & scope_qualifier(Scope scope, std::size_t i);

/** The type both operands of an arithmetic operation or comparison are evaluated in. */
std::optional<DataType> common_type(DataType a, DataType b);

/*----- Predicate cost -----------------------------------------------------------------------------------------------*/

enum class CheapnessClass { CHEAP, COSTLY };

/** Comparisons of numeric and boolean values are cheap.  A predicate is costly iff it compares `CHAR(n)` values
 * with `n > COSTLY_CHAR_LENGTH` (the wider of both operands). */
inline constexpr std::size_t COSTLY_CHAR_LENGTH = 8;
CheapnessClass classify_predicate(const ExprPtr &pred);

/*----- Utilities ----------------------------------------------------------------------------------------------------*/

/** Renders `expr` fully parenthesized; the output parses back to an equivalent expression. */
std::string to_string(const Expr &expr);
std::string to_string(ArithOp op);
std::string to_string(CmpOp op);

/** Structural equality, ignoring annotations. */
bool equal(const Expr &a, const Expr &b);

/** Calls `fn` on every column reference in `expr`. */
void for_each_column(const Expr &expr, const std::function<void(const ColumnRef&)> &fn);

}
