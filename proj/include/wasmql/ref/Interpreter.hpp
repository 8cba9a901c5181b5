#pragma once

#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/plan/Plan.hpp"
#include <span>
#include <vector>


namespace wasmql::ref {

/** Evaluates an annotated expression on one row of its scope.  Integer arithmetic wraps in the expression's type;
 * integer division truncates and throws `EvalError` on a zero divisor or on `MIN / -1`.  `AND` and `OR` evaluate
 * left to right and stop early. */
Value eval_expr(const Expr &expr, std::span<const Value> row);

/** Three-way comparison of two values of compatible types (integers of either width, or equal kinds).  `CHAR`
 * values compare bytewise as if zero-padded. */
int compare_values(const Value &a, const Value &b);

enum class JoinStrategy { HASH, NESTED_LOOP };

/** Executes `plan` tuple at a time.  Groups appear in order of first occurrence, join output in probe order with
 * matches in build order, and sorting is stable.  A grouping without keys yields exactly one row; over empty input
 * its aggregates are 0. */
Table interpret(const PlanPtr &plan, const Catalog &catalog, JoinStrategy joins = JoinStrategy::HASH);

}
