#pragma once

#include "wasmql/catalog/Table.hpp"
#include "wasmql/plan/Plan.hpp"
#include <optional>
#include <string>


namespace wasmql::ref {

/** Compares two tables as multisets of rows.  FLOAT64 values match within `rel_tol` relative difference (absolute
 * near zero).  Returns a description of the first difference, or nothing if they match. */
std::optional<std::string> compare_tables(const Table &expected, const Table &actual, double rel_tol = 1e-9);

/** Checks that consecutive rows of `t` are non-decreasing under `order`, whose keys are annotated against the
 * schema of `t`. */
std::optional<std::string> check_order(const Table &t, const OrderSpec &order);

/** Compares `actual` to the reference result of `plan`: in order of the sort keys if the root is a sort, as
 * multisets otherwise. */
std::optional<std::string> compare_to_reference(const PlanPtr &annotated, const Table &expected, const Table &actual,
                                                double rel_tol = 1e-9);

std::string format_row(const std::vector<Value> &row);

}
