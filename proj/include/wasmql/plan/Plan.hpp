#pragma once

#include "wasmql/plan/Expr.hpp"
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>


namespace wasmql {

class Catalog;

/*======================================================================================================================
 * Aggregates and orders
 *====================================================================================================================*/

enum class AggKind { COUNT_STAR, SUM, MIN, MAX, AVG };

/** An aggregate computed by `HashGroupBy`.  `COUNT(*)` has no argument, all others a numeric one.  `name` is the
 * output column name; if empty, a name is derived from the kind and argument. */
struct AggFn
{
    AggKind kind;
    ExprPtr arg;
    std::string name;

    /** `COUNT` yields `INT64`, `SUM` `INT64` or `FLOAT64`, `MIN`/`MAX` the argument type, `AVG` `FLOAT64`. */
    DataType result_type() const;
};

std::string to_string(AggKind kind);
std::string to_string(const AggFn &agg);

enum class Direction { ASC, DESC };

struct OrderKey
{
    ExprPtr expr;
    Direction direction = Direction::ASC;
};

/** A lexicographic order: a list of 1 to 16 expressions, each ascending or descending. */
struct OrderSpec
{
    static constexpr std::size_t MAX_KEYS = 16;
    std::vector<OrderKey> keys;
};


/*======================================================================================================================
 * Physical plan
 *====================================================================================================================*/

struct PlanNode;
/** Plans are immutable trees that may be shared freely, but a plan must not contain the same node twice. */
using PlanPtr = std::shared_ptr<const PlanNode>;

struct ScanOp
{
    std::string table;
    std::string alias; ///< qualifier of the scanned columns; defaults to the table name
};

struct FilterOp
{
    ExprPtr predicate;
};

struct ProjectOp
{
    std::vector<ExprPtr> exprs;
    std::vector<std::string> names; ///< output names; empty entries are derived
};

struct GroupByOp
{
    std::vector<ExprPtr> keys;
    std::vector<AggFn> aggs;
};

/** Equi-join.  `keys[i].first` is evaluated on the build input (left child), `keys[i].second` on the probe input. */
struct JoinOp
{
    std::vector<std::pair<ExprPtr, ExprPtr>> keys;
    ExprPtr predicate; ///< unoriented conjunction of equalities; replaced by `keys` in annotated plans
};

struct SortOp
{
    OrderSpec order;
};

struct PlanNode
{
    enum Kind { SCAN, FILTER, PROJECT, GROUP_BY, JOIN, SORT };

    std::variant<ScanOp, FilterOp, ProjectOp, GroupByOp, JoinOp, SortOp> op;
    std::vector<PlanPtr> children; ///< for joins: build, then probe
    std::optional<TableSchema> schema; ///< output schema, set by `annotate_plan()`

    Kind kind() const { return static_cast<Kind>(op.index()); }
    template<typename T> const T & as() const { return std::get<T>(op); }
    const PlanNode & child(std::size_t i = 0) const { return *children.at(i); }
    /** Output schema of an annotated plan. */
    const TableSchema & output() const;
};

const char * to_string(PlanNode::Kind kind);

/*----- Construction -------------------------------------------------------------------------------------------------*/

PlanPtr make_scan(std::string table, std::string alias = {});
PlanPtr make_filter(ExprPtr predicate, PlanPtr child);
PlanPtr make_project(std::vector<ExprPtr> exprs, PlanPtr child, std::vector<std::string> names = {});
PlanPtr make_group_by(std::vector<ExprPtr> keys, std::vector<AggFn> aggs, PlanPtr child);
/** Builds a hash join from explicit key pairs. */
PlanPtr make_hash_join(std::vector<std::pair<ExprPtr, ExprPtr>> keys, PlanPtr build, PlanPtr probe);
/** Builds a hash join from a conjunction of equalities; sides are assigned when the plan is annotated. */
PlanPtr make_hash_join(ExprPtr predicate, PlanPtr build, PlanPtr probe);
PlanPtr make_sort(OrderSpec order, PlanPtr child);


/*======================================================================================================================
 * Validation
 *====================================================================================================================*/

/** Returns a copy of `plan` in which every node carries its output schema and every expression is annotated against
 * its input.  Join key pairs are oriented build/probe.  Throws `PlanError`, `TypeError`, or `CatalogError`. */
PlanPtr annotate_plan(const PlanPtr &plan, const Catalog &catalog);

/** Returns the schema of the plan's result set. */
TableSchema validate(const PlanPtr &plan, const Catalog &catalog);

/** Visits all nodes in pre-order. */
void for_each_node(const PlanNode &plan, const std::function<void(const PlanNode&)> &fn);

}
