#pragma once

#include "wasmql/plan/Plan.hpp"
#include <string>
#include <utility>
#include <variant>
#include <vector>


namespace wasmql {

/** An operator that materializes its input: a grouping, the build side of a join, or a sort. */
struct Breaker
{
    std::size_t id;
    const PlanNode *node; ///< the `HashGroupBy`, `HashJoin`, or `Sort` node
    std::size_t producer = 0; ///< id of the pipeline that fills the breaker's materialization
};

struct TableScanSource
{
    const PlanNode *scan;
};

/** Reads the materialization of a grouping or sort.  Join builds are never scanned; they are probed. */
struct BreakerScanSource
{
    std::size_t breaker;
};

struct MaterializeHashTable
{
    std::size_t breaker;
};

struct MaterializeSortArray
{
    std::size_t breaker;
};

struct ResultSink { };

using PipelineSource = std::variant<TableScanSource, BreakerScanSource>;
using PipelineSink = std::variant<MaterializeHashTable, MaterializeSortArray, ResultSink>;

/** A linear chain of operators that needs no materialization between source and sink.  `ops` holds the `Filter`,
 * `Project`, and `HashJoin` (probe) nodes applied to each tuple, in order. */
struct Pipeline
{
    std::size_t id;
    PipelineSource source;
    std::vector<const PlanNode*> ops;
    PipelineSink sink;
};

/** The pipelines of a plan.  Node pointers refer into `plan`, which the graph keeps alive. */
struct PipelineGraph
{
    PlanPtr plan;
    std::vector<Pipeline> pipelines; ///< indexed by id
    std::vector<Breaker> breakers; ///< indexed by id
    std::vector<std::pair<std::size_t, std::size_t>> deps; ///< (producer, consumer) pipeline ids

    const Pipeline & pipeline(std::size_t id) const { return pipelines.at(id); }
    const Breaker & breaker(std::size_t id) const { return breakers.at(id); }
};

/** Splits an annotated plan into pipelines.  Pipelines and breakers are numbered in the order they are completed,
 * which is a post-order traversal of the plan. */
PipelineGraph dissect(const PlanPtr &plan);

/** Orders the pipelines so that every producer precedes its consumers.  Among the pipelines that are ready, the one
 * with the smallest id comes first.  Throws `InternalError` if the dependencies are cyclic. */
std::vector<std::size_t> topo_order(const PipelineGraph &graph);
/** Same, for `n` pipelines with the given (producer, consumer) edges. */
std::vector<std::size_t> topo_order(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>> &deps);

/** One line per pipeline, e.g. `P1: Scan S -> Probe #0 -> BuildHashTable #1 [after P0]`. */
std::string dump(const PipelineGraph &graph);

}
