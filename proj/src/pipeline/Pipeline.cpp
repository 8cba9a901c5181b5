#include "wasmql/pipeline/Pipeline.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>
#include <queue>


using namespace wasmql;


namespace {

struct Dissector
{
    PipelineGraph &graph;

    std::size_t add_breaker(const PlanNode &node)
    {
        graph.breakers.push_back(Breaker{ graph.breakers.size(), &node, 0 });
        return graph.breakers.back().id;
    }

    /** Completes `p` with `sink` and assigns its id. */
    void finish(Pipeline p, PipelineSink sink)
    {
        p.id = graph.pipelines.size();
        p.sink = sink;
        std::visit([&](auto &s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (not std::is_same_v<T, ResultSink>) graph.breakers[s.breaker].producer = p.id;
        }, sink);
        graph.pipelines.push_back(std::move(p));
    }

    /** Returns the open pipeline that produces the tuples of `node`. */
    Pipeline build(const PlanNode &node)
    {
        switch (node.kind()) {
            case PlanNode::SCAN:
                return Pipeline{ 0, TableScanSource{ &node }, {}, ResultSink{} };
            case PlanNode::FILTER:
            case PlanNode::PROJECT: {
                auto p = build(node.child());
                p.ops.push_back(&node);
                return p;
            }
            case PlanNode::GROUP_BY: {
                auto p = build(node.child());
                std::size_t b = add_breaker(node);
                finish(std::move(p), MaterializeHashTable{ b });
                return Pipeline{ 0, BreakerScanSource{ b }, {}, ResultSink{} };
            }
            case PlanNode::SORT: {
                auto p = build(node.child());
                std::size_t b = add_breaker(node);
                finish(std::move(p), MaterializeSortArray{ b });
                return Pipeline{ 0, BreakerScanSource{ b }, {}, ResultSink{} };
            }
            case PlanNode::JOIN: {
                auto build_side = build(node.child(0));
                std::size_t b = add_breaker(node);
                finish(std::move(build_side), MaterializeHashTable{ b });
                auto p = build(node.child(1));
                p.ops.push_back(&node);
                return p;
            }
        }
        throw InternalError("unknown plan node");
    }
};

}

PipelineGraph wasmql::dissect(const PlanPtr &plan)
{
    PipelineGraph graph;
    graph.plan = plan;
    Dissector d{ graph };
    d.finish(d.build(*plan), ResultSink{});

    for (auto &p : graph.pipelines) {
        if (auto src = std::get_if<BreakerScanSource>(&p.source))
            graph.deps.emplace_back(graph.breakers[src->breaker].producer, p.id);
        for (auto *op : p.ops) {
            if (op->kind() != PlanNode::JOIN) continue;
            for (auto &b : graph.breakers)
                if (b.node == op) graph.deps.emplace_back(b.producer, p.id);
        }
    }
    std::sort(graph.deps.begin(), graph.deps.end());
    return graph;
}

std::vector<std::size_t> wasmql::topo_order(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>> &deps)
{
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> out(n);
    for (auto [from, to] : deps) {
        if (from >= n or to >= n) throw InternalError("pipeline dependency out of range");
        out[from].push_back(to);
        ++indegree[to];
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i != n; ++i)
        if (indegree[i] == 0) ready.push(i);
    std::vector<std::size_t> order;
    while (not ready.empty()) {
        std::size_t i = ready.top();
        ready.pop();
        order.push_back(i);
        for (auto j : out[i])
            if (--indegree[j] == 0) ready.push(j);
    }
    if (order.size() != n) throw InternalError("pipeline dependencies are cyclic");
    return order;
}

std::vector<std::size_t> wasmql::topo_order(const PipelineGraph &graph)
{
    return topo_order(graph.pipelines.size(), graph.deps);
}

std::string wasmql::dump(const PipelineGraph &graph)
{
    std::string out;
    for (auto &p : graph.pipelines) {
        out += "P" + std::to_string(p.id) + ": ";
        std::visit([&](auto &s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, TableScanSource>) {
                auto &scan = s.scan->template as<ScanOp>();
                out += "Scan " + scan.table;
                if (not scan.alias.empty() and scan.alias != scan.table) out += " AS " + scan.alias;
            } else {
                bool sort = graph.breaker(s.breaker).node->kind() == PlanNode::SORT;
                out += (sort ? "ScanSortArray #" : "ScanHashTable #") + std::to_string(s.breaker);
            }
        }, p.source);
        for (auto *op : p.ops) {
            out += " -> ";
            if (op->kind() == PlanNode::JOIN) {
                for (auto &b : graph.breakers)
                    if (b.node == op) out += "Probe #" + std::to_string(b.id);
            } else {
                out += to_string(op->kind());
            }
        }
        out += " -> ";
        std::visit([&](auto &s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, MaterializeHashTable>) out += "BuildHashTable #" + std::to_string(s.breaker);
            else if constexpr (std::is_same_v<T, MaterializeSortArray>) out += "MaterializeSortArray #" + std::to_string(s.breaker);
            else out += "Result";
        }, p.sink);
        std::string after;
        for (auto [from, to] : graph.deps)
            if (to == p.id) after += (after.empty() ? "" : ", ") + ("P" + std::to_string(from));
        if (not after.empty()) out += " [after " + after + "]";
        out += '\n';
    }
    return out;
}
