#include "wasmql/compiler/QueryCompiler.hpp"

#include "wasmql/codegen/Library.hpp"
#include "wasmql/pipeline/Pipeline.hpp"
#include "wasmql/util/error.hpp"
#include <algorithm>
#include <chrono>
#include <map>


using namespace wasmql;
using namespace wasmql::codegen;
using wasm::FuncBuilder;
using wasm::GlobalIndex;
using wasm::Label;
using wasm::LocalIndex;
using wasm::Op;
using wasm::ValType;


std::string abi::column_global(const std::string &table, const std::string &column)
{
    return "col_" + table + "_" + column;
}

std::string abi::rows_global(const std::string &table) { return "rows_" + table; }
std::string abi::sort_base_global(std::size_t b) { return "sort_" + std::to_string(b) + "_base"; }
std::string abi::sort_end_global(std::size_t b) { return "sort_" + std::to_string(b) + "_end"; }


/*======================================================================================================================
 * Cardinality
 *====================================================================================================================*/

std::uint64_t wasmql::cardinality_bound(const PlanNode &node, const Catalog &catalog, std::uint64_t join_factor)
{
    switch (node.kind()) {
        case PlanNode::SCAN:
            return catalog.get(node.as<ScanOp>().table).num_rows();
        case PlanNode::GROUP_BY:
            if (node.as<GroupByOp>().keys.empty()) return 1;
            [[fallthrough]];
        case PlanNode::FILTER:
        case PlanNode::PROJECT:
        case PlanNode::SORT:
            return cardinality_bound(node.child(), catalog, join_factor);
        case PlanNode::JOIN: {
            const auto b = cardinality_bound(node.child(0), catalog, join_factor);
            const auto p = cardinality_bound(node.child(1), catalog, join_factor);
            if (b == 0 or p == 0) return 0;
            const auto larger = std::max(b, p);
            if (b > UINT64_MAX / p) return larger * join_factor;
            return std::min(b * p, larger * join_factor);
        }
    }
    return 0;
}


namespace {

/*======================================================================================================================
 * Required columns
 *====================================================================================================================*/

using Required = std::vector<bool>;

void add_columns(const Expr &e, Required &req)
{
    for_each_column(e, [&](const ColumnRef &ref) { req.at(*ref.index) = true; });
}

/** For every node, the output columns some consumer reads. */
struct RequiredColumns
{
    std::map<const PlanNode*, Required> of;

    void visit(const PlanNode &node, Required req) {
        switch (node.kind()) {
            case PlanNode::SCAN:
                break;
            case PlanNode::FILTER: {
                Required child = req;
                add_columns(*node.as<FilterOp>().predicate, child);
                visit(node.child(), std::move(child));
                break;
            }
            case PlanNode::PROJECT: {
                auto &p = node.as<ProjectOp>();
                Required child(node.child().output().num_columns());
                for (std::size_t i = 0; i != p.exprs.size(); ++i)
                    if (req[i]) add_columns(*p.exprs[i], child);
                visit(node.child(), std::move(child));
                break;
            }
            case PlanNode::GROUP_BY: {
                auto &g = node.as<GroupByOp>();
                Required child(node.child().output().num_columns());
                for (auto &k : g.keys) add_columns(*k, child);
                for (auto &a : g.aggs)
                    if (a.arg) add_columns(*a.arg, child);
                visit(node.child(), std::move(child));
                break;
            }
            case PlanNode::JOIN: {
                auto &j = node.as<JoinOp>();
                const std::size_t nb = node.child(0).output().num_columns();
                Required build(nb), probe(node.child(1).output().num_columns());
                for (std::size_t i = 0; i != req.size(); ++i)
                    if (req[i]) (i < nb ? build[i] : probe[i - nb]) = true;
                for (auto &[b, p] : j.keys) {
                    add_columns(*b, build);
                    add_columns(*p, probe);
                }
                visit(node.child(0), std::move(build));
                visit(node.child(1), std::move(probe));
                break;
            }
            case PlanNode::SORT: {
                Required child = req;
                for (auto &k : node.as<SortOp>().order.keys) add_columns(*k.expr, child);
                visit(node.child(), std::move(child));
                break;
            }
        }
        of[&node] = std::move(req);
    }
};


/*======================================================================================================================
 * Breakers
 *====================================================================================================================*/

/** How one aggregate is kept in a grouping slot. */
struct AggState
{
    std::size_t field;                 ///< running value, or the sum for AVG
    std::optional<std::size_t> count;  ///< AVG only
};

struct BreakerPlan
{
    MemoryRequirements::BreakerKind kind;
    HashTableSpec spec;       ///< hash tables and aggregates
    TupleLayout layout;       ///< slot or array element
    std::vector<AggState> aggs;
    std::optional<wasm::FuncIndex> qsort;
};

DataType sum_type(const AggFn &a) { return a.arg->type->is_integral() ? DataType::Int64() : DataType::Float64(); }

/** The sink state of the pipeline being compiled. */
struct SinkState
{
    std::optional<HashTableEmitter> table;
    std::vector<LocalIndex> agg_locals; ///< global aggregate state, one per slot field
    LocalIndex seen{ 0 };              ///< global aggregate: some tuple was consumed
    LocalIndex cursor{ 0 };            ///< sort array fill pointer, or result row count
};


/*======================================================================================================================
 * Compiler
 *====================================================================================================================*/

class Compiler
{
    const Catalog &catalog_;
    CompileOptions options_;
    PlanPtr plan_;
    PipelineGraph graph_;
    RequiredColumns required_;
    wasm::ModuleBuilder mb_;
    LiteralPool literals_;
    ExprEnv env_;
    MemoryRequirements mem_;
    std::vector<BreakerPlan> breakers_;
    std::map<std::string, std::size_t> table_ids_;
    std::map<std::string, GlobalIndex> globals_;
    std::vector<std::string> global_names_;
    wasm::FuncIndex flush_{ 0 }, rewire_{ 0 };
    std::vector<wasm::FuncIndex> pipeline_funcs_;
    std::size_t num_defined_ = 0;

    public:
    Compiler(const Catalog &catalog, const CompileOptions &options) : catalog_(catalog), options_(options) { }

    CompiledQuery compile(const PlanPtr &plan);

    private:
    GlobalIndex import_global(const std::string &name) {
        auto g = mb_.import_global(name, ValType::I32);
        globals_.emplace(name, g);
        global_names_.push_back(name);
        return g;
    }
    GlobalIndex global(const std::string &name) const { return globals_.at(name); }
    const Required & required(const PlanNode &node) const { return required_.of.at(&node); }

    void collect_literals(const PlanNode &node);
    void plan_tables();
    void plan_breakers();
    void declare_imports();
    Heap heap() const;
    MemRef state(std::size_t breaker) const;

    void compile_pipeline(const Pipeline &p);
    using Body = std::function<void(FuncBuilder&, const Bindings&, Label)>;
    void emit_source(FuncBuilder &fb, const Pipeline &p, const Body &body);
    void emit_ops(FuncBuilder &fb, const Pipeline &p, std::size_t i, const Bindings &b, Label cont,
                  std::optional<LocalIndex> mask, SinkState &sink, std::map<std::size_t, HashTableEmitter> &probes);
    bool can_mask(const Pipeline &p, std::size_t i) const;

    void sink_prologue(FuncBuilder &fb, const Pipeline &p, SinkState &sink);
    void sink_tuple(FuncBuilder &fb, const Pipeline &p, const Bindings &b, std::optional<LocalIndex> mask,
                    SinkState &sink);
    void sink_epilogue(FuncBuilder &fb, const Pipeline &p, SinkState &sink);

    void update_aggregates(FuncBuilder &fb, const GroupByOp &g, const BreakerPlan &bp, const Bindings &b,
                           std::optional<LocalIndex> fresh, std::optional<LocalIndex> mask,
                           const std::function<void(std::size_t)> &push_state,
                           const std::function<void(std::size_t, LocalIndex)> &set_state);
    void store_tuple(FuncBuilder &fb, const TupleLayout &layout, LocalIndex ptr, const Bindings &b);
    Bindings bind_group_slot(FuncBuilder &fb, const PlanNode &node, const BreakerPlan &bp, LocalIndex slot);
    void emit_run();
};

void Compiler::collect_literals(const PlanNode &node)
{
    auto add = [&](const ExprPtr &e) { if (e) literals_.collect(*e); };
    std::visit([&](auto &op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, FilterOp>) add(op.predicate);
        else if constexpr (std::is_same_v<T, ProjectOp>) for (auto &e : op.exprs) add(e);
        else if constexpr (std::is_same_v<T, GroupByOp>) {
            for (auto &e : op.keys) add(e);
            for (auto &a : op.aggs) add(a.arg);
        } else if constexpr (std::is_same_v<T, JoinOp>) {
            for (auto &[b, p] : op.keys) {
                add(b);
                add(p);
            }
        } else if constexpr (std::is_same_v<T, SortOp>) {
            for (auto &k : op.order.keys) add(k.expr);
        }
    }, node.op);
    for (auto &c : node.children) collect_literals(*c);
}

void Compiler::plan_tables()
{
    for_each_node(*plan_, [&](const PlanNode &n) {
        if (n.kind() != PlanNode::SCAN) return;
        auto &name = n.as<ScanOp>().table;
        auto [it, fresh] = table_ids_.try_emplace(name, mem_.tables.size());
        if (fresh) mem_.tables.push_back({ name, {} });
        auto &use = mem_.tables[it->second];
        auto &req = required(n);
        for (std::size_t c = 0; c != req.size(); ++c)
            if (req[c]) use.columns.push_back(c);
        std::sort(use.columns.begin(), use.columns.end());
        use.columns.erase(std::unique(use.columns.begin(), use.columns.end()), use.columns.end());
    });
}

void Compiler::plan_breakers()
{
    using Kind = MemoryRequirements::BreakerKind;
    for (auto &br : graph_.breakers) {
        auto &node = *br.node;
        BreakerPlan bp;
        bp.spec.initial_capacity = options_.initial_capacity;
        switch (node.kind()) {
            case PlanNode::GROUP_BY: {
                auto &g = node.as<GroupByOp>();
                bp.kind = g.keys.empty() ? Kind::AGGREGATE : Kind::HASH_TABLE;
                for (std::size_t i = 0; i != g.keys.size(); ++i)
                    bp.spec.keys.push_back({ "k" + std::to_string(i), *g.keys[i]->type, i });
                std::size_t field = g.keys.size();
                for (std::size_t j = 0; j != g.aggs.size(); ++j) {
                    auto &a = g.aggs[j];
                    const std::size_t out = g.keys.size() + j;
                    const auto n = std::to_string(j);
                    AggState st{ field++, std::nullopt };
                    switch (a.kind) {
                        case AggKind::COUNT_STAR: bp.spec.payload.push_back({ "a" + n, DataType::Int64(), out }); break;
                        case AggKind::SUM:        bp.spec.payload.push_back({ "a" + n, sum_type(a), out }); break;
                        case AggKind::MIN:
                        case AggKind::MAX:        bp.spec.payload.push_back({ "a" + n, *a.arg->type, out }); break;
                        case AggKind::AVG:
                            bp.spec.payload.push_back({ "s" + n, sum_type(a), std::nullopt });
                            bp.spec.payload.push_back({ "n" + n, DataType::Int64(), std::nullopt });
                            st.count = field++;
                            break;
                    }
                    bp.aggs.push_back(st);
                }
                if (bp.kind == Kind::AGGREGATE) {
                    /* No keys: the slot layout without the hash table checks. */
                    bp.layout = TupleLayout(1);
                    for (auto &e : bp.spec.payload) bp.layout.add(e.name, e.type, e.source);
                } else {
                    bp.layout = bp.spec.slot_layout();
                }
                break;
            }
            case PlanNode::JOIN: {
                auto &j = node.as<JoinOp>();
                bp.kind = Kind::HASH_TABLE;
                for (std::size_t i = 0; i != j.keys.size(); ++i) {
                    auto t = common_type(*j.keys[i].first->type, *j.keys[i].second->type);
                    bp.spec.keys.push_back({ "k" + std::to_string(i), *t, std::nullopt });
                }
                auto &req = required(node);
                const std::size_t nb = node.child(0).output().num_columns();
                for (std::size_t c = 0; c != nb; ++c)
                    if (req[c])
                        bp.spec.payload.push_back({ "c" + std::to_string(c), node.child(0).output().columns[c].type, c });
                bp.layout = bp.spec.slot_layout();
                break;
            }
            case PlanNode::SORT: {
                bp.kind = Kind::SORT_ARRAY;
                auto &req = required(node.child());
                auto &cols = node.child().output().columns;
                for (std::size_t c = 0; c != cols.size(); ++c)
                    if (req[c]) bp.layout.add("c" + std::to_string(c), cols[c].type, c);
                if (bp.layout.stride() == 0) bp.layout.add("pad", DataType::Int64());
                break;
            }
            default:
                throw InternalError("breaker on a non-breaking operator");
        }
        bp.layout.check();
        const PlanNode *input = node.kind() == PlanNode::JOIN ? &node.child(0) : &node.child();
        mem_.breakers.push_back({ bp.kind, bp.layout.stride(), input });
        breakers_.push_back(std::move(bp));
    }
}

void Compiler::declare_imports()
{
    mb_.import_memory(1);
    for (auto &use : mem_.tables) {
        auto &schema = catalog_.get(use.table).schema();
        import_global(abi::rows_global(use.table));
        for (auto c : use.columns) import_global(abi::column_global(use.table, schema.columns[c].name));
    }
    if (not graph_.breakers.empty()) {
        import_global(abi::HEAP_BASE);
        import_global(abi::HEAP_END);
    }
    for (auto &br : graph_.breakers)
        if (br.node->kind() == PlanNode::SORT) {
            import_global(abi::sort_base_global(br.id));
            import_global(abi::sort_end_global(br.id));
        }
    import_global(abi::RESULT_BASE);
    import_global(abi::RESULT_CAPACITY);
    if (not literals_.empty()) {
        env_.literal_base = import_global(abi::LITERAL_BASE);
        env_.literals = &literals_;
    }
    flush_ = mb_.import_function(abi::FLUSH, { {}, {} });
    rewire_ = mb_.import_function(abi::REWIRE, { { ValType::I32 }, { ValType::I32 } });
}

Heap Compiler::heap() const
{
    return Heap{ MemRef{ global(abi::HEAP_BASE), 0 }, MemRef{ global(abi::HEAP_END), 0 }, abi::ERROR_WORD };
}

MemRef Compiler::state(std::size_t breaker) const
{
    return MemRef{ global(abi::HEAP_BASE), abi::HEAP_STATES + abi::STATE_SIZE * static_cast<std::uint32_t>(breaker) };
}

CompiledQuery Compiler::compile(const PlanPtr &input)
{
    const auto start = std::chrono::steady_clock::now();
    CompiledQuery out;
    plan_ = annotate_plan(input, catalog_);
    graph_ = dissect(plan_);
    const auto order = topo_order(graph_);
    required_.visit(*plan_, Required(plan_->output().num_columns(), true));

    env_.short_circuit = options_.short_circuit;
    collect_literals(*plan_);
    plan_tables();
    plan_breakers();
    declare_imports();

    for (std::size_t b = 0; b != breakers_.size(); ++b) {
        auto &bp = breakers_[b];
        if (bp.kind != MemoryRequirements::BreakerKind::SORT_ARRAY) continue;
        bp.qsort = emit_quicksort(mb_, graph_.breaker(b).node->as<SortOp>().order, bp.layout, env_,
                                  "qsort" + std::to_string(b));
        ++num_defined_;
    }
    auto &root = plan_->output();
    for (std::size_t c = 0; c != root.num_columns(); ++c)
        mem_.result_layout.add(root.columns[c].name, root.columns[c].type, c);

    pipeline_funcs_.resize(graph_.pipelines.size(), wasm::FuncIndex{ 0 });
    for (auto &p : graph_.pipelines) compile_pipeline(p);
    (void) order;
    emit_run();

    if (not literals_.empty()) mb_.add_data(env_.literal_base, 0, literals_.bytes());
    mem_.literals = literals_.bytes();
    mem_.initial_capacity = options_.initial_capacity;

    out.binary = mb_.finish();
    if (options_.emit_wat) out.wat = mb_.render_wat();
    out.plan = plan_;
    out.result_schema = root;
    out.memory = std::move(mem_);
    out.global_imports = global_names_;
    out.num_functions = num_defined_;
    out.stats.binary_size = out.binary.size();
    out.stats.codegen_us =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
    return out;
}

void Compiler::emit_run()
{
    auto &fb = mb_.begin_function({ {}, {} }, abi::RUN);
    if (not breakers_.empty()) {
        /* The bump pointer starts after the breaker states. */
        const std::uint32_t reserved =
            (abi::HEAP_STATES + abi::STATE_SIZE * static_cast<std::uint32_t>(breakers_.size()) + 7) & ~7u;
        fb.global_get(global(abi::HEAP_BASE));
        fb.global_get(global(abi::HEAP_BASE));
        fb.i32_const(static_cast<std::int32_t>(reserved));
        fb.emit(Op::I32_ADD);
        fb.store(Op::I32_STORE);
    }
    for (auto id : topo_order(graph_)) fb.call(pipeline_funcs_[id]);
    fb.finish();
    mb_.export_function(abi::RUN, fb.index());
    ++num_defined_;
}


/*======================================================================================================================
 * Pipelines
 *====================================================================================================================*/

void set_i32(FuncBuilder &fb, LocalIndex l, std::int32_t v)
{
    fb.i32_const(v);
    fb.local_set(l);
}

void Compiler::compile_pipeline(const Pipeline &p)
{
    auto &fb = mb_.begin_function({ {}, {} }, "f" + std::to_string(p.id));
    pipeline_funcs_[p.id] = fb.index();
    ++num_defined_;

    SinkState sink;
    std::map<std::size_t, HashTableEmitter> probes;
    for (auto *op : p.ops) {
        if (op->kind() != PlanNode::JOIN) continue;
        for (auto &br : graph_.breakers) {
            if (br.node != op) continue;
            auto [it, _] = probes.try_emplace(br.id, fb, breakers_[br.id].spec, heap(), state(br.id));
            it->second.load();
        }
    }
    sink_prologue(fb, p, sink);
    emit_source(fb, p, [&](FuncBuilder &f, const Bindings &b, Label cont) {
        emit_ops(f, p, 0, b, cont, std::nullopt, sink, probes);
    });
    sink_epilogue(fb, p, sink);
    fb.finish();
}

void Compiler::emit_source(FuncBuilder &fb, const Pipeline &p, const Body &body)
{
    if (auto scan = std::get_if<TableScanSource>(&p.source)) {
        auto &node = *scan->scan;
        auto &table = node.as<ScanOp>().table;
        auto &schema = catalog_.get(table).schema();
        auto &req = required(node);
        auto row = fb.fresh_local(ValType::I32), n = fb.fresh_local(ValType::I32);
        Bindings b(req.size());
        for (std::size_t c = 0; c != req.size(); ++c)
            if (req[c])
                b[c] = Binding{ schema.columns[c].type,
                                SegmentSlot{ global(abi::column_global(table, schema.columns[c].name)), row } };

        fb.global_get(global(abi::rows_global(table)));
        fb.local_set(n);
        auto chunk = fb.loop();
        set_i32(fb, row, 0);
        auto done = fb.block();
        auto rows = fb.loop();
        fb.local_get(row);
        fb.local_get(n);
        fb.emit(Op::I32_GE_U);
        fb.br_if(done);
        auto cont = fb.block();
        body(fb, b, cont);
        fb.end();
        fb.local_get(row);
        fb.i32_const(1);
        fb.emit(Op::I32_ADD);
        fb.local_set(row);
        fb.br(rows);
        fb.end();
        fb.end();
        fb.i32_const(static_cast<std::int32_t>(table_ids_.at(table)));
        fb.call(rewire_);
        fb.local_tee(n);
        fb.br_if(chunk);
        fb.end();
        return;
    }

    const std::size_t id = std::get<BreakerScanSource>(p.source).breaker;
    auto &bp = breakers_[id];
    auto &node = *graph_.breaker(id).node;
    using Kind = MemoryRequirements::BreakerKind;
    switch (bp.kind) {
        case Kind::HASH_TABLE: {
            HashTableEmitter ht(fb, bp.spec, heap(), state(id));
            ht.load();
            ht.scan([&](LocalIndex slot, Label next) { body(fb, bind_group_slot(fb, node, bp, slot), next); });
            break;
        }
        case Kind::AGGREGATE: {
            auto slot = fb.fresh_local(ValType::I32);
            auto st = state(id);
            st.push_base(fb);
            fb.load(Op::I32_LOAD, st.offset);
            fb.local_set(slot);
            auto cont = fb.block();
            body(fb, bind_group_slot(fb, node, bp, slot), cont);
            fb.end();
            break;
        }
        case Kind::SORT_ARRAY: {
            auto ptr = fb.fresh_local(ValType::I32), end = fb.fresh_local(ValType::I32);
            auto st = state(id);
            fb.global_get(global(abi::sort_base_global(id)));
            fb.local_set(ptr);
            st.push_base(fb);
            fb.load(Op::I32_LOAD, st.offset);
            fb.local_set(end);
            auto b = bind_tuple(bp.layout, ptr, node.output().num_columns());
            auto done = fb.block();
            auto loop = fb.loop();
            fb.local_get(ptr);
            fb.local_get(end);
            fb.emit(Op::I32_GE_U);
            fb.br_if(done);
            auto cont = fb.block();
            body(fb, b, cont);
            fb.end();
            fb.local_get(ptr);
            fb.i32_const(static_cast<std::int32_t>(bp.layout.stride()));
            fb.emit(Op::I32_ADD);
            fb.local_set(ptr);
            fb.br(loop);
            fb.end();
            fb.end();
            break;
        }
    }
}

Bindings Compiler::bind_group_slot(FuncBuilder &fb, const PlanNode &node, const BreakerPlan &bp, LocalIndex slot)
{
    auto &g = node.as<GroupByOp>();
    auto &req = required(node);
    auto b = bind_tuple(bp.layout, slot, node.output().num_columns());
    for (std::size_t j = 0; j != g.aggs.size(); ++j) {
        const std::size_t out = g.keys.size() + j;
        if (g.aggs[j].kind != AggKind::AVG or not req[out]) continue;
        auto &sum = bp.layout.field(bp.aggs[j].field);
        auto &cnt = bp.layout.field(*bp.aggs[j].count);
        /* count == 0 ? 0 : sum / count */
        fb.local_get(slot);
        emit_load(fb, sum.type, sum.offset);
        if (sum.type.is_integral()) fb.emit(Op::F64_CONVERT_I64_S);
        fb.local_get(slot);
        emit_load(fb, cnt.type, cnt.offset);
        fb.emit(Op::F64_CONVERT_I64_S);
        fb.emit(Op::F64_DIV);
        fb.f64_const(0.0);
        fb.local_get(slot);
        emit_load(fb, cnt.type, cnt.offset);
        fb.i64_const(0);
        fb.emit(Op::I64_NE);
        fb.emit(Op::SELECT);
        auto avg = fb.fresh_local(ValType::F64);
        fb.local_set(avg);
        b[out] = Binding{ DataType::Float64(), LocalSlot{ avg } };
    }
    return b;
}

bool Compiler::can_mask(const Pipeline &p, std::size_t i) const
{
    if (options_.filter_style != FilterStyle::BRANCHLESS) return false;
    for (std::size_t k = i + 1; k < p.ops.size(); ++k)
        if (p.ops[k]->kind() == PlanNode::JOIN) return false;
    if (std::holds_alternative<ResultSink>(p.sink) or std::holds_alternative<MaterializeSortArray>(p.sink))
        return true;
    auto id = std::get<MaterializeHashTable>(p.sink).breaker;
    return breakers_[id].kind == MemoryRequirements::BreakerKind::AGGREGATE;
}

void Compiler::emit_ops(FuncBuilder &fb, const Pipeline &p, std::size_t i, const Bindings &b, Label cont,
                        std::optional<LocalIndex> mask, SinkState &sink,
                        std::map<std::size_t, HashTableEmitter> &probes)
{
    if (i == p.ops.size()) {
        sink_tuple(fb, p, b, mask, sink);
        return;
    }
    auto &node = *p.ops[i];
    switch (node.kind()) {
        case PlanNode::FILTER: {
            ExprCompiler ec(fb, b, env_);
            ec.push(*node.as<FilterOp>().predicate);
            if (can_mask(p, i)) {
                if (mask) {
                    fb.local_get(*mask);
                    fb.emit(Op::I32_AND);
                }
                auto m = fb.fresh_local(ValType::I32);
                fb.local_set(m);
                emit_ops(fb, p, i + 1, b, cont, m, sink, probes);
            } else {
                fb.emit(Op::I32_EQZ);
                fb.br_if(cont);
                emit_ops(fb, p, i + 1, b, cont, mask, sink, probes);
            }
            return;
        }
        case PlanNode::PROJECT: {
            auto &proj = node.as<ProjectOp>();
            auto &req = required(node);
            Bindings out(proj.exprs.size());
            ExprCompiler ec(fb, b, env_);
            for (std::size_t k = 0; k != proj.exprs.size(); ++k) {
                if (not req[k]) continue;
                auto &e = *proj.exprs[k];
                if (auto ref = e.as<ColumnRef>()) {
                    out[k] = b.at(*ref->index);
                    if (not out[k]) throw InternalError("projection of an unbound column");
                } else {
                    out[k] = Binding{ *e.type, LocalSlot{ ec.compile(e) } };
                }
            }
            emit_ops(fb, p, i + 1, out, cont, mask, sink, probes);
            return;
        }
        case PlanNode::JOIN: {
            auto &j = node.as<JoinOp>();
            std::size_t id = 0;
            for (auto &br : graph_.breakers)
                if (br.node == &node) id = br.id;
            auto &bp = breakers_[id];
            ExprCompiler ec(fb, b, env_);
            std::vector<KeyValue> keys;
            for (auto &[build, probe] : j.keys) keys.push_back({ ec.compile(*probe), *probe->type });
            const std::size_t nb = node.child(0).output().num_columns();
            probes.at(id).probe(keys, [&](LocalIndex slot, Label next) {
                Bindings out = bind_tuple(bp.layout, slot, nb + b.size());
                for (std::size_t k = 0; k != b.size(); ++k) out[nb + k] = b[k];
                emit_ops(fb, p, i + 1, out, next, mask, sink, probes);
            });
            return;
        }
        default:
            throw NotImplemented(std::string("operator ") + to_string(node.kind()) + " inside a pipeline");
    }
}

void Compiler::store_tuple(FuncBuilder &fb, const TupleLayout &layout, LocalIndex ptr, const Bindings &b)
{
    for (auto &f : layout.fields()) {
        if (not f.source) continue;
        auto &binding = b.at(*f.source);
        if (not binding) throw InternalError("materialized column " + f.name + " is unbound");
        if (f.type.is_char()) {
            ExprCompiler::push_binding(fb, *binding);
            auto src = fb.fresh_local(ValType::I32);
            fb.local_set(src);
            emit_copy_bytes(fb, ptr, f.offset, src, 0, std::min<std::uint32_t>(f.type.length, binding->type.length));
        } else {
            fb.local_get(ptr);
            ExprCompiler::push_binding(fb, *binding);
            emit_convert(fb, binding->type, f.type);
            emit_store(fb, f.type, f.offset);
        }
    }
}


/*======================================================================================================================
 * Sinks
 *====================================================================================================================*/

void Compiler::sink_prologue(FuncBuilder &fb, const Pipeline &p, SinkState &sink)
{
    using Kind = MemoryRequirements::BreakerKind;
    if (std::holds_alternative<ResultSink>(p.sink)) {
        sink.cursor = fb.fresh_local(ValType::I32);
        fb.i32_const(0);
        fb.load(Op::I32_LOAD, abi::COUNT_WORD);
        fb.local_set(sink.cursor);
    } else if (auto s = std::get_if<MaterializeSortArray>(&p.sink)) {
        sink.cursor = fb.fresh_local(ValType::I32);
        fb.global_get(global(abi::sort_base_global(s->breaker)));
        fb.local_set(sink.cursor);
    } else {
        const auto id = std::get<MaterializeHashTable>(p.sink).breaker;
        auto &bp = breakers_[id];
        if (bp.kind == Kind::AGGREGATE) {
            for (auto &f : bp.layout.fields()) sink.agg_locals.push_back(fb.fresh_local(val_type(f.type)));
            sink.seen = fb.fresh_local(ValType::I32);
        } else {
            sink.table.emplace(fb, bp.spec, heap(), state(id));
            sink.table->init();
        }
    }
}

void Compiler::sink_tuple(FuncBuilder &fb, const Pipeline &p, const Bindings &b, std::optional<LocalIndex> mask,
                          SinkState &sink)
{
    using Kind = MemoryRequirements::BreakerKind;
    auto advance = [&](LocalIndex cursor, std::int32_t step) {
        fb.local_get(cursor);
        if (mask) {
            fb.local_get(*mask);
            if (step != 1) {
                fb.i32_const(step);
                fb.emit(Op::I32_MUL);
            }
        } else {
            fb.i32_const(step);
        }
        fb.emit(Op::I32_ADD);
        fb.local_set(cursor);
    };

    if (std::holds_alternative<ResultSink>(p.sink)) {
        auto &layout = mem_.result_layout;
        auto ptr = fb.fresh_local(ValType::I32);
        fb.global_get(global(abi::RESULT_BASE));
        fb.local_get(sink.cursor);
        fb.i32_const(static_cast<std::int32_t>(layout.stride()));
        fb.emit(Op::I32_MUL);
        fb.emit(Op::I32_ADD);
        fb.local_set(ptr);
        store_tuple(fb, layout, ptr, b);
        advance(sink.cursor, 1);
        fb.local_get(sink.cursor);
        fb.global_get(global(abi::RESULT_CAPACITY));
        fb.emit(Op::I32_GE_U);
        fb.if_();
        fb.i32_const(0);
        fb.local_get(sink.cursor);
        fb.store(Op::I32_STORE, abi::COUNT_WORD);
        fb.call(flush_);
        set_i32(fb, sink.cursor, 0);
        fb.i32_const(0);
        fb.i32_const(0);
        fb.store(Op::I32_STORE, abi::COUNT_WORD);
        fb.end();
        return;
    }
    if (auto s = std::get_if<MaterializeSortArray>(&p.sink)) {
        auto &bp = breakers_[s->breaker];
        const auto stride = static_cast<std::int32_t>(bp.layout.stride());
        fb.local_get(sink.cursor);
        fb.emit(Op::I64_EXTEND_I32_U);
        fb.i64_const(stride);
        fb.emit(Op::I64_ADD);
        fb.global_get(global(abi::sort_end_global(s->breaker)));
        fb.emit(Op::I64_EXTEND_I32_U);
        fb.emit(Op::I64_GT_U);
        fb.if_();
        emit_fail(fb, abi::ERROR_WORD, RuntimeError::ARRAY_FULL);
        fb.end();
        store_tuple(fb, bp.layout, sink.cursor, b);
        advance(sink.cursor, stride);
        return;
    }

    const auto id = std::get<MaterializeHashTable>(p.sink).breaker;
    auto &bp = breakers_[id];
    auto &node = *graph_.breaker(id).node;
    ExprCompiler ec(fb, b, env_);
    if (node.kind() == PlanNode::JOIN) {
        std::vector<KeyValue> keys;
        for (auto &[build, probe] : node.as<JoinOp>().keys) keys.push_back({ ec.compile(*build), *build->type });
        auto slot = sink.table->insert(keys);
        store_tuple(fb, bp.layout, slot, b);
        return;
    }
    auto &g = node.as<GroupByOp>();
    if (bp.kind == Kind::AGGREGATE) {
        auto fresh = fb.fresh_local(ValType::I32);
        fb.local_get(sink.seen);
        fb.emit(Op::I32_EQZ);
        fb.local_set(fresh);
        update_aggregates(fb, g, bp, b, fresh, mask,
                          [&](std::size_t f) { fb.local_get(sink.agg_locals[f]); },
                          [&](std::size_t f, LocalIndex v) {
                              fb.local_get(v);
                              fb.local_set(sink.agg_locals[f]);
                          });
        fb.local_get(sink.seen);
        if (mask) fb.local_get(*mask);
        else fb.i32_const(1);
        fb.emit(Op::I32_OR);
        fb.local_set(sink.seen);
        return;
    }
    std::vector<KeyValue> keys;
    for (auto &k : g.keys) keys.push_back({ ec.compile(*k), *k->type });
    auto is_new = fb.fresh_local(ValType::I32);
    auto slot = sink.table->insert_or_get(keys, is_new);
    update_aggregates(fb, g, bp, b, is_new, mask,
                      [&](std::size_t f) {
                          fb.local_get(slot);
                          emit_load(fb, bp.layout.field(f).type, bp.layout.field(f).offset);
                      },
                      [&](std::size_t f, LocalIndex v) {
                          fb.local_get(slot);
                          fb.local_get(v);
                          emit_store(fb, bp.layout.field(f).type, bp.layout.field(f).offset);
                      });
}

void Compiler::update_aggregates(FuncBuilder &fb, const GroupByOp &g, const BreakerPlan &bp, const Bindings &b,
                                 std::optional<LocalIndex> fresh, std::optional<LocalIndex> mask,
                                 const std::function<void(std::size_t)> &push_state,
                                 const std::function<void(std::size_t, LocalIndex)> &set_state)
{
    ExprCompiler ec(fb, b, env_);
    auto count = [&](std::size_t f) {
        push_state(f);
        if (mask) {
            fb.local_get(*mask);
            fb.emit(Op::I64_EXTEND_I32_U);
        } else {
            fb.i64_const(1);
        }
        fb.emit(Op::I64_ADD);
        auto v = fb.fresh_local(ValType::I64);
        fb.local_set(v);
        set_state(f, v);
    };
    auto sum = [&](std::size_t f, const AggFn &a) {
        const DataType t = bp.layout.field(f).type;
        push_state(f);
        ec.push_as(*a.arg, t);
        if (mask) {
            if (t.is_integral()) fb.i64_const(0);
            else fb.f64_const(0.0);
            fb.local_get(*mask);
            fb.emit(Op::SELECT);
        }
        fb.emit(t.is_integral() ? Op::I64_ADD : Op::F64_ADD);
        auto v = fb.fresh_local(val_type(t));
        fb.local_set(v);
        set_state(f, v);
    };

    for (std::size_t j = 0; j != g.aggs.size(); ++j) {
        auto &a = g.aggs[j];
        auto &st = bp.aggs[j];
        switch (a.kind) {
            case AggKind::COUNT_STAR: count(st.field); break;
            case AggKind::SUM:        sum(st.field, a); break;
            case AggKind::AVG:
                sum(st.field, a);
                count(*st.count);
                break;
            case AggKind::MIN:
            case AggKind::MAX: {
                const DataType t = bp.layout.field(st.field).type;
                auto v = ec.compile(*a.arg);
                auto cur = fb.fresh_local(val_type(t));
                push_state(st.field);
                fb.local_set(cur);
                /* take = fresh | (v < cur) for MIN, v > cur for MAX */
                fb.local_get(v);
                fb.local_get(cur);
                const bool min = a.kind == AggKind::MIN;
                switch (t.kind) {
                    case DataType::INT32:   fb.emit(min ? Op::I32_LT_S : Op::I32_GT_S); break;
                    case DataType::INT64:   fb.emit(min ? Op::I64_LT_S : Op::I64_GT_S); break;
                    case DataType::FLOAT64: fb.emit(min ? Op::F64_LT : Op::F64_GT); break;
                    default: throw CodegenError(to_string(a.kind) + " over " + t.to_string());
                }
                if (fresh) {
                    fb.local_get(*fresh);
                    fb.emit(Op::I32_OR);
                }
                if (mask) {
                    fb.local_get(*mask);
                    fb.emit(Op::I32_AND);
                }
                auto take = fb.fresh_local(ValType::I32);
                fb.local_set(take);
                fb.local_get(v);
                fb.local_get(cur);
                fb.local_get(take);
                fb.emit(Op::SELECT);
                auto nv = fb.fresh_local(val_type(t));
                fb.local_set(nv);
                set_state(st.field, nv);
                break;
            }
        }
    }
}

void Compiler::sink_epilogue(FuncBuilder &fb, const Pipeline &p, SinkState &sink)
{
    using Kind = MemoryRequirements::BreakerKind;
    if (std::holds_alternative<ResultSink>(p.sink)) {
        fb.i32_const(0);
        fb.local_get(sink.cursor);
        fb.store(Op::I32_STORE, abi::COUNT_WORD);
        return;
    }
    if (auto s = std::get_if<MaterializeSortArray>(&p.sink)) {
        auto st = state(s->breaker);
        fb.global_get(global(abi::sort_base_global(s->breaker)));
        fb.local_get(sink.cursor);
        fb.call(*breakers_[s->breaker].qsort);
        st.push_base(fb);
        fb.local_get(sink.cursor);
        fb.store(Op::I32_STORE, st.offset);
        return;
    }
    const auto id = std::get<MaterializeHashTable>(p.sink).breaker;
    auto &bp = breakers_[id];
    if (bp.kind == Kind::AGGREGATE) {
        fb.i64_const(bp.layout.stride());
        auto slot = emit_alloc(fb, heap());
        for (std::size_t f = 0; f != bp.layout.size(); ++f) {
            fb.local_get(slot);
            fb.local_get(sink.agg_locals[f]);
            emit_store(fb, bp.layout.field(f).type, bp.layout.field(f).offset);
        }
        auto st = state(id);
        st.push_base(fb);
        fb.local_get(slot);
        fb.store(Op::I32_STORE, st.offset);
    } else {
        sink.table->store();
    }
}

}

CompiledQuery wasmql::compile_query(const PlanPtr &plan, const Catalog &catalog, const CompileOptions &options)
{
    return Compiler(catalog, options).compile(plan);
}
