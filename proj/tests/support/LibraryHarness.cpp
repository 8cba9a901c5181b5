#include "support/LibraryHarness.hpp"

#include "wasmql/catalog/Table.hpp"
#include "wasmql/plan/Parser.hpp"
#include "wasmql/ref/Interpreter.hpp"
#include "wasmql/util/error.hpp"
#include <bit>
#include <cstring>


using namespace wasmql;
using namespace wasmql::test;
using namespace wasmql::codegen;
using wasm::Op;
using wasm::ValType;

namespace {

constexpr std::uint32_t PAGE = 64 * 1024;

std::uint32_t pages_for(std::uint64_t bytes) { return static_cast<std::uint32_t>((bytes + PAGE - 1) / PAGE); }

std::uint32_t as_u32(std::optional<RawValue> v) { return static_cast<std::uint32_t>(v.value()); }

TupleLayout layout_of(const TableSchema &schema)
{
    TupleLayout layout;
    for (std::size_t i = 0; i != schema.columns.size(); ++i)
        layout.add(schema.columns[i].name, schema.columns[i].type, i);
    return layout;
}

struct SortModule
{
    wasm::ModuleBuilder module;
    wasm::FuncIndex cmp, swap, part, part_le, med, qsort;
};

SortModule build_sort_module(const TableSchema &schema, const OrderSpec &order, const TupleLayout &layout,
                             std::uint32_t pages)
{
    SortModule m;
    auto &mb = m.module;
    mb.import_memory(pages);
    const auto I32 = ValType::I32;

    {
        auto &fb = mb.begin_function({ { I32, I32 }, { I32 } }, "cmp");
        auto c = emit_compare(fb, order, layout, fb.param(0), fb.param(1));
        fb.local_get(c);
        fb.finish();
        m.cmp = fb.index();
    }
    {
        auto &fb = mb.begin_function({ { I32, I32 }, {} }, "swap");
        emit_swap(fb, layout, fb.param(0), fb.param(1));
        fb.finish();
        m.swap = fb.index();
    }
    for (auto by : { PartitionBy::LESS, PartitionBy::NOT_AFTER }) {
        auto &fb = mb.begin_function({ { I32, I32, I32 }, { I32 } }, by == PartitionBy::LESS ? "part" : "part_le");
        auto l = emit_partition(fb, order, layout, fb.param(0), fb.param(1), fb.param(2), {}, by);
        fb.local_get(l);
        fb.finish();
        (by == PartitionBy::LESS ? m.part : m.part_le) = fb.index();
    }
    {
        auto &fb = mb.begin_function({ { I32, I32, I32 }, { I32 } }, "med");
        auto r = emit_median_of_three(fb, order, layout, fb.param(0), fb.param(1), fb.param(2));
        fb.local_get(r);
        fb.finish();
        m.med = fb.index();
    }
    m.qsort = emit_quicksort(mb, order, layout);
    mb.export_function("cmp", m.cmp);
    mb.export_function("swap", m.swap);
    mb.export_function("part", m.part);
    mb.export_function("part_le", m.part_le);
    mb.export_function("med", m.med);
    mb.export_function("qsort", m.qsort);
    return m;
}

std::string split_direction(const std::string &key, Direction &dir)
{
    dir = Direction::ASC;
    std::string text = key;
    for (auto [suffix, d] : { std::pair{ " DESC", Direction::DESC }, std::pair{ " ASC", Direction::ASC } }) {
        const std::string s = suffix;
        if (text.size() > s.size() and text.compare(text.size() - s.size(), s.size(), s) == 0) {
            text.resize(text.size() - s.size());
            dir = d;
            break;
        }
    }
    return text;
}

}


/*======================================================================================================================
 * Orders
 *====================================================================================================================*/

OrderSpec test::parse_order(const TableSchema &schema, const std::vector<std::string> &keys)
{
    OrderSpec order;
    const TableSchema scope[] = { schema };
    for (auto &k : keys) {
        Direction dir;
        auto text = split_direction(k, dir);
        order.keys.push_back({ annotate(parse_expression(text), scope), dir });
    }
    return order;
}

OrderOracle::OrderOracle(TableSchema schema, const std::vector<std::string> &keys)
    : order_(parse_order(schema, keys)), schema_(std::move(schema))
{ }

int OrderOracle::compare(std::span<const Value> a, std::span<const Value> b) const
{
    for (auto &k : order_.keys) {
        int c = ref::compare_values(ref::eval_expr(*k.expr, a), ref::eval_expr(*k.expr, b));
        if (k.direction == Direction::DESC) c = -c;
        if (c) return c;
    }
    return 0;
}


/*======================================================================================================================
 * SortHarness
 *====================================================================================================================*/

SortHarness::SortHarness(Engine &engine, TableSchema schema, const std::vector<std::string> &keys,
                         std::size_t max_tuples)
    : layout_(layout_of(schema)), schema_(std::move(schema))
{
    const auto pages = pages_for(DATA + std::uint64_t(max_tuples + 1) * layout_.stride()) + 1;
    auto m = build_sort_module(schema_, parse_order(schema_, keys), layout_, pages);
    auto bytes = m.module.finish();
    module_ = engine.compile(bytes);
    ImportValues imports;
    imports.memory_pages = pages;
    instance_ = module_->instantiate(imports);
}

std::span<std::byte> SortHarness::memory() { return instance_->memory(); }

void SortHarness::write(std::size_t i, std::span<const Value> row)
{
    auto *p = memory().data() + address(i);
    std::memset(p, 0, layout_.stride());
    for (auto &f : layout_.fields()) encode_value(row[*f.source], f.type, p + f.offset);
}

std::vector<Value> SortHarness::read(std::size_t i)
{
    const auto *p = memory().data() + address(i);
    std::vector<Value> row;
    for (auto &f : layout_.fields()) row.push_back(decode_value(p + f.offset, f.type));
    return row;
}

void SortHarness::write_all(const std::vector<std::vector<Value>> &rows)
{
    for (std::size_t i = 0; i != rows.size(); ++i) write(i, rows[i]);
}

std::vector<std::vector<Value>> SortHarness::read_all(std::size_t n)
{
    std::vector<std::vector<Value>> rows;
    for (std::size_t i = 0; i != n; ++i) rows.push_back(read(i));
    return rows;
}

bool SortHarness::less(std::size_t i, std::size_t j)
{
    const RawValue args[] = { address(i), address(j) };
    return as_u32(instance_->call("cmp", args)) != 0;
}

void SortHarness::swap(std::size_t i, std::size_t j)
{
    const RawValue args[] = { address(i), address(j) };
    instance_->call("swap", args);
}

std::size_t SortHarness::partition(std::size_t begin, std::size_t end, std::size_t pivot, bool not_after)
{
    const RawValue args[] = { address(begin), address(end), address(pivot) };
    const auto l = as_u32(instance_->call(not_after ? "part_le" : "part", args));
    return (l - DATA) / layout_.stride();
}

std::size_t SortHarness::median(std::size_t a, std::size_t b, std::size_t c)
{
    const RawValue args[] = { address(a), address(b), address(c) };
    return (as_u32(instance_->call("med", args)) - DATA) / layout_.stride();
}

void SortHarness::sort(std::size_t begin, std::size_t end)
{
    const RawValue args[] = { address(begin), address(end) };
    instance_->call("qsort", args);
}

SortHarness::Bodies SortHarness::bodies(TableSchema schema, const std::vector<std::string> &keys)
{
    auto layout = layout_of(schema);
    auto m = build_sort_module(schema, parse_order(schema, keys), layout, 1);
    auto body = [&](wasm::FuncIndex f) {
        auto b = m.module.function(f).body();
        return std::vector<wasm::Instr>(b.begin(), b.end());
    };
    return { body(m.cmp), body(m.swap), body(m.part), body(m.med), body(m.qsort), m.qsort };
}


/*======================================================================================================================
 * Hashing
 *====================================================================================================================*/

std::uint64_t test::fnv1a64(std::span<const std::byte> bytes, std::uint64_t h)
{
    for (auto b : bytes) {
        h ^= std::to_integer<std::uint64_t>(b);
        h *= FNV_PRIME;
    }
    return h;
}

std::uint64_t test::host_hash(std::span<const Value> keys, std::span<const DataType> types)
{
    std::uint64_t h = FNV_OFFSET_BASIS;
    for (std::size_t i = 0; i != keys.size(); ++i) {
        const DataType t = types[i];
        std::vector<std::byte> buf(t.width());
        if (t.kind == DataType::FLOAT64) encode_value(std::get<double>(keys[i]) + 0.0, t, buf.data());
        else encode_value(keys[i], t, buf.data());
        h = fnv1a64(buf, h);
    }
    return h;
}

std::vector<std::int32_t> test::colliding_keys(std::size_t n, unsigned bits)
{
    const std::uint64_t mask = (std::uint64_t(1) << bits) - 1;
    const DataType types[] = { DataType::Int32() };
    auto low = [&](std::int32_t k) {
        const Value v[] = { k };
        return host_hash(v, types) & mask;
    };
    const auto target = low(0);
    std::vector<std::int32_t> keys{ 0 };
    for (std::int32_t k = 1; keys.size() < n; ++k)
        if (low(k) == target) keys.push_back(k);
    return keys;
}


/*======================================================================================================================
 * HashTableHarness
 *====================================================================================================================*/

HashTableHarness::HashTableHarness(Engine &engine, std::vector<DataType> keys, std::vector<DataType> payload,
                                   std::uint32_t initial_capacity, std::uint32_t pages)
{
    for (std::size_t i = 0; i != keys.size(); ++i) {
        spec_.keys.push_back({ "k" + std::to_string(i), keys[i], std::nullopt });
        key_layout_.add("k" + std::to_string(i), keys[i]);
    }
    for (std::size_t i = 0; i != payload.size(); ++i) spec_.payload.push_back({ "p" + std::to_string(i), payload[i], std::nullopt });
    spec_.initial_capacity = initial_capacity;
    slot_ = spec_.slot_layout();

    const Heap heap{ MemRef{ std::nullopt, TOP }, MemRef{ std::nullopt, pages * PAGE } };
    const MemRef state{ std::nullopt, STATE };
    const auto I32 = ValType::I32;

    wasm::ModuleBuilder mb;
    mb.import_memory(pages);

    /* Loads the key tuple at `ptr` into locals. */
    auto load_keys = [&](wasm::FuncBuilder &fb, wasm::LocalIndex ptr) {
        std::vector<KeyValue> kv;
        for (auto &f : key_layout_.fields()) {
            fb.local_get(ptr);
            emit_load(fb, f.type, f.offset);
            auto l = fb.fresh_local(val_type(f.type));
            fb.local_set(l);
            kv.push_back({ l, f.type });
        }
        return kv;
    };

    {
        auto &fb = mb.begin_function({ {}, {} }, "init");
        fb.i32_const(0);
        fb.i32_const(static_cast<std::int32_t>(HEAP));
        fb.store(Op::I32_STORE, TOP);
        HashTableEmitter ht(fb, spec_, heap, state);
        ht.init();
        ht.store();
        fb.finish();
        mb.export_function("init", fb.index());
    }
    for (bool always : { false, true }) {
        auto &fb = mb.begin_function({ { I32, I32 }, {} }, always ? "insert" : "insert_or_get");
        HashTableEmitter ht(fb, spec_, heap, state);
        ht.load();
        auto i = fb.fresh_local(I32), ptr = fb.fresh_local(I32);
        auto exit = fb.block();
        auto loop = fb.loop();
        fb.local_get(i);
        fb.local_get(fb.param(1));
        fb.emit(Op::I32_GE_U);
        fb.br_if(exit);
        fb.local_get(fb.param(0));
        fb.local_get(i);
        fb.i32_const(static_cast<std::int32_t>(key_layout_.stride()));
        fb.emit(Op::I32_MUL);
        fb.emit(Op::I32_ADD);
        fb.local_set(ptr);
        auto kv = load_keys(fb, ptr);
        auto slot = always ? ht.insert(kv) : ht.insert_or_get(kv);
        fb.local_get(i);
        fb.i32_const(2);
        fb.emit(Op::I32_SHL);
        fb.local_get(slot);
        fb.store(Op::I32_STORE, SLOTS);
        fb.local_get(i);
        fb.i32_const(1);
        fb.emit(Op::I32_ADD);
        fb.local_set(i);
        fb.br(loop);
        fb.end();
        fb.end();
        ht.store();
        fb.finish();
        mb.export_function(fb.name(), fb.index());
    }
    {
        auto &fb = mb.begin_function({ { I32 }, { I32 } }, "count_matches");
        HashTableEmitter ht(fb, spec_, heap, state);
        ht.load();
        auto n = fb.fresh_local(I32);
        auto kv = load_keys(fb, fb.param(0));
        ht.probe(kv, [&](wasm::LocalIndex, wasm::Label) {
            fb.local_get(n);
            fb.i32_const(1);
            fb.emit(Op::I32_ADD);
            fb.local_set(n);
        });
        fb.local_get(n);
        fb.finish();
        mb.export_function("count_matches", fb.index());
    }
    {
        auto &fb = mb.begin_function({ {}, { I32 } }, "count_slots");
        HashTableEmitter ht(fb, spec_, heap, state);
        ht.load();
        auto n = fb.fresh_local(I32);
        ht.scan([&](wasm::LocalIndex, wasm::Label) {
            fb.local_get(n);
            fb.i32_const(1);
            fb.emit(Op::I32_ADD);
            fb.local_set(n);
        });
        fb.local_get(n);
        fb.finish();
        mb.export_function("count_slots", fb.index());
    }
    {
        auto &fb = mb.begin_function({ { I32 }, { ValType::I64 } }, "hash");
        std::vector<std::size_t> fields(key_layout_.size());
        for (std::size_t k = 0; k != fields.size(); ++k) fields[k] = k;
        auto h = emit_hash(fb, fields, key_layout_, fb.param(0));
        fb.local_get(h);
        fb.finish();
        mb.export_function("hash", fb.index());
    }

    auto bytes = mb.finish();
    module_ = engine.compile(bytes);
    ImportValues imports;
    imports.memory_pages = pages;
    instance_ = module_->instantiate(imports);
    instance_->call("init");
}

std::span<std::byte> HashTableHarness::memory() { return instance_->memory(); }

std::uint32_t HashTableHarness::heap_end() const { return static_cast<std::uint32_t>(instance_->memory().size()); }

void HashTableHarness::write_keys(const std::vector<std::vector<Value>> &keys)
{
    auto *base = memory().data() + INPUT;
    const auto stride = key_layout_.stride();
    if (INPUT + keys.size() * stride > SLOTS) throw std::length_error("too many keys for the harness");
    std::memset(base, 0, keys.size() * stride);
    for (std::size_t i = 0; i != keys.size(); ++i)
        for (std::size_t k = 0; k != key_layout_.size(); ++k) {
            auto &f = key_layout_.field(k);
            encode_value(keys[i][k], f.type, base + i * stride + f.offset);
        }
}

std::vector<std::uint32_t> HashTableHarness::insert_or_get(const std::vector<std::vector<Value>> &keys)
{
    write_keys(keys);
    const RawValue args[] = { INPUT, keys.size() };
    instance_->call("insert_or_get", args);
    std::vector<std::uint32_t> slots(keys.size());
    std::memcpy(slots.data(), memory().data() + SLOTS, 4 * keys.size());
    return slots;
}

std::vector<std::uint32_t> HashTableHarness::insert(const std::vector<std::vector<Value>> &keys)
{
    write_keys(keys);
    const RawValue args[] = { INPUT, keys.size() };
    instance_->call("insert", args);
    std::vector<std::uint32_t> slots(keys.size());
    std::memcpy(slots.data(), memory().data() + SLOTS, 4 * keys.size());
    return slots;
}

std::uint32_t HashTableHarness::count_matches(const std::vector<Value> &key)
{
    write_keys({ key });
    const RawValue args[] = { INPUT };
    return as_u32(instance_->call("count_matches", args));
}

std::uint32_t HashTableHarness::count_slots() { return as_u32(instance_->call("count_slots")); }

std::uint64_t HashTableHarness::hash(const std::vector<Value> &key)
{
    write_keys({ key });
    const RawValue args[] = { INPUT };
    return instance_->call("hash", args).value();
}

namespace {

std::uint32_t word(std::span<const std::byte> mem, std::uint32_t addr)
{
    std::uint32_t v;
    std::memcpy(&v, mem.data() + addr, 4);
    return v;
}

}

std::uint32_t HashTableHarness::base() { return word(memory(), STATE); }
std::uint32_t HashTableHarness::capacity() { return word(memory(), STATE + 4); }
std::uint32_t HashTableHarness::count() { return word(memory(), STATE + 8); }

std::vector<std::vector<Value>> HashTableHarness::stored_keys()
{
    auto mem = memory();
    std::vector<std::vector<Value>> out;
    const auto b = base(), cap = capacity(), stride = slot_.stride();
    for (std::uint32_t i = 0; i != cap; ++i) {
        const auto *slot = mem.data() + b + i * stride;
        if (std::to_integer<int>(slot[0]) == 0) continue;
        std::vector<Value> key;
        for (std::size_t k = 0; k != spec_.keys.size(); ++k) {
            auto &f = slot_.field(k);
            key.push_back(decode_value(slot + f.offset, f.type));
        }
        out.push_back(std::move(key));
    }
    return out;
}
