#include "support/LibraryHarness.hpp"
#include "wasmql/catalog/Table.hpp"
#include "wasmql/util/error.hpp"

#include <algorithm>
#include <catch_amalgamated.hpp>
#include <map>
#include <random>
#include <set>


using namespace wasmql;
using namespace wasmql::test;
using Rows = std::vector<std::vector<Value>>;


namespace {

TableSchema schema(std::vector<std::pair<std::string, DataType>> cols)
{
    TableSchema s{ "R", {} };
    for (auto &[n, t] : cols) s.columns.push_back({ n, t, {} });
    return s;
}

TableSchema int64_schema(std::size_t n)
{
    static const char *names[] = { "x", "y", "z", "w" };
    std::vector<std::pair<std::string, DataType>> cols;
    for (std::size_t i = 0; i != n; ++i) cols.emplace_back(names[i], DataType::Int64());
    return schema(cols);
}

Rows random_rows(std::mt19937_64 &rng, std::size_t n, std::size_t cols, std::int64_t lo, std::int64_t hi)
{
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    Rows rows(n);
    for (auto &r : rows)
        for (std::size_t c = 0; c != cols; ++c) r.push_back(d(rng));
    return rows;
}

Rows sorted_copy(Rows rows)
{
    std::sort(rows.begin(), rows.end());
    return rows;
}

bool is_sorted_under(const OrderOracle &oracle, const Rows &rows)
{
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (oracle.less(rows[i], rows[i - 1])) return false;
    return true;
}

std::size_t count_calls(const std::vector<wasm::Instr> &body)
{
    return std::count_if(body.begin(), body.end(), [](auto &i) { return i.op == wasm::Op::CALL; });
}

}


/*======================================================================================================================
 * Swap
 *====================================================================================================================*/

TEST_CASE("swap exchanges tuples", "[codegen][sort]")
{
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);

        SortHarness one(*engine, schema({ { "x", DataType::Int32() } }), { "R.x" }, 4);
        one.write_all({ { std::int32_t(7) }, { std::int32_t(9) } });
        one.swap(0, 1);
        CHECK(one.read_all(2) == Rows{ { std::int32_t(9) }, { std::int32_t(7) } });
        one.swap(1, 1);
        CHECK(one.read(1) == std::vector<Value>{ std::int32_t(7) });

        SortHarness two(*engine, schema({ { "x", DataType::Int32() }, { "y", DataType::Float64() } }), { "R.x" }, 64);
        CHECK(two.layout().field(1).offset == 8);
        std::mt19937_64 rng(7);
        std::uniform_int_distribution<std::int32_t> di;
        std::uniform_real_distribution<double> df(-1e6, 1e6);
        Rows rows;
        for (int i = 0; i != 64; ++i) rows.push_back({ di(rng), df(rng) });
        two.write_all(rows);
        for (int k = 0; k != 200; ++k) {
            const std::size_t i = rng() % 64, j = rng() % 64;
            two.swap(i, j);
            std::swap(rows[i], rows[j]);
        }
        CHECK(two.read_all(64) == rows);

        /* A wide tuple takes the looping path. */
        std::vector<std::pair<std::string, DataType>> wide;
        for (int c = 0; c != 40; ++c) wide.emplace_back("c" + std::to_string(c), DataType::Int64());
        SortHarness big(*engine, schema(wide), { "R.c0" }, 2);
        auto wrows = random_rows(rng, 2, 40, -100, 100);
        big.write_all(wrows);
        big.swap(0, 1);
        CHECK(big.read_all(2) == Rows{ wrows[1], wrows[0] });
    }
}


/*======================================================================================================================
 * Compare
 *====================================================================================================================*/

TEST_CASE("compare on order [x + y, z]", "[codegen][sort]")
{
    auto engine = make_engine();
    const std::vector<std::string> keys{ "R.x + R.y", "R.z" };
    SortHarness h(*engine, int64_schema(3), keys, 2);
    OrderOracle oracle(int64_schema(3), keys);
    const Rows rows{ { std::int64_t(1), std::int64_t(2), std::int64_t(9) },
                     { std::int64_t(0), std::int64_t(4), std::int64_t(0) } };
    h.write_all(rows);
    CHECK(oracle.less(rows[0], rows[1]));
    CHECK(h.less(0, 1));
    CHECK_FALSE(h.less(1, 0));
    CHECK_FALSE(h.less(0, 0));
}

TEST_CASE("compare agrees with the lexicographic order on all pairs over {-1, 0, 1}^2", "[codegen][sort]")
{
    const std::vector<std::vector<std::string>> orders{
        { "R.x", "R.y" }, { "R.x DESC", "R.y" }, { "R.x", "R.y DESC" }, { "R.y DESC", "R.x DESC" } };
    Rows values;
    for (std::int64_t a = -1; a <= 1; ++a)
        for (std::int64_t b = -1; b <= 1; ++b) values.push_back({ a, b });
    for (auto &name : available_engines()) {
        auto engine = make_engine(name);
        for (auto &keys : orders) {
            INFO("engine " << name << ", order " << keys[0] << ", " << keys[1]);
            SortHarness h(*engine, int64_schema(2), keys, 2);
            OrderOracle oracle(int64_schema(2), keys);
            std::size_t mismatches = 0;
            for (auto &l : values)
                for (auto &r : values) {
                    h.write_all({ l, r });
                    mismatches += h.less(0, 1) != oracle.less(l, r);
                }
            CHECK(mismatches == 0);
        }
    }
}

TEST_CASE("compare agrees with the lexicographic order on random 3-key pairs", "[codegen][sort]")
{
    const std::vector<std::string> keys{ "R.x", "R.y DESC", "R.z" };
    std::mt19937_64 rng(42);
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);
        SortHarness h(*engine, int64_schema(3), keys, 2);
        OrderOracle oracle(int64_schema(3), keys);
        std::size_t mismatches = 0, asymmetric = 0;
        for (int i = 0; i != 2000; ++i) {
            auto rows = random_rows(rng, 2, 3, -3, 3);
            h.write_all(rows);
            const bool lr = h.less(0, 1), rl = h.less(1, 0);
            mismatches += lr != oracle.less(rows[0], rows[1]);
            asymmetric += lr and rl;
            mismatches += h.less(0, 0);
        }
        CHECK(mismatches == 0);
        CHECK(asymmetric == 0);
    }
}

TEST_CASE("compare handles mixed key types", "[codegen][sort]")
{
    auto s = schema({ { "n", DataType::Int32() }, { "f", DataType::Float64() }, { "s", DataType::Char(6) } });
    const std::vector<std::vector<std::string>> orders{ { "R.s" }, { "R.s DESC", "R.n" }, { "R.f", "R.s" },
                                                        { "R.n * 2 - R.n", "R.f DESC" } };
    std::mt19937_64 rng(3);
    const char *strings[] = { "", "a", "ab", "abc", "b", "ba", "zzzzzz", "abcdef" };
    auto random_row = [&] {
        return std::vector<Value>{ std::int32_t(rng() % 5) - 2, double(std::int64_t(rng() % 7) - 3) / 2,
                                   std::string(strings[rng() % 8]) };
    };
    for (auto &name : available_engines()) {
        auto engine = make_engine(name);
        for (auto &keys : orders) {
            INFO("engine " << name << ", first key " << keys[0]);
            SortHarness h(*engine, s, keys, 2);
            OrderOracle oracle(s, keys);
            std::size_t mismatches = 0;
            for (int i = 0; i != 500; ++i) {
                Rows rows{ random_row(), random_row() };
                h.write_all(rows);
                mismatches += h.less(0, 1) != oracle.less(rows[0], rows[1]);
            }
            CHECK(mismatches == 0);
        }
    }
}

TEST_CASE("BOOL sort keys are rejected", "[codegen][sort]")
{
    auto s = schema({ { "b", DataType::Bool() } });
    OrderSpec order;
    order.keys.push_back({ make_column("R", "b"), Direction::ASC });
    const TableSchema scope[] = { s };
    order.keys[0].expr = annotate(order.keys[0].expr, scope);
    codegen::TupleLayout layout;
    layout.add("b", DataType::Bool(), 0);
    wasm::ModuleBuilder mb;
    mb.import_memory(1);
    auto &fb = mb.begin_function({ { wasm::ValType::I32, wasm::ValType::I32 }, { wasm::ValType::I32 } });
    CHECK_THROWS_AS(codegen::emit_compare(fb, order, layout, fb.param(0), fb.param(1)), CodegenError);
}


/*======================================================================================================================
 * Partition and median
 *====================================================================================================================*/

TEST_CASE("partition example", "[codegen][sort]")
{
    auto engine = make_engine();
    SortHarness h(*engine, int64_schema(1), { "R.x" }, 8);
    h.write_all({ { std::int64_t(5) }, { std::int64_t(1) }, { std::int64_t(4) }, { std::int64_t(2) },
                  { std::int64_t(3) } });
    CHECK(h.partition(0, 4, 4) == 2);
    auto rows = h.read_all(4);
    CHECK(sorted_copy({ rows[0], rows[1] }) == Rows{ { std::int64_t(1) }, { std::int64_t(2) } });
    CHECK(sorted_copy({ rows[2], rows[3] }) == Rows{ { std::int64_t(4) }, { std::int64_t(5) } });

    h.write_all({ { std::int64_t(1) }, { std::int64_t(0) }, { std::int64_t(2) }, { std::int64_t(9) } });
    CHECK(h.partition(0, 3, 3) == 3);
    h.write_all({ { std::int64_t(4) }, { std::int64_t(4) }, { std::int64_t(4) }, { std::int64_t(4) } });
    CHECK(h.partition(0, 3, 3) == 0);
    CHECK(h.partition(0, 3, 3, true) == 3);
    CHECK(h.partition(2, 2, 3) == 2);
}

TEST_CASE("partition post-condition with any duplicate rate", "[codegen][sort]")
{
    const std::vector<std::string> keys{ "R.x", "R.y DESC" };
    OrderOracle oracle(int64_schema(2), keys);
    std::mt19937_64 rng(11);
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);
        SortHarness h(*engine, int64_schema(2), keys, 600);
        for (int round = 0; round != 60; ++round) {
            const std::size_t n = rng() % 513;
            const std::int64_t range = std::int64_t(1) << (rng() % 12); // 1 means all equal
            auto rows = random_rows(rng, n + 1, 2, 0, range - 1);
            if (n) rows[n] = rows[rng() % n];
            h.write_all(rows);
            for (bool not_after : { false, true }) {
                h.write_all(rows);
                const auto l = h.partition(0, n, n, not_after);
                REQUIRE(l <= n);
                auto out = h.read_all(n);
                std::size_t bad = 0;
                for (std::size_t i = 0; i != n; ++i) {
                    const bool left = not_after ? not oracle.less(rows[n], out[i]) : oracle.less(out[i], rows[n]);
                    bad += left != (i < l);
                }
                CHECK(bad == 0);
                CHECK(sorted_copy(out) == sorted_copy(Rows(rows.begin(), rows.begin() + n)));
            }
        }
    }
}

TEST_CASE("median of three", "[codegen][sort]")
{
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);
        SortHarness h(*engine, int64_schema(1), { "R.x" }, 4);
        std::vector<std::vector<std::int64_t>> triples;
        std::vector<std::int64_t> p{ 1, 2, 3 };
        do triples.push_back(p);
        while (std::next_permutation(p.begin(), p.end()));
        for (auto t : { std::vector<std::int64_t>{ 2, 2, 2 }, { 1, 1, 2 }, { 1, 2, 1 }, { 2, 1, 1 }, { 2, 2, 1 },
                        { 2, 1, 2 }, { 1, 2, 2 } })
            triples.push_back(t);
        for (auto &t : triples) {
            h.write_all({ { t[0] }, { t[1] }, { t[2] } });
            auto sorted = t;
            std::sort(sorted.begin(), sorted.end());
            const auto m = h.median(0, 1, 2);
            REQUIRE(m < 3);
            CHECK(t[m] == sorted[1]);
        }
        h.write_all({ { std::int64_t(1) }, { std::int64_t(2) }, { std::int64_t(3) } });
        CHECK(h.median(0, 1, 2) == 1);
    }
}


/*======================================================================================================================
 * Quicksort
 *====================================================================================================================*/

TEST_CASE("quicksort sorts and preserves the multiset", "[codegen][sort]")
{
    std::mt19937_64 rng(5);
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);

        SortHarness tiny(*engine, schema({ { "x", DataType::Int32() } }), { "R.x" }, 3);
        tiny.write_all({ { std::int32_t(3) }, { std::int32_t(1) }, { std::int32_t(2) } });
        tiny.sort(0, 3);
        CHECK(tiny.read_all(3) == Rows{ { std::int32_t(1) }, { std::int32_t(2) }, { std::int32_t(3) } });

        SortHarness one(*engine, int64_schema(1), { "R.x" }, 10000);
        auto rows = random_rows(rng, 10000, 1, std::numeric_limits<std::int64_t>::min(),
                                std::numeric_limits<std::int64_t>::max());
        one.write_all(rows);
        one.sort(0, rows.size());
        CHECK(one.read_all(rows.size()) == sorted_copy(rows));

        for (std::size_t n : { 0, 1, 2, 3, 4, 5, 17 }) {
            auto small = random_rows(rng, n, 1, 0, 3);
            one.write_all(small);
            one.sort(0, n);
            CHECK(one.read_all(n) == sorted_copy(small));
        }

        const std::vector<std::string> keys{ "R.x + R.y", "R.z" };
        OrderOracle oracle(int64_schema(3), keys);
        SortHarness three(*engine, int64_schema(3), keys, 5000);
        for (std::int64_t range : { 4, 1000 }) {
            auto r3 = random_rows(rng, 1000, 3, -range, range);
            three.write_all(r3);
            three.sort(0, r3.size());
            auto out = three.read_all(r3.size());
            CHECK(is_sorted_under(oracle, out));
            CHECK(sorted_copy(out) == sorted_copy(r3));
        }

        auto equal = Rows(5000, { std::int64_t(1), std::int64_t(2), std::int64_t(3) });
        three.write_all(equal);
        three.sort(0, equal.size());
        CHECK(three.read_all(equal.size()) == equal);

        /* Presorted and reversed inputs. */
        Rows asc;
        for (std::int64_t i = 0; i != 3000; ++i) asc.push_back({ i, std::int64_t(0), -i });
        three.write_all(asc);
        three.sort(0, asc.size());
        CHECK(three.read_all(asc.size()) == asc);
        Rows desc(asc.rbegin(), asc.rend());
        three.write_all(desc);
        three.sort(0, desc.size());
        CHECK(three.read_all(desc.size()) == asc);
    }
}

TEST_CASE("quicksort with CHAR and descending keys", "[codegen][sort]")
{
    auto s = schema({ { "name", DataType::Char(8) }, { "v", DataType::Float64() } });
    const std::vector<std::string> keys{ "R.name DESC", "R.v" };
    OrderOracle oracle(s, keys);
    std::mt19937_64 rng(8);
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);
        SortHarness h(*engine, s, keys, 2000);
        Rows rows;
        for (int i = 0; i != 2000; ++i) {
            std::string str(rng() % 4, 'a');
            for (auto &ch : str) ch = static_cast<char>('a' + rng() % 3);
            rows.push_back({ str, double(rng() % 50) * 0.25 });
        }
        h.write_all(rows);
        h.sort(0, rows.size());
        auto out = h.read_all(rows.size());
        CHECK(is_sorted_under(oracle, out));
        CHECK(sorted_copy(out) == sorted_copy(rows));
    }
}

TEST_CASE("sort library bodies are inlined", "[codegen][sort]")
{
    auto s = schema({ { "x", DataType::Int64() }, { "y", DataType::Int64() }, { "z", DataType::Int64() },
                      { "s", DataType::Char(12) } });
    for (auto keys : { std::vector<std::string>{ "R.x + R.y", "R.z" }, std::vector<std::string>{ "R.s DESC" } }) {
        auto b = SortHarness::bodies(s, keys);
        CHECK(count_calls(b.cmp) == 0);
        CHECK(count_calls(b.swap) == 0);
        CHECK(count_calls(b.part) == 0);
        CHECK(count_calls(b.med) == 0);
        REQUIRE(count_calls(b.qsort) == 1);
        auto call = std::find_if(b.qsort.begin(), b.qsort.end(), [](auto &i) { return i.op == wasm::Op::CALL; });
        CHECK(call->imm == b.qsort_index.value);
    }
}


/*======================================================================================================================
 * Hashing and hash tables
 *====================================================================================================================*/

TEST_CASE("emitted FNV-1a-64 equals the host hash", "[codegen][hash]")
{
    CHECK(fnv1a64({}) == codegen::FNV_OFFSET_BASIS);
    const std::byte a[] = { std::byte{ 'a' } };
    CHECK(fnv1a64(a) == 0xaf63dc4c8601ec8cull);

    std::mt19937_64 rng(13);
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);
        {
            const std::vector<DataType> types{ DataType::Int32(), DataType::Int64() };
            HashTableHarness h(*engine, types, {}, 8);
            std::size_t mismatches = 0;
            for (int i = 0; i != 2000; ++i) {
                std::vector<Value> key{ std::int32_t(rng()), std::int64_t(rng()) };
                mismatches += h.hash(key) != host_hash(key, types);
            }
            CHECK(mismatches == 0);
            std::vector<Value> k{ std::int32_t(5), std::int64_t(6) };
            CHECK(h.hash(k) == h.hash(k));
        }
        {
            const std::vector<DataType> types{ DataType::Float64(), DataType::Char(11), DataType::Bool() };
            HashTableHarness h(*engine, types, {}, 8);
            std::vector<Value> pos{ 0.0, std::string("hello"), true }, neg{ -0.0, std::string("hello"), true };
            CHECK(h.hash(pos) == h.hash(neg));
            CHECK(h.hash(pos) == host_hash(pos, types));
            std::vector<Value> other{ 2.5, std::string("hello world"), false };
            CHECK(h.hash(other) == host_hash(other, types));
        }
    }
    wasm::ModuleBuilder mb;
    mb.import_memory(1);
    auto &fb = mb.begin_function({ { wasm::ValType::I32 }, {} });
    codegen::TupleLayout layout;
    layout.add("x", DataType::Int32());
    CHECK_THROWS_AS(codegen::emit_hash(fb, {}, layout, fb.param(0)), CodegenError);
}

TEST_CASE("hash table insert_or_get", "[codegen][hash]")
{
    std::mt19937_64 rng(17);
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);
        {
            HashTableHarness h(*engine, { DataType::Int32() }, { DataType::Int64() }, 8);
            auto slots = h.insert_or_get({ { std::int32_t(1) }, { std::int32_t(1) }, { std::int32_t(2) } });
            CHECK(slots[0] == slots[1]);
            CHECK(slots[0] != slots[2]);
            CHECK(h.count() == 2);
            CHECK(h.count_slots() == 2);
        }
        {
            HashTableHarness h(*engine, { DataType::Int64(), DataType::Char(5) }, { DataType::Float64() }, 8);
            std::set<std::vector<Value>> oracle;
            Rows keys;
            for (int i = 0; i != 1000; ++i) {
                std::vector<Value> k{ std::int64_t(rng() % 700), std::string(1 + rng() % 2, char('a' + rng() % 3)) };
                oracle.insert(k);
                keys.push_back(k);
            }
            const auto first = h.insert_or_get(keys);
            CHECK(h.capacity() >= 4 * 8);
            CHECK(std::uint64_t(h.count()) * 10 <= std::uint64_t(h.capacity()) * 7);
            CHECK(h.count() == oracle.size());
            auto stored = h.stored_keys();
            CHECK(std::set<std::vector<Value>>(stored.begin(), stored.end()) == oracle);
            CHECK(stored.size() == oracle.size());
            /* Once growth is over, lookups return the slots they created. */
            const auto again = h.insert_or_get(keys);
            CHECK(h.insert_or_get(keys) == again);
            for (auto &k : oracle) CHECK(h.count_matches(k) == 1);
            CHECK(h.count_matches({ std::int64_t(-1), std::string("a") }) == 0);
            CHECK(first.size() == keys.size());
        }
    }
}

TEST_CASE("hash table survives colliding keys", "[codegen][hash]")
{
    auto keys = colliding_keys(200, 12);
    REQUIRE(keys.size() == 200);
    const DataType t[] = { DataType::Int32() };
    const Value k0[] = { keys[0] }, k1[] = { keys[199] };
    CHECK((host_hash(k0, t) & 0xfff) == (host_hash(k1, t) & 0xfff));
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);
        HashTableHarness h(*engine, { DataType::Int32() }, {}, 8);
        Rows rows;
        for (auto k : keys) rows.push_back({ k });
        for (auto k : keys) rows.push_back({ k });
        h.insert_or_get(rows);
        CHECK(h.count() == 200);
        auto stored = h.stored_keys();
        CHECK(sorted_copy(stored) == sorted_copy(Rows(rows.begin(), rows.begin() + 200)));
        for (auto k : keys) CHECK(h.count_matches({ k }) == 1);
    }
}

TEST_CASE("hash table as multimap", "[codegen][hash]")
{
    std::mt19937_64 rng(19);
    for (auto &name : available_engines()) {
        INFO("engine " << name);
        auto engine = make_engine(name);
        HashTableHarness h(*engine, { DataType::Int64() }, { DataType::Int32() }, 16);
        std::map<std::int64_t, std::uint32_t> multiplicity;
        Rows rows;
        for (int i = 0; i != 600; ++i) {
            const std::int64_t k = rng() % 50;
            ++multiplicity[k];
            rows.push_back({ k });
        }
        h.insert(rows);
        CHECK(h.count() == 600);
        CHECK(h.count_slots() == 600);
        for (auto [k, m] : multiplicity) CHECK(h.count_matches({ k }) == m);
        CHECK(h.count_matches({ std::int64_t(1000) }) == 0);
    }
}

TEST_CASE("hash table errors", "[codegen][hash]")
{
    codegen::HashTableSpec spec;
    spec.keys.push_back({ "k", DataType::Int32(), {} });
    spec.initial_capacity = 12;
    CHECK_THROWS_AS(spec.check(), CodegenError);
    spec.initial_capacity = 8;
    spec.load_num = 10;
    CHECK_THROWS_AS(spec.check(), CodegenError);
    spec.load_num = 7;
    spec.payload.push_back({ "k", DataType::Int32(), {} });
    CHECK_THROWS_AS(spec.check(), CodegenError);

    auto engine = make_engine();
    /* The heap starts at 1 MiB and ends at the memory's end. */
    HashTableHarness h(*engine, { DataType::Int64() }, { DataType::Int64(), DataType::Int64() }, 8, 17);
    Rows rows;
    for (std::int64_t i = 0; i != 4000; ++i) rows.push_back({ i });
    CHECK_THROWS_AS(h.insert_or_get(rows), TrapError);
    std::uint32_t error;
    std::memcpy(&error, h.memory().data() + 4, 4);
    CHECK(error == static_cast<std::uint32_t>(codegen::RuntimeError::HEAP_EXHAUSTED));
}
