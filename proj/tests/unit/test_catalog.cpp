#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/util/error.hpp"

#include <catch_amalgamated.hpp>
#include <cmath>


using namespace wasmql;


namespace {

TableSchema schema(std::string name, std::vector<std::pair<std::string, DataType>> cols)
{
    TableSchema s{ std::move(name), {} };
    for (auto &[n, t] : cols) s.columns.push_back(Column{ n, t, {} });
    return s;
}

}

TEST_CASE("DataType widths", "[catalog]")
{
    CHECK(DataType::Int32().width() == 4);
    CHECK(DataType::Int64().width() == 8);
    CHECK(DataType::Float64().width() == 8);
    CHECK(DataType::Bool().width() == 1);
    CHECK(DataType::Char(17).width() == 17);
    CHECK_THROWS_AS(DataType::Char(0), TypeError);
    CHECK_THROWS_AS(DataType::Char(257), TypeError);
    CHECK(DataType::parse("char(12)") == DataType::Char(12));
    CHECK(DataType::parse("BIGINT") == DataType::Int64());
    for (auto t : { DataType::Int32(), DataType::Int64(), DataType::Float64(), DataType::Bool(), DataType::Char(3) })
        CHECK(DataType::parse(t.to_string()) == t);
}

TEST_CASE("define_table", "[catalog]")
{
    Catalog cat;
    auto h = cat.define_table(schema("R", { { "x", DataType::Int32() } }));
    CHECK(cat.table(h).num_rows() == 0);
    CHECK_THROWS_AS(cat.define_table(schema("R", { { "y", DataType::Int32() } })), CatalogError);
    CHECK_THROWS_AS(cat.define_table(schema("S", { { "x", DataType::Int32() }, { "x", DataType::Int64() } })),
                    CatalogError);
    CHECK_THROWS_AS(cat.define_table(schema("T", {})), CatalogError);
    CHECK_THROWS_AS(cat.define_table(schema("1bad", { { "x", DataType::Int32() } })), CatalogError);
    CHECK_THROWS_AS(cat.get("nope"), CatalogError);
}

TEST_CASE("ingest_csv", "[catalog]")
{
    Catalog cat;
    auto r = cat.define_table(schema("R", { { "x", DataType::Int32() } }));
    CHECK(cat.ingest_csv(r, "1\n2\n3\n", false) == 3);
    CHECK(cat.table(r).column_bytes(0).size() == 12);

    SECTION("arity error reports the line") {
        try {
            cat.ingest_csv(r, "1,2\n", false);
            FAIL("expected CsvError");
        } catch (const CsvError &e) {
            CHECK(e.line == 1);
            CHECK(std::string(e.what()).find("arity") != std::string::npos);
        }
        CHECK(cat.table(r).num_rows() == 3);
    }
    SECTION("errors are atomic and carry 1-based line numbers") {
        try {
            cat.ingest_csv(r, "x\n4\n5\nfoo\n", true);
            FAIL("expected CsvError");
        } catch (const CsvError &e) {
            CHECK(e.line == 4);
        }
        CHECK(cat.table(r).num_rows() == 3);
    }
    SECTION("CHAR overflow") {
        auto s = cat.define_table(schema("S", { { "c", DataType::Char(4) } }));
        try {
            cat.ingest_csv(s, "abcdef", false);
            FAIL("expected CsvError");
        } catch (const CsvError &e) {
            CHECK(e.line == 1);
            CHECK(std::string(e.what()).find("overflow") != std::string::npos);
        }
        CHECK(cat.ingest_csv(s, "ab\r\nabcd\n", false) == 2);
        auto bytes = cat.table(s).column_bytes(0);
        CHECK(std::to_integer<int>(bytes[2]) == 0);
        CHECK(std::to_integer<int>(bytes[3]) == 0);
        CHECK(cat.table(s).get(0, 1) == Value(std::string("abcd")));
    }
}

TEST_CASE("CSV round trip", "[catalog]")
{
    Catalog cat;
    auto h = cat.generate_table(schema("G", { { "a", DataType::Int32() }, { "b", DataType::Int64() },
                                              { "c", DataType::Float64() }, { "d", DataType::Bool() },
                                              { "e", DataType::Char(6) } }),
                                GenSpec{ 500, { UniformInt{ -1000, 1000 }, UniformInt{ INT64_MIN / 2, INT64_MAX / 2 },
                                                UniformFloat01{}, UniformInt{ 0, 1 }, UniformInt{ 0, 99999 } }, 3 });
    auto &t = cat.table(h);
    std::string csv = write_csv(t, true);
    Table copy(t.schema());
    CHECK(read_csv(copy, csv, true) == 500);
    CHECK(copy == t);
}

TEST_CASE("generate_table", "[catalog]")
{
    auto s = schema("T", { { "x", DataType::Int32() } });
    SECTION("determinism") {
        Catalog a, b;
        auto ha = a.generate_table(s, GenSpec{ 100, { UniformInt{ 0, 9 } }, 7 });
        auto hb = b.generate_table(s, GenSpec{ 100, { UniformInt{ 0, 9 } }, 7 });
        auto ba = a.table(ha).column_bytes(0), bb = b.table(hb).column_bytes(0);
        CHECK(std::equal(ba.begin(), ba.end(), bb.begin(), bb.end()));
        Catalog c;
        auto hc = c.generate_table(s, GenSpec{ 100, { UniformInt{ 0, 9 } }, 8 });
        auto bc = c.table(hc).column_bytes(0);
        CHECK_FALSE(std::equal(ba.begin(), ba.end(), bc.begin(), bc.end()));
    }
    SECTION("float range") {
        Catalog cat;
        auto h = cat.generate_table(schema("F", { { "f", DataType::Float64() } }),
                                    GenSpec{ 10'000, { UniformFloat01{} }, 1 });
        double lo = 1, hi = 0;
        for (std::size_t i = 0; i != 10'000; ++i) {
            double v = std::get<double>(cat.table(h).get(0, i));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo >= 0.0);
        CHECK(hi <= 1.0);
    }
    SECTION("binary frequencies") {
        /* 10 000 fair coin flips: sd = 50, so [4500, 5500] is a 10 sigma band. */
        for (std::uint64_t seed : { 0, 1, 2, 42, 1234567 }) {
            Catalog cat;
            auto h = cat.generate_table(s, GenSpec{ 10'000, { UniformInt{ 0, 1 } }, seed });
            std::size_t ones = 0;
            for (std::size_t i = 0; i != 10'000; ++i) ones += std::get<std::int32_t>(cat.table(h).get(0, i));
            CHECK(ones >= 4500);
            CHECK(ones <= 5500);
        }
    }
    SECTION("uniform over ten values") {
        /* Chi-square with 9 degrees of freedom; 27.88 is the 0.999 quantile. */
        Catalog cat;
        auto h = cat.generate_table(s, GenSpec{ 100'000, { UniformInt{ 0, 9 } }, 11 });
        std::array<double, 10> counts{};
        for (std::size_t i = 0; i != 100'000; ++i) counts[std::get<std::int32_t>(cat.table(h).get(0, i))] += 1;
        double chi2 = 0;
        for (double c : counts) chi2 += (c - 10'000) * (c - 10'000) / 10'000;
        CHECK(chi2 < 27.88);
    }
    SECTION("column count mismatch") {
        Catalog cat;
        CHECK_THROWS_AS(cat.generate_table(s, GenSpec{ 1, { UniformInt{ 0, 1 }, UniformInt{ 0, 1 } }, 0 }),
                        CatalogError);
        CHECK_THROWS_AS(cat.generate_table(s, GenSpec{ 1, { UniformInt{ 2, 1 } }, 0 }), CatalogError);
        CHECK_FALSE(cat.contains("T"));
    }
    SECTION("buffer sizes") {
        Catalog cat;
        auto h = cat.generate_table(schema("W", { { "a", DataType::Char(3) }, { "b", DataType::Int64() } }),
                                    GenSpec{ 77, { Const{ std::string("ab") }, Sequential{ 5 } }, 0 });
        auto &t = cat.table(h);
        CHECK(t.column_bytes(0).size() + t.column_bytes(1).size() == 77 * t.schema().row_width());
        CHECK(reinterpret_cast<std::uintptr_t>(t.column_bytes(1).data()) % 8 == 0);
        CHECK(t.get(1, 76) == Value(std::int64_t(81)));
    }
}
