#include "Fixtures.hpp"


using namespace wasmql;

Catalog test::mixed_catalog(std::size_t r_rows, std::size_t s_rows, std::uint64_t seed)
{
    Catalog cat;
    cat.generate_table(TableSchema{ "R", { { "x", DataType::Int32(), {} }, { "y", DataType::Int64(), {} },
                                           { "val", DataType::Float64(), {} }, { "flag", DataType::Bool(), {} },
                                           { "name", DataType::Char(6), {} } } },
                       GenSpec{ r_rows, { UniformInt{ -50, 50 }, UniformInt{ -1000, 1000 }, UniformFloat01{},
                                          UniformInt{ 0, 1 }, UniformInt{ 0, 30 } }, seed });
    cat.generate_table(TableSchema{ "S", { { "id", DataType::Int32(), {} }, { "k", DataType::Int64(), {} },
                                           { "w", DataType::Float64(), {} }, { "tag", DataType::Char(3), {} } } },
                       GenSpec{ s_rows, { UniformInt{ -50, 50 }, UniformInt{ 0, 20 }, UniformFloat01{},
                                          UniformInt{ 0, 9 } }, seed + 1 });
    return cat;
}

Catalog test::sequence_catalog(std::size_t rows)
{
    Catalog cat;
    cat.generate_table(TableSchema{ "T", { { "x", DataType::Int32(), {} } } }, GenSpec{ rows, { Sequential{ 0 } } });
    return cat;
}
