#pragma once

#include "wasmql/wasm/Builder.hpp"
#include <random>


namespace wasmql::test {

/** Layout of modules produced by `random_module()`.  Integer stores and loads stay in `[0, INT_REGION)`; float stores go
 * to `[INT_REGION, 2*INT_REGION)`, so NaN bit patterns never reach integer values. */
struct RandomModuleShape
{
    static constexpr std::uint32_t INT_REGION = 1024;
    static constexpr std::uint32_t DATA_BYTES = 2 * INT_REGION;
};

/** Builds a random, well-typed module.  It imports `env.memory` (1 page), an immutable i32 global `base`, a mutable i64
 * global `acc` and, if `with_host` is set, a host function `env.mix(i64) -> i64`.  It exports every defined function
 * with a name `f<i>`; `main` takes no parameters and returns an i64.  When `deterministic` is set the program avoids
 * instructions that may trap or whose result depends on NaN bit patterns, and all loops are bounded. */
wasm::ModuleBuilder random_module(std::mt19937_64 &rng, bool deterministic = true, bool with_host = false);

}
