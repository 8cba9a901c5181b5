#pragma once

#include "wasmql/wasm/Builder.hpp"
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>


namespace wasmql {

/*======================================================================================================================
 * Engine adapter contract
 *====================================================================================================================*/

/** Compilation tier hint.  `FAST` asks for quick compilation (baseline), `OPTIMIZING` for fast code. */
enum class OptLevel : std::uint8_t { FAST, OPTIMIZING };

/** Values cross the host boundary as raw 64-bit patterns: `i32` zero-extended, floats as their IEEE bits. */
using RawValue = std::uint64_t;

/** A host function.  The callback receives the arguments and returns the result, if the signature has one.  Throwing
 * from the callback aborts the running call; the exception is rethrown from `Instance::call()`. */
struct HostFunction
{
    std::string name;
    wasm::FuncType type;
    std::function<std::optional<RawValue>(std::span<const RawValue>)> callback;
};

/** Everything a module may import from module "env": one memory, globals by name, functions by name. */
struct ImportValues
{
    std::uint32_t memory_pages = 1;
    std::map<std::string, RawValue, std::less<>> globals;
    std::vector<HostFunction> functions;
};

class Instance
{
    public:
    virtual ~Instance() = default;

    /** The linear memory.  The span stays valid for the lifetime of the instance (modules cannot grow memory). */
    virtual std::span<std::byte> memory() = 0;
    /** Calls an exported function.  Throws `TrapError` if execution traps and `EngineError` on a signature
     * mismatch. */
    virtual std::optional<RawValue> call(std::string_view name, std::span<const RawValue> args = {}) = 0;
    /** Current value of the imported global `name`. */
    virtual RawValue global(std::string_view name) = 0;
};

class CompiledModule
{
    public:
    virtual ~CompiledModule() = default;

    /** Instantiates with fresh memory of `imports.memory_pages` pages, zero-filled except for data segments.  Throws
     * `EngineError` if an import is missing or has the wrong type. */
    virtual std::unique_ptr<Instance> instantiate(const ImportValues &imports) = 0;
};

class Engine
{
    public:
    virtual ~Engine() = default;

    virtual std::string_view name() const = 0;
    /** Validates and compiles `binary`.  Throws `EngineError` if the module is rejected. */
    virtual std::unique_ptr<CompiledModule> compile(std::span<const std::uint8_t> binary,
                                                    OptLevel level = OptLevel::OPTIMIZING) = 0;
};

/** Names of the engines built into this binary; the first is the default. */
std::vector<std::string> available_engines();
/** Creates an engine by name.  An empty name selects `$WASMQL_ENGINE` if set, else the default.  Throws `EngineError`
 * for unknown or unavailable engines. */
std::unique_ptr<Engine> make_engine(std::string_view name = {});

/** The built-in interpreter.  `max_call_depth` bounds the call stack; exceeding it traps. */
std::unique_ptr<Engine> make_interp_engine(std::size_t max_call_depth = 100000);

}
