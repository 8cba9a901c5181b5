#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>


namespace wasmql {

/** Base class of all errors raised by the engine.  `user_error()` distinguishes errors caused by bad input (malformed
 * SQL, unknown tables, type errors) from internal failures. */
struct Error : std::runtime_error
{
    explicit Error(const std::string &what) : std::runtime_error(what) { }
    virtual bool user_error() const { return true; }
};

struct CatalogError : Error
{
    using Error::Error;
};

/** Error while reading CSV input.  Carries the 1-based line number. */
struct CsvError : Error
{
    std::size_t line;

    CsvError(std::size_t line, const std::string &what)
        : Error("line " + std::to_string(line) + ": " + what), line(line)
    { }
};

/** Syntax error in SQL or plan text.  Carries the byte offset into the input. */
struct ParseError : Error
{
    std::size_t offset;

    ParseError(std::size_t offset, const std::string &what)
        : Error("offset " + std::to_string(offset) + ": " + what), offset(offset)
    { }
};

struct TypeError : Error
{
    using Error::Error;
};

/** Plan rejected by `validate()`. */
struct PlanError : Error
{
    using Error::Error;
};

/** A WebAssembly module or function failed validation during construction or encoding. */
struct ValidationError : Error
{
    using Error::Error;
    bool user_error() const override { return false; }
};

struct CodegenError : Error
{
    using Error::Error;
    bool user_error() const override { return false; }
};

struct NotImplemented : Error
{
    using Error::Error;
};

/** Runtime failure during evaluation, e.g. division by zero. */
struct EvalError : Error
{
    using Error::Error;
};

/** The WebAssembly module trapped. */
struct TrapError : Error
{
    using Error::Error;
};

struct EngineError : Error
{
    using Error::Error;
    bool user_error() const override { return false; }
};

/** The query needs more memory than a module can address, or than the configured limits allow. */
struct CapacityError : Error
{
    using Error::Error;
};

/** Module memory holds values that cannot have been written by a correct module. */
struct CorruptionError : Error
{
    using Error::Error;
    bool user_error() const override { return false; }
};

struct InternalError : Error
{
    using Error::Error;
    bool user_error() const override { return false; }
};

}
