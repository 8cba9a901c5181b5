#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>


namespace wasmql::wasm {

/*======================================================================================================================
 * Types and instructions
 *====================================================================================================================*/

enum class ValType : std::uint8_t { I32 = 0x7f, I64 = 0x7e, F32 = 0x7d, F64 = 0x7c };

const char * to_string(ValType t);

struct FuncType
{
    std::vector<ValType> params;
    std::vector<ValType> results;

    friend bool operator==(const FuncType&, const FuncType&) = default;
};

std::string to_string(const FuncType &t);

/** Index into the local index space of a function; parameters come first. */
struct LocalIndex
{
    std::uint32_t value;
    friend bool operator==(LocalIndex, LocalIndex) = default;
};

/** Index into the module's function index space; imported functions come first. */
struct FuncIndex
{
    std::uint32_t value;
    friend bool operator==(FuncIndex, FuncIndex) = default;
};

struct GlobalIndex
{
    std::uint32_t value;
    friend bool operator==(GlobalIndex, GlobalIndex) = default;
};

enum class Op : std::uint8_t
{
    UNREACHABLE = 0x00,
    NOP         = 0x01,
    BLOCK       = 0x02,
    LOOP        = 0x03,
    IF          = 0x04,
    ELSE        = 0x05,
    END         = 0x0b,
    BR          = 0x0c,
    BR_IF       = 0x0d,
    RETURN      = 0x0f,
    CALL        = 0x10,
    DROP        = 0x1a,
    SELECT      = 0x1b,
    LOCAL_GET   = 0x20,
    LOCAL_SET   = 0x21,
    LOCAL_TEE   = 0x22,
    GLOBAL_GET  = 0x23,
    GLOBAL_SET  = 0x24,
    I32_CONST   = 0x41,
    I64_CONST   = 0x42,
    F32_CONST   = 0x43,
    F64_CONST   = 0x44,
#define WASM_NUMERIC(ID, TEXT, CODE, IN0, IN1, OUT) ID = CODE,
#define WASM_LOAD(ID, TEXT, CODE, ALIGN, OUT) ID = CODE,
#define WASM_STORE(ID, TEXT, CODE, ALIGN, IN) ID = CODE,
#include "wasmql/wasm/Opcodes.def"
};

enum class OpClass : std::uint8_t { INVALID, CONTROL, VARIABLE, CONST, NUMERIC, LOAD, STORE };

/** Static description of an opcode.  For numeric instructions `in` holds the popped operand types (in push order),
 * for loads/stores `align` is the natural alignment as a power of two. */
struct OpInfo
{
    OpClass cls = OpClass::INVALID;
    const char *name = nullptr;
    std::uint8_t arity = 0;
    ValType in[2] = { ValType::I32, ValType::I32 };
    std::optional<ValType> out;
    std::uint8_t align = 0;
};

const OpInfo & op_info(Op op);
/** Returns the info for raw opcode byte `code`; `cls == INVALID` for opcodes outside the supported subset. */
const OpInfo & op_info(std::uint8_t code);

/** Block result type: none, or a single value. */
using BlockType = std::optional<ValType>;

/** One instruction.  `imm` holds the local/global/function index, branch depth, block type byte, or the bit pattern of
 * a constant.  Memory instructions additionally carry `offset` and `align` (log2). */
struct Instr
{
    Op op;
    std::uint64_t imm = 0;
    std::uint32_t offset = 0;
    std::uint8_t align = 0;
};


/*======================================================================================================================
 * FuncBuilder
 *====================================================================================================================*/

class ModuleBuilder;

/** A control frame on the builder's frame stack, usable as branch target while it is open. */
struct Label
{
    std::size_t frame;
    std::uint64_t serial;
};

/** Builds one function body.  Every instruction is type-checked when emitted against an abstract operand stack, and
 * structured control flow is tracked as a stack of open frames, so that a finished function is always valid.  Type
 * errors throw `ValidationError` naming the function and the offending instruction's position in the body. */
class FuncBuilder
{
    friend class ModuleBuilder;

    enum class FrameKind : std::uint8_t { FUNCTION, BLOCK, LOOP, IF, ELSE };
    struct Frame
    {
        FrameKind kind;
        BlockType type;
        std::size_t height;
        bool unreachable;
        std::uint64_t serial;
    };

    /** `UNKNOWN` marks operands of unreachable code, which match any type. */
    static constexpr std::uint8_t UNKNOWN = 0;

    const ModuleBuilder *module_;
    FuncIndex index_;
    FuncType type_;
    std::string name_;
    std::vector<ValType> locals_; ///< declared locals, excluding params
    std::vector<Instr> body_;
    std::vector<std::uint8_t> stack_;
    std::vector<Frame> frames_;
    std::uint64_t next_serial_ = 0;
    bool finished_ = false;

    FuncBuilder(const ModuleBuilder &module, FuncIndex index, FuncType type, std::string name);

    public:
    FuncBuilder(const FuncBuilder&) = delete;
    FuncBuilder & operator=(const FuncBuilder&) = delete;

    FuncIndex index() const { return index_; }
    const FuncType & type() const { return type_; }
    const std::string & name() const { return name_; }
    bool finished() const { return finished_; }

    LocalIndex param(std::size_t i) const;
    /** Allocates a new local of type `t`.  Locals are zero-initialized on function entry. */
    LocalIndex fresh_local(ValType t);
    ValType local_type(LocalIndex l) const;
    std::size_t num_locals() const { return type_.params.size() + locals_.size(); }
    std::span<const ValType> declared_locals() const { return locals_; }

    std::span<const Instr> body() const { return body_; }
    /** Number of operands on the abstract stack of the innermost frame. */
    std::size_t stack_height() const { return stack_.size() - frames_.back().height; }
    std::optional<ValType> top() const;

    /*----- Instructions ---------------------------------------------------------------------------------------------*/

    /** Emits an instruction without immediates: numeric instructions, `drop`, `select`, `nop`, `unreachable`,
     * `return`. */
    void emit(Op op);
    void i32_const(std::int32_t v);
    void i64_const(std::int64_t v);
    void f32_const(float v);
    void f64_const(double v);
    void local_get(LocalIndex l);
    void local_set(LocalIndex l);
    void local_tee(LocalIndex l);
    void global_get(GlobalIndex g);
    void global_set(GlobalIndex g);
    /** Emits a load or store with static `offset`; `align` defaults to natural alignment. */
    void load(Op op, std::uint32_t offset = 0, std::optional<std::uint8_t> align = {});
    void store(Op op, std::uint32_t offset = 0, std::optional<std::uint8_t> align = {});
    void call(FuncIndex f);

    Label block(BlockType type = {});
    Label loop(BlockType type = {});
    /** Pops an `i32` condition. */
    Label if_(BlockType type = {});
    void else_();
    void end();
    void br(Label target);
    void br_if(Label target);
    void br(std::uint32_t depth);
    void br_if(std::uint32_t depth);
    /** The implicit frame of the function body; branching to it returns. */
    Label function_label() const { return { 0, frames_.at(0).serial }; }

    /** Closes the function body.  All frames but the function's must be closed and the stack must hold exactly the
     * results. */
    void finish();

    private:
    [[noreturn]] void error(const std::string &what) const;
    void check_open() const;
    void push(std::uint8_t t) { stack_.push_back(t); }
    void push(ValType t) { stack_.push_back(static_cast<std::uint8_t>(t)); }
    std::uint8_t pop();
    void pop(ValType expected);
    void pop_label_values(const Frame &frame);
    void push_results(const Frame &frame);
    void set_unreachable();
    const Frame & resolve(Label target, std::uint32_t &depth) const;
    const Frame & resolve(std::uint32_t depth) const;
    Label open(FrameKind kind, BlockType type, Op op);
    void close_frame_check(const Frame &frame);
};


/*======================================================================================================================
 * ModuleBuilder
 *====================================================================================================================*/

/** Builds a module with one imported memory (`env.memory`), imported globals and functions, defined functions,
 * exports, and active data segments.  Imports must be declared before the first function is defined. */
class ModuleBuilder
{
    public:
    struct GlobalImport
    {
        std::string name;
        ValType type;
        bool mut;
    };
    struct FuncImport
    {
        std::string name;
        FuncType type;
    };
    struct Export
    {
        std::string name;
        FuncIndex func;
    };
    /** An active data segment placed at `offset`, or at the value of `base` if set (plus zero). */
    struct Data
    {
        std::optional<GlobalIndex> base;
        std::uint32_t offset;
        std::vector<std::uint8_t> bytes;
    };

    static constexpr std::uint64_t PAGE_SIZE = 64 * 1024;
    static constexpr std::uint64_t MAX_PAGES = 65536; ///< 4 GiB

    private:
    std::optional<std::pair<std::uint32_t, std::optional<std::uint32_t>>> memory_;
    std::vector<GlobalImport> globals_;
    std::vector<FuncImport> func_imports_;
    std::vector<std::unique_ptr<FuncBuilder>> functions_;
    std::vector<Export> exports_;
    std::vector<Data> data_;
    bool finished_ = false;

    public:
    ModuleBuilder() = default;
    ModuleBuilder(const ModuleBuilder&) = delete;
    ModuleBuilder(ModuleBuilder &&other) noexcept;
    ModuleBuilder & operator=(ModuleBuilder &&other) noexcept;

    /** Imports the module's memory as `env.memory` with at least `min_pages` 64 KiB pages. */
    void import_memory(std::uint32_t min_pages, std::optional<std::uint32_t> max_pages = {});
    GlobalIndex import_global(std::string name, ValType type, bool mut = false);
    FuncIndex import_function(std::string name, FuncType type);
    /** Starts a new function.  The builder stays owned by the module. */
    FuncBuilder & begin_function(FuncType type, std::string name = {});
    void export_function(std::string name, FuncIndex f);
    void add_data(std::optional<GlobalIndex> base, std::uint32_t offset, std::vector<std::uint8_t> bytes);

    /** Encodes the module in the binary format.  Throws `ValidationError` naming the function if any function is not
     * finished.  Deterministic: identical builder call sequences give identical bytes. */
    std::vector<std::uint8_t> finish();
    /** Renders the module in the text format. */
    std::string render_wat() const;

    bool has_memory() const { return memory_.has_value(); }
    std::uint32_t memory_min_pages() const { return memory_ ? memory_->first : 0; }
    std::span<const GlobalImport> global_imports() const { return globals_; }
    std::span<const FuncImport> function_imports() const { return func_imports_; }
    std::span<const Export> exports() const { return exports_; }
    std::span<const Data> data() const { return data_; }
    std::size_t num_functions() const { return func_imports_.size() + functions_.size(); }
    /** Signature of function `f`, imported or defined. */
    const FuncType & function_type(FuncIndex f) const;
    /** The defined function with index `f`; throws if `f` is an import. */
    const FuncBuilder & function(FuncIndex f) const;
    std::string function_name(FuncIndex f) const;
};

}
