#include "wasmql/wasm/Builder.hpp"

#include "wasmql/util/error.hpp"
#include <array>
#include <bit>
#include <cstring>


using namespace wasmql;
using namespace wasmql::wasm;


/*======================================================================================================================
 * Opcode tables
 *====================================================================================================================*/

namespace {

constexpr ValType I32 = ValType::I32;
constexpr ValType I64 = ValType::I64;
constexpr ValType F32 = ValType::F32;
constexpr ValType F64 = ValType::F64;
constexpr ValType NONE = ValType::I32; // placeholder for the missing second operand of unary instructions

std::array<OpInfo, 256> make_op_table()
{
    std::array<OpInfo, 256> t{};
    auto control = [&](Op op, const char *name) { t[std::size_t(op)] = OpInfo{ OpClass::CONTROL, name, 0, {}, {}, 0 }; };
    control(Op::UNREACHABLE, "unreachable");
    control(Op::NOP, "nop");
    control(Op::BLOCK, "block");
    control(Op::LOOP, "loop");
    control(Op::IF, "if");
    control(Op::ELSE, "else");
    control(Op::END, "end");
    control(Op::BR, "br");
    control(Op::BR_IF, "br_if");
    control(Op::RETURN, "return");
    control(Op::CALL, "call");
    control(Op::DROP, "drop");
    control(Op::SELECT, "select");
    auto variable = [&](Op op, const char *name) { t[std::size_t(op)] = OpInfo{ OpClass::VARIABLE, name, 0, {}, {}, 0 }; };
    variable(Op::LOCAL_GET, "local.get");
    variable(Op::LOCAL_SET, "local.set");
    variable(Op::LOCAL_TEE, "local.tee");
    variable(Op::GLOBAL_GET, "global.get");
    variable(Op::GLOBAL_SET, "global.set");
    t[0x41] = OpInfo{ OpClass::CONST, "i32.const", 0, {}, I32, 0 };
    t[0x42] = OpInfo{ OpClass::CONST, "i64.const", 0, {}, I64, 0 };
    t[0x43] = OpInfo{ OpClass::CONST, "f32.const", 0, {}, F32, 0 };
    t[0x44] = OpInfo{ OpClass::CONST, "f64.const", 0, {}, F64, 0 };
#define WASM_NUMERIC(ID, TEXT, CODE, IN0, IN1, OUT) \
    t[CODE] = OpInfo{ OpClass::NUMERIC, TEXT, std::uint8_t(#IN1[0] == 'N' ? 1 : 2), { IN0, IN1 }, OUT, 0 };
#define WASM_LOAD(ID, TEXT, CODE, ALIGN, OUT) t[CODE] = OpInfo{ OpClass::LOAD, TEXT, 1, { I32, I32 }, OUT, ALIGN };
#define WASM_STORE(ID, TEXT, CODE, ALIGN, IN) t[CODE] = OpInfo{ OpClass::STORE, TEXT, 2, { I32, IN }, {}, ALIGN };
#include "wasmql/wasm/Opcodes.def"
    return t;
}

const std::array<OpInfo, 256> OP_TABLE = make_op_table();

}

const OpInfo & wasm::op_info(Op op) { return OP_TABLE[std::size_t(op)]; }
const OpInfo & wasm::op_info(std::uint8_t code) { return OP_TABLE[code]; }

const char * wasm::to_string(ValType t)
{
    switch (t) {
        case ValType::I32: return "i32";
        case ValType::I64: return "i64";
        case ValType::F32: return "f32";
        case ValType::F64: return "f64";
    }
    return "?";
}

std::string wasm::to_string(const FuncType &t)
{
    std::string s = "[";
    for (std::size_t i = 0; i != t.params.size(); ++i) s += (i ? " " : "") + std::string(to_string(t.params[i]));
    s += "] -> [";
    for (std::size_t i = 0; i != t.results.size(); ++i) s += (i ? " " : "") + std::string(to_string(t.results[i]));
    return s + "]";
}


/*======================================================================================================================
 * FuncBuilder
 *====================================================================================================================*/

namespace {

std::string type_name(std::uint8_t t)
{
    return t == 0 ? "unknown" : to_string(ValType(t));
}

}

FuncBuilder::FuncBuilder(const ModuleBuilder &module, FuncIndex index, FuncType type, std::string name)
    : module_(&module)
    , index_(index)
    , type_(std::move(type))
    , name_(std::move(name))
{
    if (type_.results.size() > 1) throw ValidationError("function '" + name_ + "': multiple results are not supported");
    BlockType result;
    if (not type_.results.empty()) result = type_.results[0];
    frames_.push_back(Frame{ FrameKind::FUNCTION, result, 0, false, next_serial_++ });
}

void FuncBuilder::error(const std::string &what) const
{
    throw ValidationError("function " + std::to_string(index_.value) + (name_.empty() ? "" : " '" + name_ + "'") +
                          ", instruction " + std::to_string(body_.size()) + ": " + what);
}

void FuncBuilder::check_open() const
{
    if (finished_) error("function is already finished");
}

LocalIndex FuncBuilder::param(std::size_t i) const
{
    if (i >= type_.params.size()) error("no parameter " + std::to_string(i));
    return { static_cast<std::uint32_t>(i) };
}

LocalIndex FuncBuilder::fresh_local(ValType t)
{
    check_open();
    locals_.push_back(t);
    return { static_cast<std::uint32_t>(type_.params.size() + locals_.size() - 1) };
}

ValType FuncBuilder::local_type(LocalIndex l) const
{
    if (l.value < type_.params.size()) return type_.params[l.value];
    if (l.value - type_.params.size() < locals_.size()) return locals_[l.value - type_.params.size()];
    error("unknown local " + std::to_string(l.value));
}

std::optional<ValType> FuncBuilder::top() const
{
    if (stack_height() == 0 or stack_.back() == UNKNOWN) return std::nullopt;
    return ValType(stack_.back());
}

std::uint8_t FuncBuilder::pop()
{
    auto &f = frames_.back();
    if (stack_.size() == f.height) {
        if (f.unreachable) return UNKNOWN;
        error("operand stack underflow");
    }
    auto t = stack_.back();
    stack_.pop_back();
    return t;
}

void FuncBuilder::pop(ValType expected)
{
    auto &f = frames_.back();
    if (stack_.size() == f.height and not f.unreachable)
        error(std::string("operand stack underflow, expected ") + to_string(expected));
    auto t = pop();
    if (t != UNKNOWN and t != static_cast<std::uint8_t>(expected))
        error(std::string("type mismatch: expected ") + to_string(expected) + ", got " + type_name(t));
}

void FuncBuilder::set_unreachable()
{
    auto &f = frames_.back();
    stack_.resize(f.height);
    f.unreachable = true;
}

void FuncBuilder::pop_label_values(const Frame &frame)
{
    if (frame.kind != FrameKind::LOOP and frame.type) pop(*frame.type);
}

void FuncBuilder::push_results(const Frame &frame)
{
    if (frame.type) push(*frame.type);
}

void FuncBuilder::emit(Op op)
{
    check_open();
    auto &info = op_info(op);
    switch (info.cls) {
        case OpClass::NUMERIC:
            if (info.arity == 2) pop(info.in[1]);
            pop(info.in[0]);
            push(*info.out);
            break;
        case OpClass::CONTROL:
            switch (op) {
                case Op::NOP: break;
                case Op::UNREACHABLE: body_.push_back({ op }); set_unreachable(); return;
                case Op::RETURN:
                    if (not type_.results.empty()) pop(type_.results[0]);
                    body_.push_back({ op });
                    set_unreachable();
                    return;
                case Op::DROP: pop(); break;
                case Op::SELECT: {
                    pop(ValType::I32);
                    auto a = pop();
                    auto b = pop();
                    if (a != UNKNOWN and b != UNKNOWN and a != b)
                        error("select operands differ: " + type_name(b) + " and " + type_name(a));
                    push(a != UNKNOWN ? a : b);
                    break;
                }
                default: error(std::string("'") + info.name + "' needs immediates; use the dedicated method");
            }
            break;
        default:
            error(std::string("'") + (info.name ? info.name : "?") + "' needs immediates; use the dedicated method");
    }
    body_.push_back({ op });
}

void FuncBuilder::i32_const(std::int32_t v)
{
    check_open();
    push(ValType::I32);
    body_.push_back({ Op::I32_CONST, static_cast<std::uint64_t>(static_cast<std::int64_t>(v)) });
}

void FuncBuilder::i64_const(std::int64_t v)
{
    check_open();
    push(ValType::I64);
    body_.push_back({ Op::I64_CONST, static_cast<std::uint64_t>(v) });
}

void FuncBuilder::f32_const(float v)
{
    check_open();
    push(ValType::F32);
    body_.push_back({ Op::F32_CONST, std::bit_cast<std::uint32_t>(v) });
}

void FuncBuilder::f64_const(double v)
{
    check_open();
    push(ValType::F64);
    body_.push_back({ Op::F64_CONST, std::bit_cast<std::uint64_t>(v) });
}

void FuncBuilder::local_get(LocalIndex l)
{
    check_open();
    push(local_type(l));
    body_.push_back({ Op::LOCAL_GET, l.value });
}

void FuncBuilder::local_set(LocalIndex l)
{
    check_open();
    pop(local_type(l));
    body_.push_back({ Op::LOCAL_SET, l.value });
}

void FuncBuilder::local_tee(LocalIndex l)
{
    check_open();
    pop(local_type(l));
    push(local_type(l));
    body_.push_back({ Op::LOCAL_TEE, l.value });
}

void FuncBuilder::global_get(GlobalIndex g)
{
    check_open();
    auto globals = module_->global_imports();
    if (g.value >= globals.size()) error("unknown global " + std::to_string(g.value));
    push(globals[g.value].type);
    body_.push_back({ Op::GLOBAL_GET, g.value });
}

void FuncBuilder::global_set(GlobalIndex g)
{
    check_open();
    auto globals = module_->global_imports();
    if (g.value >= globals.size()) error("unknown global " + std::to_string(g.value));
    if (not globals[g.value].mut) error("global " + std::to_string(g.value) + " is immutable");
    pop(globals[g.value].type);
    body_.push_back({ Op::GLOBAL_SET, g.value });
}

void FuncBuilder::load(Op op, std::uint32_t offset, std::optional<std::uint8_t> align)
{
    check_open();
    auto &info = op_info(op);
    if (info.cls != OpClass::LOAD) error(std::string("'") + (info.name ? info.name : "?") + "' is not a load");
    std::uint8_t a = align.value_or(info.align);
    if (a > info.align) error(std::string("alignment exceeds natural alignment of ") + info.name);
    pop(ValType::I32);
    push(*info.out);
    body_.push_back({ op, 0, offset, a });
}

void FuncBuilder::store(Op op, std::uint32_t offset, std::optional<std::uint8_t> align)
{
    check_open();
    auto &info = op_info(op);
    if (info.cls != OpClass::STORE) error(std::string("'") + (info.name ? info.name : "?") + "' is not a store");
    std::uint8_t a = align.value_or(info.align);
    if (a > info.align) error(std::string("alignment exceeds natural alignment of ") + info.name);
    pop(info.in[1]);
    pop(ValType::I32);
    body_.push_back({ op, 0, offset, a });
}

void FuncBuilder::call(FuncIndex f)
{
    check_open();
    if (f.value >= module_->num_functions()) error("unknown function " + std::to_string(f.value));
    auto &t = module_->function_type(f);
    for (auto it = t.params.rbegin(); it != t.params.rend(); ++it) pop(*it);
    for (auto r : t.results) push(r);
    body_.push_back({ Op::CALL, f.value });
}

Label FuncBuilder::open(FrameKind kind, BlockType type, Op op)
{
    frames_.push_back(Frame{ kind, type, stack_.size(), false, next_serial_++ });
    body_.push_back({ op, type ? std::uint64_t(*type) : 0x40 });
    return { frames_.size() - 1, frames_.back().serial };
}

Label FuncBuilder::block(BlockType type)
{
    check_open();
    return open(FrameKind::BLOCK, type, Op::BLOCK);
}

Label FuncBuilder::loop(BlockType type)
{
    check_open();
    return open(FrameKind::LOOP, type, Op::LOOP);
}

Label FuncBuilder::if_(BlockType type)
{
    check_open();
    pop(ValType::I32);
    return open(FrameKind::IF, type, Op::IF);
}

void FuncBuilder::close_frame_check(const Frame &frame)
{
    if (frame.type) pop(*frame.type);
    if (stack_.size() != frame.height)
        error(std::to_string(stack_.size() - frame.height) + " unconsumed operand(s) at end of block");
}

void FuncBuilder::else_()
{
    check_open();
    auto &f = frames_.back();
    if (f.kind != FrameKind::IF) error("'else' without matching 'if'");
    close_frame_check(f);
    f.kind = FrameKind::ELSE;
    f.unreachable = false;
    body_.push_back({ Op::ELSE });
}

void FuncBuilder::end()
{
    check_open();
    if (frames_.size() == 1) error("'end' without open block; use finish() to close the function");
    Frame f = frames_.back();
    close_frame_check(f);
    if (f.kind == FrameKind::IF and f.type) error("'if' with a result requires an 'else' branch");
    frames_.pop_back();
    push_results(f);
    body_.push_back({ Op::END });
}

const FuncBuilder::Frame & FuncBuilder::resolve(Label target, std::uint32_t &depth) const
{
    if (target.frame >= frames_.size() or frames_[target.frame].serial != target.serial)
        error("branch to a block that is no longer open");
    depth = static_cast<std::uint32_t>(frames_.size() - 1 - target.frame);
    return frames_[target.frame];
}

const FuncBuilder::Frame & FuncBuilder::resolve(std::uint32_t depth) const
{
    if (depth >= frames_.size()) error("branch depth " + std::to_string(depth) + " exceeds nesting");
    return frames_[frames_.size() - 1 - depth];
}

void FuncBuilder::br(Label target)
{
    check_open();
    std::uint32_t depth;
    resolve(target, depth);
    br(depth);
}

void FuncBuilder::br_if(Label target)
{
    check_open();
    std::uint32_t depth;
    resolve(target, depth);
    br_if(depth);
}

void FuncBuilder::br(std::uint32_t depth)
{
    check_open();
    Frame f = resolve(depth);
    pop_label_values(f);
    body_.push_back({ Op::BR, depth });
    set_unreachable();
}

void FuncBuilder::br_if(std::uint32_t depth)
{
    check_open();
    Frame f = resolve(depth);
    pop(ValType::I32);
    pop_label_values(f);
    if (f.kind != FrameKind::LOOP) push_results(f);
    body_.push_back({ Op::BR_IF, depth });
}

void FuncBuilder::finish()
{
    check_open();
    if (frames_.size() != 1) error(std::to_string(frames_.size() - 1) + " unclosed block(s) at end of function");
    close_frame_check(frames_.back());
    body_.push_back({ Op::END });
    frames_.clear();
    stack_.clear();
    finished_ = true;
}


/*======================================================================================================================
 * ModuleBuilder
 *====================================================================================================================*/

ModuleBuilder::ModuleBuilder(ModuleBuilder &&other) noexcept
{
    *this = std::move(other);
}

ModuleBuilder & ModuleBuilder::operator=(ModuleBuilder &&other) noexcept
{
    memory_ = std::move(other.memory_);
    globals_ = std::move(other.globals_);
    func_imports_ = std::move(other.func_imports_);
    functions_ = std::move(other.functions_);
    exports_ = std::move(other.exports_);
    data_ = std::move(other.data_);
    finished_ = other.finished_;
    for (auto &f : functions_) f->module_ = this;
    return *this;
}

void ModuleBuilder::import_memory(std::uint32_t min_pages, std::optional<std::uint32_t> max_pages)
{
    if (memory_) throw ValidationError("module already imports a memory");
    if (min_pages > MAX_PAGES or (max_pages and (*max_pages > MAX_PAGES or *max_pages < min_pages)))
        throw ValidationError("memory limits exceed 4 GiB or are inconsistent");
    memory_.emplace(min_pages, max_pages);
}

GlobalIndex ModuleBuilder::import_global(std::string name, ValType type, bool mut)
{
    globals_.push_back({ std::move(name), type, mut });
    return { static_cast<std::uint32_t>(globals_.size() - 1) };
}

FuncIndex ModuleBuilder::import_function(std::string name, FuncType type)
{
    if (not functions_.empty()) throw ValidationError("function '" + name + "' imported after a function was defined");
    if (type.results.size() > 1) throw ValidationError("function '" + name + "': multiple results are not supported");
    func_imports_.push_back({ std::move(name), std::move(type) });
    return { static_cast<std::uint32_t>(func_imports_.size() - 1) };
}

FuncBuilder & ModuleBuilder::begin_function(FuncType type, std::string name)
{
    if (finished_) throw ValidationError("module is already finished");
    FuncIndex idx{ static_cast<std::uint32_t>(num_functions()) };
    functions_.push_back(std::unique_ptr<FuncBuilder>(new FuncBuilder(*this, idx, std::move(type), std::move(name))));
    return *functions_.back();
}

void ModuleBuilder::export_function(std::string name, FuncIndex f)
{
    if (f.value >= num_functions()) throw ValidationError("export '" + name + "' of unknown function");
    for (auto &e : exports_)
        if (e.name == name) throw ValidationError("duplicate export '" + name + "'");
    exports_.push_back({ std::move(name), f });
}

void ModuleBuilder::add_data(std::optional<GlobalIndex> base, std::uint32_t offset, std::vector<std::uint8_t> bytes)
{
    if (base) {
        if (base->value >= globals_.size() or globals_[base->value].type != ValType::I32 or globals_[base->value].mut)
            throw ValidationError("data segment base must be an immutable i32 global");
        if (offset != 0) throw ValidationError("data segment with a global base cannot have an offset");
    }
    data_.push_back({ base, offset, std::move(bytes) });
}

const FuncType & ModuleBuilder::function_type(FuncIndex f) const
{
    if (f.value < func_imports_.size()) return func_imports_[f.value].type;
    return function(f).type();
}

const FuncBuilder & ModuleBuilder::function(FuncIndex f) const
{
    if (f.value < func_imports_.size() or f.value >= num_functions())
        throw ValidationError("function " + std::to_string(f.value) + " is not a defined function");
    return *functions_[f.value - func_imports_.size()];
}

std::string ModuleBuilder::function_name(FuncIndex f) const
{
    if (f.value < func_imports_.size()) return func_imports_[f.value].name;
    return function(f).name();
}
