#include "wasmql/runtime/Engine.hpp"

#include "wasmql/util/error.hpp"
#include "wasmql/wasm/Decoder.hpp"
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>


using namespace wasmql;
using namespace wasmql::wasm;


namespace {

/*======================================================================================================================
 * Compiled form
 *====================================================================================================================*/

/** One internal instruction.  Block structure is resolved at compile time: `block`/`loop`/`end` disappear, branches
 * carry their target pc, the operand height to restore and the number of values to carry. */
struct Ins
{
    Op op;
    std::uint8_t arity = 0;
    std::uint32_t a = 0;  ///< branch target, else target of `if`, local/global/function index, or memory offset
    std::uint32_t h = 0;  ///< operand height at the branch target
    std::uint64_t imm = 0;
};

struct Function
{
    FuncType type;
    std::uint32_t num_locals = 0; ///< params + declared
    std::uint32_t max_height = 0;
    std::vector<Ins> code;
    std::string name;
};

struct Module
{
    DecodedModule decoded;
    std::vector<Function> functions; ///< defined functions
    std::size_t num_imported_functions = 0;
    std::vector<std::size_t> global_imports; ///< global index -> index into `decoded.imports`
    std::vector<std::size_t> func_imports;   ///< function index -> index into `decoded.imports`
};


/*======================================================================================================================
 * Validation and translation
 *====================================================================================================================*/

class Translator
{
    static constexpr std::uint8_t UNKNOWN = 0;

    struct Ctrl
    {
        Op kind = Op::BLOCK;
        BlockType type;
        std::size_t height = 0;
        bool unreachable = false;
        std::size_t start = 0;              ///< loop: pc of the first body instruction
        std::size_t if_pc = SIZE_MAX;       ///< if: pc of the `if` instruction until its else target is known
        std::vector<std::size_t> fixups;    ///< branches to the end of this construct
    };

    const Module &m_;
    std::uint32_t func_;
    Function &f_;
    std::vector<std::uint8_t> vals_;
    std::vector<Ctrl> ctrls_;
    std::vector<ValType> local_types_;
    std::size_t pos_ = 0;

    public:
    Translator(const Module &m, std::uint32_t func, Function &f) : m_(m), func_(func), f_(f) { }

    [[noreturn]] void fail(const std::string &what) const
    {
        throw EngineError("function " + std::to_string(func_) + (f_.name.empty() ? "" : " '" + f_.name + "'") +
                          ", instruction " + std::to_string(pos_) + ": " + what);
    }

    static std::string type_name(std::uint8_t t) { return t == UNKNOWN ? "unknown" : to_string(ValType(t)); }

    void push(std::uint8_t t)
    {
        vals_.push_back(t);
        f_.max_height = std::max<std::uint32_t>(f_.max_height, vals_.size());
    }
    void push(ValType t) { push(std::uint8_t(t)); }

    std::uint8_t pop()
    {
        auto &c = ctrls_.back();
        if (vals_.size() == c.height) {
            if (c.unreachable) return UNKNOWN;
            fail("operand stack underflow");
        }
        auto t = vals_.back();
        vals_.pop_back();
        return t;
    }

    void pop(ValType expected)
    {
        auto t = pop();
        if (t != UNKNOWN and t != std::uint8_t(expected))
            fail("type mismatch: expected " + type_name(std::uint8_t(expected)) + ", got " + type_name(t));
    }

    void unreachable()
    {
        vals_.resize(ctrls_.back().height);
        ctrls_.back().unreachable = true;
    }

    BlockType label_type(const Ctrl &c) const { return c.kind == Op::LOOP ? BlockType{} : c.type; }

    Ctrl & target(std::uint64_t depth)
    {
        if (depth >= ctrls_.size()) fail("branch depth out of range");
        return ctrls_[ctrls_.size() - 1 - depth];
    }

    /** Emits a branch to `depth`; its target is patched when the construct ends unless it is a loop. */
    void branch(Op op, std::uint64_t depth)
    {
        auto &c = target(depth);
        auto lt = label_type(c);
        Ins in{ op, std::uint8_t(lt ? 1 : 0), 0, static_cast<std::uint32_t>(c.height - ctrls_.front().height) };
        if (c.kind == Op::LOOP) in.a = static_cast<std::uint32_t>(c.start);
        else c.fixups.push_back(f_.code.size());
        f_.code.push_back(in);
    }

    void check_end(const Ctrl &c)
    {
        if (c.type) pop(*c.type);
        if (vals_.size() != c.height) fail("operand stack height mismatch at end of block");
    }

    void translate(const DecodedModule::Code &code)
    {
        local_types_ = f_.type.params;
        local_types_.insert(local_types_.end(), code.locals.begin(), code.locals.end());
        f_.num_locals = static_cast<std::uint32_t>(local_types_.size());

        auto body = decode_body(code.body);
        Ctrl fc;
        fc.kind = Op::BLOCK;
        fc.type = f_.type.results.empty() ? BlockType{} : BlockType(f_.type.results[0]);
        fc.height = 0;
        ctrls_.push_back(std::move(fc));
        for (pos_ = 0; pos_ != body.size(); ++pos_) {
            if (ctrls_.empty()) fail("instructions after the end of the function");
            step(body[pos_]);
        }
        if (not ctrls_.empty()) fail("function body is not terminated by 'end'");
    }

    void step(const Instr &in)
    {
        auto &info = op_info(in.op);
        switch (info.cls) {
            case OpClass::NUMERIC:
                if (info.arity == 2) pop(info.in[1]);
                pop(info.in[0]);
                push(*info.out);
                f_.code.push_back({ in.op });
                return;
            case OpClass::CONST:
                push(*info.out);
                f_.code.push_back({ in.op, 0, 0, 0, in.imm });
                return;
            case OpClass::LOAD:
            case OpClass::STORE: {
                if (not has_memory()) fail("memory access without a memory");
                if (in.align > info.align) fail("alignment must not be larger than natural");
                if (info.cls == OpClass::LOAD) {
                    pop(ValType::I32);
                    push(*info.out);
                } else {
                    pop(info.in[1]);
                    pop(ValType::I32);
                }
                f_.code.push_back({ in.op, 0, in.offset });
                return;
            }
            case OpClass::VARIABLE: variable(in); return;
            case OpClass::CONTROL: control(in); return;
            case OpClass::INVALID: fail("invalid opcode");
        }
    }

    bool has_memory() const
    {
        for (auto &i : m_.decoded.imports)
            if (i.kind == DecodedModule::ExternKind::MEMORY) return true;
        return false;
    }

    void variable(const Instr &in)
    {
        switch (in.op) {
            case Op::LOCAL_GET: case Op::LOCAL_SET: case Op::LOCAL_TEE: {
                if (in.imm >= local_types_.size()) fail("unknown local " + std::to_string(in.imm));
                auto t = local_types_[in.imm];
                if (in.op == Op::LOCAL_GET) push(t);
                else if (in.op == Op::LOCAL_SET) pop(t);
                else { pop(t); push(t); }
                break;
            }
            default: {
                if (in.imm >= m_.global_imports.size()) fail("unknown global " + std::to_string(in.imm));
                auto &g = m_.decoded.imports[m_.global_imports[in.imm]];
                if (in.op == Op::GLOBAL_GET) {
                    push(g.global_type);
                } else {
                    if (not g.mut) fail("global is immutable");
                    pop(g.global_type);
                }
            }
        }
        f_.code.push_back({ in.op, 0, static_cast<std::uint32_t>(in.imm) });
    }

    void control(const Instr &in)
    {
        switch (in.op) {
            case Op::NOP: return;
            case Op::UNREACHABLE:
                f_.code.push_back({ in.op });
                unreachable();
                return;
            case Op::BLOCK: case Op::LOOP: case Op::IF: {
                BlockType bt = in.imm == 0x40 ? BlockType{} : BlockType(ValType(in.imm));
                if (in.op == Op::IF) pop(ValType::I32);
                Ctrl c;
                c.kind = in.op;
                c.type = bt;
                c.height = vals_.size();
                c.start = f_.code.size();
                if (in.op == Op::IF) {
                    c.if_pc = f_.code.size();
                    f_.code.push_back({ Op::IF });
                }
                ctrls_.push_back(std::move(c));
                return;
            }
            case Op::ELSE: {
                auto &c = ctrls_.back();
                if (c.kind != Op::IF) fail("'else' without 'if'");
                check_end(c);
                c.fixups.push_back(f_.code.size());
                f_.code.push_back({ Op::ELSE });
                f_.code[c.if_pc].imm = f_.code.size();
                c.if_pc = SIZE_MAX;
                c.kind = Op::ELSE;
                c.unreachable = false;
                return;
            }
            case Op::END: {
                auto &c = ctrls_.back();
                check_end(c);
                if (c.kind == Op::IF) {
                    if (c.type) fail("'if' with a result requires 'else'");
                    f_.code[c.if_pc].imm = f_.code.size();
                }
                if (ctrls_.size() == 1) f_.code.push_back({ Op::RETURN }); // function end
                for (auto pc : c.fixups) f_.code[pc].a = static_cast<std::uint32_t>(
                    ctrls_.size() == 1 ? f_.code.size() - 1 : f_.code.size());
                auto type = c.type;
                ctrls_.pop_back();
                if (type) push(*type);
                return;
            }
            case Op::BR: {
                auto lt = label_type(target(in.imm));
                if (lt) pop(*lt);
                branch(Op::BR, in.imm);
                unreachable();
                return;
            }
            case Op::BR_IF: {
                pop(ValType::I32);
                auto lt = label_type(target(in.imm));
                if (lt) { pop(*lt); push(*lt); }
                branch(Op::BR_IF, in.imm);
                return;
            }
            case Op::RETURN:
                if (not f_.type.results.empty()) pop(f_.type.results[0]);
                f_.code.push_back({ Op::RETURN });
                unreachable();
                return;
            case Op::CALL: {
                if (in.imm >= m_.num_imported_functions + m_.functions.size())
                    fail("unknown function " + std::to_string(in.imm));
                auto &t = m_.decoded.function_type(static_cast<std::uint32_t>(in.imm));
                for (auto it = t.params.rbegin(); it != t.params.rend(); ++it) pop(*it);
                for (auto r : t.results) push(r);
                f_.code.push_back({ Op::CALL, 0, static_cast<std::uint32_t>(in.imm) });
                return;
            }
            case Op::DROP:
                pop();
                f_.code.push_back({ Op::DROP });
                return;
            case Op::SELECT: {
                pop(ValType::I32);
                auto a = pop();
                auto b = pop();
                if (a != UNKNOWN and b != UNKNOWN and a != b) fail("select operands have different types");
                push(a != UNKNOWN ? a : b);
                f_.code.push_back({ Op::SELECT });
                return;
            }
            default: fail("unsupported control instruction");
        }
    }
};


/*======================================================================================================================
 * Numeric helpers
 *====================================================================================================================*/

struct Trap
{
    const char *what;
};

inline std::uint64_t from_u32(std::uint32_t v) { return v; }
inline std::uint64_t from_bool(bool v) { return v ? 1 : 0; }
inline std::uint64_t bits(float f) { return std::bit_cast<std::uint32_t>(f); }
inline std::uint64_t bits(double d) { return std::bit_cast<std::uint64_t>(d); }
inline std::uint32_t U32(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
inline std::int32_t S32(std::uint64_t v) { return static_cast<std::int32_t>(static_cast<std::uint32_t>(v)); }
inline std::uint64_t U64(std::uint64_t v) { return v; }
inline std::int64_t S64(std::uint64_t v) { return static_cast<std::int64_t>(v); }
inline float F32(std::uint64_t v) { return std::bit_cast<float>(static_cast<std::uint32_t>(v)); }
inline double F64(std::uint64_t v) { return std::bit_cast<double>(v); }

template<typename F>
F wasm_min(F a, F b)
{
    if (std::isnan(a) or std::isnan(b)) return std::numeric_limits<F>::quiet_NaN();
    if (a == b) return std::signbit(a) ? a : b;
    return a < b ? a : b;
}

template<typename F>
F wasm_max(F a, F b)
{
    if (std::isnan(a) or std::isnan(b)) return std::numeric_limits<F>::quiet_NaN();
    if (a == b) return std::signbit(a) ? b : a;
    return a > b ? a : b;
}

template<typename F>
F wasm_copysign(F a, F b) { return std::copysign(a, b); }

/** Truncation with the range checks of `trunc_f*`; `lo` and `hi` are exclusive bounds on the truncated value. */
template<typename I>
I checked_trunc(double x, double lo, double hi)
{
    if (std::isnan(x)) throw Trap{ "invalid conversion to integer" };
    double t = std::trunc(x);
    if (not (t > lo and t < hi)) throw Trap{ "integer overflow" };
    return static_cast<I>(t);
}

template<typename T>
T div_s(T a, T b)
{
    if (b == 0) throw Trap{ "integer divide by zero" };
    if (a == std::numeric_limits<T>::min() and b == -1) throw Trap{ "integer overflow" };
    return a / b;
}

template<typename T>
T rem_s(T a, T b)
{
    if (b == 0) throw Trap{ "integer divide by zero" };
    if (b == -1) return 0;
    return a % b;
}

template<typename T>
T div_u(T a, T b)
{
    if (b == 0) throw Trap{ "integer divide by zero" };
    return a / b;
}

template<typename T>
T rem_u(T a, T b)
{
    if (b == 0) throw Trap{ "integer divide by zero" };
    return a % b;
}

constexpr double TWO31 = 2147483648.0;
constexpr double TWO32 = 4294967296.0;
constexpr double TWO63 = 9223372036854775808.0;
constexpr double TWO64 = 18446744073709551616.0;


/*======================================================================================================================
 * Instance
 *====================================================================================================================*/

class InterpInstance final : public Instance
{
    std::shared_ptr<const Module> module_;
    std::size_t max_depth_;
    std::vector<std::byte> memory_;
    std::vector<RawValue> globals_;
    std::vector<const HostFunction*> hosts_; ///< per imported function
    std::vector<HostFunction> host_storage_;
    std::vector<RawValue> stack_;

    struct Frame
    {
        const Function *f;
        std::size_t pc;
        std::size_t fp;
    };
    std::vector<Frame> frames_;

    public:
    InterpInstance(std::shared_ptr<const Module> module, std::size_t max_depth, const ImportValues &imports)
        : module_(std::move(module)), max_depth_(max_depth)
    {
        auto &d = module_->decoded;
        host_storage_ = imports.functions;
        for (auto &imp : d.imports) {
            if (imp.module != "env") throw EngineError("unknown import module '" + imp.module + "'");
            switch (imp.kind) {
                case DecodedModule::ExternKind::MEMORY:
                    if (imports.memory_pages < imp.min_pages or (imp.max_pages and imports.memory_pages > *imp.max_pages))
                        throw EngineError("memory of " + std::to_string(imports.memory_pages) +
                                          " pages does not satisfy the import limits");
                    memory_.assign(std::size_t(imports.memory_pages) * ModuleBuilder::PAGE_SIZE, std::byte{ 0 });
                    break;
                case DecodedModule::ExternKind::GLOBAL: {
                    auto it = imports.globals.find(imp.name);
                    if (it == imports.globals.end()) throw EngineError("missing global import '" + imp.name + "'");
                    RawValue v = it->second;
                    if (imp.global_type == ValType::I32 or imp.global_type == ValType::F32) v &= 0xffffffffu;
                    globals_.push_back(v);
                    break;
                }
                case DecodedModule::ExternKind::FUNC: {
                    const HostFunction *found = nullptr;
                    for (auto &h : host_storage_)
                        if (h.name == imp.name) found = &h;
                    if (not found) throw EngineError("missing function import '" + imp.name + "'");
                    if (not (found->type == d.types[imp.type_index]))
                        throw EngineError("function import '" + imp.name + "' has the wrong signature");
                    hosts_.push_back(found);
                    break;
                }
                default: throw EngineError("unsupported import");
            }
        }
        for (auto &seg : d.data) {
            std::uint64_t at = seg.global ? U32(globals_.at(*seg.global)) : seg.offset;
            if (at + seg.bytes.size() > memory_.size()) throw EngineError("data segment does not fit into memory");
            if (not seg.bytes.empty()) std::memcpy(memory_.data() + at, seg.bytes.data(), seg.bytes.size());
        }
        stack_.resize(1 << 16);
    }

    std::span<std::byte> memory() override { return memory_; }

    RawValue global(std::string_view name) override
    {
        auto &d = module_->decoded;
        for (std::size_t g = 0; g != module_->global_imports.size(); ++g)
            if (d.imports[module_->global_imports[g]].name == name) return globals_[g];
        throw EngineError("no global '" + std::string(name) + "'");
    }

    std::optional<RawValue> call(std::string_view name, std::span<const RawValue> args) override
    {
        auto idx = module_->decoded.find_export(name, DecodedModule::ExternKind::FUNC);
        if (not idx) throw EngineError("no exported function '" + std::string(name) + "'");
        auto &type = module_->decoded.function_type(*idx);
        if (args.size() != type.params.size()) throw EngineError("wrong number of arguments for '" + std::string(name) + "'");
        if (*idx < module_->num_imported_functions) throw EngineError("calling a re-exported import is not supported");
        const Function &f = module_->functions[*idx - module_->num_imported_functions];
        frames_.clear();
        for (std::size_t i = 0; i != args.size(); ++i) {
            RawValue v = args[i];
            if (type.params[i] == ValType::I32 or type.params[i] == ValType::F32) v &= 0xffffffffu;
            stack_[i] = v;
        }
        try {
            run(f, args.size());
        } catch (const Trap &t) {
            frames_.clear();
            throw TrapError(std::string("wasm trap: ") + t.what);
        }
        if (type.results.empty()) return std::nullopt;
        return stack_[0];
    }

    private:
    template<typename T>
    T load(std::uint64_t addr, std::uint32_t offset) const
    {
        const std::uint64_t ea = addr + offset;
        if (ea + sizeof(T) > memory_.size()) throw Trap{ "out of bounds memory access" };
        T v;
        std::memcpy(&v, memory_.data() + ea, sizeof(T));
        return v;
    }

    template<typename T>
    void store(std::uint64_t addr, std::uint32_t offset, T v)
    {
        const std::uint64_t ea = addr + offset;
        if (ea + sizeof(T) > memory_.size()) throw Trap{ "out of bounds memory access" };
        std::memcpy(memory_.data() + ea, &v, sizeof(T));
    }

    /** Makes room for a frame of `f` starting at `fp` and zeroes its declared locals. */
    RawValue * enter(const Function &f, std::size_t fp, std::size_t nargs)
    {
        const std::size_t need = fp + f.num_locals + f.max_height + 1;
        if (need > stack_.size()) stack_.resize(std::max(need, 2 * stack_.size()));
        std::fill(stack_.begin() + fp + nargs, stack_.begin() + fp + f.num_locals, 0);
        return stack_.data();
    }

    void run(const Function &entry, std::size_t nargs)
    {
        const Function *f = &entry;
        std::size_t fp = 0;
        RawValue *S = enter(*f, fp, nargs);
        std::size_t ob = fp + f->num_locals; // operand base
        std::size_t sp = ob;
        std::size_t pc = 0;
        const Ins *code = f->code.data();

        for (;;) {
            const Ins &in = code[pc++];
            switch (in.op) {
                case Op::UNREACHABLE: throw Trap{ "unreachable" };
                case Op::IF:
                    if (U32(S[--sp]) == 0) pc = in.imm;
                    break;
                case Op::ELSE:
                    pc = in.a;
                    break;
                case Op::BR_IF:
                    if (U32(S[--sp]) == 0) break;
                    [[fallthrough]];
                case Op::BR:
                    if (in.arity) S[ob + in.h] = S[sp - 1];
                    sp = ob + in.h + in.arity;
                    pc = in.a;
                    break;
                case Op::RETURN: {
                    const std::size_t nres = f->type.results.size();
                    if (nres) S[fp] = S[sp - 1];
                    if (frames_.empty()) return;
                    auto fr = frames_.back();
                    frames_.pop_back();
                    sp = fp + nres;
                    f = fr.f;
                    pc = fr.pc;
                    fp = fr.fp;
                    ob = fp + f->num_locals;
                    code = f->code.data();
                    break;
                }
                case Op::CALL: {
                    if (in.a < module_->num_imported_functions) {
                        auto &h = *hosts_[in.a];
                        const std::size_t n = h.type.params.size();
                        std::vector<RawValue> args(S + sp - n, S + sp);
                        sp -= n;
                        auto r = h.callback(args);
                        S = stack_.data();
                        if (not h.type.results.empty()) {
                            if (not r) throw EngineError("host function '" + h.name + "' returned no value");
                            RawValue v = *r;
                            if (h.type.results[0] == ValType::I32 or h.type.results[0] == ValType::F32) v &= 0xffffffffu;
                            S[sp++] = v;
                        }
                        break;
                    }
                    if (frames_.size() + 1 >= max_depth_) throw Trap{ "call stack exhausted" };
                    const Function &callee = module_->functions[in.a - module_->num_imported_functions];
                    const std::size_t n = callee.type.params.size();
                    frames_.push_back({ f, pc, fp });
                    fp = sp - n;
                    f = &callee;
                    S = enter(*f, fp, n);
                    ob = fp + f->num_locals;
                    sp = ob;
                    pc = 0;
                    code = f->code.data();
                    break;
                }
                case Op::DROP: --sp; break;
                case Op::SELECT: {
                    const bool c = U32(S[--sp]) != 0;
                    --sp;
                    if (not c) S[sp - 1] = S[sp];
                    break;
                }
                case Op::LOCAL_GET: S[sp++] = S[fp + in.a]; break;
                case Op::LOCAL_SET: S[fp + in.a] = S[--sp]; break;
                case Op::LOCAL_TEE: S[fp + in.a] = S[sp - 1]; break;
                case Op::GLOBAL_GET: S[sp++] = globals_[in.a]; break;
                case Op::GLOBAL_SET: globals_[in.a] = S[--sp]; break;
                case Op::I32_CONST: S[sp++] = from_u32(static_cast<std::uint32_t>(in.imm)); break;
                case Op::I64_CONST: S[sp++] = in.imm; break;
                case Op::F32_CONST: S[sp++] = in.imm & 0xffffffffu; break;
                case Op::F64_CONST: S[sp++] = in.imm; break;

#define LOAD(OP, T, CONV) \
                case Op::OP: S[sp - 1] = CONV(load<T>(U32(S[sp - 1]), in.a)); break;
                LOAD(I32_LOAD, std::uint32_t, from_u32)
                LOAD(I64_LOAD, std::uint64_t, U64)
                LOAD(F32_LOAD, std::uint32_t, from_u32)
                LOAD(F64_LOAD, std::uint64_t, U64)
                LOAD(I32_LOAD8_S, std::int8_t, [](std::int8_t v) { return from_u32(std::uint32_t(std::int32_t(v))); })
                LOAD(I32_LOAD8_U, std::uint8_t, from_u32)
                LOAD(I32_LOAD16_S, std::int16_t, [](std::int16_t v) { return from_u32(std::uint32_t(std::int32_t(v))); })
                LOAD(I32_LOAD16_U, std::uint16_t, from_u32)
                LOAD(I64_LOAD8_S, std::int8_t, [](std::int8_t v) { return std::uint64_t(std::int64_t(v)); })
                LOAD(I64_LOAD8_U, std::uint8_t, U64)
                LOAD(I64_LOAD16_S, std::int16_t, [](std::int16_t v) { return std::uint64_t(std::int64_t(v)); })
                LOAD(I64_LOAD16_U, std::uint16_t, U64)
                LOAD(I64_LOAD32_S, std::int32_t, [](std::int32_t v) { return std::uint64_t(std::int64_t(v)); })
                LOAD(I64_LOAD32_U, std::uint32_t, U64)
#undef LOAD

#define STORE(OP, T) \
                case Op::OP: store<T>(U32(S[sp - 2]), in.a, static_cast<T>(S[sp - 1])); sp -= 2; break;
                STORE(I32_STORE, std::uint32_t)
                STORE(I64_STORE, std::uint64_t)
                STORE(F32_STORE, std::uint32_t)
                STORE(F64_STORE, std::uint64_t)
                STORE(I32_STORE8, std::uint8_t)
                STORE(I32_STORE16, std::uint16_t)
                STORE(I64_STORE8, std::uint8_t)
                STORE(I64_STORE16, std::uint16_t)
                STORE(I64_STORE32, std::uint32_t)
#undef STORE

#define UN(OP, IN, EXPR) \
                case Op::OP: { auto a = IN(S[sp - 1]); S[sp - 1] = (EXPR); break; }
#define BIN(OP, IN, EXPR) \
                case Op::OP: { auto b = IN(S[sp - 1]); auto a = IN(S[sp - 2]); --sp; S[sp - 1] = (EXPR); break; }

                UN(I32_EQZ, U32, from_bool(a == 0))
                BIN(I32_EQ, U32, from_bool(a == b))
                BIN(I32_NE, U32, from_bool(a != b))
                BIN(I32_LT_S, S32, from_bool(a < b))
                BIN(I32_LT_U, U32, from_bool(a < b))
                BIN(I32_GT_S, S32, from_bool(a > b))
                BIN(I32_GT_U, U32, from_bool(a > b))
                BIN(I32_LE_S, S32, from_bool(a <= b))
                BIN(I32_LE_U, U32, from_bool(a <= b))
                BIN(I32_GE_S, S32, from_bool(a >= b))
                BIN(I32_GE_U, U32, from_bool(a >= b))

                UN(I64_EQZ, U64, from_bool(a == 0))
                BIN(I64_EQ, U64, from_bool(a == b))
                BIN(I64_NE, U64, from_bool(a != b))
                BIN(I64_LT_S, S64, from_bool(a < b))
                BIN(I64_LT_U, U64, from_bool(a < b))
                BIN(I64_GT_S, S64, from_bool(a > b))
                BIN(I64_GT_U, U64, from_bool(a > b))
                BIN(I64_LE_S, S64, from_bool(a <= b))
                BIN(I64_LE_U, U64, from_bool(a <= b))
                BIN(I64_GE_S, S64, from_bool(a >= b))
                BIN(I64_GE_U, U64, from_bool(a >= b))

                BIN(F32_EQ, F32, from_bool(a == b))
                BIN(F32_NE, F32, from_bool(a != b))
                BIN(F32_LT, F32, from_bool(a < b))
                BIN(F32_GT, F32, from_bool(a > b))
                BIN(F32_LE, F32, from_bool(a <= b))
                BIN(F32_GE, F32, from_bool(a >= b))
                BIN(F64_EQ, F64, from_bool(a == b))
                BIN(F64_NE, F64, from_bool(a != b))
                BIN(F64_LT, F64, from_bool(a < b))
                BIN(F64_GT, F64, from_bool(a > b))
                BIN(F64_LE, F64, from_bool(a <= b))
                BIN(F64_GE, F64, from_bool(a >= b))

                UN(I32_CLZ, U32, from_u32(std::countl_zero(a)))
                UN(I32_CTZ, U32, from_u32(std::countr_zero(a)))
                UN(I32_POPCNT, U32, from_u32(std::popcount(a)))
                BIN(I32_ADD, U32, from_u32(a + b))
                BIN(I32_SUB, U32, from_u32(a - b))
                BIN(I32_MUL, U32, from_u32(a * b))
                BIN(I32_DIV_S, S32, from_u32(std::uint32_t(div_s(a, b))))
                BIN(I32_DIV_U, U32, from_u32(div_u(a, b)))
                BIN(I32_REM_S, S32, from_u32(std::uint32_t(rem_s(a, b))))
                BIN(I32_REM_U, U32, from_u32(rem_u(a, b)))
                BIN(I32_AND, U32, from_u32(a & b))
                BIN(I32_OR, U32, from_u32(a | b))
                BIN(I32_XOR, U32, from_u32(a ^ b))
                BIN(I32_SHL, U32, from_u32(a << (b & 31)))
                BIN(I32_SHR_S, U32, from_u32(std::uint32_t(std::int32_t(a) >> (b & 31))))
                BIN(I32_SHR_U, U32, from_u32(a >> (b & 31)))
                BIN(I32_ROTL, U32, from_u32(std::rotl(a, int(b & 31))))
                BIN(I32_ROTR, U32, from_u32(std::rotr(a, int(b & 31))))

                UN(I64_CLZ, U64, U64(std::countl_zero(a)))
                UN(I64_CTZ, U64, U64(std::countr_zero(a)))
                UN(I64_POPCNT, U64, U64(std::popcount(a)))
                BIN(I64_ADD, U64, a + b)
                BIN(I64_SUB, U64, a - b)
                BIN(I64_MUL, U64, a * b)
                BIN(I64_DIV_S, S64, std::uint64_t(div_s(a, b)))
                BIN(I64_DIV_U, U64, div_u(a, b))
                BIN(I64_REM_S, S64, std::uint64_t(rem_s(a, b)))
                BIN(I64_REM_U, U64, rem_u(a, b))
                BIN(I64_AND, U64, a & b)
                BIN(I64_OR, U64, a | b)
                BIN(I64_XOR, U64, a ^ b)
                BIN(I64_SHL, U64, a << (b & 63))
                BIN(I64_SHR_S, U64, std::uint64_t(std::int64_t(a) >> (b & 63)))
                BIN(I64_SHR_U, U64, a >> (b & 63))
                BIN(I64_ROTL, U64, std::rotl(a, int(b & 63)))
                BIN(I64_ROTR, U64, std::rotr(a, int(b & 63)))

                UN(F32_ABS, U32, from_u32(a & 0x7fffffffu))
                UN(F32_NEG, U32, from_u32(a ^ 0x80000000u))
                UN(F32_CEIL, F32, bits(std::ceil(a)))
                UN(F32_FLOOR, F32, bits(std::floor(a)))
                UN(F32_TRUNC, F32, bits(std::trunc(a)))
                UN(F32_NEAREST, F32, bits(std::nearbyint(a)))
                UN(F32_SQRT, F32, bits(std::sqrt(a)))
                BIN(F32_ADD, F32, bits(a + b))
                BIN(F32_SUB, F32, bits(a - b))
                BIN(F32_MUL, F32, bits(a * b))
                BIN(F32_DIV, F32, bits(a / b))
                BIN(F32_MIN, F32, bits(wasm_min(a, b)))
                BIN(F32_MAX, F32, bits(wasm_max(a, b)))
                BIN(F32_COPYSIGN, U32, from_u32((a & 0x7fffffffu) | (b & 0x80000000u)))

                UN(F64_ABS, U64, a & 0x7fffffffffffffffull)
                UN(F64_NEG, U64, a ^ 0x8000000000000000ull)
                UN(F64_CEIL, F64, bits(std::ceil(a)))
                UN(F64_FLOOR, F64, bits(std::floor(a)))
                UN(F64_TRUNC, F64, bits(std::trunc(a)))
                UN(F64_NEAREST, F64, bits(std::nearbyint(a)))
                UN(F64_SQRT, F64, bits(std::sqrt(a)))
                BIN(F64_ADD, F64, bits(a + b))
                BIN(F64_SUB, F64, bits(a - b))
                BIN(F64_MUL, F64, bits(a * b))
                BIN(F64_DIV, F64, bits(a / b))
                BIN(F64_MIN, F64, bits(wasm_min(a, b)))
                BIN(F64_MAX, F64, bits(wasm_max(a, b)))
                BIN(F64_COPYSIGN, U64, (a & 0x7fffffffffffffffull) | (b & 0x8000000000000000ull))

                UN(I32_WRAP_I64, U64, from_u32(std::uint32_t(a)))
                UN(I32_TRUNC_F32_S, F32, from_u32(std::uint32_t(checked_trunc<std::int32_t>(a, -TWO31 - 1, TWO31))))
                UN(I32_TRUNC_F32_U, F32, from_u32(checked_trunc<std::uint32_t>(a, -1.0, TWO32)))
                UN(I32_TRUNC_F64_S, F64, from_u32(std::uint32_t(checked_trunc<std::int32_t>(a, -TWO31 - 1, TWO31))))
                UN(I32_TRUNC_F64_U, F64, from_u32(checked_trunc<std::uint32_t>(a, -1.0, TWO32)))
                UN(I64_EXTEND_I32_S, S32, std::uint64_t(std::int64_t(a)))
                UN(I64_EXTEND_I32_U, U32, U64(a))
                UN(I64_TRUNC_F32_S, F32, std::uint64_t(checked_trunc<std::int64_t>(a, -TWO63 - 1025, TWO63)))
                UN(I64_TRUNC_F32_U, F32, checked_trunc<std::uint64_t>(a, -1.0, TWO64))
                UN(I64_TRUNC_F64_S, F64, std::uint64_t(checked_trunc<std::int64_t>(a, -TWO63 - 1025, TWO63)))
                UN(I64_TRUNC_F64_U, F64, checked_trunc<std::uint64_t>(a, -1.0, TWO64))
                UN(F32_CONVERT_I32_S, S32, bits(float(a)))
                UN(F32_CONVERT_I32_U, U32, bits(float(a)))
                UN(F32_CONVERT_I64_S, S64, bits(float(a)))
                UN(F32_CONVERT_I64_U, U64, bits(float(a)))
                UN(F32_DEMOTE_F64, F64, bits(float(a)))
                UN(F64_CONVERT_I32_S, S32, bits(double(a)))
                UN(F64_CONVERT_I32_U, U32, bits(double(a)))
                UN(F64_CONVERT_I64_S, S64, bits(double(a)))
                UN(F64_CONVERT_I64_U, U64, bits(double(a)))
                UN(F64_PROMOTE_F32, F32, bits(double(a)))
                UN(I32_REINTERPRET_F32, U32, from_u32(a))
                UN(I64_REINTERPRET_F64, U64, a)
                UN(F32_REINTERPRET_I32, U32, from_u32(a))
                UN(F64_REINTERPRET_I64, U64, a)
#undef UN
#undef BIN

                default:
                    throw EngineError("interpreter: unexpected instruction");
            }
        }
    }
};


/*======================================================================================================================
 * Engine
 *====================================================================================================================*/

class InterpModule final : public CompiledModule
{
    std::shared_ptr<const Module> module_;
    std::size_t max_depth_;

    public:
    InterpModule(std::shared_ptr<const Module> m, std::size_t max_depth) : module_(std::move(m)), max_depth_(max_depth) { }

    std::unique_ptr<Instance> instantiate(const ImportValues &imports) override
    {
        return std::make_unique<InterpInstance>(module_, max_depth_, imports);
    }
};

class InterpEngine final : public Engine
{
    std::size_t max_depth_;

    public:
    explicit InterpEngine(std::size_t max_depth) : max_depth_(max_depth) { }

    std::string_view name() const override { return "interp"; }

    std::unique_ptr<CompiledModule> compile(std::span<const std::uint8_t> binary, OptLevel) override
    {
        auto m = std::make_shared<Module>();
        try {
            m->decoded = decode_module(binary);
        } catch (const ValidationError &e) {
            throw EngineError(e.what());
        }
        auto &d = m->decoded;
        std::size_t memories = 0;
        for (std::size_t i = 0; i != d.imports.size(); ++i) {
            switch (d.imports[i].kind) {
                case DecodedModule::ExternKind::FUNC: m->func_imports.push_back(i); break;
                case DecodedModule::ExternKind::GLOBAL: m->global_imports.push_back(i); break;
                case DecodedModule::ExternKind::MEMORY: ++memories; break;
                default: throw EngineError("unsupported import kind");
            }
        }
        if (memories > 1) throw EngineError("multiple memories");
        m->num_imported_functions = m->func_imports.size();
        const std::size_t total = m->num_imported_functions + d.functions.size();
        for (auto &e : d.exports) {
            if (e.kind != DecodedModule::ExternKind::FUNC) throw EngineError("only function exports are supported");
            if (e.index >= total) throw EngineError("export '" + e.name + "' of unknown function");
        }
        for (std::size_t i = 0; i != d.exports.size(); ++i)
            for (std::size_t j = 0; j != i; ++j)
                if (d.exports[i].name == d.exports[j].name) throw EngineError("duplicate export '" + d.exports[i].name + "'");
        for (auto &seg : d.data) {
            if (not seg.global) continue;
            if (*seg.global >= m->global_imports.size()) throw EngineError("data segment offset: unknown global");
            auto &g = d.imports[m->global_imports[*seg.global]];
            if (g.mut or g.global_type != ValType::I32)
                throw EngineError("data segment offset must be an immutable i32 global");
        }
        if (not d.data.empty() and memories == 0) throw EngineError("data segment without memory");

        m->functions.resize(d.functions.size());
        for (std::size_t i = 0; i != d.functions.size(); ++i) m->functions[i].type = d.types[d.functions[i]];
        for (auto &[idx, name] : d.function_names)
            if (idx >= m->num_imported_functions and idx < total) m->functions[idx - m->num_imported_functions].name = name;
        for (std::size_t i = 0; i != d.functions.size(); ++i) {
            const auto idx = static_cast<std::uint32_t>(m->num_imported_functions + i);
            try {
                Translator(*m, idx, m->functions[i]).translate(d.code[i]);
            } catch (const ValidationError &e) {
                throw EngineError("function " + std::to_string(idx) + ": " + e.what());
            }
        }
        return std::make_unique<InterpModule>(std::move(m), max_depth_);
    }
};

}

std::unique_ptr<Engine> wasmql::make_interp_engine(std::size_t max_call_depth)
{
    return std::make_unique<InterpEngine>(max_call_depth);
}
