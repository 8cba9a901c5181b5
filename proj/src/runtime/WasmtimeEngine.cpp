#include "wasmql/runtime/Engine.hpp"

#include "wasmql/util/error.hpp"
#include "wasmql/wasm/Decoder.hpp"
#include <bit>
#include <exception>
#include <mutex>
#include <wasmtime.h>


using namespace wasmql;
using namespace wasmql::wasm;


namespace wasmql { std::unique_ptr<Engine> make_wasmtime_engine(); }


namespace {

std::string take_message(wasmtime_error_t *err)
{
    wasm_byte_vec_t msg;
    wasmtime_error_message(err, &msg);
    std::string s(msg.data, msg.size);
    wasm_byte_vec_delete(&msg);
    wasmtime_error_delete(err);
    return s;
}

/** Trap reasons use the same wording as the interpreter so that both engines report alike. */
std::string take_trap(wasm_trap_t *trap)
{
    wasmtime_trap_code_t code;
    std::string reason;
    if (wasmtime_trap_code(trap, &code)) {
        switch (code) {
            case WASMTIME_TRAP_CODE_STACK_OVERFLOW: reason = "call stack exhausted"; break;
            case WASMTIME_TRAP_CODE_MEMORY_OUT_OF_BOUNDS: reason = "out of bounds memory access"; break;
            case WASMTIME_TRAP_CODE_INTEGER_OVERFLOW: reason = "integer overflow"; break;
            case WASMTIME_TRAP_CODE_INTEGER_DIVISION_BY_ZERO: reason = "integer divide by zero"; break;
            case WASMTIME_TRAP_CODE_BAD_CONVERSION_TO_INTEGER: reason = "invalid conversion to integer"; break;
            case WASMTIME_TRAP_CODE_UNREACHABLE_CODE_REACHED: reason = "unreachable"; break;
            default: break;
        }
    }
    if (reason.empty()) {
        wasm_message_t msg;
        wasm_trap_message(trap, &msg);
        reason.assign(msg.data, msg.size);
        if (not reason.empty() and reason.back() == '\0') reason.pop_back();
        wasm_byte_vec_delete(&msg);
    }
    wasm_trap_delete(trap);
    return reason;
}

wasm_valkind_t valkind(ValType t)
{
    switch (t) {
        case ValType::I32: return WASM_I32;
        case ValType::I64: return WASM_I64;
        case ValType::F32: return WASM_F32;
        case ValType::F64: return WASM_F64;
    }
    return WASM_I32;
}

wasmtime_val_t to_val(ValType t, RawValue v)
{
    wasmtime_val_t out;
    switch (t) {
        case ValType::I32: out.kind = WASMTIME_I32; out.of.i32 = static_cast<std::int32_t>(v); break;
        case ValType::I64: out.kind = WASMTIME_I64; out.of.i64 = static_cast<std::int64_t>(v); break;
        case ValType::F32: out.kind = WASMTIME_F32; out.of.f32 = std::bit_cast<float>(static_cast<std::uint32_t>(v)); break;
        case ValType::F64: out.kind = WASMTIME_F64; out.of.f64 = std::bit_cast<double>(v); break;
    }
    return out;
}

RawValue from_val(const wasmtime_val_t &v)
{
    switch (v.kind) {
        case WASMTIME_I32: return static_cast<std::uint32_t>(v.of.i32);
        case WASMTIME_I64: return static_cast<std::uint64_t>(v.of.i64);
        case WASMTIME_F32: return std::bit_cast<std::uint32_t>(v.of.f32);
        case WASMTIME_F64: return std::bit_cast<std::uint64_t>(v.of.f64);
        default: throw EngineError("unsupported value kind");
    }
}

wasm_functype_t * make_functype(const FuncType &t)
{
    wasm_valtype_vec_t params, results;
    wasm_valtype_vec_new_uninitialized(&params, t.params.size());
    for (std::size_t i = 0; i != t.params.size(); ++i) params.data[i] = wasm_valtype_new(valkind(t.params[i]));
    wasm_valtype_vec_new_uninitialized(&results, t.results.size());
    for (std::size_t i = 0; i != t.results.size(); ++i) results.data[i] = wasm_valtype_new(valkind(t.results[i]));
    return wasm_functype_new(&params, &results);
}

struct EngineHandle
{
    wasm_engine_t *engine;
    explicit EngineHandle(OptLevel level)
    {
        wasm_config_t *config = wasm_config_new();
        wasmtime_config_cranelift_opt_level_set(config, level == OptLevel::FAST ? WASMTIME_OPT_LEVEL_NONE
                                                                               : WASMTIME_OPT_LEVEL_SPEED);
        wasmtime_config_max_wasm_stack_set(config, 1 << 20);
        engine = wasm_engine_new_with_config(config);
        if (not engine) throw EngineError("wasmtime: cannot create engine");
    }
    ~EngineHandle() { wasm_engine_delete(engine); }
    EngineHandle(const EngineHandle&) = delete;
    EngineHandle & operator=(const EngineHandle&) = delete;
};

struct ModuleHandle
{
    std::shared_ptr<EngineHandle> engine;
    wasmtime_module_t *module = nullptr;
    DecodedModule decoded;

    ~ModuleHandle() { if (module) wasmtime_module_delete(module); }
};

class WasmtimeInstance;

struct HostEnv
{
    WasmtimeInstance *instance;
    HostFunction fn;
};

class WasmtimeInstance final : public Instance
{
    std::shared_ptr<ModuleHandle> module_;
    wasmtime_store_t *store_;
    wasmtime_context_t *context_;
    wasmtime_instance_t instance_;
    std::optional<wasmtime_memory_t> memory_;
    std::vector<std::pair<std::string, wasmtime_global_t>> globals_;
    std::vector<std::unique_ptr<HostEnv>> envs_;

    public:
    std::exception_ptr pending; ///< exception thrown by a host function during the current call

    WasmtimeInstance(std::shared_ptr<ModuleHandle> module, const ImportValues &imports)
        : module_(std::move(module))
    {
        store_ = wasmtime_store_new(module_->engine->engine, nullptr, nullptr);
        context_ = wasmtime_store_context(store_);
        try {
            link(imports);
        } catch (...) {
            wasmtime_store_delete(store_);
            throw;
        }
    }

    ~WasmtimeInstance() override { wasmtime_store_delete(store_); }

    std::span<std::byte> memory() override
    {
        if (not memory_) return {};
        return { reinterpret_cast<std::byte*>(wasmtime_memory_data(context_, &*memory_)),
                 wasmtime_memory_data_size(context_, &*memory_) };
    }

    RawValue global(std::string_view name) override
    {
        for (auto &[n, g] : globals_) {
            if (n != name) continue;
            wasmtime_val_t v;
            wasmtime_global_get(context_, &g, &v);
            return from_val(v);
        }
        throw EngineError("no global '" + std::string(name) + "'");
    }

    std::optional<RawValue> call(std::string_view name, std::span<const RawValue> args) override
    {
        auto &d = module_->decoded;
        auto idx = d.find_export(name, DecodedModule::ExternKind::FUNC);
        if (not idx) throw EngineError("no exported function '" + std::string(name) + "'");
        auto &type = d.function_type(*idx);
        if (args.size() != type.params.size()) throw EngineError("wrong number of arguments for '" + std::string(name) + "'");

        wasmtime_extern_t ext;
        if (not wasmtime_instance_export_get(context_, &instance_, name.data(), name.size(), &ext) or
            ext.kind != WASMTIME_EXTERN_FUNC)
            throw EngineError("no exported function '" + std::string(name) + "'");
        std::vector<wasmtime_val_t> in;
        for (std::size_t i = 0; i != args.size(); ++i) in.push_back(to_val(type.params[i], args[i]));
        wasmtime_val_t out[1];
        wasm_trap_t *trap = nullptr;
        pending = nullptr;
        if (auto *err = wasmtime_func_call(context_, &ext.of.func, in.data(), in.size(), out, type.results.size(), &trap)) {
            auto msg = take_message(err);
            if (pending) std::rethrow_exception(std::exchange(pending, nullptr));
            throw EngineError("wasmtime: " + msg);
        }
        if (trap) {
            auto reason = take_trap(trap);
            if (pending) std::rethrow_exception(std::exchange(pending, nullptr));
            throw TrapError("wasm trap: " + reason);
        }
        if (type.results.empty()) return std::nullopt;
        return from_val(out[0]);
    }

    private:
    static wasm_trap_t * trampoline(void *env, wasmtime_caller_t*, const wasmtime_val_t *args, std::size_t nargs,
                                    wasmtime_val_t *results, std::size_t nresults)
    {
        auto *h = static_cast<HostEnv*>(env);
        try {
            std::vector<RawValue> raw;
            for (std::size_t i = 0; i != nargs; ++i) raw.push_back(from_val(args[i]));
            auto r = h->fn.callback(raw);
            if (nresults) {
                if (not r) throw EngineError("host function '" + h->fn.name + "' returned no value");
                results[0] = to_val(h->fn.type.results[0], *r);
            }
            return nullptr;
        } catch (...) {
            h->instance->pending = std::current_exception();
            static constexpr char MSG[] = "host function failed";
            return wasmtime_trap_new(MSG, sizeof MSG - 1);
        }
    }

    void link(const ImportValues &imports)
    {
        auto &d = module_->decoded;
        std::vector<wasmtime_extern_t> externs;
        for (auto &imp : d.imports) {
            if (imp.module != "env") throw EngineError("unknown import module '" + imp.module + "'");
            wasmtime_extern_t ext;
            switch (imp.kind) {
                case DecodedModule::ExternKind::MEMORY: {
                    if (imports.memory_pages < imp.min_pages or (imp.max_pages and imports.memory_pages > *imp.max_pages))
                        throw EngineError("memory of " + std::to_string(imports.memory_pages) +
                                          " pages does not satisfy the import limits");
                    wasm_memorytype_t *mt;
                    if (auto *err = wasmtime_memorytype_new(imports.memory_pages, imp.max_pages.has_value(),
                                                            imp.max_pages.value_or(0), false, false, 16, &mt))
                        throw EngineError("wasmtime: " + take_message(err));
                    wasmtime_memory_t mem;
                    auto *err = wasmtime_memory_new(context_, mt, &mem);
                    wasm_memorytype_delete(mt);
                    if (err) throw EngineError("wasmtime: " + take_message(err));
                    memory_ = mem;
                    ext.kind = WASMTIME_EXTERN_MEMORY;
                    ext.of.memory = mem;
                    break;
                }
                case DecodedModule::ExternKind::GLOBAL: {
                    auto it = imports.globals.find(imp.name);
                    if (it == imports.globals.end()) throw EngineError("missing global import '" + imp.name + "'");
                    wasm_globaltype_t *gt = wasm_globaltype_new(wasm_valtype_new(valkind(imp.global_type)),
                                                                imp.mut ? WASM_VAR : WASM_CONST);
                    wasmtime_val_t v = to_val(imp.global_type, it->second);
                    wasmtime_global_t g;
                    auto *err = wasmtime_global_new(context_, gt, &v, &g);
                    wasm_globaltype_delete(gt);
                    if (err) throw EngineError("wasmtime: " + take_message(err));
                    globals_.emplace_back(imp.name, g);
                    ext.kind = WASMTIME_EXTERN_GLOBAL;
                    ext.of.global = g;
                    break;
                }
                case DecodedModule::ExternKind::FUNC: {
                    const HostFunction *found = nullptr;
                    for (auto &h : imports.functions)
                        if (h.name == imp.name) found = &h;
                    if (not found) throw EngineError("missing function import '" + imp.name + "'");
                    if (not (found->type == d.types[imp.type_index]))
                        throw EngineError("function import '" + imp.name + "' has the wrong signature");
                    envs_.push_back(std::make_unique<HostEnv>(HostEnv{ this, *found }));
                    wasm_functype_t *ft = make_functype(found->type);
                    wasmtime_func_t f;
                    wasmtime_func_new(context_, ft, &trampoline, envs_.back().get(), nullptr, &f);
                    wasm_functype_delete(ft);
                    ext.kind = WASMTIME_EXTERN_FUNC;
                    ext.of.func = f;
                    break;
                }
                default: throw EngineError("unsupported import");
            }
            externs.push_back(ext);
        }
        wasm_trap_t *trap = nullptr;
        if (auto *err = wasmtime_instance_new(context_, module_->module, externs.data(), externs.size(), &instance_, &trap))
            throw EngineError("wasmtime: " + take_message(err));
        if (trap) throw EngineError("instantiation failed: " + take_trap(trap));
    }
};

class WasmtimeModule final : public CompiledModule
{
    std::shared_ptr<ModuleHandle> module_;

    public:
    explicit WasmtimeModule(std::shared_ptr<ModuleHandle> m) : module_(std::move(m)) { }

    std::unique_ptr<Instance> instantiate(const ImportValues &imports) override
    {
        return std::make_unique<WasmtimeInstance>(module_, imports);
    }
};

class WasmtimeEngine final : public Engine
{
    std::mutex mutex_;
    std::shared_ptr<EngineHandle> engines_[2];

    std::shared_ptr<EngineHandle> engine(OptLevel level)
    {
        std::lock_guard lock(mutex_);
        auto &e = engines_[level == OptLevel::FAST ? 0 : 1];
        if (not e) e = std::make_shared<EngineHandle>(level);
        return e;
    }

    public:
    std::string_view name() const override { return "wasmtime"; }

    std::unique_ptr<CompiledModule> compile(std::span<const std::uint8_t> binary, OptLevel level) override
    {
        auto m = std::make_shared<ModuleHandle>();
        m->engine = engine(level);
        if (auto *err = wasmtime_module_new(m->engine->engine, binary.data(), binary.size(), &m->module))
            throw EngineError("wasmtime: " + take_message(err));
        try {
            m->decoded = decode_module(binary);
        } catch (const ValidationError &e) {
            throw EngineError(e.what());
        }
        return std::make_unique<WasmtimeModule>(std::move(m));
    }
};

}

std::unique_ptr<Engine> wasmql::make_wasmtime_engine() { return std::make_unique<WasmtimeEngine>(); }
