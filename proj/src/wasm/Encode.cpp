#include "wasmql/wasm/Builder.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>


using namespace wasmql;
using namespace wasmql::wasm;


namespace {

struct Writer
{
    std::vector<std::uint8_t> out;

    void byte(std::uint8_t b) { out.push_back(b); }
    void bytes(std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }

    void u32(std::uint64_t v)
    {
        do {
            std::uint8_t b = v & 0x7f;
            v >>= 7;
            if (v) b |= 0x80;
            byte(b);
        } while (v);
    }

    void s64(std::int64_t v)
    {
        for (;;) {
            std::uint8_t b = v & 0x7f;
            v >>= 7;
            bool done = (v == 0 and not (b & 0x40)) or (v == -1 and (b & 0x40));
            if (not done) b |= 0x80;
            byte(b);
            if (done) break;
        }
    }

    void fixed(std::uint64_t bits, int n)
    {
        for (int i = 0; i != n; ++i) byte(static_cast<std::uint8_t>(bits >> (8 * i)));
    }

    void name(const std::string &s)
    {
        u32(s.size());
        out.insert(out.end(), s.begin(), s.end());
    }

    void section(std::uint8_t id, const Writer &content)
    {
        byte(id);
        u32(content.out.size());
        bytes(content.out);
    }
};

void encode_instr(Writer &w, const Instr &in)
{
    w.byte(static_cast<std::uint8_t>(in.op));
    auto &info = op_info(in.op);
    switch (info.cls) {
        case OpClass::CONTROL:
            switch (in.op) {
                case Op::BLOCK: case Op::LOOP: case Op::IF: w.byte(static_cast<std::uint8_t>(in.imm)); break;
                case Op::BR: case Op::BR_IF: case Op::CALL: w.u32(in.imm); break;
                default: break;
            }
            break;
        case OpClass::VARIABLE:
            w.u32(in.imm);
            break;
        case OpClass::CONST:
            switch (in.op) {
                case Op::I32_CONST: w.s64(static_cast<std::int32_t>(in.imm)); break;
                case Op::I64_CONST: w.s64(static_cast<std::int64_t>(in.imm)); break;
                case Op::F32_CONST: w.fixed(in.imm, 4); break;
                default:            w.fixed(in.imm, 8); break;
            }
            break;
        case OpClass::LOAD:
        case OpClass::STORE:
            w.u32(in.align);
            w.u32(in.offset);
            break;
        default:
            break;
    }
}

void encode_type(Writer &w, const FuncType &t)
{
    w.byte(0x60);
    w.u32(t.params.size());
    for (auto p : t.params) w.byte(static_cast<std::uint8_t>(p));
    w.u32(t.results.size());
    for (auto r : t.results) w.byte(static_cast<std::uint8_t>(r));
}

}

std::vector<std::uint8_t> ModuleBuilder::finish()
{
    if (not memory_) throw ValidationError("module does not import a memory");
    for (auto &f : functions_)
        if (not f->finished())
            throw ValidationError("function " + std::to_string(f->index().value) +
                                  (f->name().empty() ? "" : " '" + f->name() + "'") + " is not finished");
    finished_ = true;

    /* Types in order of first use. */
    std::vector<FuncType> types;
    auto type_index = [&](const FuncType &t) -> std::uint32_t {
        auto it = std::find(types.begin(), types.end(), t);
        if (it == types.end()) {
            types.push_back(t);
            return static_cast<std::uint32_t>(types.size() - 1);
        }
        return static_cast<std::uint32_t>(it - types.begin());
    };
    std::vector<std::uint32_t> import_types, func_types;
    for (auto &i : func_imports_) import_types.push_back(type_index(i.type));
    for (auto &f : functions_) func_types.push_back(type_index(f->type()));

    Writer w;
    w.bytes(std::vector<std::uint8_t>{ 0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00 });

    if (not types.empty()) {
        Writer s;
        s.u32(types.size());
        for (auto &t : types) encode_type(s, t);
        w.section(1, s);
    }
    {
        Writer s;
        s.u32(1 + globals_.size() + func_imports_.size());
        s.name("env");
        s.name("memory");
        s.byte(0x02);
        if (memory_->second) {
            s.byte(0x01);
            s.u32(memory_->first);
            s.u32(*memory_->second);
        } else {
            s.byte(0x00);
            s.u32(memory_->first);
        }
        for (auto &g : globals_) {
            s.name("env");
            s.name(g.name);
            s.byte(0x03);
            s.byte(static_cast<std::uint8_t>(g.type));
            s.byte(g.mut ? 1 : 0);
        }
        for (std::size_t i = 0; i != func_imports_.size(); ++i) {
            s.name("env");
            s.name(func_imports_[i].name);
            s.byte(0x00);
            s.u32(import_types[i]);
        }
        w.section(2, s);
    }
    if (not functions_.empty()) {
        Writer s;
        s.u32(func_types.size());
        for (auto t : func_types) s.u32(t);
        w.section(3, s);
    }
    if (not exports_.empty()) {
        Writer s;
        s.u32(exports_.size());
        for (auto &e : exports_) {
            s.name(e.name);
            s.byte(0x00);
            s.u32(e.func.value);
        }
        w.section(7, s);
    }
    if (not functions_.empty()) {
        Writer s;
        s.u32(functions_.size());
        for (auto &f : functions_) {
            Writer body;
            /* Runs of equal local types share one entry. */
            auto locals = f->declared_locals();
            std::vector<std::pair<std::uint32_t, ValType>> groups;
            for (auto t : locals) {
                if (groups.empty() or groups.back().second != t) groups.emplace_back(0, t);
                ++groups.back().first;
            }
            body.u32(groups.size());
            for (auto [n, t] : groups) {
                body.u32(n);
                body.byte(static_cast<std::uint8_t>(t));
            }
            for (auto &in : f->body()) encode_instr(body, in);
            s.u32(body.out.size());
            s.bytes(body.out);
        }
        w.section(10, s);
    }
    if (not data_.empty()) {
        Writer s;
        s.u32(data_.size());
        for (auto &d : data_) {
            s.byte(0x00);
            if (d.base) {
                s.byte(static_cast<std::uint8_t>(Op::GLOBAL_GET));
                s.u32(d.base->value);
            } else {
                s.byte(static_cast<std::uint8_t>(Op::I32_CONST));
                s.s64(static_cast<std::int32_t>(d.offset));
            }
            s.byte(static_cast<std::uint8_t>(Op::END));
            s.u32(d.bytes.size());
            s.bytes(d.bytes);
        }
        w.section(11, s);
    }
    {
        std::vector<std::pair<std::uint32_t, std::string>> names;
        for (std::uint32_t i = 0; i != num_functions(); ++i) {
            auto n = function_name(FuncIndex{ i });
            if (not n.empty()) names.emplace_back(i, std::move(n));
        }
        if (not names.empty()) {
            Writer sub;
            sub.u32(names.size());
            for (auto &[i, n] : names) {
                sub.u32(i);
                sub.name(n);
            }
            Writer s;
            s.name("name");
            s.byte(0x01);
            s.u32(sub.out.size());
            s.bytes(sub.out);
            w.section(0, s);
        }
    }
    return std::move(w.out);
}
