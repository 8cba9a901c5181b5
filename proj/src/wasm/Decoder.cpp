#include "wasmql/wasm/Decoder.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>
#include <bit>
#include <cstring>


using namespace wasmql;
using namespace wasmql::wasm;


namespace {

struct Reader
{
    std::span<const std::uint8_t> in;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string &what) const
    {
        throw ValidationError("malformed module at byte " + std::to_string(pos) + ": " + what);
    }

    bool done() const { return pos == in.size(); }

    std::uint8_t byte()
    {
        if (pos >= in.size()) fail("unexpected end");
        return in[pos++];
    }

    std::uint64_t uleb(unsigned bits)
    {
        std::uint64_t v = 0;
        for (unsigned shift = 0;; shift += 7) {
            if (shift >= bits + 7) fail("integer too long");
            std::uint8_t b = byte();
            v |= std::uint64_t(b & 0x7f) << shift;
            if (not (b & 0x80)) break;
        }
        if (bits < 64 and (v >> bits)) fail("integer out of range");
        return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(uleb(32)); }

    std::int64_t sleb(unsigned bits)
    {
        std::int64_t v = 0;
        unsigned shift = 0;
        std::uint8_t b;
        do {
            if (shift >= bits + 7) fail("integer too long");
            b = byte();
            v |= std::int64_t(b & 0x7f) << shift;
            shift += 7;
        } while (b & 0x80);
        if (shift < 64 and (b & 0x40)) v |= -(std::int64_t(1) << shift);
        if (bits == 32 and (v < INT32_MIN or v > INT32_MAX)) fail("integer out of range");
        return v;
    }

    std::uint64_t fixed(int n)
    {
        std::uint64_t v = 0;
        for (int i = 0; i != n; ++i) v |= std::uint64_t(byte()) << (8 * i);
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n)
    {
        if (in.size() - pos < n) fail("unexpected end");
        auto s = in.subspan(pos, n);
        pos += n;
        return s;
    }

    std::string name()
    {
        auto s = take(u32());
        return std::string(s.begin(), s.end());
    }

    ValType valtype()
    {
        std::uint8_t b = byte();
        switch (b) {
            case 0x7f: case 0x7e: case 0x7d: case 0x7c: return ValType(b);
            default: fail("invalid value type");
        }
    }
};

}

std::size_t DecodedModule::num_imported_functions() const
{
    return std::count_if(imports.begin(), imports.end(), [](auto &i) { return i.kind == ExternKind::FUNC; });
}

std::vector<std::size_t> DecodedModule::imported_globals() const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i != imports.size(); ++i)
        if (imports[i].kind == ExternKind::GLOBAL) out.push_back(i);
    return out;
}

const FuncType & DecodedModule::function_type(std::uint32_t func) const
{
    for (auto &i : imports) {
        if (i.kind != ExternKind::FUNC) continue;
        if (func == 0) return types.at(i.type_index);
        --func;
    }
    return types.at(functions.at(func));
}

std::optional<std::uint32_t> DecodedModule::find_export(std::string_view name, ExternKind kind) const
{
    for (auto &e : exports)
        if (e.name == name and e.kind == kind) return e.index;
    return std::nullopt;
}

DecodedModule wasm::decode_module(std::span<const std::uint8_t> bytes)
{
    Reader r{ bytes };
    static constexpr std::uint8_t MAGIC[] = { 0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00 };
    auto header = r.take(std::min<std::size_t>(8, bytes.size()));
    if (header.size() != 8 or not std::equal(header.begin(), header.end(), MAGIC)) r.fail("bad magic or version");

    DecodedModule m;
    int last_id = 0;
    while (not r.done()) {
        const std::uint8_t id = r.byte();
        const std::uint32_t size = r.u32();
        Reader s{ r.take(size) };
        if (id != 0) {
            if (id <= last_id) r.fail("section out of order");
            last_id = id;
        }
        switch (id) {
            case 0: {
                std::string name = s.name();
                if (name != "name") break;
                while (not s.done()) {
                    std::uint8_t sub = s.byte();
                    Reader ss{ s.take(s.u32()) };
                    if (sub != 1) continue;
                    for (std::uint32_t n = ss.u32(); n; --n) {
                        std::uint32_t idx = ss.u32();
                        m.function_names.emplace_back(idx, ss.name());
                    }
                }
                break;
            }
            case 1:
                for (std::uint32_t n = s.u32(); n; --n) {
                    if (s.byte() != 0x60) s.fail("expected function type");
                    FuncType t;
                    for (std::uint32_t k = s.u32(); k; --k) t.params.push_back(s.valtype());
                    for (std::uint32_t k = s.u32(); k; --k) t.results.push_back(s.valtype());
                    if (t.results.size() > 1) s.fail("multiple results");
                    m.types.push_back(std::move(t));
                }
                break;
            case 2:
                for (std::uint32_t n = s.u32(); n; --n) {
                    DecodedModule::Import imp;
                    imp.module = s.name();
                    imp.name = s.name();
                    imp.kind = DecodedModule::ExternKind(s.byte());
                    switch (imp.kind) {
                        case DecodedModule::ExternKind::FUNC:
                            imp.type_index = s.u32();
                            if (imp.type_index >= m.types.size()) s.fail("unknown type");
                            break;
                        case DecodedModule::ExternKind::MEMORY: {
                            std::uint8_t flags = s.byte();
                            if (flags > 1) s.fail("unsupported memory flags");
                            imp.min_pages = s.u32();
                            if (flags) imp.max_pages = s.u32();
                            break;
                        }
                        case DecodedModule::ExternKind::GLOBAL: {
                            imp.global_type = s.valtype();
                            std::uint8_t mut = s.byte();
                            if (mut > 1) s.fail("invalid mutability");
                            imp.mut = mut;
                            break;
                        }
                        default: s.fail("unsupported import kind");
                    }
                    m.imports.push_back(std::move(imp));
                }
                break;
            case 3:
                for (std::uint32_t n = s.u32(); n; --n) {
                    m.functions.push_back(s.u32());
                    if (m.functions.back() >= m.types.size()) s.fail("unknown type");
                }
                break;
            case 7:
                for (std::uint32_t n = s.u32(); n; --n) {
                    DecodedModule::Export e;
                    e.name = s.name();
                    e.kind = DecodedModule::ExternKind(s.byte());
                    e.index = s.u32();
                    m.exports.push_back(std::move(e));
                }
                break;
            case 10: {
                const std::uint32_t n = s.u32();
                if (n != m.functions.size()) s.fail("function and code section sizes differ");
                for (std::uint32_t i = 0; i != n; ++i) {
                    Reader body{ s.take(s.u32()) };
                    DecodedModule::Code c;
                    std::uint64_t total = 0;
                    for (std::uint32_t g = body.u32(); g; --g) {
                        std::uint32_t count = body.u32();
                        total += count;
                        if (total > 50000) body.fail("too many locals");
                        ValType t = body.valtype();
                        c.locals.insert(c.locals.end(), count, t);
                    }
                    auto rest = body.in.subspan(body.pos);
                    c.body.assign(rest.begin(), rest.end());
                    m.code.push_back(std::move(c));
                }
                break;
            }
            case 11:
                for (std::uint32_t n = s.u32(); n; --n) {
                    if (s.u32() != 0) s.fail("unsupported data segment kind");
                    DecodedModule::Data d;
                    switch (s.byte()) {
                        case 0x41: d.offset = static_cast<std::uint32_t>(s.sleb(32)); break;
                        case 0x23: d.global = s.u32(); break;
                        default: s.fail("unsupported data offset expression");
                    }
                    if (s.byte() != 0x0b) s.fail("expected end of offset expression");
                    auto b = s.take(s.u32());
                    d.bytes.assign(b.begin(), b.end());
                    m.data.push_back(std::move(d));
                }
                break;
            default:
                r.fail("unsupported section " + std::to_string(id));
        }
        if (id != 0 and not s.done()) s.fail("section size mismatch");
    }
    if (m.code.size() != m.functions.size()) r.fail("function and code section sizes differ");
    return m;
}

std::vector<Instr> wasm::decode_body(std::span<const std::uint8_t> body)
{
    Reader r{ body };
    std::vector<Instr> out;
    while (not r.done()) {
        const std::uint8_t code = r.byte();
        auto &info = op_info(code);
        Instr in{ Op(code) };
        switch (info.cls) {
            case OpClass::INVALID:
                --r.pos;
                r.fail("unsupported opcode 0x" + [code] {
                    static constexpr char HEX[] = "0123456789abcdef";
                    return std::string{ HEX[code >> 4], HEX[code & 15] };
                }());
            case OpClass::CONTROL:
                switch (in.op) {
                    case Op::BLOCK: case Op::LOOP: case Op::IF: {
                        std::uint8_t bt = r.byte();
                        if (bt != 0x40 and (bt < 0x7c or bt > 0x7f)) r.fail("unsupported block type");
                        in.imm = bt;
                        break;
                    }
                    case Op::BR: case Op::BR_IF: case Op::CALL: in.imm = r.u32(); break;
                    default: break;
                }
                break;
            case OpClass::VARIABLE: in.imm = r.u32(); break;
            case OpClass::CONST:
                switch (in.op) {
                    case Op::I32_CONST: in.imm = static_cast<std::uint64_t>(r.sleb(32)); break;
                    case Op::I64_CONST: in.imm = static_cast<std::uint64_t>(r.sleb(64)); break;
                    case Op::F32_CONST: in.imm = r.fixed(4); break;
                    default:            in.imm = r.fixed(8); break;
                }
                break;
            case OpClass::LOAD:
            case OpClass::STORE: {
                const std::uint32_t align = r.u32();
                if (align > 3) r.fail("alignment too large");
                in.align = static_cast<std::uint8_t>(align);
                in.offset = r.u32();
                break;
            }
            case OpClass::NUMERIC: break;
        }
        out.push_back(in);
    }
    return out;
}
