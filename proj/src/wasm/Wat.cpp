#include "wasmql/wasm/Builder.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <set>


using namespace wasmql;
using namespace wasmql::wasm;


namespace {

/** A `$id` for `name`, or empty if it is unusable or taken. */
std::string make_id(const std::string &name, std::set<std::string> &taken)
{
    if (name.empty()) return {};
    std::string id = "$";
    for (char c : name) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) or
                        std::string_view("!#$%&'*+-./:<=>?@\\^_`|~").find(c) != std::string_view::npos;
        id += ok ? c : '_';
    }
    if (not taken.insert(id).second) return {};
    return id;
}

std::string quote(std::span<const std::uint8_t> bytes)
{
    static constexpr char HEX[] = "0123456789abcdef";
    std::string s = "\"";
    for (auto b : bytes) {
        if (b >= 0x20 and b < 0x7f and b != '"' and b != '\\') {
            s += static_cast<char>(b);
        } else {
            s += '\\';
            s += HEX[b >> 4];
            s += HEX[b & 15];
        }
    }
    return s + "\"";
}

template<typename F, typename Bits>
std::string float_text(F v)
{
    if (std::isnan(v)) {
        Bits bits = std::bit_cast<Bits>(v);
        constexpr int mantissa = sizeof(F) == 8 ? 52 : 23;
        Bits payload = bits & ((Bits(1) << mantissa) - 1);
        char buf[32];
        auto r = std::to_chars(buf, buf + sizeof buf, static_cast<std::uint64_t>(payload), 16);
        return std::string(std::signbit(v) ? "-" : "") + "nan:0x" + std::string(buf, r.ptr);
    }
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}

std::string ModuleBuilder::render_wat() const
{
    std::set<std::string> taken;
    std::vector<std::string> global_ids, func_ids;
    for (auto &g : globals_) global_ids.push_back(make_id(g.name, taken));
    for (std::uint32_t i = 0; i != num_functions(); ++i) func_ids.push_back(make_id(function_name(FuncIndex{ i }), taken));
    auto global_ref = [&](std::uint64_t i) { return global_ids[i].empty() ? std::to_string(i) : global_ids[i]; };
    auto func_ref = [&](std::uint64_t i) { return func_ids[i].empty() ? std::to_string(i) : func_ids[i]; };

    std::vector<FuncType> types;
    auto type_index = [&](const FuncType &t) {
        auto it = std::find(types.begin(), types.end(), t);
        if (it == types.end()) {
            types.push_back(t);
            return types.size() - 1;
        }
        return std::size_t(it - types.begin());
    };
    for (auto &i : func_imports_) type_index(i.type);
    for (auto &f : functions_) type_index(f->type());

    auto signature = [](const FuncType &t) {
        std::string s;
        if (not t.params.empty()) {
            s += " (param";
            for (auto p : t.params) s += std::string(" ") + to_string(p);
            s += ")";
        }
        if (not t.results.empty()) {
            s += " (result";
            for (auto r : t.results) s += std::string(" ") + to_string(r);
            s += ")";
        }
        return s;
    };

    std::string out = "(module\n";
    for (std::size_t i = 0; i != types.size(); ++i)
        out += "  (type (;" + std::to_string(i) + ";) (func" + signature(types[i]) + "))\n";
    if (memory_) {
        out += "  (import \"env\" \"memory\" (memory (;0;) " + std::to_string(memory_->first);
        if (memory_->second) out += " " + std::to_string(*memory_->second);
        out += "))\n";
    }
    for (std::size_t i = 0; i != globals_.size(); ++i) {
        auto &g = globals_[i];
        std::string type = to_string(g.type);
        if (g.mut) type = "(mut " + type + ")";
        out += "  (import \"env\" " + quote({ reinterpret_cast<const std::uint8_t*>(g.name.data()), g.name.size() }) +
               " (global " + (global_ids[i].empty() ? "" : global_ids[i] + " ") + "(;" + std::to_string(i) + ";) " +
               type + "))\n";
    }
    for (std::size_t i = 0; i != func_imports_.size(); ++i) {
        auto &f = func_imports_[i];
        out += "  (import \"env\" " + quote({ reinterpret_cast<const std::uint8_t*>(f.name.data()), f.name.size() }) +
               " (func " + (func_ids[i].empty() ? "" : func_ids[i] + " ") + "(;" + std::to_string(i) + ";) (type " +
               std::to_string(type_index(f.type)) + ")" + signature(f.type) + "))\n";
    }

    for (auto &fp : functions_) {
        auto &f = *fp;
        const auto idx = f.index().value;
        out += "  (func " + (func_ids[idx].empty() ? "" : func_ids[idx] + " ") + "(;" + std::to_string(idx) +
               ";) (type " + std::to_string(type_index(f.type())) + ")" + signature(f.type()) + "\n";
        if (not f.declared_locals().empty()) {
            out += "    (local";
            for (auto t : f.declared_locals()) out += std::string(" ") + to_string(t);
            out += ")\n";
        }
        std::size_t depth = 2;
        auto body = f.body();
        for (std::size_t k = 0; k != body.size(); ++k) {
            auto &in = body[k];
            if (k + 1 == body.size() and in.op == Op::END) break; // the function's own end
            if (in.op == Op::END or in.op == Op::ELSE) --depth;
            std::string line(2 * depth, ' ');
            auto &info = op_info(in.op);
            line += info.name;
            switch (info.cls) {
                case OpClass::CONTROL:
                    switch (in.op) {
                        case Op::BLOCK: case Op::LOOP: case Op::IF:
                            if (in.imm != 0x40) line += std::string(" (result ") + to_string(ValType(in.imm)) + ")";
                            break;
                        case Op::BR: case Op::BR_IF: line += " " + std::to_string(in.imm); break;
                        case Op::CALL: line += " " + func_ref(in.imm); break;
                        default: break;
                    }
                    break;
                case OpClass::VARIABLE:
                    if (in.op == Op::GLOBAL_GET or in.op == Op::GLOBAL_SET) line += " " + global_ref(in.imm);
                    else line += " " + std::to_string(in.imm);
                    break;
                case OpClass::CONST:
                    switch (in.op) {
                        case Op::I32_CONST: line += " " + std::to_string(static_cast<std::int32_t>(in.imm)); break;
                        case Op::I64_CONST: line += " " + std::to_string(static_cast<std::int64_t>(in.imm)); break;
                        case Op::F32_CONST:
                            line += " " + float_text<float, std::uint32_t>(
                                std::bit_cast<float>(static_cast<std::uint32_t>(in.imm)));
                            break;
                        default:
                            line += " " + float_text<double, std::uint64_t>(std::bit_cast<double>(in.imm));
                            break;
                    }
                    break;
                case OpClass::LOAD:
                case OpClass::STORE:
                    if (in.offset) line += " offset=" + std::to_string(in.offset);
                    if (in.align != info.align) line += " align=" + std::to_string(1u << in.align);
                    break;
                default:
                    break;
            }
            out += line + "\n";
            if (in.op == Op::BLOCK or in.op == Op::LOOP or in.op == Op::IF or in.op == Op::ELSE) ++depth;
        }
        out.back() = ')';
        out += "\n";
    }

    for (auto &e : exports_)
        out += "  (export " + quote({ reinterpret_cast<const std::uint8_t*>(e.name.data()), e.name.size() }) +
               " (func " + func_ref(e.func.value) + "))\n";
    for (std::size_t i = 0; i != data_.size(); ++i) {
        auto &d = data_[i];
        std::string offset = d.base ? "(global.get " + global_ref(d.base->value) + ")"
                                    : "(i32.const " + std::to_string(static_cast<std::int32_t>(d.offset)) + ")";
        out += "  (data (;" + std::to_string(i) + ";) " + offset + " " + quote(d.bytes) + ")\n";
    }
    out += ")\n";
    return out;
}
