#include "wasmql/runtime/Engine.hpp"

#include "wasmql/util/error.hpp"
#include <cstdlib>


using namespace wasmql;


#ifdef WASMQL_HAVE_WASMTIME
namespace wasmql { std::unique_ptr<Engine> make_wasmtime_engine(); }
#endif

std::vector<std::string> wasmql::available_engines()
{
#ifdef WASMQL_HAVE_WASMTIME
    return { "wasmtime", "interp" };
#else
    return { "interp" };
#endif
}

std::unique_ptr<Engine> wasmql::make_engine(std::string_view name)
{
    std::string n(name);
    if (n.empty()) {
        if (const char *env = std::getenv("WASMQL_ENGINE"); env and *env) n = env;
        else n = available_engines().front();
    }
#ifdef WASMQL_HAVE_WASMTIME
    if (n == "wasmtime") return make_wasmtime_engine();
#endif
    if (n == "interp") return make_interp_engine();
    std::string known;
    for (auto &e : available_engines()) known += (known.empty() ? "" : ", ") + e;
    throw EngineError("unknown or unavailable engine '" + n + "' (available: " + known + ")");
}
