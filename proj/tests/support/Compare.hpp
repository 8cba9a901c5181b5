#pragma once

#include "wasmql/ref/Compare.hpp"


namespace wasmql::test {

using ref::check_order;
using ref::compare_tables;
using ref::compare_to_reference;
using ref::format_row;

}
