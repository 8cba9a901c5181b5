#pragma once

#include "wasmql/catalog/Catalog.hpp"
#include "wasmql/plan/Plan.hpp"
#include <string_view>


namespace wasmql {

/** Translates a query of the SQL subset
 *
 *   SELECT ( * | item { , item } ) FROM table { , table } [ WHERE expr ] [ GROUP BY expr { , expr } ]
 *     [ ORDER BY expr [ ASC | DESC ] { , expr [ ASC | DESC ] } ] [ ; ]
 *   item  := expr [ [AS] name ]        -- expr may contain COUNT(*), SUM, MIN, MAX, AVG
 *   table := name [ [AS] alias ]
 *
 * into a plan.  Conjuncts of WHERE over one table filter that table's scan.  Tables are joined left-deep in FROM
 * order, the tables so far forming the build side, on the equalities between them and the next table; other
 * conjuncts filter the first join where all their tables are present.  Without `catalog` unqualified columns are only
 * accepted for single-table queries.
 *
 * Throws `ParseError` with a byte offset for syntax errors and `PlanError` for queries outside the subset (e.g. a
 * table without a join condition, or a selected column that is neither grouped nor aggregated). */
PlanPtr parse_sql(std::string_view text, const Catalog *catalog = nullptr);

}
