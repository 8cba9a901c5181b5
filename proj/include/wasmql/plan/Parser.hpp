#pragma once

#include "wasmql/plan/Plan.hpp"
#include <string>
#include <string_view>
#include <vector>


namespace wasmql {

/*======================================================================================================================
 * Lexer
 *====================================================================================================================*/

struct Token
{
    enum Kind { IDENT, INT, FLOAT, STRING, PUNCT, END };

    Kind kind;
    std::string text; ///< identifier, punctuation, literal digits, or unescaped string contents
    std::size_t offset; ///< byte offset into the input
    std::size_t line = 1; ///< 1-based line; column is derived from the offset
};

/** Splits text into tokens.  Identifiers are case-preserving; keyword matching is case-insensitive and done by the
 * parser.  `--` starts a comment that extends to the end of the line. */
std::vector<Token> tokenize(std::string_view text);


/*======================================================================================================================
 * Expression parser
 *====================================================================================================================*/

/** Recursive-descent parser for scalar expressions.  Shared by the plan text format and the SQL front end.
 *
 *   expr    := or
 *   or      := and { OR and }
 *   and     := not { AND not }
 *   not     := NOT not | cmp
 *   cmp     := add [ ( = | <> | != | < | <= | > | >= ) add ]
 *   add     := mul { ( + | - ) mul }
 *   mul     := primary { ( * | / ) primary }
 *   primary := literal | - number | ident [ . ident ] | ( expr )
 *
 * Integer literals are `INT32` if they fit and `INT64` otherwise; an `L` suffix forces `INT64`.  Literals containing
 * `.` or an exponent are `FLOAT64`.  Strings are single-quoted with `''` as escape and become `CHAR(max(1, n))`. */
class Parser
{
    protected:
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;

    public:
    explicit Parser(std::string_view text) : tokens_(tokenize(text)) { }
    virtual ~Parser() = default;

    ExprPtr parse_expr();

    const Token & peek(std::size_t ahead = 0) const;
    const Token & next();
    bool at_end() const { return peek().kind == Token::END; }
    /** Whether the next token is the keyword `kw` (case-insensitive). */
    bool at_keyword(std::string_view kw, std::size_t ahead = 0) const;
    bool at_punct(std::string_view p, std::size_t ahead = 0) const;
    bool accept_keyword(std::string_view kw);
    bool accept_punct(std::string_view p);
    void expect_keyword(std::string_view kw);
    void expect_punct(std::string_view p);
    std::string expect_ident();
    [[noreturn]] void fail(const std::string &what) const;
    [[noreturn]] void fail(const Token &at, const std::string &what) const;

    protected:
    /** Hook for primaries the base grammar does not know, e.g. aggregate calls.  Returns `nullptr` to decline. */
    virtual ExprPtr parse_extension() { return nullptr; }

    private:
    ExprPtr parse_or();
    ExprPtr parse_and();
    ExprPtr parse_not();
    ExprPtr parse_cmp();
    ExprPtr parse_add();
    ExprPtr parse_mul();
    ExprPtr parse_primary();
    ExprPtr parse_number(bool negate);
};

/** Parses a single expression spanning all of `text`. */
ExprPtr parse_expression(std::string_view text);

/** Whether `word` is reserved and cannot be used as an unquoted identifier. */
bool is_keyword(std::string_view word);


/*======================================================================================================================
 * Plan text format
 *====================================================================================================================*/

/** Renders a plan one node per line, children indented by two spaces below their parent:
 *
 *   Sort keys=((R.x + R.y) ASC, R.z DESC)
 *     Project exprs=(R.x AS x, (R.y * 2) AS y2)
 *       Filter pred=(R.val < 3.14)
 *         Scan R
 *
 * Other node lines are `Scan <table> [AS <alias>]`, `HashGroupBy keys=(<expr>, ...) aggs=(<agg> [AS <name>], ...)`,
 * and `HashJoin on=(<build expr> = <probe expr>, ...)`, whose first child is the build input.  Aggregates are
 * `COUNT(*)`, `SUM(e)`, `MIN(e)`, `MAX(e)`, `AVG(e)`.  Empty lists are written `()`.  Lines starting with `--` and
 * blank lines are ignored. */
std::string to_text(const PlanNode &plan);

/** Parses the format produced by `to_text()`.  Throws `ParseError` carrying the byte offset of the offending token. */
PlanPtr parse_plan(std::string_view text);

}
