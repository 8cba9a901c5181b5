#include "wasmql/plan/Parser.hpp"

#include "wasmql/util/error.hpp"
#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <limits>


using namespace wasmql;


/*======================================================================================================================
 * Lexer
 *====================================================================================================================*/

namespace {

bool ieq(std::string_view a, std::string_view b)
{
    return a.size() == b.size() and std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
        return std::toupper(static_cast<unsigned char>(x)) == std::toupper(static_cast<unsigned char>(y));
    });
}

constexpr std::array KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "ORDER", "BY", "ASC", "DESC", "AND", "OR", "NOT", "AS", "TRUE", "FALSE",
};

}

bool wasmql::is_keyword(std::string_view word)
{
    return std::any_of(KEYWORDS.begin(), KEYWORDS.end(), [&](auto kw) { return ieq(word, kw); });
}

std::vector<Token> wasmql::tokenize(std::string_view text)
{
    std::vector<Token> tokens;
    std::size_t i = 0, line = 1;
    auto is_digit = [&](std::size_t k) { return k < text.size() and std::isdigit(static_cast<unsigned char>(text[k])); };
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') { ++line; ++i; continue; }
        if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
        if (c == '-' and i + 1 < text.size() and text[i + 1] == '-') {
            while (i < text.size() and text[i] != '\n') ++i;
            continue;
        }
        const std::size_t start = i;
        if (std::isalpha(static_cast<unsigned char>(c)) or c == '_') {
            while (i < text.size() and (std::isalnum(static_cast<unsigned char>(text[i])) or text[i] == '_')) ++i;
            tokens.push_back({ Token::IDENT, std::string(text.substr(start, i - start)), start, line });
        } else if (is_digit(i) or (c == '.' and is_digit(i + 1))) {
            bool is_float = false;
            while (is_digit(i)) ++i;
            if (i < text.size() and text[i] == '.') {
                is_float = true;
                ++i;
                while (is_digit(i)) ++i;
            }
            if (i < text.size() and (text[i] == 'e' or text[i] == 'E')) {
                std::size_t k = i + 1;
                if (k < text.size() and (text[k] == '+' or text[k] == '-')) ++k;
                if (is_digit(k)) {
                    is_float = true;
                    i = k;
                    while (is_digit(i)) ++i;
                }
            }
            if (not is_float and i < text.size() and (text[i] == 'L' or text[i] == 'l')) ++i;
            if (i < text.size() and (std::isalnum(static_cast<unsigned char>(text[i])) or text[i] == '_'))
                throw ParseError(start, "malformed number '" + std::string(text.substr(start, i + 1 - start)) + "'");
            tokens.push_back({ is_float ? Token::FLOAT : Token::INT, std::string(text.substr(start, i - start)), start,
                               line });
        } else if (c == '\'') {
            std::string s;
            ++i;
            for (;;) {
                if (i >= text.size()) throw ParseError(start, "unterminated string literal");
                if (text[i] == '\'') {
                    if (i + 1 < text.size() and text[i + 1] == '\'') {
                        s += '\'';
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                if (text[i] == '\n') ++line;
                s += text[i++];
            }
            tokens.push_back({ Token::STRING, std::move(s), start, line });
        } else {
            static constexpr std::array TWO = { "<=", ">=", "<>", "!=" };
            std::string_view two = text.substr(i, 2);
            if (std::find(TWO.begin(), TWO.end(), two) != TWO.end()) {
                i += 2;
                tokens.push_back({ Token::PUNCT, std::string(two), start, line });
            } else if (std::string_view("(),.*+-/=<>;").find(c) != std::string_view::npos) {
                ++i;
                tokens.push_back({ Token::PUNCT, std::string(1, c), start, line });
            } else {
                throw ParseError(start, std::string("unexpected character '") + c + "'");
            }
        }
    }
    tokens.push_back({ Token::END, "", text.size(), line });
    return tokens;
}


/*======================================================================================================================
 * Parser
 *====================================================================================================================*/

const Token & Parser::peek(std::size_t ahead) const
{
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
}

const Token & Parser::next()
{
    const Token &t = peek();
    if (pos_ < tokens_.size() - 1) ++pos_;
    return t;
}

bool Parser::at_keyword(std::string_view kw, std::size_t ahead) const
{
    return peek(ahead).kind == Token::IDENT and ieq(peek(ahead).text, kw);
}

bool Parser::at_punct(std::string_view p, std::size_t ahead) const
{
    return peek(ahead).kind == Token::PUNCT and peek(ahead).text == p;
}

bool Parser::accept_keyword(std::string_view kw)
{
    if (not at_keyword(kw)) return false;
    next();
    return true;
}

bool Parser::accept_punct(std::string_view p)
{
    if (not at_punct(p)) return false;
    next();
    return true;
}

void Parser::expect_keyword(std::string_view kw)
{
    if (not accept_keyword(kw)) fail("expected " + std::string(kw));
}

void Parser::expect_punct(std::string_view p)
{
    if (not accept_punct(p)) fail("expected '" + std::string(p) + "'");
}

std::string Parser::expect_ident()
{
    if (peek().kind != Token::IDENT or is_keyword(peek().text)) fail("expected identifier");
    return next().text;
}

void Parser::fail(const std::string &what) const
{
    fail(peek(), what);
}

void Parser::fail(const Token &at, const std::string &what) const
{
    std::string found = at.kind == Token::END ? "end of input" : "'" + at.text + "'";
    throw ParseError(at.offset, what + ", found " + found);
}

ExprPtr Parser::parse_expr()
{
    return parse_or();
}

ExprPtr Parser::parse_or()
{
    std::vector<ExprPtr> ops{ parse_and() };
    while (accept_keyword("OR")) ops.push_back(parse_and());
    return ops.size() == 1 ? ops[0] : make_logic(LogicOp::OR, std::move(ops));
}

ExprPtr Parser::parse_and()
{
    std::vector<ExprPtr> ops{ parse_not() };
    while (accept_keyword("AND")) ops.push_back(parse_not());
    return ops.size() == 1 ? ops[0] : make_logic(LogicOp::AND, std::move(ops));
}

ExprPtr Parser::parse_not()
{
    if (accept_keyword("NOT")) return make_not(parse_not());
    return parse_cmp();
}

ExprPtr Parser::parse_cmp()
{
    auto left = parse_add();
    static constexpr std::pair<const char*, CmpOp> OPS[] = {
        { "=", CmpOp::EQ }, { "<>", CmpOp::NE }, { "!=", CmpOp::NE }, { "<", CmpOp::LT },
        { "<=", CmpOp::LE }, { ">", CmpOp::GT }, { ">=", CmpOp::GE },
    };
    for (auto [text, op] : OPS)
        if (accept_punct(text)) return make_cmp(op, left, parse_add());
    return left;
}

ExprPtr Parser::parse_add()
{
    auto left = parse_mul();
    for (;;) {
        if (accept_punct("+")) left = make_arith(ArithOp::ADD, left, parse_mul());
        else if (accept_punct("-")) left = make_arith(ArithOp::SUB, left, parse_mul());
        else return left;
    }
}

ExprPtr Parser::parse_mul()
{
    auto left = parse_primary();
    for (;;) {
        if (accept_punct("*")) left = make_arith(ArithOp::MUL, left, parse_primary());
        else if (accept_punct("/")) left = make_arith(ArithOp::DIV, left, parse_primary());
        else return left;
    }
}

ExprPtr Parser::parse_number(bool negate)
{
    const Token &t = next();
    std::string digits = (negate ? "-" : "") + t.text;
    if (t.kind == Token::FLOAT) {
        double d;
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
        if (ec != std::errc() or p != digits.data() + digits.size()) fail(t, "invalid number");
        return make_literal(d);
    }
    bool force64 = digits.back() == 'L' or digits.back() == 'l';
    if (force64) digits.pop_back();
    std::int64_t v;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() or p != digits.data() + digits.size()) fail(t, "integer literal out of range");
    if (not force64 and v >= std::numeric_limits<std::int32_t>::min() and v <= std::numeric_limits<std::int32_t>::max())
        return make_literal(static_cast<std::int32_t>(v));
    return make_literal(v);
}

ExprPtr Parser::parse_primary()
{
    if (auto e = parse_extension()) return e;
    const Token &t = peek();
    switch (t.kind) {
        case Token::INT:
        case Token::FLOAT:
            return parse_number(false);
        case Token::STRING: {
            next();
            if (t.text.size() > DataType::MAX_CHAR_LENGTH) fail(t, "string literal too long");
            return make_literal(t.text);
        }
        case Token::PUNCT:
            if (accept_punct("(")) {
                auto e = parse_expr();
                expect_punct(")");
                return e;
            }
            if (at_punct("-") and (peek(1).kind == Token::INT or peek(1).kind == Token::FLOAT)) {
                next();
                return parse_number(true);
            }
            if (at_punct("-")) fail(peek(1), "unary minus is only supported on numeric literals");
            fail("expected expression");
        case Token::IDENT: {
            if (accept_keyword("TRUE")) return make_literal(true);
            if (accept_keyword("FALSE")) return make_literal(false);
            std::string first = expect_ident();
            if (accept_punct(".")) return make_column(std::move(first), expect_ident());
            return make_column({}, std::move(first));
        }
        case Token::END:
            fail("expected expression");
    }
    fail("expected expression");
}

ExprPtr wasmql::parse_expression(std::string_view text)
{
    Parser p(text);
    auto e = p.parse_expr();
    if (not p.at_end()) p.fail("unexpected trailing input");
    return e;
}


/*======================================================================================================================
 * Plan text format
 *====================================================================================================================*/

namespace {

void render(const PlanNode &plan, std::size_t depth, std::string &out)
{
    out.append(2 * depth, ' ');
    out += to_string(plan.kind());
    std::visit([&](auto &op) {
        using T = std::decay_t<decltype(op)>;
        auto list = [&](const char *label, std::size_t n, auto &&item) {
            out += ' ';
            out += label;
            out += "=(";
            for (std::size_t i = 0; i != n; ++i) {
                if (i) out += ", ";
                item(i);
            }
            out += ')';
        };
        if constexpr (std::is_same_v<T, ScanOp>) {
            out += ' ' + op.table;
            if (not op.alias.empty() and op.alias != op.table) out += " AS " + op.alias;
        } else if constexpr (std::is_same_v<T, FilterOp>) {
            out += " pred=" + to_string(*op.predicate);
        } else if constexpr (std::is_same_v<T, ProjectOp>) {
            list("exprs", op.exprs.size(), [&](std::size_t i) {
                out += to_string(*op.exprs[i]);
                if (i < op.names.size() and not op.names[i].empty()) out += " AS " + op.names[i];
            });
        } else if constexpr (std::is_same_v<T, GroupByOp>) {
            list("keys", op.keys.size(), [&](std::size_t i) { out += to_string(*op.keys[i]); });
            list("aggs", op.aggs.size(), [&](std::size_t i) {
                out += to_string(op.aggs[i]);
                if (not op.aggs[i].name.empty()) out += " AS " + op.aggs[i].name;
            });
        } else if constexpr (std::is_same_v<T, JoinOp>) {
            if (op.keys.empty() and op.predicate) {
                auto l = op.predicate->template as<Logic>();
                if (l and l->op == LogicOp::AND)
                    list("on", l->operands.size(), [&](std::size_t i) { out += to_string(*l->operands[i]); });
                else
                    out += " on=(" + to_string(*op.predicate) + ")";
            } else {
                list("on", op.keys.size(), [&](std::size_t i) {
                    out += to_string(*op.keys[i].first) + " = " + to_string(*op.keys[i].second);
                });
            }
        } else {
            list("keys", op.order.keys.size(), [&](std::size_t i) {
                out += to_string(*op.order.keys[i].expr);
                out += op.order.keys[i].direction == Direction::ASC ? " ASC" : " DESC";
            });
        }
    }, plan.op);
    out += '\n';
    for (auto &c : plan.children) render(*c, depth + 1, out);
}

struct NodeLineParser : Parser
{
    using Parser::Parser;

    std::string alias()
    {
        return accept_keyword("AS") ? expect_ident() : std::string();
    }

    template<typename F>
    void list(const char *label, F &&item)
    {
        if (not at_keyword(label)) fail(std::string("expected ") + label + "=");
        next();
        expect_punct("=");
        expect_punct("(");
        if (accept_punct(")")) return;
        do item(); while (accept_punct(","));
        expect_punct(")");
    }

    AggFn agg()
    {
        static constexpr std::pair<const char*, AggKind> KINDS[] = {
            { "COUNT", AggKind::COUNT_STAR }, { "SUM", AggKind::SUM }, { "MIN", AggKind::MIN },
            { "MAX", AggKind::MAX }, { "AVG", AggKind::AVG },
        };
        for (auto [name, kind] : KINDS) {
            if (not at_keyword(name)) continue;
            next();
            expect_punct("(");
            AggFn a{ kind, nullptr, {} };
            if (kind == AggKind::COUNT_STAR) expect_punct("*");
            else a.arg = parse_expr();
            expect_punct(")");
            a.name = alias();
            return a;
        }
        fail("expected aggregate");
    }

    /** Parses one node line.  Children are attached by the caller. */
    PlanNode node()
    {
        PlanNode n{ ScanOp{}, {}, std::nullopt };
        if (accept_keyword("Scan")) {
            ScanOp s;
            s.table = expect_ident();
            s.alias = alias();
            n.op = std::move(s);
        } else if (accept_keyword("Filter")) {
            if (not accept_keyword("pred")) fail("expected pred=");
            expect_punct("=");
            n.op = FilterOp{ parse_expr() };
        } else if (accept_keyword("Project")) {
            ProjectOp p;
            list("exprs", [&] {
                p.exprs.push_back(parse_expr());
                p.names.push_back(alias());
            });
            if (std::all_of(p.names.begin(), p.names.end(), [](auto &s) { return s.empty(); })) p.names.clear();
            n.op = std::move(p);
        } else if (accept_keyword("HashGroupBy")) {
            GroupByOp g;
            list("keys", [&] { g.keys.push_back(parse_expr()); });
            list("aggs", [&] { g.aggs.push_back(agg()); });
            n.op = std::move(g);
        } else if (accept_keyword("HashJoin")) {
            /* Key sides are assigned when the plan is annotated. */
            std::vector<ExprPtr> conjuncts;
            list("on", [&] { conjuncts.push_back(parse_expr()); });
            if (conjuncts.empty()) fail("join without keys");
            n.op = JoinOp{ {}, conjuncts.size() == 1 ? conjuncts[0] : make_logic(LogicOp::AND, conjuncts) };
        } else if (accept_keyword("Sort")) {
            SortOp s;
            list("keys", [&] {
                OrderKey k{ parse_expr(), Direction::ASC };
                if (accept_keyword("DESC")) k.direction = Direction::DESC;
                else accept_keyword("ASC");
                s.order.keys.push_back(std::move(k));
            });
            n.op = std::move(s);
        } else {
            fail("expected operator name");
        }
        if (not at_end()) fail("unexpected trailing input");
        return n;
    }
};

}

std::string wasmql::to_text(const PlanNode &plan)
{
    std::string out;
    render(plan, 0, out);
    return out;
}

PlanPtr wasmql::parse_plan(std::string_view text)
{
    struct Pending
    {
        std::size_t indent;
        PlanNode node;
    };
    std::vector<Pending> stack;
    PlanPtr root;

    /* Closes every pending node indented at least `indent`, attaching it to its parent. */
    auto close = [&](std::size_t indent) {
        while (not stack.empty() and stack.back().indent >= indent) {
            auto done = std::make_shared<const PlanNode>(std::move(stack.back().node));
            stack.pop_back();
            if (stack.empty()) {
                if (root) throw ParseError(0, "plan text contains more than one root");
                root = std::move(done);
            } else {
                stack.back().node.children.push_back(std::move(done));
            }
        }
    };

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        const std::size_t line_start = pos;
        pos = eol + 1;

        std::size_t indent = line.find_first_not_of(' ');
        if (indent == std::string_view::npos) continue;
        std::string_view body = line.substr(indent);
        if (body.starts_with("--") or body.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        PlanNode n{ ScanOp{}, {}, std::nullopt };
        try {
            n = NodeLineParser(body).node();
        } catch (const ParseError &e) {
            std::string msg = e.what();
            msg = msg.substr(msg.find(": ") + 2);
            throw ParseError(line_start + indent + e.offset, msg);
        }
        if (stack.empty()) {
            if (indent != 0) throw ParseError(line_start, "root node must not be indented");
        } else if (indent > stack.back().indent + 2 or indent % 2 != 0) {
            throw ParseError(line_start, "inconsistent indentation");
        }
        close(indent);
        if (stack.empty() and root) throw ParseError(line_start, "plan text contains more than one root");
        stack.push_back({ indent, std::move(n) });
    }
    close(0);
    if (not root) throw ParseError(text.size(), "empty plan");
    return root;
}
