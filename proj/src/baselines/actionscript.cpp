// SPDX-License-Identifier: Apache-2.0
#include <leo/actionscript.hpp>

#include "actionscript_grammar.hpp"

#include <fmt/format.h>

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

namespace leo::acts
{

const char* const kGrammar = kGrammarText;

const char* to_string(CmpOp op) noexcept
{
    switch (op)
    {
        case CmpOp::eq: return "==";
        case CmpOp::ne: return "!=";
        case CmpOp::lt: return "<";
        case CmpOp::le: return "<=";
        case CmpOp::gt: return ">";
        case CmpOp::ge: return ">=";
    }
    return "==";
}

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind)
    {
        case ErrorKind::lexical: return "lexical error";
        case ErrorKind::syntactic: return "syntax error";
        case ErrorKind::unbound_identifier: return "unbound identifier";
        case ErrorKind::repeat_bound_exceeded: return "repeat bound exceeded";
    }
    return "syntax error";
}

std::string ScriptError::describe() const
{
    return fmt::format("line {}, column {}: {}: {}", pos.line, pos.column, to_string(kind), message);
}

bool RepeatStmt::operator==(const RepeatStmt& other) const
{
    return count == other.count && body == other.body;
}

bool IfStmt::operator==(const IfStmt& other) const
{
    return condition == other.condition && then_body == other.then_body && else_body == other.else_body;
}

namespace
{

// --- lexer -------------------------------------------------------------------

enum class Tok
{
    identifier,
    keyword,
    number,
    string,
    punct,
    end,
};

struct Token
{
    Tok type = Tok::end;
    std::string text;
    double number = 0.0;
    bool integral = false;
    SourcePos pos;
};

const std::set<std::string, std::less<>> kKeywords = {"call", "repeat", "if", "else", "halt", "true", "false"};

struct Failure
{
    ScriptError error;
};

[[noreturn]] void fail(ErrorKind kind, SourcePos pos, std::string message)
{
    throw Failure{{kind, pos, std::move(message)}};
}

class Lexer
{
public:
    explicit Lexer(std::string_view src): _src(src) {}

    std::vector<Token> run()
    {
        std::vector<Token> out;
        for (;;)
        {
            skip_space();
            Token tok;
            tok.pos = {_line, _col};
            if (_i >= _src.size())
            {
                out.push_back(tok);
                return out;
            }
            char c = _src[_i];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
            {
                std::size_t start = _i;
                while (_i < _src.size() &&
                       (std::isalnum(static_cast<unsigned char>(_src[_i])) || _src[_i] == '_'))
                    advance();
                tok.text = std::string(_src.substr(start, _i - start));
                tok.type = kKeywords.count(tok.text) ? Tok::keyword : Tok::identifier;
            }
            else if (std::isdigit(static_cast<unsigned char>(c)) ||
                     (c == '-' && _i + 1 < _src.size() && std::isdigit(static_cast<unsigned char>(_src[_i + 1]))))
            {
                lex_number(tok);
            }
            else if (c == '"')
            {
                lex_string(tok);
            }
            else
            {
                lex_punct(tok);
            }
            out.push_back(std::move(tok));
        }
    }

private:
    void advance()
    {
        if (_src[_i] == '\n')
        {
            ++_line;
            _col = 1;
        }
        else
        {
            ++_col;
        }
        ++_i;
    }

    void skip_space()
    {
        while (_i < _src.size())
        {
            char c = _src[_i];
            if (c == '#')
            {
                while (_i < _src.size() && _src[_i] != '\n')
                    advance();
            }
            else if (std::isspace(static_cast<unsigned char>(c)))
            {
                advance();
            }
            else
            {
                return;
            }
        }
    }

    bool digit_at(std::size_t i) const
    {
        return i < _src.size() && std::isdigit(static_cast<unsigned char>(_src[i]));
    }

    void lex_number(Token& tok)
    {
        std::size_t start = _i;
        bool integral = true;
        if (_src[_i] == '-')
        {
            integral = false;
            advance();
        }
        while (digit_at(_i))
            advance();
        if (_i < _src.size() && _src[_i] == '.' && digit_at(_i + 1))
        {
            integral = false;
            advance();
            while (digit_at(_i))
                advance();
        }
        if (_i < _src.size() && (_src[_i] == 'e' || _src[_i] == 'E'))
        {
            std::size_t j = _i + 1;
            if (j < _src.size() && (_src[j] == '+' || _src[j] == '-'))
                ++j;
            if (!digit_at(j))
                fail(ErrorKind::lexical, {_line, _col}, "malformed exponent in number");
            integral = false;
            while (_i < j)
                advance();
            while (digit_at(_i))
                advance();
        }
        tok.type = Tok::number;
        tok.text = std::string(_src.substr(start, _i - start));
        auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), tok.number);
        if (ec != std::errc() || !std::isfinite(tok.number))
            fail(ErrorKind::lexical, tok.pos, "number '" + tok.text + "' is out of range");
        tok.integral = integral;
        if (std::isalpha(static_cast<unsigned char>(_i < _src.size() ? _src[_i] : ' ')) ||
            (_i < _src.size() && _src[_i] == '_'))
            fail(ErrorKind::lexical, {_line, _col}, "unexpected character after number");
    }

    void lex_string(Token& tok)
    {
        tok.type = Tok::string;
        advance();
        for (;;)
        {
            if (_i >= _src.size() || _src[_i] == '\n')
                fail(ErrorKind::lexical, tok.pos, "unterminated string literal");
            char c = _src[_i];
            if (c == '"')
            {
                advance();
                return;
            }
            if (c == '\\')
            {
                SourcePos at{_line, _col};
                advance();
                if (_i >= _src.size())
                    fail(ErrorKind::lexical, tok.pos, "unterminated string literal");
                switch (_src[_i])
                {
                    case '"': tok.text += '"'; break;
                    case '\\': tok.text += '\\'; break;
                    case 'n': tok.text += '\n'; break;
                    case 't': tok.text += '\t'; break;
                    default: fail(ErrorKind::lexical, at, std::string("unknown escape sequence '\\") + _src[_i] + "'");
                }
                advance();
                continue;
            }
            tok.text += c;
            advance();
        }
    }

    void lex_punct(Token& tok)
    {
        tok.type = Tok::punct;
        char c = _src[_i];
        char next = _i + 1 < _src.size() ? _src[_i + 1] : '\0';
        if ((c == '=' || c == '!' || c == '<' || c == '>') && next == '=')
        {
            tok.text = {c, next};
            advance();
            advance();
            return;
        }
        if (std::string_view("=<>(){},;.").find(c) != std::string_view::npos)
        {
            tok.text = std::string(1, c);
            advance();
            return;
        }
        if (static_cast<unsigned char>(c) < 0x20 || static_cast<unsigned char>(c) >= 0x7f)
            fail(ErrorKind::lexical, tok.pos, fmt::format("unexpected character 0x{:02x}", static_cast<unsigned char>(c)));
        fail(ErrorKind::lexical, tok.pos, std::string("unexpected character '") + c + "'");
    }

    std::string_view _src;
    std::size_t _i = 0;
    int _line = 1;
    int _col = 1;
};

// --- parser ------------------------------------------------------------------

std::string describe(const Token& tok)
{
    switch (tok.type)
    {
        case Tok::end: return "end of input";
        case Tok::string: return "string literal";
        case Tok::number: return "number " + tok.text;
        default: return "'" + tok.text + "'";
    }
}

class Parser
{
public:
    explicit Parser(std::vector<Token> tokens): _toks(std::move(tokens)) {}

    Program run()
    {
        Program program;
        _scopes.emplace_back();
        while (peek().type != Tok::end)
            program.statements.push_back(statement());
        return program;
    }

private:
    const Token& peek(std::size_t ahead = 0) const
    {
        auto i = std::min(_pos + ahead, _toks.size() - 1);
        return _toks[i];
    }

    const Token& take() { return _toks[std::min(_pos++, _toks.size() - 1)]; }

    bool is_punct(const Token& tok, std::string_view p) const { return tok.type == Tok::punct && tok.text == p; }
    bool is_keyword(const Token& tok, std::string_view k) const { return tok.type == Tok::keyword && tok.text == k; }

    const Token& expect_punct(std::string_view p, std::string_view context)
    {
        const auto& tok = peek();
        if (!is_punct(tok, p))
            fail(ErrorKind::syntactic, tok.pos,
                 fmt::format("expected '{}' {} but found {}", p, context, describe(tok)));
        return take();
    }

    const Token& expect_identifier(std::string_view what)
    {
        const auto& tok = peek();
        if (tok.type == Tok::keyword)
            fail(ErrorKind::syntactic, tok.pos, fmt::format("'{}' is a keyword and cannot be used as {}", tok.text, what));
        if (tok.type != Tok::identifier)
            fail(ErrorKind::syntactic, tok.pos, fmt::format("expected {} but found {}", what, describe(tok)));
        return take();
    }

    bool bound(const std::string& name) const
    {
        for (const auto& scope: _scopes)
        {
            if (scope.count(name))
                return true;
        }
        return false;
    }

    Block block(std::string_view owner)
    {
        expect_punct("{", fmt::format("to open the {} block", owner));
        _scopes.emplace_back();
        Block body;
        while (!is_punct(peek(), "}"))
        {
            if (peek().type == Tok::end)
                fail(ErrorKind::syntactic, peek().pos, fmt::format("missing '}}' to close the {} block", owner));
            body.push_back(statement());
        }
        take();
        _scopes.pop_back();
        return body;
    }

    Statement statement()
    {
        const auto& tok = peek();
        Statement st;
        st.pos = tok.pos;
        if (is_keyword(tok, "repeat"))
            st.node = repeat();
        else if (is_keyword(tok, "if"))
            st.node = if_stmt();
        else if (is_keyword(tok, "halt"))
            st.node = halt();
        else if (is_keyword(tok, "call") || (tok.type == Tok::identifier && is_punct(peek(1), "=")))
            st.node = call();
        else
            fail(ErrorKind::syntactic, tok.pos,
                 fmt::format("expected a statement (call, repeat, if or halt) but found {}", describe(tok)));
        return st;
    }

    CallStmt call()
    {
        CallStmt stmt;
        std::optional<std::string> binding;
        if (peek().type == Tok::identifier)
        {
            binding = take().text;
            take(); // '='
        }
        if (!is_keyword(peek(), "call"))
            fail(ErrorKind::syntactic, peek().pos, "expected 'call' but found " + describe(peek()));
        take();
        stmt.tool = expect_identifier("a tool name").text;
        expect_punct("(", "after the tool name");
        if (!is_punct(peek(), ")"))
        {
            for (;;)
            {
                Arg arg;
                arg.name = expect_identifier("an argument name").text;
                expect_punct("=", "after the argument name");
                arg.value = value();
                stmt.args.push_back(std::move(arg));
                if (is_punct(peek(), ","))
                {
                    take();
                    continue;
                }
                break;
            }
        }
        expect_punct(")", "to close the argument list");
        expect_punct(";", "after the call");
        if (binding)
            _scopes.back().insert(*binding);
        stmt.binding = std::move(binding);
        return stmt;
    }

    FieldRef field()
    {
        const auto& name = expect_identifier("a result name");
        if (!bound(name.text))
            fail(ErrorKind::unbound_identifier, name.pos,
                 fmt::format("'{}' is not bound by an earlier call in this or an enclosing block", name.text));
        expect_punct(".", "between result name and field");
        const auto& member = expect_identifier("a field name");
        return {name.text, member.text};
    }

    Value value()
    {
        const auto& tok = peek();
        switch (tok.type)
        {
            case Tok::number: return {take().number};
            case Tok::string: return {take().text};
            case Tok::keyword:
                if (tok.text == "true" || tok.text == "false")
                    return {take().text == "true"};
                break;
            case Tok::identifier: return {field()};
            default: break;
        }
        fail(ErrorKind::syntactic, tok.pos, "expected a value but found " + describe(tok));
    }

    RepeatStmt repeat()
    {
        take();
        const auto& count = peek();
        if (count.type != Tok::number || !count.integral)
            fail(ErrorKind::syntactic, count.pos, "repeat needs a positive integer count but found " + describe(count));
        if (count.number > kMaxRepeat)
            fail(ErrorKind::repeat_bound_exceeded, count.pos,
                 fmt::format("repeat count {} exceeds the limit of {}", count.text, kMaxRepeat));
        if (count.number < 1)
            fail(ErrorKind::syntactic, count.pos, "repeat count must be at least 1");
        take();
        RepeatStmt stmt;
        stmt.count = static_cast<int>(count.number);
        stmt.body = block("repeat");
        return stmt;
    }

    IfStmt if_stmt()
    {
        take();
        IfStmt stmt;
        stmt.condition.lhs = field();
        const auto& op = peek();
        static const std::map<std::string, CmpOp, std::less<>> ops = {{"==", CmpOp::eq}, {"!=", CmpOp::ne},
                                                                     {"<", CmpOp::lt},  {"<=", CmpOp::le},
                                                                     {">", CmpOp::gt},  {">=", CmpOp::ge}};
        auto it = op.type == Tok::punct ? ops.find(op.text) : ops.end();
        if (it == ops.end())
            fail(ErrorKind::syntactic, op.pos, "expected a comparison operator but found " + describe(op));
        take();
        stmt.condition.op = it->second;
        stmt.condition.rhs = value();
        stmt.then_body = block("if");
        if (is_keyword(peek(), "else"))
        {
            take();
            stmt.else_body = block("else");
        }
        return stmt;
    }

    HaltStmt halt()
    {
        take();
        expect_punct("(", "after halt");
        const auto& text = peek();
        if (text.type != Tok::string)
            fail(ErrorKind::syntactic, text.pos, "halt needs a string literal but found " + describe(text));
        HaltStmt stmt{take().text};
        expect_punct(")", "to close halt");
        expect_punct(";", "after halt");
        return stmt;
    }

    std::vector<Token> _toks;
    std::size_t _pos = 0;
    std::vector<std::set<std::string>> _scopes;
};

// --- printer -----------------------------------------------------------------

std::string quote(const std::string& s)
{
    std::string out = "\"";
    for (char c: s)
    {
        switch (c)
        {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out + "\"";
}

std::string number_text(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string value_text(const Value& value)
{
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>)
                return number_text(v);
            else if constexpr (std::is_same_v<T, std::string>)
                return quote(v);
            else if constexpr (std::is_same_v<T, bool>)
                return v ? "true" : "false";
            else
                return v.binding + "." + v.field;
        },
        value.v);
}

void print_block(const Block& block, int depth, std::string& out);

void print_statement(const Statement& st, int depth, std::string& out)
{
    std::string indent(static_cast<std::size_t>(depth) * 4, ' ');
    std::visit(
        [&](const auto& node) {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, CallStmt>)
            {
                out += indent;
                if (node.binding)
                    out += *node.binding + " = ";
                out += "call " + node.tool + "(";
                for (std::size_t i = 0; i < node.args.size(); ++i)
                {
                    if (i)
                        out += ", ";
                    out += node.args[i].name + "=" + value_text(node.args[i].value);
                }
                out += ");\n";
            }
            else if constexpr (std::is_same_v<T, RepeatStmt>)
            {
                out += indent + "repeat " + std::to_string(node.count) + " {\n";
                print_block(node.body, depth + 1, out);
                out += indent + "}\n";
            }
            else if constexpr (std::is_same_v<T, IfStmt>)
            {
                const auto& c = node.condition;
                out += indent + "if " + c.lhs.binding + "." + c.lhs.field + " " + to_string(c.op) + " " +
                       value_text(c.rhs) + " {\n";
                print_block(node.then_body, depth + 1, out);
                out += indent + "}";
                if (!node.else_body.empty())
                {
                    out += " else {\n";
                    print_block(node.else_body, depth + 1, out);
                    out += indent + "}";
                }
                out += "\n";
            }
            else
            {
                out += indent + "halt(" + quote(node.report) + ");\n";
            }
        },
        st.node);
}

void print_block(const Block& block, int depth, std::string& out)
{
    for (const auto& st: block)
        print_statement(st, depth, out);
}

// --- interpreter -------------------------------------------------------------

struct RuntimeError
{
    std::string message;
};

struct HaltSignal
{
    std::string report;
};

struct StopSignal
{
};

class Interpreter
{
public:
    Interpreter(const tools::ToolRegistry& registry, sim::World& world, const ExecOptions& options, ExecResult& result):
        _registry(registry), _world(world), _options(options), _result(result)
    {
    }

    void run(const Block& block)
    {
        _scopes.emplace_back();
        for (const auto& st: block)
            exec(st);
        _scopes.pop_back();
    }

private:
    const json& lookup(const FieldRef& ref, SourcePos pos) const
    {
        for (auto it = _scopes.rbegin(); it != _scopes.rend(); ++it)
        {
            auto found = it->find(ref.binding);
            if (found == it->end())
                continue;
            auto field = found->second.find(ref.field);
            if (field == found->second.end())
                throw RuntimeError{fmt::format("line {}: result '{}' has no field '{}'", pos.line, ref.binding,
                                               ref.field)};
            return *field;
        }
        throw RuntimeError{fmt::format("line {}: '{}' is not bound", pos.line, ref.binding)};
    }

    json to_json_value(const Value& value, SourcePos pos) const
    {
        return std::visit(
            [&](const auto& v) -> json {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, FieldRef>)
                    return lookup(v, pos);
                else
                    return json(v);
            },
            value.v);
    }

    bool compare(const Condition& cond, SourcePos pos) const
    {
        const auto& lhs = lookup(cond.lhs, pos);
        auto rhs = to_json_value(cond.rhs, pos);
        auto ordered = [&](auto a, auto b) {
            switch (cond.op)
            {
                case CmpOp::eq: return a == b;
                case CmpOp::ne: return a != b;
                case CmpOp::lt: return a < b;
                case CmpOp::le: return a <= b;
                case CmpOp::gt: return a > b;
                case CmpOp::ge: return a >= b;
            }
            return false;
        };
        if (lhs.is_number() && rhs.is_number())
            return ordered(lhs.get<double>(), rhs.get<double>());
        if (lhs.is_string() && rhs.is_string())
            return ordered(lhs.get<std::string>(), rhs.get<std::string>());
        if (lhs.is_boolean() && rhs.is_boolean() && (cond.op == CmpOp::eq || cond.op == CmpOp::ne))
            return ordered(lhs.get<bool>(), rhs.get<bool>());
        if (lhs.is_null() || rhs.is_null())
        {
            if (cond.op == CmpOp::eq)
                return lhs.is_null() && rhs.is_null();
            if (cond.op == CmpOp::ne)
                return !(lhs.is_null() && rhs.is_null());
        }
        throw RuntimeError{fmt::format("line {}: cannot compare {} with {} using {}", pos.line, lhs.type_name(),
                                       rhs.type_name(), to_string(cond.op))};
    }

    void exec(const Statement& st)
    {
        if (_options.should_stop && _options.should_stop())
            throw StopSignal{};
        std::visit(
            [&](const auto& node) {
                using T = std::decay_t<decltype(node)>;
                if constexpr (std::is_same_v<T, CallStmt>)
                {
                    if (_calls >= _options.max_calls)
                        throw RuntimeError{fmt::format("line {}: tool call budget of {} exhausted", st.pos.line,
                                                       _options.max_calls)};
                    ++_calls;
                    json input = json::object();
                    for (const auto& arg: node.args)
                        input[arg.name] = to_json_value(arg.value, st.pos);
                    auto obs = _registry.invoke(node.tool, input, _world);
                    _result.trace.push_back(obs);
                    if (_options.on_call)
                        _options.on_call(node.tool, input, obs);
                    if (node.binding)
                    {
                        json bound = obs.data.is_object() ? obs.data : json::object();
                        bound["is_error"] = obs.is_error;
                        _scopes.back()[*node.binding] = std::move(bound);
                    }
                }
                else if constexpr (std::is_same_v<T, RepeatStmt>)
                {
                    for (int i = 0; i < node.count; ++i)
                        run(node.body);
                }
                else if constexpr (std::is_same_v<T, IfStmt>)
                {
                    run(compare(node.condition, st.pos) ? node.then_body : node.else_body);
                }
                else
                {
                    throw HaltSignal{node.report};
                }
            },
            st.node);
    }

    const tools::ToolRegistry& _registry;
    sim::World& _world;
    const ExecOptions& _options;
    ExecResult& _result;
    std::vector<std::map<std::string, json>> _scopes;
    std::size_t _calls = 0;
};

} // namespace

ParseResult parse_action_script(std::string_view source)
{
    try
    {
        Parser parser(Lexer(source).run());
        return {parser.run()};
    }
    catch (const Failure& f)
    {
        return {f.error};
    }
}

std::string pretty_print(const Program& program)
{
    std::string out;
    print_block(program.statements, 0, out);
    return out;
}

ExecResult exec_program(const Program& program, const tools::ToolRegistry& registry, sim::World& world,
                        const ExecOptions& options)
{
    ExecResult result;
    Interpreter interp(registry, world, options, result);
    try
    {
        interp.run(program.statements);
        result.report = "program finished without halt";
    }
    catch (const HaltSignal& h)
    {
        result.halted = true;
        result.report = h.report;
    }
    catch (const RuntimeError& e)
    {
        result.runtime_error = true;
        result.report = "runtime error at " + e.message;
    }
    catch (const StopSignal&)
    {
        result.stopped = true;
        result.report = "program stopped";
    }
    return result;
}

} // namespace leo::acts
