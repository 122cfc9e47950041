// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/simworld.hpp>
#include <leo/toolset.hpp>
#include <leo/types.hpp>

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

/// ActionScript: a small sandboxed language for tool-calling programs.
///
///     r = call detect(class="bottle");
///     if r.count > 0 { call grasp(id=r.nearest_id); } else { halt("no bottle"); }
///     repeat 4 { call rotate(yaw_deg=90); }
///     halt("done");
///
/// The grammar is in docs/actionscript.ebnf and is available at runtime as kGrammar.
namespace leo::acts
{

extern const char* const kGrammar;

/// Upper bound for `repeat` counts.
inline constexpr int kMaxRepeat = 1000;

struct SourcePos
{
    int line = 1;
    int column = 1;
};

struct FieldRef
{
    std::string binding;
    std::string field;

    bool operator==(const FieldRef&) const = default;
};

struct Value
{
    std::variant<double, std::string, bool, FieldRef> v;

    bool operator==(const Value&) const = default;
};

struct Arg
{
    std::string name;
    Value value;

    bool operator==(const Arg&) const = default;
};

enum class CmpOp
{
    eq,
    ne,
    lt,
    le,
    gt,
    ge,
};

[[nodiscard]] const char* to_string(CmpOp op) noexcept;

struct Condition
{
    FieldRef lhs;
    CmpOp op = CmpOp::eq;
    Value rhs;

    bool operator==(const Condition&) const = default;
};

struct Statement;
using Block = std::vector<Statement>;

struct CallStmt
{
    std::optional<std::string> binding;
    std::string tool;
    std::vector<Arg> args;

    bool operator==(const CallStmt&) const = default;
};

struct RepeatStmt
{
    int count = 1;
    Block body;

    bool operator==(const RepeatStmt&) const;
};

struct IfStmt
{
    Condition condition;
    Block then_body;
    Block else_body;

    bool operator==(const IfStmt&) const;
};

struct HaltStmt
{
    std::string report;

    bool operator==(const HaltStmt&) const = default;
};

struct Statement
{
    std::variant<CallStmt, RepeatStmt, IfStmt, HaltStmt> node;
    SourcePos pos;

    /// Structural equality; source positions are ignored.
    bool operator==(const Statement& other) const { return node == other.node; }
};

struct Program
{
    Block statements;

    bool operator==(const Program&) const = default;
};

enum class ErrorKind
{
    lexical,
    syntactic,
    unbound_identifier,
    repeat_bound_exceeded,
};

[[nodiscard]] const char* to_string(ErrorKind kind) noexcept;

struct ScriptError
{
    ErrorKind kind = ErrorKind::syntactic;
    SourcePos pos;
    std::string message;

    /// "line L, column C: <kind>: <message>"
    [[nodiscard]] std::string describe() const;
};

struct ParseResult
{
    std::variant<Program, ScriptError> value;

    [[nodiscard]] bool ok() const noexcept { return std::holds_alternative<Program>(value); }
    [[nodiscard]] const Program& program() const { return std::get<Program>(value); }
    [[nodiscard]] const ScriptError& error() const { return std::get<ScriptError>(value); }
};

/// Full check: lexing, grammar, repeat bounds and binding-before-use.
[[nodiscard]] ParseResult parse_action_script(std::string_view source);

/// Canonical source text. parse_action_script(pretty_print(p)) reproduces p.
[[nodiscard]] std::string pretty_print(const Program& program);

// --- interpreter ------------------------------------------------------------

struct ExecResult
{
    std::vector<Observation> trace;
    /// halt() text, a runtime error description, or a note that the program ran to its end.
    std::string report;
    bool halted = false;
    bool runtime_error = false;
    bool stopped = false;
};

struct ExecOptions
{
    /// Called after every tool call with its name, input and observation.
    std::function<void(const std::string&, const json&, const Observation&)> on_call;
    /// Polled before each statement; returning true stops the program.
    std::function<bool()> should_stop;
    /// Hard cap on executed tool calls.
    std::size_t max_calls = 10000;
};

/// Runs a checked program against a registry and world. A tool_call binds the
/// observation's data record plus `is_error`; tool errors are recorded, not fatal.
ExecResult exec_program(const Program& program, const tools::ToolRegistry& registry, sim::World& world,
                        const ExecOptions& options = {});

} // namespace leo::acts
