// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/types.hpp>

#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace leo::protocol
{

enum class FailureKind
{
    malformed_syntax,
    missing_field,
    wrong_field_order,
};

[[nodiscard]] const char* to_string(FailureKind kind) noexcept;

struct ParseFailure
{
    FailureKind kind = FailureKind::malformed_syntax;
    std::string hint; // never empty; fed back to the model

    bool operator==(const ParseFailure&) const = default;
};

/// Result of reading one model reply. Exactly one of message/failure is held.
struct ParseOutcome
{
    std::variant<AgentMessage, ParseFailure> value;
    /// Top-level keys other than message/action/action_input. Tolerated, but reported.
    std::vector<std::string> ignored_keys;

    [[nodiscard]] bool ok() const noexcept { return std::holds_alternative<AgentMessage>(value); }
    [[nodiscard]] const AgentMessage& message() const { return std::get<AgentMessage>(value); }
    [[nodiscard]] const ParseFailure& failure() const { return std::get<ParseFailure>(value); }
};

/// Catalog view of a tool, as needed for prompt assembly.
struct ToolInfo
{
    std::string name;
    std::string description;
    bool enabled = true;
};

struct PromptBundle
{
    std::string system_prompt;
    std::vector<Segment> transcript;

    /// System segment followed by the transcript; the shape a chat request takes.
    [[nodiscard]] std::vector<Segment> segments() const;
};

/// Marker prepended to every observation-role segment.
inline constexpr std::string_view kObservationMarker = "Observation: ";

/// Section headings of the system prompt, in emission order.
inline constexpr std::string_view kOutputSection = "## Output format";
inline constexpr std::string_view kToolSection = "## Tools";
inline constexpr std::string_view kHistorySection = "## History";
inline constexpr std::string_view kRoleSection = "## Role";
inline constexpr std::string_view kGuidanceSection = "## Guidance";

/// `TOOL <name>: <description>`
[[nodiscard]] std::string tool_block(const ToolInfo& tool);

[[nodiscard]] std::string render_system_prompt(std::span<const ToolInfo> tools, std::string_view role_definition,
                                               std::string_view extra_guidance);

/// Canonical wire form: `{"message":...,"action":...,"action_input":{...}}` in that key order.
[[nodiscard]] std::string serialize(const AgentMessage& msg);

[[nodiscard]] ParseOutcome parse_agent_message(std::string_view raw) noexcept;

[[nodiscard]] std::vector<Segment> render_history(std::span<const HistoryEntry> entries);

/// Rendering of a single observation, shared by history rendering and repair prompts.
[[nodiscard]] std::string render_observation(const Observation& obs);

/// First balanced `open ... close` region of `text`, skipping over JSON string literals.
/// Empty when no balanced region exists.
[[nodiscard]] std::string_view extract_balanced(std::string_view text, char open, char close) noexcept;

/// Top-level keys of a JSON object text in the order they appear.
[[nodiscard]] std::vector<std::string> top_level_keys(std::string_view object_text);

} // namespace leo::protocol
