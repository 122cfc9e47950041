// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace leo
{

using json = nlohmann::json;

/// Reserved action that ends a session successfully; action_input carries `report`.
inline constexpr const char* kFinalAction = "final_response";
/// Reserved action the agent uses to declare it cannot proceed; action_input carries `reason`.
inline constexpr const char* kAbortAction = "abort";

struct TokenUsage
{
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    [[nodiscard]] std::int64_t total() const noexcept { return prompt_tokens + completion_tokens; }

    TokenUsage& operator+=(const TokenUsage& other) noexcept
    {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        return *this;
    }

    friend TokenUsage operator+(TokenUsage a, const TokenUsage& b) noexcept { return a += b; }
    bool operator==(const TokenUsage&) const = default;
};

/// One model step: reasoning text, the chosen action and its input record.
struct AgentMessage
{
    std::string message;
    std::string action;
    json action_input = json::object();

    bool operator==(const AgentMessage&) const = default;
};

/// Feedback a tool returns after an action.
struct Observation
{
    std::string source_tool;
    std::string content;
    json data; // null when the tool has no machine-readable payload
    bool is_error = false;
    double sim_elapsed = 0.0;
    /// World-level failure after which further actions are impossible.
    bool fatal = false;

    bool operator==(const Observation&) const = default;
};

enum class Role
{
    system,
    user,
    assistant,
    observation,
};

struct Segment
{
    Role role = Role::user;
    std::string text;

    bool operator==(const Segment&) const = default;
};

[[nodiscard]] const char* to_string(Role role) noexcept;

enum class EntryKind
{
    user_task,
    agent_step,
    observation,
    interjection,
    final,
};

[[nodiscard]] const char* to_string(EntryKind kind) noexcept;
[[nodiscard]] std::optional<EntryKind> entry_kind_from_string(std::string_view text) noexcept;

/// A rejected model reply and the correction hint fed back for it.
struct RepairAttempt
{
    std::string raw;
    std::string hint;

    bool operator==(const RepairAttempt&) const = default;
};

struct HistoryEntry
{
    EntryKind kind = EntryKind::user_task;
    std::variant<std::string, AgentMessage, Observation> payload;
    std::uint64_t seq = 0;
    std::chrono::steady_clock::time_point timestamp{};
    double sim_time = 0.0;
    /// Model usage attributed to this entry (agent steps and persona turns).
    std::optional<TokenUsage> usage;
    /// Parse failures that preceded an accepted agent step.
    std::vector<RepairAttempt> repairs;

    [[nodiscard]] const std::string& text() const { return std::get<std::string>(payload); }
    [[nodiscard]] const AgentMessage& step() const { return std::get<AgentMessage>(payload); }
    [[nodiscard]] const Observation& observation() const { return std::get<Observation>(payload); }
};

using History = std::vector<HistoryEntry>;

json to_json(const TokenUsage& usage);
TokenUsage usage_from_json(const json& j);
json to_json(const Observation& obs);
Observation observation_from_json(const json& j);

/// Trace line for one entry. Wall-clock instants are left out so that traces of
/// deterministic runs are byte-identical; `seq` and `sim_time` order the entries.
json to_json(const HistoryEntry& entry);
HistoryEntry history_entry_from_json(const json& j);

} // namespace leo
