// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/protocol.hpp>
#include <leo/simworld.hpp>
#include <leo/types.hpp>

#include <functional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace leo
{

namespace llm
{
class ChatModel;
}

namespace tools
{

using ToolHandler = std::function<Observation(const json& input, sim::World& world)>;

struct ToolSpec
{
    std::string name;
    /// The model's only manual for the tool: must state input and output formats.
    std::string description;
    bool enabled = true;
    ToolHandler handler;
};

enum class ToolsetErrorKind
{
    duplicate_name,
    empty_name,
    empty_description,
    unknown_tool,
};

class ToolsetError : public std::runtime_error
{
public:
    ToolsetError(ToolsetErrorKind kind, const std::string& what): std::runtime_error(what), _kind(kind) {}

    [[nodiscard]] ToolsetErrorKind kind() const noexcept { return _kind; }

private:
    ToolsetErrorKind _kind;
};

/// Ordered tool registry. Reads may run concurrently; mutations take an exclusive lock.
class ToolRegistry
{
public:
    ToolRegistry() = default;
    ToolRegistry(const ToolRegistry& other);
    ToolRegistry& operator=(const ToolRegistry& other);

    ToolRegistry& register_tool(ToolSpec spec);
    ToolRegistry& set_enabled(std::string_view name, bool flag);

    /// Total: unknown/disabled tools and handler exceptions become error observations.
    [[nodiscard]] Observation invoke(std::string_view name, const json& input, sim::World& world) const noexcept;

    /// Enabled tools, registration order.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> describe_enabled() const;
    /// Every tool with its flag, registration order.
    [[nodiscard]] std::vector<protocol::ToolInfo> catalog() const;
    [[nodiscard]] std::vector<std::string> names() const;
    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] std::optional<bool> is_enabled(std::string_view name) const;
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::shared_mutex _mutex;
    std::vector<ToolSpec> _tools;
};

// --- robot tools ------------------------------------------------------------
// Handlers read parameters from the input record and act on the world they are handed.

/// move_to: {x, y, z} for UAVs, {x, y} for the wheeled robot.
ToolSpec move_to_tool(sim::RobotKind kind);
/// rotate: {yaw_deg} relative turn, counter-clockwise positive.
ToolSpec rotate_tool();
/// rotate_to: {yaw_deg} absolute heading.
ToolSpec rotate_to_tool();
/// detect: optional {class}. Uses the world's field of view.
ToolSpec detect_tool();
/// vlm_describe: {question}.
ToolSpec vlm_tool();
ToolSpec grasp_tool();
ToolSpec release_tool();
/// get_state: current pose, held object and clock.
ToolSpec state_tool();
/// talk_to_person: {id}; the person must be within `max_distance` metres.
ToolSpec talk_tool(double max_distance = 1.0);
/// summarize: {text}; delegates to an auxiliary chat model.
ToolSpec summarize_tool(llm::ChatModel& model);

} // namespace tools
} // namespace leo
