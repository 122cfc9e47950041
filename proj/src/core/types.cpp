// SPDX-License-Identifier: Apache-2.0
#include <leo/types.hpp>

#include <stdexcept>

namespace leo
{

const char* to_string(Role role) noexcept
{
    switch (role)
    {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::observation: return "observation";
    }
    return "user";
}

const char* to_string(EntryKind kind) noexcept
{
    switch (kind)
    {
        case EntryKind::user_task: return "user_task";
        case EntryKind::agent_step: return "agent_step";
        case EntryKind::observation: return "observation";
        case EntryKind::interjection: return "interjection";
        case EntryKind::final: return "final";
    }
    return "user_task";
}

std::optional<EntryKind> entry_kind_from_string(std::string_view text) noexcept
{
    for (auto kind: {EntryKind::user_task, EntryKind::agent_step, EntryKind::observation, EntryKind::interjection,
                     EntryKind::final})
    {
        if (text == to_string(kind))
            return kind;
    }
    return std::nullopt;
}

json to_json(const TokenUsage& usage)
{
    return {{"prompt_tokens", usage.prompt_tokens},
            {"completion_tokens", usage.completion_tokens},
            {"total_tokens", usage.total()}};
}

TokenUsage usage_from_json(const json& j)
{
    return {j.value("prompt_tokens", std::int64_t{0}), j.value("completion_tokens", std::int64_t{0})};
}

json to_json(const Observation& obs)
{
    json j = {{"source_tool", obs.source_tool},
              {"content", obs.content},
              {"data", obs.data},
              {"is_error", obs.is_error},
              {"sim_elapsed", obs.sim_elapsed}};
    if (obs.fatal)
        j["fatal"] = true;
    return j;
}

Observation observation_from_json(const json& j)
{
    Observation obs;
    obs.source_tool = j.at("source_tool").get<std::string>();
    obs.content = j.at("content").get<std::string>();
    obs.data = j.value("data", json());
    obs.is_error = j.value("is_error", false);
    obs.sim_elapsed = j.value("sim_elapsed", 0.0);
    obs.fatal = j.value("fatal", false);
    return obs;
}

json to_json(const HistoryEntry& entry)
{
    json j = {{"kind", to_string(entry.kind)}, {"seq", entry.seq}, {"sim_time", entry.sim_time}};
    switch (entry.kind)
    {
        case EntryKind::agent_step:
        {
            const auto& step = entry.step();
            j["payload"] = {{"message", step.message}, {"action", step.action}, {"action_input", step.action_input}};
            break;
        }
        case EntryKind::observation:
            j["payload"] = to_json(entry.observation());
            break;
        default:
            j["payload"] = entry.text();
            break;
    }
    if (entry.usage)
        j["usage"] = to_json(*entry.usage);
    if (!entry.repairs.empty())
    {
        json repairs = json::array();
        for (const auto& r: entry.repairs)
            repairs.push_back({{"raw", r.raw}, {"hint", r.hint}});
        j["repairs"] = std::move(repairs);
    }
    return j;
}

HistoryEntry history_entry_from_json(const json& j)
{
    HistoryEntry entry;
    auto kind = entry_kind_from_string(j.at("kind").get<std::string>());
    if (!kind)
        throw std::invalid_argument("unknown history entry kind: " + j.at("kind").get<std::string>());
    entry.kind = *kind;
    entry.seq = j.value("seq", std::uint64_t{0});
    entry.sim_time = j.value("sim_time", 0.0);
    const auto& payload = j.at("payload");
    switch (entry.kind)
    {
        case EntryKind::agent_step:
            entry.payload = AgentMessage{payload.value("message", std::string{}), payload.at("action").get<std::string>(),
                                         payload.value("action_input", json::object())};
            break;
        case EntryKind::observation:
            entry.payload = observation_from_json(payload);
            break;
        default:
            entry.payload = payload.get<std::string>();
            break;
    }
    if (j.contains("usage"))
        entry.usage = usage_from_json(j["usage"]);
    if (j.contains("repairs"))
    {
        for (const auto& r: j["repairs"])
            entry.repairs.push_back({r.at("raw").get<std::string>(), r.at("hint").get<std::string>()});
    }
    return entry;
}

} // namespace leo
