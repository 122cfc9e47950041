// SPDX-License-Identifier: Apache-2.0
#include <leo/protocol.hpp>

#include <algorithm>

namespace leo::protocol
{

namespace
{

constexpr std::string_view kOutputContract =
    "Reply with exactly one JSON object and nothing else. Its keys, in this order:\n"
    "  \"message\": your reasoning, plan, or assessment of the last observation (may be empty);\n"
    "  \"action\": the name of exactly one tool from the tool list, or \"final_response\", or \"abort\";\n"
    "  \"action_input\": a JSON object with the parameters of that action ({} when there are none).\n"
    "Always write \"message\" before \"action\". Call one tool per reply.\n"
    "When the task is complete, use action \"final_response\" with action_input {\"report\": \"<result for the user>\"}.\n"
    "If the task cannot proceed, use action \"abort\" with action_input {\"reason\": \"<cause>\"}.\n"
    "Example: {\"message\": \"The table is ahead, moving there first.\", \"action\": \"move_to\", "
    "\"action_input\": {\"x\": 1.0, \"y\": 2.0}}";

constexpr std::string_view kHistoryRules =
    "The turns that follow are the history of this task, oldest first.\n"
    "- User turns hold the task and any later instructions from the operator. A turn starting with "
    "\"User interjection: \" was sent while you were working; it takes precedence over earlier instructions "
    "where they conflict.\n"
    "- Assistant turns are your own previous JSON replies.\n"
    "- Turns starting with \"Observation: \" are the feedback of the tool you called in the preceding assistant "
    "turn. \"Observation: [error]\" means the action failed or your reply was rejected; correct it in the next "
    "reply.\n"
    "- Use the history to track what has been done; do not repeat finished actions.";

std::string failure_hint(FailureKind kind, std::string_view detail)
{
    std::string hint;
    switch (kind)
    {
        case FailureKind::malformed_syntax:
            hint = "Your reply could not be read as a JSON object";
            break;
        case FailureKind::missing_field:
            hint = "Your reply is missing a required field";
            break;
        case FailureKind::wrong_field_order:
            hint = "Your reply has its fields in the wrong order";
            break;
    }
    if (!detail.empty())
    {
        hint += ": ";
        hint += detail;
    }
    hint += ". Reply again with one JSON object of the form "
            "{\"message\": \"...\", \"action\": \"...\", \"action_input\": {...}}, with \"message\" first.";
    return hint;
}

ParseOutcome fail(FailureKind kind, std::string_view detail)
{
    return ParseOutcome{ParseFailure{kind, failure_hint(kind, detail)}, {}};
}

} // namespace

const char* to_string(FailureKind kind) noexcept
{
    switch (kind)
    {
        case FailureKind::malformed_syntax: return "malformed_syntax";
        case FailureKind::missing_field: return "missing_field";
        case FailureKind::wrong_field_order: return "wrong_field_order";
    }
    return "malformed_syntax";
}

std::vector<Segment> PromptBundle::segments() const
{
    std::vector<Segment> out;
    out.reserve(transcript.size() + 1);
    out.push_back({Role::system, system_prompt});
    out.insert(out.end(), transcript.begin(), transcript.end());
    return out;
}

std::string tool_block(const ToolInfo& tool)
{
    return "TOOL " + tool.name + ": " + tool.description;
}

std::string render_system_prompt(std::span<const ToolInfo> tools, std::string_view role_definition,
                                 std::string_view extra_guidance)
{
    std::string out;
    out.reserve(2048);

    out += kOutputSection;
    out += '\n';
    out += kOutputContract;
    out += "\n\n";

    out += kToolSection;
    out += '\n';
    bool any = false;
    for (const auto& tool: tools)
    {
        if (!tool.enabled)
            continue;
        out += tool_block(tool);
        out += '\n';
        any = true;
    }
    if (!any)
        out += "No tools are available for this task.\n";
    out += '\n';

    out += kHistorySection;
    out += '\n';
    out += kHistoryRules;
    out += "\n\n";

    out += kRoleSection;
    out += '\n';
    out += role_definition;

    if (!extra_guidance.empty())
    {
        out += "\n\n";
        out += kGuidanceSection;
        out += '\n';
        out += extra_guidance;
    }
    return out;
}

std::string serialize(const AgentMessage& msg)
{
    constexpr auto strict = json::error_handler_t::replace;
    std::string out = "{\"message\":";
    out += json(msg.message).dump(-1, ' ', false, strict);
    out += ",\"action\":";
    out += json(msg.action).dump(-1, ' ', false, strict);
    out += ",\"action_input\":";
    out += (msg.action_input.is_object() ? msg.action_input : json::object()).dump(-1, ' ', false, strict);
    out += '}';
    return out;
}

std::string_view extract_balanced(std::string_view text, char open, char close) noexcept
{
    auto start = text.find(open);
    if (start == std::string_view::npos)
        return {};

    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i)
    {
        char c = text[i];
        if (in_string)
        {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == open)
            ++depth;
        else if (c == close && --depth == 0)
            return text.substr(start, i - start + 1);
    }
    return {};
}

std::vector<std::string> top_level_keys(std::string_view object_text)
{
    std::vector<std::string> keys;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    bool expect_key = false;
    std::size_t string_start = 0;

    for (std::size_t i = 0; i < object_text.size(); ++i)
    {
        char c = object_text[i];
        if (in_string)
        {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
            {
                in_string = false;
                if (depth == 1 && expect_key)
                {
                    keys.emplace_back(object_text.substr(string_start, i - string_start));
                    expect_key = false;
                }
            }
            continue;
        }
        switch (c)
        {
            case '"':
                in_string = true;
                string_start = i + 1;
                break;
            case '{':
            case '[':
                ++depth;
                if (depth == 1 && c == '{')
                    expect_key = true;
                break;
            case '}':
            case ']':
                --depth;
                break;
            case ',':
                if (depth == 1)
                    expect_key = true;
                break;
            default:
                break;
        }
    }
    return keys;
}

ParseOutcome parse_agent_message(std::string_view raw) noexcept
{
    try
    {
        auto object_text = extract_balanced(raw, '{', '}');
        if (object_text.empty())
            return fail(FailureKind::malformed_syntax, "no JSON object found");

        auto parsed = json::parse(object_text, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object())
            return fail(FailureKind::malformed_syntax, "the object is not valid JSON");

        auto action_it = parsed.find("action");
        if (action_it == parsed.end())
            return fail(FailureKind::missing_field, "\"action\" is required");
        if (!action_it->is_string() || action_it->get_ref<const std::string&>().empty())
            return fail(FailureKind::missing_field, "\"action\" must be a non-empty string naming a tool");

        auto message_it = parsed.find("message");
        if (message_it == parsed.end())
            return fail(FailureKind::missing_field, "\"message\" is required (it may be an empty string)");
        if (!message_it->is_string())
            return fail(FailureKind::missing_field, "\"message\" must be a string");

        auto keys = top_level_keys(object_text);
        auto message_pos = std::find(keys.begin(), keys.end(), "message");
        auto action_pos = std::find(keys.begin(), keys.end(), "action");
        if (action_pos < message_pos)
            return fail(FailureKind::wrong_field_order, "\"message\" must come before \"action\"");

        json input = json::object();
        if (auto input_it = parsed.find("action_input"); input_it != parsed.end() && !input_it->is_null())
        {
            if (!input_it->is_object())
                return fail(FailureKind::missing_field, "\"action_input\" must be a JSON object");
            input = *input_it;
        }

        ParseOutcome outcome{AgentMessage{message_it->get<std::string>(), action_it->get<std::string>(),
                                          std::move(input)},
                             {}};
        for (const auto& key: keys)
        {
            if (key != "message" && key != "action" && key != "action_input")
                outcome.ignored_keys.push_back(key);
        }
        return outcome;
    }
    catch (...)
    {
        return fail(FailureKind::malformed_syntax, "the reply could not be processed");
    }
}

std::string render_observation(const Observation& obs)
{
    std::string out{kObservationMarker};
    if (obs.is_error)
        out += "[error] ";
    out += obs.content;
    if (!obs.data.is_null())
    {
        out += "\nData: ";
        out += obs.data.dump(-1, ' ', false, json::error_handler_t::replace);
    }
    return out;
}

std::vector<Segment> render_history(std::span<const HistoryEntry> entries)
{
    std::vector<Segment> out;
    out.reserve(entries.size());
    for (const auto& entry: entries)
    {
        switch (entry.kind)
        {
            case EntryKind::user_task:
                out.push_back({Role::user, entry.text()});
                break;
            case EntryKind::interjection:
                out.push_back({Role::user, "User interjection: " + entry.text()});
                break;
            case EntryKind::agent_step:
                out.push_back({Role::assistant, serialize(entry.step())});
                break;
            case EntryKind::observation:
                out.push_back({Role::observation, render_observation(entry.observation())});
                break;
            case EntryKind::final:
                out.push_back({Role::assistant, "Final report: " + entry.text()});
                break;
        }
    }
    return out;
}

} // namespace leo::protocol
