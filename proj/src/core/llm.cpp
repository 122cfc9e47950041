// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <leo/llm.hpp>
#include <leo/protocol.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>

namespace leo::llm
{

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind)
    {
        case ErrorKind::invalid_request: return "invalid_request";
        case ErrorKind::endpoint_unreachable: return "endpoint_unreachable";
        case ErrorKind::endpoint_error: return "endpoint_error";
        case ErrorKind::script_exhausted: return "script_exhausted";
    }
    return "endpoint_error";
}

void validate(const ChatRequest& request)
{
    if (request.segments.empty())
        throw LlmError(ErrorKind::invalid_request, "chat request has no segments");
    if (request.segments.front().role != Role::system)
        throw LlmError(ErrorKind::invalid_request, "first segment of a chat request must be the system prompt");
    if (!(request.temperature >= 0.0 && request.temperature <= 2.0))
        throw LlmError(ErrorKind::invalid_request, "temperature must lie in [0, 2]");
    if (request.max_output_tokens <= 0)
        throw LlmError(ErrorKind::invalid_request, "max_output_tokens must be positive");
}

std::int64_t count_tokens(std::string_view text) noexcept
{
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

TokenUsage count_usage(const ChatRequest& request, std::string_view reply) noexcept
{
    TokenUsage usage;
    for (const auto& segment: request.segments)
        usage.prompt_tokens += count_tokens(segment.text);
    usage.completion_tokens = count_tokens(reply);
    return usage;
}

// --- ScriptedModel ----------------------------------------------------------

namespace
{

std::string last_observation(const ChatRequest& request)
{
    for (auto it = request.segments.rbegin(); it != request.segments.rend(); ++it)
    {
        if (it->role != Role::observation)
            continue;
        std::string_view text = it->text;
        if (text.starts_with(protocol::kObservationMarker))
            text.remove_prefix(protocol::kObservationMarker.size());
        if (auto data = text.find("\nData: "); data != std::string_view::npos)
            text = text.substr(0, data);
        return std::string(text);
    }
    return {};
}

std::string substitute_placeholders(std::string reply, const ChatRequest& request)
{
    static constexpr std::string_view placeholder = "{{last_observation}}";
    auto pos = reply.find(placeholder);
    if (pos == std::string::npos)
        return reply;

    // Replies are JSON documents, so the substituted text is escaped for use inside a string literal.
    auto quoted = json(last_observation(request)).dump(-1, ' ', false, json::error_handler_t::replace);
    auto escaped = quoted.substr(1, quoted.size() - 2);
    while (pos != std::string::npos)
    {
        reply.replace(pos, placeholder.size(), escaped);
        pos = reply.find(placeholder, pos + escaped.size());
    }
    return reply;
}

} // namespace

ScriptedModel::ScriptedModel(std::vector<std::string> replies): _replies(std::move(replies)) {}

std::vector<std::string> ScriptedModel::load_script(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open script file " + path.string());
    auto doc = nlohmann::ordered_json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_array())
        throw std::runtime_error("script file " + path.string() + " must hold a JSON array of replies");

    std::vector<std::string> replies;
    replies.reserve(doc.size());
    for (const auto& item: doc)
        replies.push_back(item.is_string() ? item.get<std::string>() : item.dump());
    return replies;
}

ScriptedModel ScriptedModel::from_file(const std::filesystem::path& path)
{
    return ScriptedModel(load_script(path));
}

Completion ScriptedModel::complete(const ChatRequest& request)
{
    validate(request);
    std::string reply;
    {
        std::lock_guard lock(_mutex);
        if (_cursor >= _replies.size())
            throw LlmError(ErrorKind::script_exhausted,
                           "scripted model exhausted after " + std::to_string(_replies.size()) + " replies");
        reply = _replies[_cursor++];
    }
    reply = substitute_placeholders(std::move(reply), request);
    auto usage = count_usage(request, reply);
    return {std::move(reply), usage, 0.0};
}

std::size_t ScriptedModel::cursor() const
{
    std::lock_guard lock(_mutex);
    return _cursor;
}

// --- EchoModel --------------------------------------------------------------

Completion EchoModel::complete(const ChatRequest& request)
{
    validate(request);
    std::string reply;
    for (auto it = request.segments.rbegin(); it != request.segments.rend(); ++it)
    {
        if (it->role == Role::user)
        {
            reply = it->text.substr(0, _max_chars);
            break;
        }
    }
    auto usage = count_usage(request, reply);
    return {std::move(reply), usage, 0.0};
}

// --- HttpChatModel ----------------------------------------------------------

HttpConfig HttpConfig::from_env()
{
    HttpConfig config;
    if (const char* v = std::getenv("LEO_LLM_BASE_URL"))
        config.base_url = v;
    if (const char* v = std::getenv("LEO_LLM_MODEL"))
        config.model = v;
    if (const char* v = std::getenv("LEO_LLM_API_KEY"))
        config.api_key = v;
    if (const char* v = std::getenv("LEO_LLM_TIMEOUT_S"))
        config.timeout_s = std::strtod(v, nullptr);
    return config;
}

HttpChatModel::HttpChatModel(HttpConfig config): _config(std::move(config)) {}

json HttpChatModel::build_body(const ChatRequest& request) const
{
    json messages = json::array();
    for (const auto& segment: request.segments)
    {
        const char* role = "user";
        switch (segment.role)
        {
            case Role::system: role = "system"; break;
            case Role::assistant: role = "assistant"; break;
            case Role::user:
            case Role::observation: role = "user"; break;
        }
        messages.push_back({{"role", role}, {"content", segment.text}});
    }
    return {{"model", _config.model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens},
            {"stream", false}};
}

Completion HttpChatModel::parse_reply(const std::string& body)
{
    auto doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw LlmError(ErrorKind::endpoint_error, "endpoint reply is not a JSON object");
    if (doc.contains("error"))
        throw LlmError(ErrorKind::endpoint_error, "endpoint reported an error: " + doc["error"].dump());

    const auto& choices = doc.value("choices", json::array());
    if (!choices.is_array() || choices.empty())
        throw LlmError(ErrorKind::endpoint_error, "endpoint reply has no choices");
    const auto& message = choices.front().value("message", json::object());
    auto content = message.value("content", json());
    if (!content.is_string())
        throw LlmError(ErrorKind::endpoint_error, "endpoint reply has no message content");

    Completion completion;
    completion.text = content.get<std::string>();
    if (auto usage = doc.find("usage"); usage != doc.end() && usage->is_object())
        completion.usage = {usage->value("prompt_tokens", std::int64_t{0}),
                            usage->value("completion_tokens", std::int64_t{0})};
    return completion;
}

Completion HttpChatModel::complete(const ChatRequest& request)
{
    validate(request);

    // base_url is "<scheme>://<host>[:port][/prefix]".
    auto scheme_end = _config.base_url.find("://");
    auto path_start = _config.base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    std::string origin = _config.base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : _config.base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();

    httplib::Client client(origin);
    if (!client.is_valid())
        throw LlmError(ErrorKind::endpoint_unreachable, "invalid endpoint URL " + _config.base_url);

    auto timeout = std::chrono::duration<double>(_config.timeout_s);
    auto whole = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - whole);
    client.set_connection_timeout(whole.count(), micros.count());
    client.set_read_timeout(whole.count(), micros.count());
    client.set_write_timeout(whole.count(), micros.count());

    httplib::Headers headers;
    if (!_config.api_key.empty())
        headers.emplace("Authorization", "Bearer " + _config.api_key);

    auto started = std::chrono::steady_clock::now();
    auto result = client.Post(prefix + "/chat/completions", headers, build_body(request).dump(), "application/json");
    auto latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (!result)
        throw LlmError(ErrorKind::endpoint_unreachable,
                       "chat endpoint unreachable: " + httplib::to_string(result.error()));
    if (result->status != 200)
        throw LlmError(ErrorKind::endpoint_error,
                       "chat endpoint returned HTTP " + std::to_string(result->status) + ": " + result->body);

    auto completion = parse_reply(result->body);
    completion.latency_s = latency;
    return completion;
}

// --- RecordingModel ---------------------------------------------------------

Completion RecordingModel::complete(const ChatRequest& request)
{
    try
    {
        auto completion = _inner.complete(request);
        std::lock_guard lock(_mutex);
        _calls.push_back({request, completion.text, completion.usage, false, {}});
        return completion;
    }
    catch (const LlmError& e)
    {
        std::lock_guard lock(_mutex);
        _calls.push_back({request, {}, {}, true, e.what()});
        throw;
    }
}

std::vector<CallRecord> RecordingModel::calls() const
{
    std::lock_guard lock(_mutex);
    return _calls;
}

std::size_t RecordingModel::call_count() const
{
    std::lock_guard lock(_mutex);
    return _calls.size();
}

TokenUsage RecordingModel::total_usage() const
{
    std::lock_guard lock(_mutex);
    TokenUsage total;
    for (const auto& call: _calls)
    {
        if (!call.failed)
            total += call.usage;
    }
    return total;
}

} // namespace leo::llm
