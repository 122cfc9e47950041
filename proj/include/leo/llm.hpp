// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/types.hpp>

#include <filesystem>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace leo::llm
{

struct ChatRequest
{
    std::vector<Segment> segments;
    double temperature = 0.0;
    int max_output_tokens = 1024;
};

struct Completion
{
    std::string text;
    TokenUsage usage;
    /// Model latency in seconds as reported by the backend (measured for HTTP, 0 for scripted replies).
    double latency_s = 0.0;
};

enum class ErrorKind
{
    invalid_request,
    endpoint_unreachable,
    endpoint_error,
    script_exhausted,
};

[[nodiscard]] const char* to_string(ErrorKind kind) noexcept;

class LlmError : public std::runtime_error
{
public:
    LlmError(ErrorKind kind, const std::string& what): std::runtime_error(what), _kind(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return _kind; }
    /// Whether retrying the same request may succeed.
    [[nodiscard]] bool retryable() const noexcept { return _kind != ErrorKind::invalid_request; }

private:
    ErrorKind _kind;
};

/// Throws LlmError(invalid_request) unless the request has segments, starts with a
/// system segment, and has sane sampling parameters.
void validate(const ChatRequest& request);

/// Deterministic approximation: ceil(characters / 4). Used only by offline backends.
[[nodiscard]] std::int64_t count_tokens(std::string_view text) noexcept;

[[nodiscard]] TokenUsage count_usage(const ChatRequest& request, std::string_view reply) noexcept;

class ChatModel
{
public:
    virtual ~ChatModel() = default;

    /// Never blocks indefinitely; failures surface as LlmError.
    virtual Completion complete(const ChatRequest& request) = 0;
};

/// Replays canned replies in order. `{{last_observation}}` inside a reply is replaced by
/// the most recent observation segment of the request (marker stripped).
class ScriptedModel final: public ChatModel
{
public:
    explicit ScriptedModel(std::vector<std::string> replies);

    /// JSON array of replies. String elements are used verbatim; object/array elements are
    /// re-serialized with their key order preserved.
    static ScriptedModel from_file(const std::filesystem::path& path);
    static std::vector<std::string> load_script(const std::filesystem::path& path);

    Completion complete(const ChatRequest& request) override;

    [[nodiscard]] std::size_t cursor() const;
    [[nodiscard]] std::size_t size() const noexcept { return _replies.size(); }

private:
    std::vector<std::string> _replies;
    mutable std::mutex _mutex;
    std::size_t _cursor = 0;
};

/// Offline stand-in that answers with the text of the last user segment (trimmed to
/// `max_chars`). Backs auxiliary-model tools in deterministic runs.
class EchoModel final: public ChatModel
{
public:
    explicit EchoModel(std::size_t max_chars = 400): _max_chars(max_chars) {}

    Completion complete(const ChatRequest& request) override;

private:
    std::size_t _max_chars;
};

struct HttpConfig
{
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model = "qwen2.5-72b-instruct";
    std::string api_key;
    double timeout_s = 60.0;

    /// Reads LEO_LLM_BASE_URL, LEO_LLM_MODEL, LEO_LLM_API_KEY and LEO_LLM_TIMEOUT_S.
    static HttpConfig from_env();
};

/// Chat-completions endpoint client (`POST <base_url>/chat/completions`).
class HttpChatModel final: public ChatModel
{
public:
    explicit HttpChatModel(HttpConfig config);

    Completion complete(const ChatRequest& request) override;

    /// Request body for the endpoint; observation segments are sent as user turns.
    [[nodiscard]] json build_body(const ChatRequest& request) const;
    /// Extracts reply text and reported usage. Throws LlmError(endpoint_error) on bad payloads.
    [[nodiscard]] static Completion parse_reply(const std::string& body);

private:
    HttpConfig _config;
};

struct CallRecord
{
    ChatRequest request;
    std::string reply;
    TokenUsage usage;
    bool failed = false;
    std::string error;
};

/// Wraps a model and records every call. Thread-safe.
class RecordingModel final: public ChatModel
{
public:
    explicit RecordingModel(ChatModel& inner): _inner(inner) {}

    Completion complete(const ChatRequest& request) override;

    [[nodiscard]] std::vector<CallRecord> calls() const;
    [[nodiscard]] std::size_t call_count() const;
    /// Sum of usage over successful calls.
    [[nodiscard]] TokenUsage total_usage() const;

private:
    ChatModel& _inner;
    mutable std::mutex _mutex;
    std::vector<CallRecord> _calls;
};

} // namespace leo::llm
