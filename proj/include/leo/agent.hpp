// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/llm.hpp>
#include <leo/protocol.hpp>
#include <leo/simworld.hpp>
#include <leo/toolset.hpp>
#include <leo/types.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace leo::agent
{

enum class AgentKind
{
    leo,
    das,
    cge,
    dllms,
    tllms,
};

[[nodiscard]] const char* to_string(AgentKind kind) noexcept;
[[nodiscard]] std::optional<AgentKind> agent_kind_from_string(std::string_view text) noexcept;

enum class SessionStatus
{
    running,
    completed,
    aborted_by_agent,
    step_limit,
    unrecoverable_parse,
    cancelled,
    /// The model backend kept failing (unreachable, endpoint error, exhausted script).
    model_error,
};

[[nodiscard]] const char* to_string(SessionStatus status) noexcept;
[[nodiscard]] std::optional<SessionStatus> session_status_from_string(std::string_view text) noexcept;

inline constexpr const char* kDefaultRole =
    "You are the task planner of a robot. You reason about the task, call one tool per step to act or perceive, "
    "read the observation it returns, and continue until the task is done.";

struct SessionConfig
{
    int max_steps = 40;
    int max_parse_retries = 3;
    /// Retries of a failed model call before the session ends with model_error.
    int max_model_retries = 2;
    std::string role_definition = kDefaultRole;
    std::string extra_guidance;
    AgentKind agent_kind = AgentKind::leo;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    /// Outer-loop cap of the plan/act/evaluate architecture.
    int max_plans = 5;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
};

struct SessionResult
{
    SessionStatus status = SessionStatus::running;
    /// Completion report, or the cause of the interruption.
    std::string final_report;
    History history;
    TokenUsage token_usage;
    std::size_t model_calls = 0;
    double wall_time = 0.0;
    double sim_time = 0.0;
    /// Sum of backend-reported model latency.
    double model_latency = 0.0;
};

class SessionFinished : public std::logic_error
{
public:
    SessionFinished(): std::logic_error("session finished") {}
};

/// State of one agent run, shared by every architecture.
///
/// The owning execution stream (the runner) appends to the history and meters model
/// calls. Operators may call interject / request_cancel / cancel / history from other
/// threads; their effects are only picked up at step boundaries.
class Session
{
public:
    using EntryListener = std::function<void(const HistoryEntry&)>;

    Session(std::string task_text, SessionConfig config);
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    [[nodiscard]] const std::string& task() const noexcept { return _task; }
    [[nodiscard]] const SessionConfig& config() const noexcept { return _config; }

    // --- operator side (thread-safe) ---

    /// Queues text for the next step boundary. Throws SessionFinished.
    void interject(std::string text);
    /// Asks the runner to stop at the next step boundary. Throws SessionFinished.
    void request_cancel();
    /// Cancels and waits until the session has stopped. Throws SessionFinished.
    SessionResult cancel();

    [[nodiscard]] bool finished() const;
    [[nodiscard]] SessionStatus status() const;
    [[nodiscard]] History history() const;
    [[nodiscard]] std::optional<SessionResult> result() const;
    /// Blocks until the session is finished.
    SessionResult wait() const;

    /// Called after each append, on the appending thread. Set before the session runs.
    void set_listener(EntryListener listener);

    // --- runner side ---

    /// RAII marker that a runner is executing; cancel() waits for it to be released.
    class Activity
    {
    public:
        explicit Activity(Session* session): _session(session) {}
        Activity(Activity&& other) noexcept: _session(std::exchange(other._session, nullptr)) {}
        Activity(const Activity&) = delete;
        Activity& operator=(const Activity&) = delete;
        Activity& operator=(Activity&&) = delete;
        ~Activity();

        explicit operator bool() const noexcept { return _session != nullptr; }

    private:
        Session* _session;
    };

    /// Empty activity when the session is already finished.
    [[nodiscard]] Activity begin_activity();

    const HistoryEntry& append(EntryKind kind, std::variant<std::string, AgentMessage, Observation> payload,
                               std::optional<TokenUsage> usage = std::nullopt,
                               std::vector<RepairAttempt> repairs = {});
    /// Moves queued interjections into the history. Returns how many were appended.
    std::size_t drain_interjections();
    [[nodiscard]] bool cancel_requested() const;

    /// Metered model call: usage, latency and call count are added to the session totals.
    llm::Completion complete(llm::ChatModel& model, const llm::ChatRequest& request);

    void add_sim_time(double seconds) noexcept { _sim_time += seconds; }
    [[nodiscard]] double sim_time() const noexcept { return _sim_time; }
    [[nodiscard]] int steps_taken() const noexcept { return _steps_taken; }
    [[nodiscard]] TokenUsage token_usage() const;

    /// The runner's view of the history. Only valid on the runner's stream.
    [[nodiscard]] const History& entries() const noexcept { return _history; }

    /// Terminal transition. Drains pending interjections, freezes the session and wakes
    /// waiters. Idempotent: later calls return the first result.
    SessionResult finish(SessionStatus status, std::string report);

private:
    std::string _task;
    SessionConfig _config;
    EntryListener _listener;

    mutable std::mutex _mutex;
    mutable std::condition_variable _cv;
    History _history;
    std::deque<std::string> _pending;
    bool _cancel_requested = false;
    bool _finished = false;
    bool _finalizing = false;
    int _busy = 0;
    std::optional<SessionResult> _result;

    TokenUsage _usage;
    std::size_t _model_calls = 0;
    double _model_latency = 0.0;
    double _sim_time = 0.0;
    int _steps_taken = 0;
    std::uint64_t _next_seq = 0;
    std::chrono::steady_clock::time_point _started;
};

struct StepOutcome
{
    bool terminal = false;
    SessionStatus status = SessionStatus::running;
};

/// Builds the request for the next LEO step from the current history.
[[nodiscard]] protocol::PromptBundle build_prompt(const Session& session, const tools::ToolRegistry& registry);

/// Segments appended to a prompt for in-step repair: the rejected reply and its hint.
[[nodiscard]] std::vector<Segment> repair_segments(const std::vector<RepairAttempt>& repairs);

/// Cancel, interjection drain and step-limit checks run at every step boundary.
/// Returns the terminal result when one of them ends the session.
std::optional<SessionResult> step_boundary(Session& session);

/// Returns a repair hint when a reply is rejected.
using ReplyCheck = std::function<std::optional<std::string>(std::string_view reply)>;

struct ModelTurn
{
    /// The accepted reply.
    std::string text;
    TokenUsage usage;
    std::vector<RepairAttempt> repairs;
    /// Set when the turn ended the session (model failure or repair budget exhausted).
    std::optional<SessionResult> terminal;
};

/// Metered model call with in-step repair: rejected replies and their hints are appended
/// to the prompt until `check` accepts one or max_parse_retries is reached.
/// `max_rejections` overrides the config value when positive.
ModelTurn request_turn(Session& session, llm::ChatModel& model, const std::vector<Segment>& base,
                       const ReplyCheck& check, int max_rejections = 0);

/// ReplyCheck for the agent message protocol.
std::optional<std::string> agent_message_check(std::string_view reply);

/// Handles final_response and abort: appends the final entry and finishes the session.
std::optional<SessionResult> finish_on_reserved(Session& session, const AgentMessage& msg);

/// Invokes the tool named by `msg`, advances sim time and records the observation.
Observation execute_tool(Session& session, const tools::ToolRegistry& registry, sim::World& world,
                         const AgentMessage& msg);

/// One LEO cycle: boundary checks, prompt, model, parse (with repair), tool, history.
StepOutcome step(Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model, sim::World& world);

/// Runs LEO steps until a terminal condition.
SessionResult run_leo(Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model, sim::World& world);

/// Runs the architecture named by `session.config().agent_kind`.
SessionResult run(Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model, sim::World& world);

SessionResult run_session(std::string task_text, const tools::ToolRegistry& registry, llm::ChatModel& model,
                          sim::World& world, SessionConfig config);

json to_json(const SessionResult& result, bool include_history = false);

} // namespace leo::agent
