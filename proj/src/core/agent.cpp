// SPDX-License-Identifier: Apache-2.0
#include <leo/agent.hpp>

#include <array>

namespace leo::agent
{

namespace
{

constexpr std::array kAgentKinds = {AgentKind::leo, AgentKind::das, AgentKind::cge, AgentKind::dllms,
                                    AgentKind::tllms};
constexpr std::array kStatuses = {SessionStatus::running,   SessionStatus::completed,
                                  SessionStatus::aborted_by_agent, SessionStatus::step_limit,
                                  SessionStatus::unrecoverable_parse, SessionStatus::cancelled,
                                  SessionStatus::model_error};

std::string text_field(const json& input, const char* key)
{
    auto it = input.find(key);
    if (it != input.end() && it->is_string())
        return it->get<std::string>();
    return {};
}

} // namespace

const char* to_string(AgentKind kind) noexcept
{
    switch (kind)
    {
        case AgentKind::leo: return "leo";
        case AgentKind::das: return "das";
        case AgentKind::cge: return "cge";
        case AgentKind::dllms: return "dllms";
        case AgentKind::tllms: return "tllms";
    }
    return "leo";
}

std::optional<AgentKind> agent_kind_from_string(std::string_view text) noexcept
{
    for (auto kind: kAgentKinds)
    {
        if (text == to_string(kind))
            return kind;
    }
    return std::nullopt;
}

const char* to_string(SessionStatus status) noexcept
{
    switch (status)
    {
        case SessionStatus::running: return "running";
        case SessionStatus::completed: return "completed";
        case SessionStatus::aborted_by_agent: return "aborted_by_agent";
        case SessionStatus::step_limit: return "step_limit";
        case SessionStatus::unrecoverable_parse: return "unrecoverable_parse";
        case SessionStatus::cancelled: return "cancelled";
        case SessionStatus::model_error: return "model_error";
    }
    return "running";
}

std::optional<SessionStatus> session_status_from_string(std::string_view text) noexcept
{
    for (auto status: kStatuses)
    {
        if (text == to_string(status))
            return status;
    }
    return std::nullopt;
}

void SessionConfig::validate() const
{
    if (max_steps < 1)
        throw std::invalid_argument("max_steps must be at least 1");
    if (max_parse_retries < 1)
        throw std::invalid_argument("max_parse_retries must be at least 1");
    if (max_model_retries < 0)
        throw std::invalid_argument("max_model_retries must not be negative");
    if (role_definition.empty())
        throw std::invalid_argument("role_definition must not be empty");
    if (!(temperature >= 0.0 && temperature <= 2.0))
        throw std::invalid_argument("temperature must lie in [0, 2]");
    if (max_output_tokens < 1)
        throw std::invalid_argument("max_output_tokens must be positive");
    if (max_plans < 1)
        throw std::invalid_argument("max_plans must be at least 1");
}

// --- Session ----------------------------------------------------------------

Session::Session(std::string task_text, SessionConfig config):
    _task(std::move(task_text)), _config(std::move(config)), _started(std::chrono::steady_clock::now())
{
    if (_task.empty())
        throw std::invalid_argument("task text must not be empty");
    _config.validate();
    append(EntryKind::user_task, _task);
}

Session::Activity::~Activity()
{
    if (_session == nullptr)
        return;
    {
        std::lock_guard lock(_session->_mutex);
        --_session->_busy;
    }
    _session->_cv.notify_all();
}

Session::Activity Session::begin_activity()
{
    std::lock_guard lock(_mutex);
    if (_finished || _finalizing)
        return Activity(nullptr);
    ++_busy;
    return Activity(this);
}

void Session::interject(std::string text)
{
    std::lock_guard lock(_mutex);
    if (_finished)
        throw SessionFinished();
    _pending.push_back(std::move(text));
}

void Session::request_cancel()
{
    std::lock_guard lock(_mutex);
    if (_finished || _cancel_requested)
        throw SessionFinished();
    _cancel_requested = true;
}

SessionResult Session::cancel()
{
    {
        std::unique_lock lock(_mutex);
        if (_finished || _cancel_requested)
            throw SessionFinished();
        _cancel_requested = true;
        _cv.wait(lock, [this] { return _finished || _busy == 0; });
        if (_finished)
            return *_result;
        _finalizing = true;
    }
    // No runner is inside a step, and none can enter one, so the boundary is now.
    return finish(SessionStatus::cancelled, "cancelled by the user");
}

bool Session::finished() const
{
    std::lock_guard lock(_mutex);
    return _finished;
}

SessionStatus Session::status() const
{
    std::lock_guard lock(_mutex);
    return _result ? _result->status : SessionStatus::running;
}

History Session::history() const
{
    std::lock_guard lock(_mutex);
    return _history;
}

std::optional<SessionResult> Session::result() const
{
    std::lock_guard lock(_mutex);
    return _result;
}

SessionResult Session::wait() const
{
    std::unique_lock lock(_mutex);
    _cv.wait(lock, [this] { return _finished; });
    return *_result;
}

void Session::set_listener(EntryListener listener)
{
    std::lock_guard lock(_mutex);
    _listener = std::move(listener);
}

const HistoryEntry& Session::append(EntryKind kind, std::variant<std::string, AgentMessage, Observation> payload,
                                    std::optional<TokenUsage> usage, std::vector<RepairAttempt> repairs)
{
    EntryListener listener;
    const HistoryEntry* added = nullptr;
    {
        std::lock_guard lock(_mutex);
        HistoryEntry entry;
        entry.kind = kind;
        entry.payload = std::move(payload);
        entry.seq = _next_seq++;
        entry.timestamp = std::chrono::steady_clock::now();
        entry.sim_time = _sim_time;
        entry.usage = usage;
        entry.repairs = std::move(repairs);
        _history.push_back(std::move(entry));
        if (kind == EntryKind::agent_step)
            ++_steps_taken;
        added = &_history.back();
        listener = _listener;
    }
    // Only the runner appends, so the reference stays valid for the listener call.
    if (listener)
        listener(*added);
    return *added;
}

std::size_t Session::drain_interjections()
{
    std::deque<std::string> pending;
    {
        std::lock_guard lock(_mutex);
        pending.swap(_pending);
    }
    for (auto& text: pending)
        append(EntryKind::interjection, std::move(text));
    return pending.size();
}

bool Session::cancel_requested() const
{
    std::lock_guard lock(_mutex);
    return _cancel_requested;
}

llm::Completion Session::complete(llm::ChatModel& model, const llm::ChatRequest& request)
{
    auto completion = model.complete(request);
    std::lock_guard lock(_mutex);
    _usage += completion.usage;
    _model_latency += completion.latency_s;
    ++_model_calls;
    return completion;
}

TokenUsage Session::token_usage() const
{
    std::lock_guard lock(_mutex);
    return _usage;
}

SessionResult Session::finish(SessionStatus status, std::string report)
{
    {
        std::lock_guard lock(_mutex);
        if (_finished)
            return *_result;
    }
    // Interjections accepted before this point still land in the history exactly once.
    drain_interjections();

    SessionResult result;
    EntryListener listener;
    std::size_t first_flushed = 0;
    {
        std::lock_guard lock(_mutex);
        if (_finished)
            return *_result;
        // Anything queued between the drain and here is flushed under the lock.
        first_flushed = _history.size();
        while (!_pending.empty())
        {
            HistoryEntry entry;
            entry.kind = EntryKind::interjection;
            entry.payload = std::move(_pending.front());
            entry.seq = _next_seq++;
            entry.timestamp = std::chrono::steady_clock::now();
            entry.sim_time = _sim_time;
            _history.push_back(std::move(entry));
            _pending.pop_front();
        }
        result.status = status;
        result.final_report = std::move(report);
        result.history = _history;
        result.token_usage = _usage;
        result.model_calls = _model_calls;
        result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - _started).count();
        result.sim_time = _sim_time;
        result.model_latency = _model_latency;
        _result = result;
        _finished = true;
        listener = _listener;
    }
    if (listener)
    {
        for (auto i = first_flushed; i < result.history.size(); ++i)
            listener(result.history[i]);
    }
    _cv.notify_all();
    return result;
}

// --- LEO loop ---------------------------------------------------------------

protocol::PromptBundle build_prompt(const Session& session, const tools::ToolRegistry& registry)
{
    auto catalog = registry.catalog();
    return {protocol::render_system_prompt(catalog, session.config().role_definition, session.config().extra_guidance),
            protocol::render_history(session.entries())};
}

std::vector<Segment> repair_segments(const std::vector<RepairAttempt>& repairs)
{
    std::vector<Segment> out;
    for (const auto& repair: repairs)
    {
        out.push_back({Role::assistant, repair.raw});
        Observation hint;
        hint.source_tool = "protocol";
        hint.content = repair.hint;
        hint.is_error = true;
        out.push_back({Role::observation, protocol::render_observation(hint)});
    }
    return out;
}

std::optional<SessionResult> step_boundary(Session& session)
{
    const auto& config = session.config();
    if (session.cancel_requested())
        return session.finish(SessionStatus::cancelled, "cancelled by the user");

    session.drain_interjections();

    if (session.steps_taken() >= config.max_steps)
        return session.finish(SessionStatus::step_limit,
                              "stopped after reaching the limit of " + std::to_string(config.max_steps) + " steps");
    return std::nullopt;
}

ModelTurn request_turn(Session& session, llm::ChatModel& model, const std::vector<Segment>& base,
                       const ReplyCheck& check, int max_rejections)
{
    const auto& config = session.config();
    const int budget = max_rejections > 0 ? max_rejections : config.max_parse_retries;
    ModelTurn turn;
    int model_failures = 0;

    for (;;)
    {
        llm::ChatRequest request;
        request.segments = base;
        auto extra = repair_segments(turn.repairs);
        request.segments.insert(request.segments.end(), extra.begin(), extra.end());
        request.temperature = config.temperature;
        request.max_output_tokens = config.max_output_tokens;

        llm::Completion completion;
        try
        {
            completion = session.complete(model, request);
        }
        catch (const llm::LlmError& e)
        {
            if (!e.retryable() || ++model_failures > config.max_model_retries)
            {
                turn.terminal = session.finish(SessionStatus::model_error, std::string("model call failed: ") + e.what());
                return turn;
            }
            continue;
        }
        turn.usage += completion.usage;

        auto hint = check ? check(completion.text) : std::nullopt;
        if (hint)
        {
            turn.repairs.push_back({completion.text, *hint});
            if (static_cast<int>(turn.repairs.size()) >= budget)
            {
                turn.terminal = session.finish(SessionStatus::unrecoverable_parse,
                                               "gave up after " + std::to_string(turn.repairs.size()) +
                                                   " unparsable replies in a row; last problem: " + *hint);
                return turn;
            }
            continue;
        }
        turn.text = std::move(completion.text);
        return turn;
    }
}

std::optional<std::string> agent_message_check(std::string_view reply)
{
    auto parsed = protocol::parse_agent_message(reply);
    if (parsed.ok())
        return std::nullopt;
    return parsed.failure().hint;
}

std::optional<SessionResult> finish_on_reserved(Session& session, const AgentMessage& msg)
{
    if (msg.action == kFinalAction)
    {
        auto report = text_field(msg.action_input, "report");
        if (report.empty())
            report = msg.message.empty() ? "task completed" : msg.message;
        session.append(EntryKind::final, report);
        return session.finish(SessionStatus::completed, report);
    }
    if (msg.action == kAbortAction)
    {
        auto reason = text_field(msg.action_input, "reason");
        if (reason.empty())
            reason = msg.message.empty() ? "the agent could not proceed" : msg.message;
        session.append(EntryKind::final, reason);
        return session.finish(SessionStatus::aborted_by_agent, reason);
    }
    return std::nullopt;
}

Observation execute_tool(Session& session, const tools::ToolRegistry& registry, sim::World& world,
                         const AgentMessage& msg)
{
    auto obs = registry.invoke(msg.action, msg.action_input, world);
    session.add_sim_time(obs.sim_elapsed);
    session.append(EntryKind::observation, obs);
    return obs;
}

StepOutcome step(Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model, sim::World& world)
{
    auto terminal = [](const SessionResult& r) { return StepOutcome{true, r.status}; };

    auto activity = session.begin_activity();
    if (!activity)
        return {true, session.wait().status};

    if (auto done = step_boundary(session))
        return terminal(*done);

    auto turn = request_turn(session, model, build_prompt(session, registry).segments(), agent_message_check);
    if (turn.terminal)
        return terminal(*turn.terminal);

    const auto msg = protocol::parse_agent_message(turn.text).message();
    session.append(EntryKind::agent_step, msg, turn.usage, std::move(turn.repairs));

    if (auto done = finish_on_reserved(session, msg))
        return terminal(*done);

    execute_tool(session, registry, world, msg);
    return {false, SessionStatus::running};
}

SessionResult run_leo(Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model, sim::World& world)
{
    for (;;)
    {
        auto outcome = step(session, registry, model, world);
        if (outcome.terminal)
            return session.wait();
    }
}

json to_json(const SessionResult& result, bool include_history)
{
    json j = {{"status", to_string(result.status)},
              {"final_report", result.final_report},
              {"token_usage", leo::to_json(result.token_usage)},
              {"model_calls", result.model_calls},
              {"sim_time", result.sim_time},
              {"model_latency", result.model_latency},
              {"wall_time", result.wall_time}};
    if (include_history)
    {
        json entries = json::array();
        for (const auto& e: result.history)
            entries.push_back(leo::to_json(e));
        j["history"] = std::move(entries);
    }
    return j;
}

} // namespace leo::agent
