// SPDX-License-Identifier: Apache-2.0
#include <leo/gateway.hpp>
#include <leo/protocol.hpp>
#include <leo/toolset.hpp>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <algorithm>
#include <condition_variable>

namespace leo::gateway
{

std::string steps_topic(std::string_view session_id)
{
    return fmt::format("/session/{}/steps", session_id);
}

std::string world_topic(std::string_view session_id)
{
    return fmt::format("/session/{}/world", session_id);
}

json event_message(std::string_view type, std::string_view session_id, json payload)
{
    json j = {{"type", type}, {"payload", std::move(payload)}};
    if (!session_id.empty())
        j["session_id"] = session_id;
    return j;
}

bool SnapshotThrottle::admit(Clock::time_point now)
{
    if (_hz <= 0.0)
        return true;
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / _hz));
    if (_last && now - *_last < period)
        return false;
    _last = now;
    return true;
}

std::optional<std::pair<std::string, json>> entry_event(const HistoryEntry& entry)
{
    switch (entry.kind)
    {
    case EntryKind::agent_step:
    {
        const auto& msg = entry.step();
        json p = {{"seq", entry.seq},
                  {"sim_time", entry.sim_time},
                  {"agent_message", protocol::serialize(msg)},
                  {"repairs", entry.repairs.size()}};
        if (entry.usage)
            p["usage"] = to_json(*entry.usage);
        return std::pair{std::string("agent_step"), std::move(p)};
    }
    case EntryKind::observation:
        return std::pair{std::string("observation"),
                         json{{"seq", entry.seq}, {"sim_time", entry.sim_time}, {"observation", to_json(entry.observation())}}};
    case EntryKind::interjection:
        return std::pair{std::string("interjection_applied"),
                         json{{"seq", entry.seq}, {"sim_time", entry.sim_time}, {"text", entry.text()}}};
    case EntryKind::user_task:
    case EntryKind::final:
        break;
    }
    return std::nullopt;
}

// --- bridge --------------------------------------------------------------------------

SessionBridge::SessionBridge(MessageBus& bus, std::string session_id, const sim::World& world, double snapshot_hz):
    _bus(bus), _id(std::move(session_id)), _world(world), _throttle(snapshot_hz), _latest(sim::snapshot(world))
{
}

agent::Session::EntryListener SessionBridge::listener()
{
    return [this](const HistoryEntry& entry) { on_entry(entry); };
}

void SessionBridge::publish_started(json payload)
{
    _bus.publish(steps_topic(_id), event_message("session_started", _id, std::move(payload)));
    publish_snapshot(true);
}

void SessionBridge::publish_ended(const agent::SessionResult& result)
{
    publish_snapshot(true);
    _bus.publish(steps_topic(_id), event_message("session_ended", _id,
                                                 {{"status", agent::to_string(result.status)},
                                                  {"final_report", result.final_report},
                                                  {"token_usage", to_json(result.token_usage)},
                                                  {"model_calls", result.model_calls},
                                                  {"sim_time", result.sim_time}}));
}

json SessionBridge::latest_snapshot() const
{
    std::lock_guard lock(_mutex);
    return _latest;
}

void SessionBridge::on_entry(const HistoryEntry& entry)
{
    auto event = entry_event(entry);
    if (!event)
        return;
    _bus.publish(steps_topic(_id), event_message(event->first, _id, std::move(event->second)));
    if (entry.kind == EntryKind::observation)
        publish_snapshot(false);
}

void SessionBridge::publish_snapshot(bool force)
{
    auto snap = sim::snapshot(_world);
    {
        std::lock_guard lock(_mutex);
        _latest = snap;
    }
    const bool admitted = _throttle.admit(SnapshotThrottle::Clock::now());
    if (force || admitted)
        _bus.publish(world_topic(_id), event_message("world_snapshot", _id, std::move(snap)));
}

void bridge_session(agent::Session& session, SessionBridge& bridge)
{
    session.set_listener(bridge.listener());
}

// --- runtime -------------------------------------------------------------------------

json to_json(const SessionDescriptor& d)
{
    return {{"session_id", d.session_id},
            {"task_id", d.task_id},
            {"agent_kind", d.agent_kind},
            {"status", d.status},
            {"created_at", d.created_at}};
}

CommandReply CommandReply::error(std::string message)
{
    CommandReply r;
    r.ok = false;
    r.payload = {{"message", std::move(message)}};
    return r;
}

struct Runtime::Live
{
    SessionDescriptor descriptor;
    harness::ModelSet models;
    sim::World world;
    tools::ToolRegistry registry;
    std::unique_ptr<agent::Session> session;
    std::unique_ptr<SessionBridge> bridge;
    std::thread runner;

    std::mutex mutex;
    std::condition_variable cv;
    std::optional<agent::SessionResult> result;
};

namespace
{

std::string now_iso()
{
    const auto now = std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
    return fmt::format("{:%FT%TZ}", now);
}

std::string required_string(const json& payload, const char* key)
{
    auto it = payload.find(key);
    if (it == payload.end() || !it->is_string() || it->get<std::string>().empty())
        throw std::invalid_argument(fmt::format("missing string field '{}'", key));
    return it->get<std::string>();
}

llm::EchoModel& catalog_model()
{
    static llm::EchoModel model;
    return model;
}

} // namespace

const std::vector<std::string>& Runtime::command_types()
{
    static const std::vector<std::string> types = {"start_task",       "interject",  "cancel",
                                                   "set_tool_enabled", "list_tools", "list_sessions",
                                                   "get_snapshot",     "get_trace"};
    return types;
}

Runtime::Runtime(MessageBus& bus, RuntimeConfig config): _bus(bus), _config(std::move(config))
{
    _catalog.register_tool(tools::move_to_tool(sim::RobotKind::uav))
        .register_tool(tools::rotate_tool())
        .register_tool(tools::detect_tool())
        .register_tool(tools::vlm_tool())
        .register_tool(tools::grasp_tool())
        .register_tool(tools::release_tool())
        .register_tool(tools::talk_tool())
        .register_tool(tools::summarize_tool(catalog_model()))
        .register_tool(tools::state_tool());
}

Runtime::~Runtime()
{
    std::vector<std::shared_ptr<Live>> live;
    {
        std::lock_guard lock(_mutex);
        live = _sessions;
    }
    for (auto& s: live)
    {
        try
        {
            s->session->request_cancel();
        }
        catch (const agent::SessionFinished&)
        {
        }
    }
    for (auto& s: live)
    {
        if (s->runner.joinable())
            s->runner.join();
    }
}

CommandReply Runtime::handle(std::string_view type, const json& payload)
{
    try
    {
        if (type == "start_task")
            return start_task(payload);
        if (type == "interject")
            return interject(payload);
        if (type == "cancel")
            return cancel(payload);
        if (type == "set_tool_enabled")
            return set_tool_enabled(payload);
        if (type == "list_tools")
            return list_tools();
        if (type == "list_sessions")
            return list_sessions();
        if (type == "get_snapshot")
            return get_snapshot(payload);
        if (type == "get_trace")
            return get_trace(payload);
        return CommandReply::error(fmt::format("unknown command '{}'", type));
    }
    catch (const std::exception& e)
    {
        return CommandReply::error(e.what());
    }
}

std::shared_ptr<Runtime::Live> Runtime::find(const json& payload) const
{
    const auto id = required_string(payload, "session_id");
    std::lock_guard lock(_mutex);
    for (const auto& s: _sessions)
    {
        if (s->descriptor.session_id == id)
            return s;
    }
    throw std::invalid_argument(fmt::format("unknown session '{}'", id));
}

harness::ModelFactory Runtime::factory_for(const std::string& spec, const std::string& task,
                                           const std::string& agent) const
{
    if (spec == "scripted")
    {
        auto path = _config.data_dir / "scripts" / fmt::format("{}_{}.json", task, agent);
        return harness::model_factory_from_spec("scripted:" + path.string());
    }
    return harness::model_factory_from_spec(spec);
}

CommandReply Runtime::start_task(const json& payload)
{
    const auto task_id = required_string(payload, "task_id");
    const auto agent_name = payload.value("agent_kind", std::string("leo"));
    const auto model_spec = payload.value("model", std::string("scripted"));
    const auto variant_name = payload.value("variant", std::string("zero_shot"));

    auto kind = agent::agent_kind_from_string(agent_name);
    if (!kind)
        return CommandReply::error(fmt::format("unknown agent kind '{}'", agent_name));
    auto variant = harness::prompt_variant_from_string(variant_name);
    if (!variant)
        return CommandReply::error(fmt::format("unknown prompt variant '{}'", variant_name));

    const auto task = harness::find_task(task_id, _config.data_dir, *variant);
    auto factory = factory_for(model_spec, task_id, agent_name);

    auto live = std::make_shared<Live>();
    live->models = factory(0);
    live->world = sim::load_scenario(task.scenario_path);
    live->registry = harness::build_registry(task, live->world, live->models.aux.get());
    live->session = std::make_unique<agent::Session>(task.task_prompt, harness::session_config(task, *kind));

    {
        std::lock_guard lock(_mutex);
        for (const auto& [name, flag]: _overrides)
        {
            if (live->registry.contains(name))
                live->registry.set_enabled(name, flag);
        }
        live->descriptor = {fmt::format("s{}", _next_id++), task_id, agent_name, "running", now_iso()};
        _sessions.push_back(live);
    }
    live->bridge = std::make_unique<SessionBridge>(_bus, live->descriptor.session_id, live->world, _config.snapshot_hz);
    bridge_session(*live->session, *live->bridge);

    CommandReply reply;
    reply.session_id = live->descriptor.session_id;
    reply.payload = to_json(live->descriptor);
    json started = {{"task_id", task_id},
                    {"agent_kind", agent_name},
                    {"variant", variant_name},
                    {"model", model_spec},
                    {"task_text", task.task_prompt}};
    reply.after_reply = [live, started = std::move(started)]() mutable {
        live->runner = std::thread([live, started = std::move(started)]() mutable {
            live->bridge->publish_started(std::move(started));
            agent::SessionResult result;
            try
            {
                result = agent::run(*live->session, live->registry, *live->models.agent, live->world);
            }
            catch (const std::exception& e)
            {
                result = live->session->finish(agent::SessionStatus::model_error, e.what());
            }
            {
                std::lock_guard lock(live->mutex);
                live->descriptor.status = agent::to_string(result.status);
                live->result = result;
            }
            live->bridge->publish_ended(result);
            live->cv.notify_all();
        });
    };
    return reply;
}

CommandReply Runtime::interject(const json& payload)
{
    auto live = find(payload);
    auto text = required_string(payload, "text");
    try
    {
        live->session->interject(std::move(text));
    }
    catch (const agent::SessionFinished&)
    {
        return CommandReply::error("session finished");
    }
    CommandReply reply;
    reply.session_id = live->descriptor.session_id;
    reply.payload = {{"queued", true}};
    return reply;
}

CommandReply Runtime::cancel(const json& payload)
{
    auto live = find(payload);
    try
    {
        live->session->request_cancel();
    }
    catch (const agent::SessionFinished&)
    {
        return CommandReply::error("session finished");
    }
    CommandReply reply;
    reply.session_id = live->descriptor.session_id;
    reply.payload = {{"cancel_requested", true}};
    return reply;
}

CommandReply Runtime::set_tool_enabled(const json& payload)
{
    const auto name = required_string(payload, "name");
    auto flag = payload.find("flag");
    if (flag == payload.end() || !flag->is_boolean())
        return CommandReply::error("missing boolean field 'flag'");
    if (!_catalog.contains(name))
        return CommandReply::error(fmt::format("unknown tool '{}'", name));
    const bool enabled = flag->get<bool>();

    bool changed = false;
    std::vector<std::shared_ptr<Live>> live;
    {
        std::lock_guard lock(_mutex);
        auto current = _overrides.find(name);
        const bool before = current == _overrides.end() ? *_catalog.is_enabled(name) : current->second;
        changed = before != enabled;
        _overrides[name] = enabled;
        live = _sessions;
    }
    for (auto& s: live)
    {
        if (s->registry.contains(name))
            s->registry.set_enabled(name, enabled);
    }
    json body = {{"name", name}, {"enabled", enabled}};
    if (changed)
        _bus.publish(kToolsTopic, event_message("tool_config_changed", "", body));
    CommandReply reply;
    reply.payload = std::move(body);
    return reply;
}

CommandReply Runtime::list_tools() const
{
    json tools = json::array();
    std::lock_guard lock(_mutex);
    for (const auto& info: _catalog.catalog())
    {
        auto it = _overrides.find(info.name);
        tools.push_back({{"name", info.name},
                         {"description", info.description},
                         {"enabled", it == _overrides.end() ? info.enabled : it->second}});
    }
    CommandReply reply;
    reply.payload = {{"tools", std::move(tools)}};
    return reply;
}

std::vector<SessionDescriptor> Runtime::sessions() const
{
    std::vector<std::shared_ptr<Live>> live;
    {
        std::lock_guard lock(_mutex);
        live = _sessions;
    }
    std::vector<SessionDescriptor> out;
    for (const auto& s: live)
    {
        std::lock_guard lock(s->mutex);
        out.push_back(s->descriptor);
    }
    return out;
}

CommandReply Runtime::list_sessions() const
{
    json list = json::array();
    for (const auto& d: sessions())
        list.push_back(to_json(d));
    CommandReply reply;
    reply.payload = {{"sessions", std::move(list)}};
    return reply;
}

CommandReply Runtime::get_snapshot(const json& payload)
{
    auto live = find(payload);
    CommandReply reply;
    reply.session_id = live->descriptor.session_id;
    reply.payload = {{"world", live->bridge->latest_snapshot()}};
    return reply;
}

CommandReply Runtime::get_trace(const json& payload)
{
    auto live = find(payload);
    json entries = json::array();
    for (const auto& e: live->session->history())
        entries.push_back(to_json(e));
    CommandReply reply;
    reply.session_id = live->descriptor.session_id;
    std::lock_guard lock(live->mutex);
    reply.payload = {{"status", live->descriptor.status}, {"entries", std::move(entries)}};
    if (live->result)
        reply.payload["final_report"] = live->result->final_report;
    return reply;
}

std::optional<agent::SessionResult> Runtime::wait(std::string_view session_id, std::chrono::milliseconds timeout)
{
    auto live = find(json{{"session_id", session_id}});
    std::unique_lock lock(live->mutex);
    if (!live->cv.wait_for(lock, timeout, [&] { return live->result.has_value(); }))
        return std::nullopt;
    return live->result;
}

// --- frames --------------------------------------------------------------------------

bool FrameQueue::droppable(const json& frame)
{
    return frame.value("kind", "") == "event" && frame.value("type", "") == "world_snapshot";
}

void FrameQueue::push(json frame)
{
    std::lock_guard lock(_mutex);
    if (_frames.size() >= _capacity)
    {
        if (droppable(frame))
        {
            ++_pending_drops;
            ++_dropped_total;
            return;
        }
        auto victim = std::find_if(_frames.begin(), _frames.end(), [](const json& f) { return droppable(f); });
        if (victim != _frames.end())
        {
            _frames.erase(victim);
            ++_pending_drops;
            ++_dropped_total;
        }
    }
    _frames.push_back(std::move(frame));
}

std::optional<json> FrameQueue::pop()
{
    std::lock_guard lock(_mutex);
    json frame;
    if (_pending_drops > 0)
    {
        frame = {{"kind", "event"},
                 {"type", "frames_dropped"},
                 {"payload", {{"count", _pending_drops}, {"total", _dropped_total}}}};
        _pending_drops = 0;
    }
    else if (!_frames.empty())
    {
        frame = std::move(_frames.front());
        _frames.pop_front();
    }
    else
    {
        return std::nullopt;
    }
    frame["seq"] = _next_seq++;
    return frame;
}

std::size_t FrameQueue::size() const
{
    std::lock_guard lock(_mutex);
    return _frames.size() + (_pending_drops > 0 ? 1 : 0);
}

std::uint64_t FrameQueue::dropped_total() const
{
    std::lock_guard lock(_mutex);
    return _dropped_total;
}

json event_frame(const BusMessage& msg)
{
    json f = {{"kind", "event"}, {"type", msg.payload.value("type", "")}, {"payload", msg.payload.value("payload", json::object())}};
    if (auto id = msg.payload.find("session_id"); id != msg.payload.end())
        f["session_id"] = *id;
    return f;
}

json ack_frame(std::string_view type, const json& reply_to, const CommandReply& reply)
{
    json f = {{"kind", "ack"}, {"type", type}, {"reply_to", reply_to}, {"payload", reply.payload}};
    if (!reply.session_id.empty())
        f["session_id"] = reply.session_id;
    return f;
}

json error_frame(std::string_view type, const json& reply_to, std::string_view message)
{
    return {{"kind", "error"}, {"type", type}, {"reply_to", reply_to}, {"payload", {{"message", message}}}};
}

json dispatch_frame(Runtime& runtime, std::string_view text, std::function<void()>* after_reply)
{
    auto frame = json::parse(text, nullptr, false);
    if (frame.is_discarded() || !frame.is_object())
        return error_frame("malformed_frame", nullptr, "frame is not a JSON object");
    json reply_to = frame.contains("seq") ? frame["seq"] : json(nullptr);
    if (!reply_to.is_number_integer())
        return error_frame("malformed_frame", reply_to, "frame needs an integer 'seq'");
    if (frame.value("kind", "") != "command")
        return error_frame("malformed_frame", reply_to, "clients may only send frames of kind 'command'");
    auto type_it = frame.find("type");
    if (type_it == frame.end() || !type_it->is_string())
        return error_frame("malformed_frame", reply_to, "frame needs a string 'type'");
    const auto type = type_it->get<std::string>();

    json payload = frame.value("payload", json::object());
    if (!payload.is_object())
        return error_frame(type, reply_to, "payload must be an object");
    if (auto id = frame.find("session_id"); id != frame.end() && !payload.contains("session_id"))
        payload["session_id"] = *id;

    const auto& known = Runtime::command_types();
    if (std::find(known.begin(), known.end(), type) == known.end())
        return error_frame(type, reply_to, fmt::format("unknown command '{}'", type));

    auto reply = runtime.handle(type, payload);
    if (!reply.ok)
        return error_frame(type, reply_to, reply.payload.value("message", "command failed"));
    if (after_reply)
        *after_reply = std::move(reply.after_reply);
    else if (reply.after_reply)
        reply.after_reply();
    return ack_frame(type, reply_to, reply);
}

} // namespace leo::gateway
