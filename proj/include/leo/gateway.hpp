// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/agent.hpp>
#include <leo/bus.hpp>
#include <leo/harness.hpp>

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace leo::gateway
{

inline constexpr std::size_t kDefaultMaxQueuedFrames = 1000;
inline constexpr double kDefaultSnapshotHz = 2.0;

/// Topic helpers: /session/<id>/steps, /session/<id>/world, /tools/config.
[[nodiscard]] std::string steps_topic(std::string_view session_id);
[[nodiscard]] std::string world_topic(std::string_view session_id);
inline constexpr std::string_view kToolsTopic = "/tools/config";

/// Bus payload shape shared by every gateway topic: {type, session_id?, payload}.
[[nodiscard]] json event_message(std::string_view type, std::string_view session_id, json payload);

/// Admits at most `hz` events per second, the first one immediately.
class SnapshotThrottle
{
public:
    using Clock = std::chrono::steady_clock;

    explicit SnapshotThrottle(double hz = kDefaultSnapshotHz): _hz(hz) {}
    bool admit(Clock::time_point now);

private:
    double _hz;
    std::optional<Clock::time_point> _last;
};

/// Event payload for one history entry, or nullopt for entries that are not streamed
/// (the task prompt and the final entry travel in session_started / session_ended).
[[nodiscard]] std::optional<std::pair<std::string, json>> entry_event(const HistoryEntry& entry);

/// Publishes history entries and throttled snapshots of one session on the bus. Install
/// `listener()` on the session before running it; all calls come from the runner.
class SessionBridge
{
public:
    SessionBridge(MessageBus& bus, std::string session_id, const sim::World& world, double snapshot_hz);

    [[nodiscard]] agent::Session::EntryListener listener();
    void publish_started(json payload);
    /// Publishes a final snapshot and then session_ended, which is the last steps message.
    void publish_ended(const agent::SessionResult& result);

    /// Latest world snapshot, refreshed after every observation regardless of the throttle.
    [[nodiscard]] json latest_snapshot() const;

private:
    void on_entry(const HistoryEntry& entry);
    void publish_snapshot(bool force);

    MessageBus& _bus;
    std::string _id;
    const sim::World& _world;
    SnapshotThrottle _throttle;
    mutable std::mutex _mutex;
    json _latest;
};

void bridge_session(agent::Session& session, SessionBridge& bridge);

struct RuntimeConfig
{
    /// Directory holding scenarios/ and scripts/.
    std::filesystem::path data_dir = "data";
    double snapshot_hz = kDefaultSnapshotHz;
};

struct SessionDescriptor
{
    std::string session_id;
    std::string task_id;
    std::string agent_kind;
    std::string status; // "running" or a terminal status
    std::string created_at; // UTC, ISO 8601
};

json to_json(const SessionDescriptor& d);

struct CommandReply
{
    bool ok = true;
    json payload = json::object();
    std::string session_id;
    /// Runs once the reply has been queued for the client, so that the ack precedes any
    /// event the command causes.
    std::function<void()> after_reply;

    static CommandReply error(std::string message);
};

/// Transport-free command handling: owns sessions, their worlds and runner threads.
class Runtime
{
public:
    Runtime(MessageBus& bus, RuntimeConfig config);
    ~Runtime();
    Runtime(const Runtime&) = delete;
    Runtime& operator=(const Runtime&) = delete;

    /// Never throws; failures become error replies.
    CommandReply handle(std::string_view type, const json& payload);

    [[nodiscard]] std::vector<SessionDescriptor> sessions() const;
    /// Blocks until the session ends or the timeout passes.
    std::optional<agent::SessionResult> wait(std::string_view session_id, std::chrono::milliseconds timeout);

    [[nodiscard]] static const std::vector<std::string>& command_types();

private:
    struct Live;

    CommandReply start_task(const json& payload);
    CommandReply interject(const json& payload);
    CommandReply cancel(const json& payload);
    CommandReply set_tool_enabled(const json& payload);
    CommandReply list_tools() const;
    CommandReply list_sessions() const;
    CommandReply get_snapshot(const json& payload);
    CommandReply get_trace(const json& payload);

    std::shared_ptr<Live> find(const json& payload) const;
    harness::ModelFactory factory_for(const std::string& spec, const std::string& task, const std::string& agent) const;

    MessageBus& _bus;
    RuntimeConfig _config;
    tools::ToolRegistry _catalog;
    mutable std::mutex _mutex;
    std::map<std::string, bool> _overrides;
    std::vector<std::shared_ptr<Live>> _sessions;
    std::uint64_t _next_id = 1;
};

/// Outgoing frame buffer of one client. Frames get their seq when they are popped, so
/// the seq seen by the client is gap-free and strictly increasing. When the buffer is
/// full, world snapshots are dropped (the newest arrival or the oldest queued one);
/// other frames are always kept. The next pop after a drop yields a frames_dropped notice.
class FrameQueue
{
public:
    explicit FrameQueue(std::size_t capacity = kDefaultMaxQueuedFrames): _capacity(capacity) {}

    void push(json frame);
    [[nodiscard]] std::optional<json> pop();
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::uint64_t dropped_total() const;

    [[nodiscard]] static bool droppable(const json& frame);

private:
    mutable std::mutex _mutex;
    std::size_t _capacity;
    std::deque<json> _frames;
    std::uint64_t _pending_drops = 0;
    std::uint64_t _dropped_total = 0;
    std::uint64_t _next_seq = 1;
};

/// Frame builders.
[[nodiscard]] json event_frame(const BusMessage& msg);
[[nodiscard]] json ack_frame(std::string_view type, const json& reply_to, const CommandReply& reply);
[[nodiscard]] json error_frame(std::string_view type, const json& reply_to, std::string_view message);

/// Parses one client text frame and runs it. Always returns exactly one ack or error.
json dispatch_frame(Runtime& runtime, std::string_view text, std::function<void()>* after_reply = nullptr);

struct GatewayConfig
{
    std::string address = "127.0.0.1";
    /// 0 picks a free port.
    unsigned short port = 8765;
    std::size_t max_queued_frames = kDefaultMaxQueuedFrames;
    /// SO_SNDBUF for client sockets; 0 keeps the system default.
    int send_buffer_bytes = 0;
    /// Served at "/" for plain HTTP requests when set.
    std::filesystem::path static_dir;
    int io_threads = 2;
    RuntimeConfig runtime;
};

/// WebSocket server at /ws bridging bus topics to frames and frames to the runtime.
class GatewayServer
{
public:
    explicit GatewayServer(GatewayConfig config);
    ~GatewayServer();
    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    /// Binds and starts the I/O threads. Throws std::runtime_error if the port is taken.
    void start();
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();

    [[nodiscard]] unsigned short port() const noexcept;
    [[nodiscard]] MessageBus& bus() noexcept;
    [[nodiscard]] Runtime& runtime() noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> _impl;
};

} // namespace leo::gateway
