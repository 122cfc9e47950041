// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <leo/agent.hpp>
#include <leo/llm.hpp>
#include <leo/toolset.hpp>

#include <gtest/gtest.h>

#include <condition_variable>
#include <future>
#include <random>
#include <thread>

using namespace leo;
using agent::Session;
using agent::SessionConfig;
using agent::SessionStatus;

namespace
{

tools::ToolRegistry uav_tools()
{
    tools::ToolRegistry reg;
    reg.register_tool(tools::move_to_tool(sim::RobotKind::uav))
        .register_tool(tools::rotate_tool())
        .register_tool(tools::detect_tool())
        .register_tool(tools::state_tool());
    return reg;
}

std::vector<std::string> rotations(int n)
{
    std::vector<std::string> script;
    for (int i = 0; i < n; ++i)
        script.push_back(test::step("turning", "rotate", {{"yaw_deg", 10}}));
    script.push_back(test::final_step("looked around"));
    return script;
}

std::string prompt_text(const llm::ChatRequest& request)
{
    std::string text;
    for (const auto& seg: request.segments)
        text += seg.text + "\n";
    return text;
}

bool contains(const std::string& haystack, std::string_view needle)
{
    return haystack.find(needle) != std::string::npos;
}

std::vector<const HistoryEntry*> of_kind(const History& h, EntryKind kind)
{
    std::vector<const HistoryEntry*> out;
    for (const auto& e: h)
        if (e.kind == kind)
            out.push_back(&e);
    return out;
}

// Wraps a model and parks the runner inside call number `gate_at` until released.
class GatedModel final: public llm::ChatModel
{
public:
    GatedModel(llm::ChatModel& inner, std::size_t gate_at): _inner(inner), _gate_at(gate_at) {}

    llm::Completion complete(const llm::ChatRequest& request) override
    {
        const auto index = _calls++;
        if (index == _gate_at)
        {
            std::unique_lock lock(_mutex);
            _inside = true;
            _cv.notify_all();
            _cv.wait(lock, [this] { return _released; });
        }
        return _inner.complete(request);
    }

    void wait_inside()
    {
        std::unique_lock lock(_mutex);
        _cv.wait(lock, [this] { return _inside; });
    }

    void release()
    {
        std::lock_guard lock(_mutex);
        _released = true;
        _cv.notify_all();
    }

private:
    llm::ChatModel& _inner;
    std::size_t _gate_at;
    std::size_t _calls = 0;
    std::mutex _mutex;
    std::condition_variable _cv;
    bool _inside = false;
    bool _released = false;
};

TokenUsage entry_usage_sum(const History& h)
{
    TokenUsage sum;
    for (const auto& e: h)
        if (e.usage)
            sum += *e.usage;
    return sum;
}

} // namespace

TEST(RunSession, CompletesWithThreeSteps)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({test::step("going", "move_to", {{"x", 2}, {"y", 2}, {"z", 1}}),
                              test::step("looking", "detect"), test::final_step("the area is clear")});
    auto result = agent::run_session("survey the corner", reg, model, world, {});
    EXPECT_EQ(result.status, SessionStatus::completed);
    EXPECT_EQ(result.final_report, "the area is clear");
    EXPECT_EQ(result.model_calls, 3u);
    ASSERT_EQ(result.history.size(), 7u);
    EXPECT_EQ(result.history.front().kind, EntryKind::user_task);
    EXPECT_EQ(result.history.back().kind, EntryKind::final);
    EXPECT_EQ(of_kind(result.history, EntryKind::agent_step).size(), 3u);
    EXPECT_EQ(of_kind(result.history, EntryKind::observation).size(), 2u);
    for (std::size_t i = 1; i < result.history.size(); ++i)
        EXPECT_GT(result.history[i].seq, result.history[i - 1].seq);
    EXPECT_GT(result.sim_time, 0.0);
}

TEST(RunSession, ProseOnlyRepliesAreUnrecoverable)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({"I think I should fly north.", "Flying north now.", "Still thinking."});
    auto result = agent::run_session("fly north", reg, model, world, {});
    EXPECT_EQ(result.status, SessionStatus::unrecoverable_parse);
    EXPECT_EQ(result.model_calls, 3u);
    EXPECT_EQ(of_kind(result.history, EntryKind::agent_step).size(), 0u);
}

TEST(RunSession, StepLimit)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model(rotations(3));
    SessionConfig config;
    config.max_steps = 2;
    auto result = agent::run_session("spin", reg, model, world, config);
    EXPECT_EQ(result.status, SessionStatus::step_limit);
    EXPECT_EQ(of_kind(result.history, EntryKind::agent_step).size(), 2u);
    EXPECT_EQ(result.model_calls, 2u);
}

TEST(RunSession, ExhaustedScriptIsAModelError)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({test::step("", "detect")});
    auto result = agent::run_session("look", reg, model, world, {});
    EXPECT_EQ(result.status, SessionStatus::model_error);
}

TEST(RunSession, InvalidConfigRejected)
{
    SessionConfig config;
    config.max_steps = 0;
    EXPECT_THROW(Session("x", config), std::invalid_argument);
    EXPECT_THROW(Session("", SessionConfig{}), std::invalid_argument);
}

TEST(Step, AppendsStepAndObservation)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({test::step("", "get_state")});
    Session session("report state", {});
    auto outcome = agent::step(session, reg, model, world);
    EXPECT_FALSE(outcome.terminal);
    const auto h = session.history();
    ASSERT_EQ(h.size(), 3u);
    EXPECT_EQ(h[1].kind, EntryKind::agent_step);
    EXPECT_EQ(h[2].kind, EntryKind::observation);
    EXPECT_EQ(h[2].observation().source_tool, "get_state");
    EXPECT_EQ(session.steps_taken(), 1);
}

TEST(Step, RepairHintReachesTheSecondPrompt)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    const std::string bad = R"({"action":"detect","message":"","action_input":{}})";
    llm::ScriptedModel inner({bad, test::step("", "detect")});
    llm::RecordingModel model(inner);
    Session session("look", {});
    auto outcome = agent::step(session, reg, model, world);
    EXPECT_FALSE(outcome.terminal);
    auto calls = model.calls();
    ASSERT_EQ(calls.size(), 2u);
    const auto first = prompt_text(calls[0].request);
    const auto second = prompt_text(calls[1].request);
    EXPECT_FALSE(contains(first, bad));
    EXPECT_TRUE(contains(second, bad));
    const auto hint = protocol::parse_agent_message(bad).failure().hint;
    EXPECT_TRUE(contains(second, hint));
    const auto h = session.history();
    ASSERT_EQ(h[1].kind, EntryKind::agent_step);
    ASSERT_EQ(h[1].repairs.size(), 1u);
    EXPECT_EQ(h[1].repairs[0].raw, bad);
    EXPECT_EQ(*h[1].usage, model.total_usage());
}

TEST(Step, FinalResponseDoesNotInvokeATool)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    const auto before = world;
    llm::ScriptedModel model({test::final_step("nothing to do")});
    Session session("idle", {});
    auto outcome = agent::step(session, reg, model, world);
    EXPECT_TRUE(outcome.terminal);
    EXPECT_EQ(outcome.status, SessionStatus::completed);
    EXPECT_EQ(world, before);
    EXPECT_EQ(of_kind(session.history(), EntryKind::observation).size(), 0u);
}

TEST(Step, AbortEndsTheSession)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({test::step("", kAbortAction, {{"reason", "no such object"}})});
    auto result = agent::run_session("find the unicorn", reg, model, world, {});
    EXPECT_EQ(result.status, SessionStatus::aborted_by_agent);
    EXPECT_EQ(result.final_report, "no such object");
}

TEST(Interject, AppliedAtTheNextBoundary)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel inner(rotations(2));
    llm::RecordingModel model(inner);
    Session session("spin", {});
    ASSERT_FALSE(agent::step(session, reg, model, world).terminal);
    session.interject("stop after this turn");
    EXPECT_EQ(of_kind(session.history(), EntryKind::interjection).size(), 0u);
    ASSERT_FALSE(agent::step(session, reg, model, world).terminal);
    auto calls = model.calls();
    ASSERT_EQ(calls.size(), 2u);
    EXPECT_TRUE(contains(prompt_text(calls[1].request), "User interjection: stop after this turn"));
    const auto h = session.history();
    ASSERT_EQ(h.size(), 6u);
    EXPECT_EQ(h[3].kind, EntryKind::interjection);
    EXPECT_EQ(h[3].text(), "stop after this turn");
}

TEST(Interject, AfterCompletionThrows)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({test::final_step("done")});
    Session session("x", {});
    agent::run(session, reg, model, world);
    EXPECT_THROW(session.interject("late"), agent::SessionFinished);
    EXPECT_THROW(session.request_cancel(), agent::SessionFinished);
}

// Mid-step interjections must never appear in the prompt of the step in flight and must
// appear in the prompt of the following step. Half the trials park the runner inside a
// model call to force the mid-step case; the rest race freely and check the invariant.
TEST(Interject, OrderingUnderConcurrency)
{
    std::mt19937 rng(2024);
    const int steps = 10;
    for (int trial = 0; trial < 200; ++trial)
    {
        auto reg = uav_tools();
        auto world = test::small_uav_world();
        llm::ScriptedModel scripted(rotations(steps));
        llm::RecordingModel recording(scripted);
        const auto gate_at = std::uniform_int_distribution<std::size_t>(0, steps - 1)(rng);
        const bool gated = trial % 2 == 0;
        GatedModel model(recording, gated ? gate_at : std::size_t(-1));
        const std::string text = "interjection " + std::to_string(trial);

        Session session("spin " + std::to_string(trial), {});
        std::thread runner([&] { agent::run(session, reg, model, world); });
        if (gated)
        {
            model.wait_inside();
            session.interject(text);
            model.release();
        }
        else
        {
            std::this_thread::sleep_for(std::chrono::microseconds(std::uniform_int_distribution<int>(0, 400)(rng)));
            try
            {
                session.interject(text);
            }
            catch (const agent::SessionFinished&)
            {
            }
        }
        runner.join();

        const auto result = *session.result();
        ASSERT_EQ(result.status, SessionStatus::completed);
        const auto& h = result.history;
        const auto calls = recording.calls();
        ASSERT_EQ(calls.size(), static_cast<std::size_t>(steps + 1));

        std::optional<std::size_t> at;
        for (std::size_t i = 0; i < h.size(); ++i)
            if (h[i].kind == EntryKind::interjection)
                at = i;
        if (!at)
        {
            ASSERT_FALSE(gated);
            continue;
        }
        // Never between a step and its observation.
        ASSERT_GT(*at, 0u);
        ASSERT_NE(h[*at - 1].kind, EntryKind::agent_step) << "trial " << trial;

        // Prompt i contains the interjection exactly when the entry precedes agent step i.
        const auto agent_steps = of_kind(h, EntryKind::agent_step);
        ASSERT_EQ(agent_steps.size(), calls.size());
        const std::string rendered = "User interjection: " + text;
        for (std::size_t i = 0; i < calls.size(); ++i)
        {
            const bool before = h[*at].seq < agent_steps[i]->seq;
            ASSERT_EQ(contains(prompt_text(calls[i].request), rendered), before) << "trial " << trial << " call " << i;
        }
        if (gated)
        {
            ASSERT_FALSE(contains(prompt_text(calls[gate_at].request), rendered));
            ASSERT_TRUE(contains(prompt_text(calls[gate_at + 1].request), rendered));
        }
    }
}

TEST(Cancel, MidRun)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel scripted(rotations(10));
    GatedModel model(scripted, 2);
    Session session("spin", {});
    std::thread runner([&] { agent::run(session, reg, model, world); });
    model.wait_inside();
    auto pending = std::async(std::launch::async, [&] { return session.cancel(); });
    // cancel waits for the step in flight.
    EXPECT_EQ(pending.wait_for(std::chrono::milliseconds(50)), std::future_status::timeout);
    model.release();
    auto result = pending.get();
    runner.join();
    EXPECT_EQ(result.status, SessionStatus::cancelled);
    EXPECT_EQ(result.model_calls, 3u);
    EXPECT_EQ(of_kind(result.history, EntryKind::agent_step).size(), 3u);
    EXPECT_EQ(of_kind(result.history, EntryKind::observation).size(), 3u);
    EXPECT_EQ(result.history.back().kind, EntryKind::observation);
    EXPECT_EQ(session.wait().status, SessionStatus::cancelled);
}

TEST(Cancel, TwiceThrows)
{
    Session session("x", {});
    EXPECT_EQ(session.cancel().status, SessionStatus::cancelled);
    EXPECT_THROW(session.cancel(), agent::SessionFinished);
}

TEST(Cancel, BeforeTheFirstStep)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel inner(rotations(1));
    llm::RecordingModel model(inner);
    Session session("spin", {});
    session.request_cancel();
    auto result = agent::run(session, reg, model, world);
    EXPECT_EQ(result.status, SessionStatus::cancelled);
    EXPECT_EQ(model.call_count(), 0u);
    ASSERT_EQ(result.history.size(), 1u);
    EXPECT_EQ(result.history[0].kind, EntryKind::user_task);
}

TEST(Cancel, RequestIsNonBlocking)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel scripted(rotations(5));
    GatedModel model(scripted, 0);
    Session session("spin", {});
    std::thread runner([&] { agent::run(session, reg, model, world); });
    model.wait_inside();
    session.request_cancel(); // returns while the runner is parked
    EXPECT_FALSE(session.finished());
    model.release();
    runner.join();
    EXPECT_EQ(session.wait().status, SessionStatus::cancelled);
    EXPECT_EQ(session.wait().model_calls, 1u);
}

TEST(Tokens, ConservedAcrossOutcomes)
{
    struct Case
    {
        std::vector<std::string> script;
        SessionConfig config;
    };
    SessionConfig two_steps;
    two_steps.max_steps = 2;
    const std::vector<Case> cases = {
        {rotations(4), {}},
        {rotations(4), two_steps},
        {{"prose", R"({"action":"x"})", "more prose"}, {}},
        {{"prose", test::step("", "detect"), "{bad", test::final_step("ok")}, {}},
        {{test::step("", "teleport"), test::final_step("gave up on teleporting")}, {}},
        {{test::step("", "detect")}, {}},
    };
    for (std::size_t i = 0; i < cases.size(); ++i)
    {
        auto reg = uav_tools();
        auto world = test::small_uav_world();
        llm::ScriptedModel inner(cases[i].script);
        llm::RecordingModel model(inner);
        auto result = agent::run_session("task " + std::to_string(i), reg, model, world, cases[i].config);
        std::size_t ok_calls = 0;
        for (const auto& c: model.calls())
            ok_calls += c.failed ? 0 : 1;
        EXPECT_EQ(result.token_usage, model.total_usage()) << "case " << i;
        EXPECT_EQ(result.model_calls, ok_calls) << "case " << i;
        if (result.status == SessionStatus::completed || result.status == SessionStatus::step_limit)
        {
            EXPECT_EQ(entry_usage_sum(result.history), result.token_usage) << "case " << i;
        }
    }
}

TEST(ResultJson, CarriesStatusAndHistory)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({test::final_step("done")});
    auto result = agent::run_session("x", reg, model, world, {});
    auto j = agent::to_json(result, true);
    EXPECT_EQ(j["status"], "completed");
    EXPECT_EQ(j["history"].size(), result.history.size());
    EXPECT_EQ(agent::session_status_from_string("cancelled"), SessionStatus::cancelled);
    EXPECT_EQ(agent::agent_kind_from_string("tllms"), agent::AgentKind::tllms);
    EXPECT_EQ(agent::agent_kind_from_string("gpt"), std::nullopt);
}
