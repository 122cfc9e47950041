// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <leo/baselines.hpp>
#include <leo/harness.hpp>

#include <gtest/gtest.h>

using namespace leo;
using agent::AgentKind;
using agent::SessionStatus;
using baselines::Verdict;

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

agent::SessionConfig config_for(AgentKind kind)
{
    agent::SessionConfig c;
    c.agent_kind = kind;
    return c;
}

std::string prompt_text(const llm::ChatRequest& request)
{
    std::string text;
    for (const auto& seg: request.segments)
        text += seg.text + "\n";
    return text;
}

std::vector<const HistoryEntry*> of_kind(const History& h, EntryKind kind)
{
    std::vector<const HistoryEntry*> out;
    for (const auto& e: h)
        if (e.kind == kind)
            out.push_back(&e);
    return out;
}

std::string eval_reply(std::string_view verdict, std::string_view critique = "")
{
    return json{{"verdict", verdict}, {"critique", critique}}.dump();
}

std::string plan_reply(std::vector<std::string> stages)
{
    return json{{"plan", "one stage at a time"}, {"stages", stages}}.dump();
}

struct DeliveryRun
{
    agent::SessionResult result;
    std::size_t calls = 0;
    TokenUsage recorded;
};

DeliveryRun run_delivery(AgentKind kind)
{
    const auto task = harness::find_task("delivery", test::data_dir());
    auto world = sim::load_scenario(task.scenario_path);
    llm::EchoModel aux;
    auto reg = harness::build_registry(task, world, &aux);
    llm::ScriptedModel inner(llm::ScriptedModel::load_script(test::data_dir() / "scripts" /
                                                             (std::string("delivery_") + agent::to_string(kind) + ".json")));
    llm::RecordingModel model(inner);
    agent::Session session(task.task_prompt, harness::session_config(task, kind));
    auto result = agent::run(session, reg, model, world);
    return {result, model.call_count(), model.total_usage()};
}

} // namespace

TEST(Delivery, CallBudgetsPerArchitecture)
{
    auto das = run_delivery(AgentKind::das);
    EXPECT_EQ(das.result.status, SessionStatus::completed);
    EXPECT_EQ(das.calls, 1u);

    auto cge = run_delivery(AgentKind::cge);
    EXPECT_EQ(cge.result.status, SessionStatus::completed);
    EXPECT_LE(cge.calls, 2u);

    auto leo = run_delivery(AgentKind::leo);
    EXPECT_EQ(leo.result.status, SessionStatus::completed);
    EXPECT_EQ(leo.calls, of_kind(leo.result.history, EntryKind::agent_step).size());

    for (const DeliveryRun* run: {&das, &cge, &leo})
    {
        EXPECT_EQ(run->result.token_usage, run->recorded);
        EXPECT_EQ(run->result.model_calls, run->calls);
    }
}

TEST(Delivery, MultiPersonaArchitecturesConserveTokens)
{
    for (auto kind: {AgentKind::dllms, AgentKind::tllms})
    {
        auto run = run_delivery(kind);
        EXPECT_EQ(run.result.status, SessionStatus::completed) << agent::to_string(kind);
        EXPECT_EQ(run.result.token_usage, run.recorded) << agent::to_string(kind);
        EXPECT_EQ(run.result.model_calls, run.calls) << agent::to_string(kind);
        // Every persona turn carries its usage on the entry it produced.
        TokenUsage attributed;
        for (const auto& e: run.result.history)
            if (e.usage)
                attributed += *e.usage;
        EXPECT_EQ(attributed, run.recorded) << agent::to_string(kind);
    }
}

TEST(Das, ProseReplyIsUnrecoverable)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel inner({"First I will fly to the bottle, then look around."});
    llm::RecordingModel model(inner);
    auto result = agent::run_session("find the bottle", reg, model, world, config_for(AgentKind::das));
    EXPECT_EQ(result.status, SessionStatus::unrecoverable_parse);
    EXPECT_EQ(model.call_count(), 1u);
}

TEST(Das, UnknownToolDoesNotStopTheSequence)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    const std::string seq = R"([{"action":"teleport","action_input":{"x":1}},{"action":"get_state"},)"
                            R"({"action":"final_response","action_input":{"report":"state read"}}])";
    llm::ScriptedModel model({seq});
    auto result = agent::run_session("report state", reg, model, world, config_for(AgentKind::das));
    EXPECT_EQ(result.status, SessionStatus::completed);
    EXPECT_EQ(result.final_report, "state read");
    auto obs = of_kind(result.history, EntryKind::observation);
    ASSERT_EQ(obs.size(), 2u);
    EXPECT_TRUE(obs[0]->observation().is_error);
    EXPECT_FALSE(obs[1]->observation().is_error);
    EXPECT_EQ(of_kind(result.history, EntryKind::agent_step).size(), 3u);
}

TEST(Das, SequenceWithoutFinalStillCompletes)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({R"(Plan: ```[{"action":"rotate","action_input":{"yaw_deg":90}}]```)"});
    auto result = agent::run_session("turn left", reg, model, world, config_for(AgentKind::das));
    EXPECT_EQ(result.status, SessionStatus::completed);
    EXPECT_DOUBLE_EQ(world.robot_pose.yaw, 90.0);
}

TEST(Cge, OneRepairIsAllowed)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel inner({"```acts\ncall detect()\n```", "```acts\nr = call detect();\nhalt(\"looked\");\n```"});
    llm::RecordingModel model(inner);
    auto result = agent::run_session("look", reg, model, world, config_for(AgentKind::cge));
    EXPECT_EQ(result.status, SessionStatus::completed);
    EXPECT_EQ(result.final_report, "looked");
    EXPECT_EQ(model.call_count(), 2u);
    auto calls = model.calls();
    EXPECT_NE(prompt_text(calls[1].request).find("program rejected: line 2, column 1"), std::string::npos);
    const auto steps = of_kind(result.history, EntryKind::agent_step);
    ASSERT_EQ(steps.size(), 2u); // the program, then its one tool call
    EXPECT_EQ(steps[0]->step().action, "run_program");
    EXPECT_EQ(steps[0]->repairs.size(), 1u);
    EXPECT_EQ(steps[1]->step().action, "detect");
}

TEST(Cge, TwoBadProgramsGiveUp)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel inner({"call detect(", "repeat 0 { }", "halt(\"never used\");"});
    llm::RecordingModel model(inner);
    auto result = agent::run_session("look", reg, model, world, config_for(AgentKind::cge));
    EXPECT_EQ(result.status, SessionStatus::unrecoverable_parse);
    EXPECT_EQ(model.call_count(), 2u);
}

TEST(Cge, RuntimeErrorAborts)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({"r = call get_state();\nif r.altitude_ft > 3 { halt(\"high\"); }"});
    auto result = agent::run_session("check altitude", reg, model, world, config_for(AgentKind::cge));
    EXPECT_EQ(result.status, SessionStatus::aborted_by_agent);
    EXPECT_NE(result.final_report.find("altitude_ft"), std::string::npos);
}

TEST(Dllms, CritiqueReachesThePlanner)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel inner({test::step("", "rotate", {{"yaw_deg", 180}}),
                              eval_reply("revise", "the bottle is ahead, turn back"),
                              test::step("", "rotate", {{"yaw_deg", -180}}), eval_reply("declare_done"),
                              test::final_step("facing the bottle")});
    llm::RecordingModel model(inner);
    auto result = agent::run_session("face the bottle", reg, model, world, config_for(AgentKind::dllms));
    EXPECT_EQ(result.status, SessionStatus::completed);
    auto calls = model.calls();
    ASSERT_EQ(calls.size(), 5u);
    EXPECT_EQ(prompt_text(calls[0].request).find("turn back"), std::string::npos);
    EXPECT_NE(prompt_text(calls[2].request).find("Critique: the bottle is ahead, turn back"), std::string::npos);
    EXPECT_DOUBLE_EQ(std::remainder(world.robot_pose.yaw, 360.0), 0.0);
}

TEST(Dllms, MalformedEvaluationDegradesToProceed)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({test::step("", "detect"), "Looks good to me!", test::final_step("done")});
    auto result = agent::run_session("look", reg, model, world, config_for(AgentKind::dllms));
    EXPECT_EQ(result.status, SessionStatus::completed);
    const HistoryEntry* verdict = nullptr;
    for (const auto& e: result.history)
        if (e.kind == EntryKind::observation && e.observation().source_tool == "evaluator")
            verdict = &e;
    ASSERT_NE(verdict, nullptr);
    EXPECT_EQ(verdict->observation().data.at("verdict"), "proceed");
    EXPECT_EQ(verdict->observation().data.at("degraded"), true);
}

TEST(Tllms, StagedPlanCompletes)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({plan_reply({"look around"}), test::step("", "detect"), eval_reply("declare_done"),
                              test::final_step("looked around")});
    auto result = agent::run_session("look around", reg, model, world, config_for(AgentKind::tllms));
    EXPECT_EQ(result.status, SessionStatus::completed);
    EXPECT_EQ(result.final_report, "looked around");
    EXPECT_EQ(result.model_calls, 4u);
}

TEST(Tllms, ActorFinalEndsTheStageWithoutEvaluation)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel model({plan_reply({"first", "second"}), test::final_step("stage 1 done"),
                              test::final_step("stage 2 done"), test::final_step("all done")});
    auto result = agent::run_session("two stages", reg, model, world, config_for(AgentKind::tllms));
    EXPECT_EQ(result.status, SessionStatus::completed);
    EXPECT_EQ(result.final_report, "all done");
    int markers = 0;
    for (const auto& e: result.history)
        if (e.kind == EntryKind::observation && e.observation().source_tool == "stage")
            ++markers;
    EXPECT_EQ(markers, 2);
}

TEST(Tllms, ReplanReturnsToThePlanner)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    llm::ScriptedModel inner({plan_reply({"fly north"}), test::step("", "detect"),
                              eval_reply("replan", "wrong direction"), plan_reply({"look around"}),
                              test::final_step("stage done"), test::final_step("finished")});
    llm::RecordingModel model(inner);
    auto result = agent::run_session("find it", reg, model, world, config_for(AgentKind::tllms));
    EXPECT_EQ(result.status, SessionStatus::completed);
    auto calls = model.calls();
    ASSERT_EQ(calls.size(), 6u);
    EXPECT_NE(prompt_text(calls[3].request).find("wrong direction"), std::string::npos);
}

TEST(Tllms, PlanCapEndsWithStepLimit)
{
    auto reg = uav_tools();
    auto world = test::small_uav_world();
    std::vector<std::string> script;
    for (int i = 0; i < 7; ++i)
    {
        script.push_back(plan_reply({"try " + std::to_string(i)}));
        script.push_back(test::step("", "detect"));
        script.push_back(eval_reply("replan", "still wrong"));
    }
    llm::ScriptedModel model(script);
    auto result = agent::run_session("impossible", reg, model, world, config_for(AgentKind::tllms));
    EXPECT_EQ(result.status, SessionStatus::step_limit);
    int plans = 0;
    for (const auto& e: result.history)
        if (e.kind == EntryKind::observation && e.observation().source_tool == "planner")
            ++plans;
    EXPECT_EQ(plans, 5);
    EXPECT_EQ(result.model_calls, 15u);
}

TEST(Parsers, Evaluation)
{
    EXPECT_EQ(baselines::parse_evaluation(eval_reply("proceed"))->verdict, Verdict::proceed);
    EXPECT_EQ(baselines::parse_evaluation(eval_reply("declare_done"))->verdict, Verdict::declare_done);
    EXPECT_EQ(baselines::parse_evaluation(eval_reply("revise", "x"))->critique, "x");
    EXPECT_FALSE(baselines::parse_evaluation(eval_reply("revise")));
    EXPECT_FALSE(baselines::parse_evaluation(eval_reply("replan")));
    EXPECT_FALSE(baselines::parse_evaluation(eval_reply("maybe")));
    EXPECT_FALSE(baselines::parse_evaluation("sure"));
    EXPECT_FALSE(baselines::parse_evaluation(R"({"verdict":"proceed","critique":3})"));
}

TEST(Parsers, PlanAndSequence)
{
    std::string problem;
    EXPECT_EQ(baselines::parse_plan(plan_reply({"a", "b"}))->stages.size(), 2u);
    EXPECT_FALSE(baselines::parse_plan(R"({"plan":"p","stages":[]})", &problem));
    EXPECT_NE(problem.find("stages"), std::string::npos);
    EXPECT_FALSE(baselines::parse_plan(R"({"plan":"p","stages":[""]})"));

    auto seq = baselines::parse_action_sequence(R"(ok: [{"action":"detect"},{"action":"rotate","action_input":{"yaw_deg":5}}])");
    ASSERT_TRUE(seq);
    ASSERT_EQ(seq->size(), 2u);
    EXPECT_EQ((*seq)[0].action_input, json::object());
    EXPECT_FALSE(baselines::parse_action_sequence("[]", &problem));
    EXPECT_FALSE(baselines::parse_action_sequence(R"([{"action_input":{}}])", &problem));
    EXPECT_NE(problem.find("item 1"), std::string::npos);
    EXPECT_FALSE(baselines::parse_action_sequence(R"([{"action":"x","action_input":[1]}])"));
}

TEST(Parsers, ExtractProgram)
{
    EXPECT_EQ(baselines::extract_program("halt(\"x\");"), "halt(\"x\");");
    EXPECT_EQ(baselines::extract_program("Here:\n```acts\ncall detect();\n```\nbye"), "call detect();\n");
    EXPECT_EQ(baselines::extract_program("```\nhalt(\"y\");"), "halt(\"y\");");
}

TEST(Prompts, ListEnabledToolsOnly)
{
    auto reg = uav_tools();
    reg.set_enabled("detect", false);
    const auto das = baselines::render_das_prompt(reg, {});
    const auto cge = baselines::render_cge_prompt(reg, {});
    for (const auto* p: {&das, &cge})
    {
        EXPECT_NE(p->find("TOOL move_to"), std::string::npos);
        EXPECT_EQ(p->find("TOOL detect"), std::string::npos);
    }
    EXPECT_NE(cge.find(acts::kGrammar), std::string::npos);
}
