// SPDX-License-Identifier: Apache-2.0
#include <leo/baselines.hpp>

#include <fmt/format.h>

namespace leo::baselines
{

using agent::Session;
using agent::SessionResult;
using agent::SessionStatus;

const char* to_string(Verdict v) noexcept
{
    switch (v)
    {
        case Verdict::proceed: return "proceed";
        case Verdict::revise: return "revise";
        case Verdict::replan: return "replan";
        case Verdict::declare_done: return "declare_done";
    }
    return "proceed";
}

namespace
{

json parse_json(std::string_view text, char open, char close)
{
    auto body = protocol::extract_balanced(text, open, close);
    if (body.empty())
        return json(json::value_t::discarded);
    return json::parse(body, nullptr, false);
}

std::string tool_catalog(const tools::ToolRegistry& registry)
{
    std::string out;
    for (const auto& tool: registry.catalog())
    {
        if (!tool.enabled)
            continue;
        out += protocol::tool_block(tool) + "\n";
    }
    if (out.empty())
        out = "No tools are available for this task.\n";
    return out;
}

std::string persona_prompt(std::string_view output_format, const tools::ToolRegistry& registry,
                           std::string_view role, std::string_view guidance)
{
    std::string out = fmt::format("{}\n{}\n\n{}\n{}\n{}\n{}\n", protocol::kOutputSection, output_format,
                                  protocol::kToolSection, tool_catalog(registry), protocol::kRoleSection, role);
    if (!guidance.empty())
        out += fmt::format("\n{}\n{}\n", protocol::kGuidanceSection, guidance);
    return out;
}

std::vector<Segment> with_system(std::string system, const Session& session)
{
    std::vector<Segment> out{{Role::system, std::move(system)}};
    auto rest = protocol::render_history(session.entries());
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

constexpr std::string_view kEvaluatorFormat =
    "Reply with one JSON object and nothing else: {\"verdict\": \"proceed\" | \"revise\" | \"replan\" | "
    "\"declare_done\", \"critique\": \"<text>\"}. The critique must not be empty for revise and replan.";

Observation evaluation_entry(const Evaluation& eval, bool degraded, std::string_view raw)
{
    Observation obs;
    obs.source_tool = "evaluator";
    obs.content = fmt::format("Evaluator verdict: {}.", to_string(eval.verdict));
    if (!eval.critique.empty())
        obs.content += " Critique: " + eval.critique;
    obs.data = {{"verdict", to_string(eval.verdict)}, {"critique", eval.critique}, {"degraded", degraded}};
    if (degraded)
        obs.data["raw"] = std::string(raw.substr(0, 400));
    return obs;
}

/// One evaluator call. Malformed output degrades to proceed.
std::optional<Evaluation> evaluate(Session& session, llm::ChatModel& model, std::string system,
                                   std::string_view instruction, std::optional<SessionResult>& terminal)
{
    auto segments = with_system(std::move(system), session);
    segments.push_back({Role::user, std::string(instruction)});
    auto turn = agent::request_turn(session, model, segments, nullptr);
    if (turn.terminal)
    {
        terminal = turn.terminal;
        return std::nullopt;
    }
    auto eval = parse_evaluation(turn.text);
    bool degraded = !eval;
    if (degraded)
        eval = Evaluation{};
    session.append(EntryKind::observation, evaluation_entry(*eval, degraded, turn.text), turn.usage);
    return eval;
}

SessionResult finish_with_report(Session& session, SessionStatus status, const std::string& report)
{
    session.append(EntryKind::final, report);
    return session.finish(status, report);
}

} // namespace

// --- reply parsers ------------------------------------------------------------

std::optional<Evaluation> parse_evaluation(std::string_view reply)
{
    auto doc = parse_json(reply, '{', '}');
    if (!doc.is_object())
        return std::nullopt;
    auto verdict = doc.find("verdict");
    if (verdict == doc.end() || !verdict->is_string())
        return std::nullopt;
    Evaluation eval;
    const auto& v = verdict->get_ref<const std::string&>();
    if (v == "proceed")
        eval.verdict = Verdict::proceed;
    else if (v == "revise")
        eval.verdict = Verdict::revise;
    else if (v == "replan")
        eval.verdict = Verdict::replan;
    else if (v == "declare_done")
        eval.verdict = Verdict::declare_done;
    else
        return std::nullopt;
    if (auto critique = doc.find("critique"); critique != doc.end())
    {
        if (!critique->is_string() && !critique->is_null())
            return std::nullopt;
        if (critique->is_string())
            eval.critique = critique->get<std::string>();
    }
    if ((eval.verdict == Verdict::revise || eval.verdict == Verdict::replan) && eval.critique.empty())
        return std::nullopt;
    return eval;
}

std::optional<PlanDocument> parse_plan(std::string_view reply, std::string* problem)
{
    auto reject = [&](std::string why) -> std::optional<PlanDocument> {
        if (problem)
            *problem = std::move(why);
        return std::nullopt;
    };
    auto doc = parse_json(reply, '{', '}');
    if (!doc.is_object())
        return reject("the reply must be one JSON object with \"plan\" and \"stages\"");
    auto plan = doc.find("plan");
    if (plan == doc.end() || !plan->is_string())
        return reject("\"plan\" must be a string");
    auto stages = doc.find("stages");
    if (stages == doc.end() || !stages->is_array() || stages->empty())
        return reject("\"stages\" must be a non-empty array of strings");
    PlanDocument out{plan->get<std::string>(), {}};
    for (const auto& s: *stages)
    {
        if (!s.is_string() || s.get_ref<const std::string&>().empty())
            return reject("every stage must be a non-empty string");
        out.stages.push_back(s.get<std::string>());
    }
    return out;
}

std::optional<std::vector<AgentMessage>> parse_action_sequence(std::string_view reply, std::string* problem)
{
    auto reject = [&](std::string why) -> std::optional<std::vector<AgentMessage>> {
        if (problem)
            *problem = std::move(why);
        return std::nullopt;
    };
    auto doc = parse_json(reply, '[', ']');
    if (!doc.is_array())
        return reject("the reply must be one JSON array of {\"action\", \"action_input\"} objects");
    if (doc.empty())
        return reject("the action sequence is empty");
    std::vector<AgentMessage> out;
    for (std::size_t i = 0; i < doc.size(); ++i)
    {
        const auto& item = doc[i];
        if (!item.is_object())
            return reject(fmt::format("item {} is not an object", i + 1));
        auto action = item.find("action");
        if (action == item.end() || !action->is_string() || action->get_ref<const std::string&>().empty())
            return reject(fmt::format("item {} has no \"action\" string", i + 1));
        AgentMessage msg;
        msg.action = action->get<std::string>();
        if (auto input = item.find("action_input"); input != item.end() && !input->is_null())
        {
            if (!input->is_object())
                return reject(fmt::format("item {} has a non-object \"action_input\"", i + 1));
            msg.action_input = *input;
        }
        if (auto message = item.find("message"); message != item.end() && message->is_string())
            msg.message = message->get<std::string>();
        out.push_back(std::move(msg));
    }
    return out;
}

std::string extract_program(std::string_view reply)
{
    auto open = reply.find("```");
    if (open == std::string_view::npos)
        return std::string(reply);
    auto body = reply.find('\n', open);
    if (body == std::string_view::npos)
        return {};
    ++body;
    auto close = reply.find("```", body);
    return std::string(reply.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
}

// --- prompts ---------------------------------------------------------------------

std::string render_das_prompt(const tools::ToolRegistry& registry, const agent::SessionConfig& config)
{
    return persona_prompt(
        "Reply with one JSON array and nothing else. Each item is {\"action\": \"<tool name>\", \"action_input\": "
        "{...}}. The whole array is executed in order and you will not see any result, so plan every step in "
        "advance. End the array with {\"action\": \"final_response\", \"action_input\": {\"report\": \"<text>\"}}.",
        registry, config.role_definition, config.extra_guidance);
}

std::string render_cge_prompt(const tools::ToolRegistry& registry, const agent::SessionConfig& config)
{
    auto format = fmt::format(
        "Reply with one ActionScript program inside a fenced block that starts with ```acts and ends with ```. "
        "The program runs without showing you any result, but it can branch on the data fields of earlier calls: "
        "`r = call detect();` binds the data fields of the result (and is_error) to r. Arguments of a call are the "
        "input fields of the tool. End with halt(\"<report>\"). Grammar:\n\n{}",
        acts::kGrammar);
    return persona_prompt(format, registry, config.role_definition, config.extra_guidance);
}

// --- DAS ---------------------------------------------------------------------------

SessionResult run_das(Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model, sim::World& world)
{
    auto activity = session.begin_activity();
    if (!activity)
        return session.wait();
    if (auto done = agent::step_boundary(session))
        return *done;

    auto check = [](std::string_view reply) -> std::optional<std::string> {
        std::string problem;
        if (parse_action_sequence(reply, &problem))
            return std::nullopt;
        return problem;
    };
    auto turn = agent::request_turn(session, model, with_system(render_das_prompt(registry, session.config()), session),
                                    check, 1);
    if (turn.terminal)
        return *turn.terminal;

    auto sequence = *parse_action_sequence(turn.text);
    std::optional<TokenUsage> usage = turn.usage;
    for (const auto& msg: sequence)
    {
        // Open loop: observations are recorded but never shown to the model.
        if (auto done = agent::step_boundary(session))
            return *done;
        session.append(EntryKind::agent_step, msg, usage);
        usage.reset();
        if (auto done = agent::finish_on_reserved(session, msg))
            return *done;
        auto obs = agent::execute_tool(session, registry, world, msg);
        if (obs.fatal)
            return finish_with_report(session, SessionStatus::aborted_by_agent,
                                      "stopped by a world-level failure: " + obs.content);
    }
    return finish_with_report(session, SessionStatus::completed,
                              fmt::format("executed {} actions open-loop", sequence.size()));
}

// --- CGE ---------------------------------------------------------------------------

SessionResult run_cge(Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model, sim::World& world)
{
    auto activity = session.begin_activity();
    if (!activity)
        return session.wait();
    if (auto done = agent::step_boundary(session))
        return *done;

    auto check = [](std::string_view reply) -> std::optional<std::string> {
        auto parsed = acts::parse_action_script(extract_program(reply));
        if (parsed.ok())
            return std::nullopt;
        return "program rejected: " + parsed.error().describe() + ". Reply with a corrected program.";
    };
    // One reply plus exactly one repair.
    auto turn = agent::request_turn(session, model, with_system(render_cge_prompt(registry, session.config()), session),
                                    check, 2);
    if (turn.terminal)
        return *turn.terminal;

    auto source = extract_program(turn.text);
    auto program = acts::parse_action_script(source).program();
    AgentMessage submitted{"ActionScript program", "run_program", {{"source", source}}};
    session.append(EntryKind::agent_step, submitted, turn.usage, std::move(turn.repairs));

    acts::ExecOptions options;
    options.on_call = [&](const std::string& tool, const json& input, const Observation& obs) {
        session.append(EntryKind::agent_step, AgentMessage{"", tool, input});
        session.add_sim_time(obs.sim_elapsed);
        session.append(EntryKind::observation, obs);
    };
    options.should_stop = [&] {
        session.drain_interjections();
        return session.cancel_requested();
    };
    auto result = acts::exec_program(program, registry, world, options);

    if (result.stopped)
        return session.finish(SessionStatus::cancelled, "cancelled by the user");
    if (result.runtime_error)
        return finish_with_report(session, SessionStatus::aborted_by_agent, result.report);
    return finish_with_report(session, SessionStatus::completed, result.report);
}

// --- DLLMs -------------------------------------------------------------------------

SessionResult run_dllms(Session& session, const tools::ToolRegistry& registry, const Personas& personas,
                        sim::World& world)
{
    auto activity = session.begin_activity();
    if (!activity)
        return session.wait();

    const auto& config = session.config();
    const auto catalog = registry.catalog();
    const auto planner_prompt = protocol::render_system_prompt(
        catalog,
        config.role_definition +
            " An evaluator reviews each of your steps; its verdicts and critiques appear as observations from the "
            "evaluator and you should act on them. Only you can end the task, with final_response.",
        config.extra_guidance);
    const auto evaluator_prompt = persona_prompt(
        kEvaluatorFormat, registry,
        "You are the evaluator of a robot planner. Judge the planner's latest step and the observation it produced "
        "against the task. Use revise with a critique when the step was a mistake, replan when the approach is "
        "wrong, and declare_done when the task looks complete; the planner then confirms.",
        config.extra_guidance);

    for (;;)
    {
        if (auto done = agent::step_boundary(session))
            return *done;

        auto turn = agent::request_turn(session, *personas.planner, with_system(planner_prompt, session),
                                        agent::agent_message_check);
        if (turn.terminal)
            return *turn.terminal;
        const auto msg = protocol::parse_agent_message(turn.text).message();
        session.append(EntryKind::agent_step, msg, turn.usage, std::move(turn.repairs));
        if (auto done = agent::finish_on_reserved(session, msg))
            return *done;
        agent::execute_tool(session, registry, world, msg);

        std::optional<SessionResult> terminal;
        evaluate(session, *personas.evaluator, evaluator_prompt,
                 "Evaluate the planner's latest step and its observation.", terminal);
        if (terminal)
            return *terminal;
    }
}

// --- TLLMs -------------------------------------------------------------------------

SessionResult run_tllms(Session& session, const tools::ToolRegistry& registry, const Personas& personas,
                        sim::World& world)
{
    auto activity = session.begin_activity();
    if (!activity)
        return session.wait();

    const auto& config = session.config();
    const auto catalog = registry.catalog();
    const auto plan_prompt = persona_prompt(
        "Reply with one JSON object and nothing else: {\"plan\": \"<overall reasoning>\", \"stages\": [\"<stage "
        "1>\", \"<stage 2>\", ...]}. Each stage is a goal the actor can reach with a few tool calls.",
        registry,
        "You are the planner of a robot team. Divide the task into one or more stages for the actor. If an earlier "
        "plan failed, the evaluator's critique is in the history; plan again from the current situation.",
        config.extra_guidance);
    const auto confirm_prompt = protocol::render_system_prompt(
        catalog,
        "You are the planner of a robot team. Every stage of your plan is reported complete. Check the history and "
        "reply with final_response and the task report if the task is done; reply with any other action to plan "
        "again.",
        config.extra_guidance);

    auto plan_check = [](std::string_view reply) -> std::optional<std::string> {
        std::string problem;
        if (parse_plan(reply, &problem))
            return std::nullopt;
        return problem;
    };

    for (int plans = 0;; ++plans)
    {
        if (session.cancel_requested())
            return session.finish(SessionStatus::cancelled, "cancelled by the user");
        session.drain_interjections();
        if (plans >= config.max_plans)
            return session.finish(SessionStatus::step_limit,
                                  fmt::format("no plan succeeded within the limit of {} plans", config.max_plans));

        auto plan_turn = agent::request_turn(session, *personas.planner, with_system(plan_prompt, session), plan_check);
        if (plan_turn.terminal)
            return *plan_turn.terminal;
        auto plan = *parse_plan(plan_turn.text);
        Observation plan_obs;
        plan_obs.source_tool = "planner";
        plan_obs.content = "Plan: " + plan.plan + "\nStages:";
        for (std::size_t i = 0; i < plan.stages.size(); ++i)
            plan_obs.content += fmt::format("\n{}. {}", i + 1, plan.stages[i]);
        plan_obs.data = {{"plan", plan.plan}, {"stages", plan.stages}, {"attempt", plans + 1}};
        session.append(EntryKind::observation, plan_obs, plan_turn.usage, std::move(plan_turn.repairs));

        bool replan = false;
        for (std::size_t stage = 0; stage < plan.stages.size() && !replan; ++stage)
        {
            const auto stage_line = fmt::format("Stage {}/{}: {}", stage + 1, plan.stages.size(), plan.stages[stage]);
            Observation marker;
            marker.source_tool = "stage";
            marker.content = stage_line;
            marker.data = {{"index", stage + 1}, {"total", plan.stages.size()}, {"description", plan.stages[stage]}};
            session.append(EntryKind::observation, marker);

            const auto actor_prompt = protocol::render_system_prompt(
                catalog,
                "You are the actor of a robot team. Carry out only the current stage, one tool call per step. When "
                "the stage is done, reply with final_response and a short report of the stage.\nCurrent " +
                    stage_line,
                config.extra_guidance);
            const auto evaluator_prompt = persona_prompt(
                kEvaluatorFormat, registry,
                "You are the evaluator of a robot team. Judge the actor's latest step for the current stage. Use "
                "revise with a critique for a wrong step, declare_done when the stage is complete and replan when "
                "the plan itself is wrong.\nCurrent " +
                    stage_line,
                config.extra_guidance);

            for (;;)
            {
                if (auto done = agent::step_boundary(session))
                    return *done;
                auto turn = agent::request_turn(session, *personas.actor, with_system(actor_prompt, session),
                                                agent::agent_message_check);
                if (turn.terminal)
                    return *turn.terminal;
                const auto msg = protocol::parse_agent_message(turn.text).message();
                session.append(EntryKind::agent_step, msg, turn.usage, std::move(turn.repairs));
                if (msg.action == kFinalAction)
                    break;
                if (msg.action == kAbortAction)
                    return *agent::finish_on_reserved(session, msg);
                agent::execute_tool(session, registry, world, msg);

                std::optional<SessionResult> terminal;
                auto eval = evaluate(session, *personas.evaluator, evaluator_prompt,
                                     "Evaluate the actor's latest step and its observation.", terminal);
                if (terminal)
                    return *terminal;
                if (eval->verdict == Verdict::declare_done)
                    break;
                if (eval->verdict == Verdict::replan)
                {
                    replan = true;
                    break;
                }
            }
        }
        if (replan)
            continue;

        if (auto done = agent::step_boundary(session))
            return *done;
        auto confirm = agent::request_turn(session, *personas.planner, with_system(confirm_prompt, session),
                                           agent::agent_message_check);
        if (confirm.terminal)
            return *confirm.terminal;
        const auto msg = protocol::parse_agent_message(confirm.text).message();
        session.append(EntryKind::agent_step, msg, confirm.usage, std::move(confirm.repairs));
        if (auto done = agent::finish_on_reserved(session, msg))
            return *done;
        // Anything but a reserved action sends the planner back to planning.
    }
}

} // namespace leo::baselines

namespace leo::agent
{

SessionResult run(Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model, sim::World& world)
{
    auto personas = baselines::Personas::single(model);
    switch (session.config().agent_kind)
    {
        case AgentKind::leo: return run_leo(session, registry, model, world);
        case AgentKind::das: return baselines::run_das(session, registry, model, world);
        case AgentKind::cge: return baselines::run_cge(session, registry, model, world);
        case AgentKind::dllms: return baselines::run_dllms(session, registry, personas, world);
        case AgentKind::tllms: return baselines::run_tllms(session, registry, personas, world);
    }
    return run_leo(session, registry, model, world);
}

SessionResult run_session(std::string task_text, const tools::ToolRegistry& registry, llm::ChatModel& model,
                          sim::World& world, SessionConfig config)
{
    Session session(std::move(task_text), std::move(config));
    return run(session, registry, model, world);
}

} // namespace leo::agent
