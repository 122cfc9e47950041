// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/actionscript.hpp>
#include <leo/agent.hpp>

#include <optional>
#include <string>
#include <vector>

/// Reference architectures run against the same tools and worlds as LEO.
///
///   das   - one call returns the whole action sequence, executed open-loop
///   cge   - one call returns an ActionScript program (one repair allowed)
///   dllms - planner step, tool, then an evaluator critique, repeated
///   tllms - planner writes staged plans, actor executes each stage, evaluator gates stages
namespace leo::baselines
{

/// The model each persona talks to. All three may be the same instance.
struct Personas
{
    llm::ChatModel* planner = nullptr;
    llm::ChatModel* actor = nullptr;
    llm::ChatModel* evaluator = nullptr;

    static Personas single(llm::ChatModel& model) { return {&model, &model, &model}; }
};

enum class Verdict
{
    proceed,
    revise,
    replan,
    declare_done,
};

[[nodiscard]] const char* to_string(Verdict v) noexcept;

struct Evaluation
{
    Verdict verdict = Verdict::proceed;
    std::string critique;
};

/// {"verdict": ..., "critique": ...}; critique is required for revise and replan.
[[nodiscard]] std::optional<Evaluation> parse_evaluation(std::string_view reply);

struct PlanDocument
{
    std::string plan;
    std::vector<std::string> stages;
};

/// {"plan": string, "stages": [string, ...]} with at least one stage.
[[nodiscard]] std::optional<PlanDocument> parse_plan(std::string_view reply, std::string* problem = nullptr);

/// A JSON array of {"action", "action_input"} objects.
[[nodiscard]] std::optional<std::vector<AgentMessage>> parse_action_sequence(std::string_view reply,
                                                                             std::string* problem = nullptr);

/// Program text from a reply: the first fenced block if there is one, otherwise the whole reply.
[[nodiscard]] std::string extract_program(std::string_view reply);

[[nodiscard]] std::string render_das_prompt(const tools::ToolRegistry& registry, const agent::SessionConfig& config);
[[nodiscard]] std::string render_cge_prompt(const tools::ToolRegistry& registry, const agent::SessionConfig& config);

agent::SessionResult run_das(agent::Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model,
                             sim::World& world);
agent::SessionResult run_cge(agent::Session& session, const tools::ToolRegistry& registry, llm::ChatModel& model,
                             sim::World& world);
agent::SessionResult run_dllms(agent::Session& session, const tools::ToolRegistry& registry, const Personas& personas,
                               sim::World& world);
agent::SessionResult run_tllms(agent::Session& session, const tools::ToolRegistry& registry, const Personas& personas,
                               sim::World& world);

} // namespace leo::baselines
