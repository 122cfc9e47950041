// SPDX-License-Identifier: Apache-2.0
#include <leo/harness.hpp>

#include <fmt/format.h>

#include <array>
#include <fstream>
#include <sstream>

namespace leo::harness
{

namespace
{

constexpr std::array kVariants = {PromptVariant::zero_shot, PromptVariant::one_shot, PromptVariant::cot,
                                  PromptVariant::one_shot_cot};

struct TaskDef
{
    const char* id;
    const char* scenario;
    const char* prompt;
    const char* perception;
    bool talk;
    bool summarizer;
    int max_steps;
};

constexpr std::array<TaskDef, 6> kTasks = {{
    {"delivery", "cafe.json",
     "Deliver the three bottles to their target spots, in any order, then return to the origin (0, 0). bottle_1 is "
     "at (2, 1) and belongs on spot_1 at (6, 7). bottle_2 is at (4, 6) and belongs on spot_2 at (9, 5). bottle_3 is "
     "at (8, 2) and belongs on spot_3 at (1, 6). Drive to a bottle before grasping it and release it on its spot.",
     "", false, false, 40},
    {"searching", "cafe.json",
     "Search the cafe for the bottle nearest to the origin (0, 0), pick it up and bring it back to the origin. "
     "Bottle positions are not given; find them with detection.",
     "detect", false, false, 40},
    {"handover", "cafe.json",
     "Two people are in the cafe, one standing by the chair and one by the lamp. Find the person by the chair and "
     "go to them to receive a sub-task. Carry out the sub-task, then return to the origin (0, 0).",
     "detect", true, true, 60},
    {"room_search", "room.json",
     "Fly around the room and use detection to locate as many of the objects in it as you can. When you are done, "
     "report every object you found.",
     "detect", false, false, 60},
    {"city_search", "city.json",
     "Find the pavilion in the city with the vision-language model, fly above it and report its position.",
     "vlm_describe", false, false, 60},
    {"object_search", "object_search.json",
     "Turn in place and use detection to find the objects around you, then fly above the trash can and hold "
     "position there.",
     "detect", false, false, 30},
}};

const TaskDef* find_def(std::string_view id)
{
    for (const auto& def: kTasks)
    {
        if (id == def.id)
            return &def;
    }
    return nullptr;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

const char* to_string(PromptVariant v) noexcept
{
    switch (v)
    {
        case PromptVariant::zero_shot: return "zero_shot";
        case PromptVariant::one_shot: return "one_shot";
        case PromptVariant::cot: return "cot";
        case PromptVariant::one_shot_cot: return "one_shot_cot";
    }
    return "zero_shot";
}

std::optional<PromptVariant> prompt_variant_from_string(std::string_view text) noexcept
{
    for (auto v: kVariants)
    {
        if (text == to_string(v))
            return v;
    }
    return std::nullopt;
}

std::vector<std::string> task_ids()
{
    std::vector<std::string> out;
    for (const auto& def: kTasks)
        out.emplace_back(def.id);
    return out;
}

TaskSpec find_task(std::string_view id, const std::filesystem::path& data_dir, PromptVariant variant)
{
    const auto* def = find_def(id);
    if (def == nullptr)
        throw ConfigError(fmt::format("unknown task '{}'; known tasks: {}", id, fmt::join(task_ids(), ", ")));
    TaskSpec spec;
    spec.id = def->id;
    spec.scenario_path = data_dir / "scenarios" / def->scenario;
    spec.task_prompt = def->prompt;
    spec.prompt_variant = variant;
    spec.rubric_id = def->id;
    spec.limits.max_steps = def->max_steps;
    spec.example_path = data_dir / "scenarios" / (std::string(def->id) + ".example.txt");
    spec.with_summarizer = def->summarizer;
    spec.with_talk = def->talk;
    spec.perception = def->perception;
    return spec;
}

std::string assemble_guidance(PromptVariant variant, const std::filesystem::path& example_path)
{
    const bool example = variant == PromptVariant::one_shot || variant == PromptVariant::one_shot_cot;
    const bool cot = variant == PromptVariant::cot || variant == PromptVariant::one_shot_cot;
    std::string out;
    if (example)
    {
        if (!std::filesystem::exists(example_path))
            throw ConfigError(fmt::format("the {} variant needs an example transcript at {}", to_string(variant),
                                          example_path.string()));
        auto text = read_file(example_path);
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
            text.pop_back();
        out = "Here is a worked example of a similar task:\n" + text;
    }
    if (cot)
    {
        if (!out.empty())
            out += "\n\n";
        out += kCotGuidance;
    }
    return out;
}

agent::SessionConfig session_config(const TaskSpec& task, agent::AgentKind kind)
{
    auto config = task.limits;
    config.agent_kind = kind;
    config.extra_guidance = assemble_guidance(task.prompt_variant, task.example_path);
    return config;
}

tools::ToolRegistry build_registry(const TaskSpec& task, const sim::World& world, llm::ChatModel* aux)
{
    tools::ToolRegistry registry;
    registry.register_tool(tools::move_to_tool(world.robot_kind));
    registry.register_tool(tools::rotate_tool());
    if (task.perception == "detect")
        registry.register_tool(tools::detect_tool());
    else if (task.perception == "vlm_describe")
        registry.register_tool(tools::vlm_tool());
    if (world.robot_kind == sim::RobotKind::wheeled_arm)
    {
        registry.register_tool(tools::grasp_tool());
        registry.register_tool(tools::release_tool());
    }
    if (task.with_talk)
        registry.register_tool(tools::talk_tool());
    if (task.with_summarizer)
    {
        if (aux == nullptr)
            throw ConfigError("task '" + task.id + "' needs an auxiliary model for the summarize tool");
        registry.register_tool(tools::summarize_tool(*aux));
    }
    registry.register_tool(tools::state_tool());
    return registry;
}

} // namespace leo::harness
