// SPDX-License-Identifier: Apache-2.0
#include <leo/llm.hpp>
#include <leo/toolset.hpp>

#include <algorithm>
#include <mutex>

namespace leo::tools
{

namespace
{

double number_param(const json& input, const char* key, std::string_view tool)
{
    auto it = input.find(key);
    if (it == input.end() || !it->is_number())
        throw std::invalid_argument(std::string(tool) + " needs a numeric \"" + key + "\" parameter");
    return it->get<double>();
}

std::string text_param(const json& input, const char* key, std::string_view tool)
{
    auto it = input.find(key);
    if (it == input.end() || !it->is_string() || it->get_ref<const std::string&>().empty())
        throw std::invalid_argument(std::string(tool) + " needs a string \"" + key + "\" parameter");
    return it->get<std::string>();
}

Observation error(std::string tool, std::string content)
{
    Observation obs;
    obs.source_tool = std::move(tool);
    obs.content = std::move(content);
    obs.is_error = true;
    return obs;
}

} // namespace

ToolRegistry::ToolRegistry(const ToolRegistry& other)
{
    std::shared_lock lock(other._mutex);
    _tools = other._tools;
}

ToolRegistry& ToolRegistry::operator=(const ToolRegistry& other)
{
    if (this != &other)
    {
        std::vector<ToolSpec> copy;
        {
            std::shared_lock lock(other._mutex);
            copy = other._tools;
        }
        std::unique_lock lock(_mutex);
        _tools = std::move(copy);
    }
    return *this;
}

ToolRegistry& ToolRegistry::register_tool(ToolSpec spec)
{
    if (spec.name.empty())
        throw ToolsetError(ToolsetErrorKind::empty_name, "tool name must not be empty");
    if (spec.description.empty())
        throw ToolsetError(ToolsetErrorKind::empty_description, "tool '" + spec.name + "' has an empty description");

    std::unique_lock lock(_mutex);
    auto clash = std::find_if(_tools.begin(), _tools.end(), [&](const ToolSpec& t) { return t.name == spec.name; });
    if (clash != _tools.end())
        throw ToolsetError(ToolsetErrorKind::duplicate_name, "tool '" + spec.name + "' is already registered");
    _tools.push_back(std::move(spec));
    return *this;
}

ToolRegistry& ToolRegistry::set_enabled(std::string_view name, bool flag)
{
    std::unique_lock lock(_mutex);
    auto it = std::find_if(_tools.begin(), _tools.end(), [&](const ToolSpec& t) { return t.name == name; });
    if (it == _tools.end())
        throw ToolsetError(ToolsetErrorKind::unknown_tool, "unknown tool '" + std::string(name) + "'");
    it->enabled = flag;
    return *this;
}

Observation ToolRegistry::invoke(std::string_view name, const json& input, sim::World& world) const noexcept
{
    try
    {
        ToolHandler handler;
        std::string listing;
        bool found = false;
        bool enabled = false;
        {
            std::shared_lock lock(_mutex);
            for (const auto& tool: _tools)
            {
                if (!listing.empty())
                    listing += ", ";
                listing += tool.name;
                if (!tool.enabled)
                    listing += " (disabled)";
                if (tool.name == name)
                {
                    found = true;
                    enabled = tool.enabled;
                    handler = tool.handler;
                }
            }
        }
        if (listing.empty())
            listing = "none";
        if (!found)
            return error(std::string(name), "unknown tool '" + std::string(name) + "'; registered tools: " + listing);
        if (!enabled)
            return error(std::string(name), "tool disabled: '" + std::string(name) +
                                                "' is not available for this task; registered tools: " + listing);
        if (!handler)
            return error(std::string(name), "tool '" + std::string(name) + "' has no handler bound");

        auto obs = handler(input.is_object() ? input : json::object(), world);
        if (obs.source_tool.empty())
            obs.source_tool = name;
        if (obs.content.empty())
            obs.content = obs.is_error ? "tool failed without a message" : "done";
        return obs;
    }
    catch (const std::exception& e)
    {
        return error(std::string(name), std::string("tool '") + std::string(name) + "' failed: " + e.what());
    }
    catch (...)
    {
        return error(std::string(name), "tool '" + std::string(name) + "' failed with an unknown error");
    }
}

std::vector<std::pair<std::string, std::string>> ToolRegistry::describe_enabled() const
{
    std::shared_lock lock(_mutex);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& tool: _tools)
    {
        if (tool.enabled)
            out.emplace_back(tool.name, tool.description);
    }
    return out;
}

std::vector<protocol::ToolInfo> ToolRegistry::catalog() const
{
    std::shared_lock lock(_mutex);
    std::vector<protocol::ToolInfo> out;
    out.reserve(_tools.size());
    for (const auto& tool: _tools)
        out.push_back({tool.name, tool.description, tool.enabled});
    return out;
}

std::vector<std::string> ToolRegistry::names() const
{
    std::shared_lock lock(_mutex);
    std::vector<std::string> out;
    for (const auto& tool: _tools)
        out.push_back(tool.name);
    return out;
}

bool ToolRegistry::contains(std::string_view name) const
{
    return is_enabled(name).has_value();
}

std::optional<bool> ToolRegistry::is_enabled(std::string_view name) const
{
    std::shared_lock lock(_mutex);
    for (const auto& tool: _tools)
    {
        if (tool.name == name)
            return tool.enabled;
    }
    return std::nullopt;
}

std::size_t ToolRegistry::size() const
{
    std::shared_lock lock(_mutex);
    return _tools.size();
}

// --- robot tools ------------------------------------------------------------

ToolSpec move_to_tool(sim::RobotKind kind)
{
    if (kind == sim::RobotKind::wheeled_arm)
    {
        return {"move_to",
                "Drive the robot in a straight line to a floor position. Input: {\"x\": number, \"y\": number} in "
                "metres. Output: the arrival position and the new pose, or an error if the target lies outside the "
                "scene.",
                true, [](const json& input, sim::World& world) {
                    return sim::move_to(world, {number_param(input, "x", "move_to"), number_param(input, "y", "move_to"),
                                                world.robot_pose.z});
                }};
    }
    return {"move_to",
            "Fly the UAV in a straight line to a position and hold it. Input: {\"x\": number, \"y\": number, \"z\": "
            "number} in metres (z is altitude). Output: the arrival position and the new pose, or an error if the "
            "target lies outside the scene.",
            true, [](const json& input, sim::World& world) {
                return sim::move_to(world, {number_param(input, "x", "move_to"), number_param(input, "y", "move_to"),
                                            number_param(input, "z", "move_to")});
            }};
}

ToolSpec rotate_tool()
{
    return {"rotate",
            "Turn in place by a relative angle. Input: {\"yaw_deg\": number}, degrees, positive turns "
            "counter-clockwise. Output: the new heading (0 faces +x, 90 faces +y).",
            true, [](const json& input, sim::World& world) {
                return sim::rotate_to(world, world.robot_pose.yaw + number_param(input, "yaw_deg", "rotate"));
            }};
}

ToolSpec rotate_to_tool()
{
    return {"rotate_to",
            "Turn in place to an absolute heading. Input: {\"yaw_deg\": number}, 0 faces +x, 90 faces +y. Output: "
            "the new heading.",
            true, [](const json& input, sim::World& world) {
                auto obs = sim::rotate_to(world, number_param(input, "yaw_deg", "rotate_to"));
                obs.source_tool = "rotate_to";
                return obs;
            }};
}

ToolSpec detect_tool()
{
    return {"detect",
            "Run object detection on the camera view. Input: {} or {\"class\": string} to keep one class. Output: "
            "each visible object's class, id, bearing relative to the current heading (degrees, left positive), "
            "horizontal range and position; data fields count, detections and nearest_id/nearest_x/nearest_y.",
            true, [](const json& input, sim::World& world) {
                std::string filter;
                if (auto it = input.find("class"); it != input.end() && it->is_string())
                    filter = it->get<std::string>();
                return sim::detect(world, world.fov, filter);
            }};
}

ToolSpec vlm_tool()
{
    return {"vlm_describe",
            "Ask a vision-language model about the current camera view. Input: {\"question\": string}. Output: a "
            "natural-language answer; when the question names a kind of object in view it gives its bearing and "
            "range.",
            true, [](const json& input, sim::World& world) {
                return sim::vlm_describe(world, world.fov, text_param(input, "question", "vlm_describe"));
            }};
}

ToolSpec grasp_tool()
{
    return {"grasp",
            "Pick up an object with the arm. Input: {\"id\": string}, the object id from detection or the task. The "
            "object must be graspable and within the arm's reach horizontally. Output: confirmation, or the reason "
            "the grasp failed.",
            true, [](const json& input, sim::World& world) {
                return sim::grasp(world, text_param(input, "id", "grasp"));
            }};
}

ToolSpec release_tool()
{
    return {"release",
            "Put down the held object at the robot's current position. Input: {}. Output: where the object was "
            "placed and which fixed objects it is next to.",
            true, [](const json&, sim::World& world) { return sim::release(world); }};
}

ToolSpec state_tool()
{
    return {"get_state",
            "Report the robot's own state. Input: {}. Output: position, heading, held object and elapsed time.", true,
            [](const json&, sim::World& world) {
                Observation obs;
                obs.source_tool = "get_state";
                obs.data = sim::pose_json(world.robot_pose);
                obs.data["held"] = world.held_entity ? json(*world.held_entity) : json();
                obs.data["sim_clock"] = world.sim_clock;
                obs.content = "pose " + obs.data.dump() + (world.held_entity ? ", holding " + *world.held_entity : ", holding nothing");
                return obs;
            }};
}

ToolSpec talk_tool(double max_distance)
{
    return {"talk_to_person",
            "Speak with a person standing next to the robot. Input: {\"id\": string} of a person within 1 m. "
            "Output: what the person says.",
            true, [max_distance](const json& input, sim::World& world) {
                auto id = text_param(input, "id", "talk_to_person");
                const auto* person = world.find(id);
                if (person == nullptr || person->class_label != "person")
                    return error("talk_to_person", "no person with id '" + id + "'");
                auto dist = sim::horizontal_distance(world.robot_pose.position(), person->position);
                if (dist > max_distance + sim::kBoundaryEpsilon)
                    return error("talk_to_person", id + " is too far away to talk to; come within " +
                                                       std::to_string(max_distance).substr(0, 3) + " m first");
                Observation obs;
                obs.source_tool = "talk_to_person";
                obs.content = person->utterance.empty() ? id + " has nothing to say"
                                                        : id + " says: \"" + person->utterance + "\"";
                obs.data = {{"id", id}, {"utterance", person->utterance}};
                return obs;
            }};
}

ToolSpec summarize_tool(llm::ChatModel& model)
{
    return {"summarize",
            "Ask an auxiliary language model to summarize or restate text, e.g. a spoken request, as a short list of "
            "concrete sub-goals. Input: {\"text\": string}. Output: the summary.",
            true, [&model](const json& input, sim::World&) {
                llm::ChatRequest request;
                request.segments = {{Role::system,
                                     "Summarize the user's text as a short list of concrete goals for a robot."},
                                    {Role::user, text_param(input, "text", "summarize")}};
                auto reply = model.complete(request);
                Observation obs;
                obs.source_tool = "summarize";
                obs.content = "summary: " + reply.text;
                obs.data = {{"summary", reply.text}};
                return obs;
            }};
}

} // namespace leo::tools
