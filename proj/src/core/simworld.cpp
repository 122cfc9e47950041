// SPDX-License-Identifier: Apache-2.0
#include <leo/simworld.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace leo::sim
{

namespace
{

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::string num(double v)
{
    auto s = fmt::format("{:.2f}", v);
    while (s.back() == '0')
        s.pop_back();
    if (s.back() == '.')
        s.pop_back();
    if (s == "-0")
        s = "0";
    return s;
}

std::string point_text(const Vec3& p)
{
    return "(" + num(p.x) + ", " + num(p.y) + ", " + num(p.z) + ")";
}

Observation error_observation(std::string tool, std::string content)
{
    Observation obs;
    obs.source_tool = std::move(tool);
    obs.content = std::move(content);
    obs.is_error = true;
    return obs;
}

json vec_json(const Vec3& v)
{
    return json::array({v.x, v.y, v.z});
}

const json& require(const json& doc, const std::string& key, const std::string& path)
{
    if (!doc.is_object() || !doc.contains(key))
        throw ScenarioError(path + "." + key, "required field is missing");
    return doc.at(key);
}

double number_at(const json& doc, const std::string& key, const std::string& path)
{
    const auto& v = require(doc, key, path);
    if (!v.is_number())
        throw ScenarioError(path + "." + key, "must be a number");
    return v.get<double>();
}

double number_or(const json& doc, const std::string& key, double fallback, const std::string& path)
{
    if (!doc.contains(key))
        return fallback;
    return number_at(doc, key, path);
}

Vec3 vec_at(const json& doc, const std::string& key, const std::string& path)
{
    const auto& v = require(doc, key, path);
    if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); }))
        throw ScenarioError(path + "." + key, "must be an array of three numbers");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

std::string lower(std::string_view text)
{
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

} // namespace

double horizontal_distance(const Vec3& a, const Vec3& b) noexcept
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

double distance(const Vec3& a, const Vec3& b) noexcept
{
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

double normalize_yaw(double degrees) noexcept
{
    double d = std::fmod(degrees, 360.0);
    if (d < 0.0)
        d += 360.0;
    if (d >= 360.0)
        d -= 360.0;
    return d;
}

double signed_angle(double from, double to) noexcept
{
    double d = std::fmod(to - from, 360.0);
    if (d < -180.0)
        d += 360.0;
    else if (d >= 180.0)
        d -= 360.0;
    return d;
}

bool Bounds::contains(const Vec3& p) const noexcept
{
    constexpr double eps = kBoundaryEpsilon;
    return p.x >= min.x - eps && p.x <= max.x + eps && p.y >= min.y - eps && p.y <= max.y + eps &&
           p.z >= min.z - eps && p.z <= max.z + eps;
}

const char* to_string(RobotKind kind) noexcept
{
    return kind == RobotKind::uav ? "uav" : "wheeled_arm";
}

const Entity* World::find(std::string_view id) const noexcept
{
    auto it = std::find_if(entities.begin(), entities.end(), [&](const Entity& e) { return e.id == id; });
    return it == entities.end() ? nullptr : &*it;
}

Entity* World::find(std::string_view id) noexcept
{
    auto it = std::find_if(entities.begin(), entities.end(), [&](const Entity& e) { return e.id == id; });
    return it == entities.end() ? nullptr : &*it;
}

// --- scenario IO ------------------------------------------------------------

World world_from_json(const json& doc)
{
    if (!doc.is_object())
        throw ScenarioError("$", "scenario must be a JSON object");

    World world;
    world.name = doc.value("name", std::string{});

    const auto& bounds = require(doc, "bounds", "$");
    world.bounds = {vec_at(bounds, "min", "$.bounds"), vec_at(bounds, "max", "$.bounds")};
    if (!(world.bounds.min.x < world.bounds.max.x && world.bounds.min.y < world.bounds.max.y &&
          world.bounds.min.z <= world.bounds.max.z))
        throw ScenarioError("$.bounds", "min must lie below max on every axis");

    const auto& robot = require(doc, "robot", "$");
    auto kind = require(robot, "kind", "$.robot");
    if (kind == "uav")
        world.robot_kind = RobotKind::uav;
    else if (kind == "wheeled_arm")
        world.robot_kind = RobotKind::wheeled_arm;
    else
        throw ScenarioError("$.robot.kind", "must be \"uav\" or \"wheeled_arm\"");

    const auto& pose = require(robot, "pose", "$.robot");
    world.robot_pose = {number_at(pose, "x", "$.robot.pose"), number_at(pose, "y", "$.robot.pose"),
                        number_at(pose, "z", "$.robot.pose"), normalize_yaw(number_or(pose, "yaw", 0.0, "$.robot.pose"))};
    if (world.robot_pose.z < 0.0)
        throw ScenarioError("$.robot.pose.z", "must be non-negative");
    if (!world.bounds.contains(world.robot_pose.position()))
        throw ScenarioError("$.robot.pose", "robot starts outside the scene bounds");

    world.robot.speed = number_or(robot, "speed", 1.0, "$.robot");
    world.robot.yaw_rate = number_or(robot, "yaw_rate", 90.0, "$.robot");
    world.robot.reach = number_or(robot, "reach", 0.8, "$.robot");
    if (world.robot.speed <= 0.0)
        throw ScenarioError("$.robot.speed", "must be positive");
    if (world.robot.yaw_rate <= 0.0)
        throw ScenarioError("$.robot.yaw_rate", "must be positive");
    if (world.robot.reach <= 0.0)
        throw ScenarioError("$.robot.reach", "must be positive");

    if (doc.contains("fov"))
    {
        const auto& fov = doc["fov"];
        world.fov.half_angle = number_or(fov, "half_angle_deg", 45.0, "$.fov");
        world.fov.range = number_or(fov, "range_m", 5.0, "$.fov");
    }
    if (!(world.fov.half_angle > 0.0 && world.fov.half_angle <= 90.0))
        throw ScenarioError("$.fov.half_angle_deg", "must lie in (0, 90]");
    if (!(world.fov.range > 0.0))
        throw ScenarioError("$.fov.range_m", "must be positive");

    const auto& entities = require(doc, "entities", "$");
    if (!entities.is_array())
        throw ScenarioError("$.entities", "must be an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < entities.size(); ++i)
    {
        auto path = "$.entities[" + std::to_string(i) + "]";
        const auto& e = entities[i];
        const auto& id = require(e, "id", path);
        const auto& cls = require(e, "class", path);
        if (!id.is_string() || id.get<std::string>().empty())
            throw ScenarioError(path + ".id", "must be a non-empty string");
        if (!cls.is_string() || cls.get<std::string>().empty())
            throw ScenarioError(path + ".class", "must be a non-empty string");

        Entity entity;
        entity.id = id.get<std::string>();
        entity.class_label = cls.get<std::string>();
        entity.position = {number_at(e, "x", path), number_at(e, "y", path), number_or(e, "z", 0.0, path)};
        entity.graspable = e.value("graspable", false);
        entity.utterance = e.value("utterance", std::string{});
        if (!ids.insert(entity.id).second)
            throw ScenarioError(path + ".id", "duplicate entity id '" + entity.id + "'");
        if (!world.bounds.contains(entity.position))
            throw ScenarioError(path, "entity '" + entity.id + "' lies outside the scene bounds");
        world.entities.push_back(std::move(entity));
    }

    world.origin = doc.contains("origin") ? vec_at(doc, "origin", "$") : world.robot_pose.position();
    world.sim_clock = number_or(doc, "sim_clock", 0.0, "$");
    world.coverage_cell = number_or(doc, "coverage_cell_m", 1.0, "$");
    world.container_radius = number_or(doc, "container_radius_m", 0.4, "$");
    if (world.coverage_cell <= 0.0)
        throw ScenarioError("$.coverage_cell_m", "must be positive");

    if (doc.contains("held_entity") && !doc["held_entity"].is_null())
    {
        auto held = doc["held_entity"].get<std::string>();
        auto* entity = world.find(held);
        if (entity == nullptr || !entity->graspable)
            throw ScenarioError("$.held_entity", "must name a graspable entity");
        entity->position = world.robot_pose.position();
        world.held_entity = held;
    }
    return world;
}

World load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ScenarioError("$", "cannot open scenario file " + path.string());
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw ScenarioError("$", "scenario file " + path.string() + " is not valid JSON");
    return world_from_json(doc);
}

json snapshot(const World& world)
{
    json entities = json::array();
    for (const auto& e: world.entities)
    {
        json item = {{"id", e.id},
                     {"class", e.class_label},
                     {"x", e.position.x},
                     {"y", e.position.y},
                     {"z", e.position.z},
                     {"graspable", e.graspable}};
        if (!e.utterance.empty())
            item["utterance"] = e.utterance;
        entities.push_back(std::move(item));
    }
    return {{"name", world.name},
            {"bounds", {{"min", vec_json(world.bounds.min)}, {"max", vec_json(world.bounds.max)}}},
            {"robot",
             {{"kind", to_string(world.robot_kind)},
              {"pose", pose_json(world.robot_pose)},
              {"speed", world.robot.speed},
              {"yaw_rate", world.robot.yaw_rate},
              {"reach", world.robot.reach}}},
            {"fov", {{"half_angle_deg", world.fov.half_angle}, {"range_m", world.fov.range}}},
            {"entities", std::move(entities)},
            {"origin", vec_json(world.origin)},
            {"held_entity", world.held_entity ? json(*world.held_entity) : json()},
            {"sim_clock", world.sim_clock},
            {"coverage_cell_m", world.coverage_cell},
            {"container_radius_m", world.container_radius}};
}

json pose_json(const Pose& pose)
{
    return {{"x", pose.x}, {"y", pose.y}, {"z", pose.z}, {"yaw", pose.yaw}};
}

void check_invariants(const World& world)
{
    if (!world.bounds.contains(world.robot_pose.position()))
        throw std::logic_error("robot outside scene bounds");
    if (world.robot_pose.z < 0.0)
        throw std::logic_error("robot below ground");
    if (!(world.robot_pose.yaw >= 0.0 && world.robot_pose.yaw < 360.0))
        throw std::logic_error("yaw not normalized");
    std::set<std::string> ids;
    for (const auto& e: world.entities)
    {
        if (!ids.insert(e.id).second)
            throw std::logic_error("duplicate entity id " + e.id);
    }
    if (world.held_entity)
    {
        const auto* e = world.find(*world.held_entity);
        if (e == nullptr || !e->graspable)
            throw std::logic_error("held entity missing or not graspable");
        if (!(e->position == world.robot_pose.position()))
            throw std::logic_error("held entity does not track the robot");
    }
}

// --- actions ----------------------------------------------------------------

Observation move_to(World& world, Vec3 target)
{
    if (world.robot_kind == RobotKind::wheeled_arm)
        target.z = world.robot_pose.z;
    if (!world.bounds.contains(target))
        return error_observation("move_to", "target outside scene: " + point_text(target) + " is not inside the bounds " +
                                                point_text(world.bounds.min) + " to " + point_text(world.bounds.max));

    const double elapsed = distance(world.robot_pose.position(), target) / world.robot.speed;
    world.robot_pose.x = target.x;
    world.robot_pose.y = target.y;
    world.robot_pose.z = target.z;
    if (world.held_entity)
        world.find(*world.held_entity)->position = target;
    world.sim_clock += elapsed;

    Observation obs;
    obs.source_tool = "move_to";
    obs.content = "arrived at " + point_text(target);
    obs.data = pose_json(world.robot_pose);
    obs.sim_elapsed = elapsed;
    return obs;
}

Observation rotate_to(World& world, double yaw_degrees)
{
    const double target = normalize_yaw(yaw_degrees);
    const double elapsed = std::abs(signed_angle(world.robot_pose.yaw, target)) / world.robot.yaw_rate;
    world.robot_pose.yaw = target;
    world.sim_clock += elapsed;

    Observation obs;
    obs.source_tool = "rotate";
    obs.content = "now facing yaw " + num(target) + "°";
    obs.data = pose_json(world.robot_pose);
    obs.sim_elapsed = elapsed;
    return obs;
}

Observation grasp(World& world, std::string_view entity_id)
{
    if (world.held_entity)
        return error_observation("grasp", "already holding " + *world.held_entity + "; release it before grasping");
    auto* entity = world.find(entity_id);
    if (entity == nullptr)
        return error_observation("grasp", "no entity with id '" + std::string(entity_id) + "'");
    if (!entity->graspable)
        return error_observation("grasp", entity->id + " (" + entity->class_label + ") is not graspable");
    const double dist = horizontal_distance(world.robot_pose.position(), entity->position);
    if (dist > world.robot.reach + kBoundaryEpsilon)
        return error_observation("grasp", "out of reach: " + entity->id + " is " + num(dist) +
                                              " m away, the arm reaches " + num(world.robot.reach) +
                                              " m; move closer first");

    world.held_entity = entity->id;
    entity->position = world.robot_pose.position();
    world.sim_clock += kManipulationSeconds;

    Observation obs;
    obs.source_tool = "grasp";
    obs.content = "grasped " + entity->id + " (" + entity->class_label + ")";
    obs.data = {{"held_id", entity->id}};
    obs.sim_elapsed = kManipulationSeconds;
    return obs;
}

Observation release(World& world)
{
    if (!world.held_entity)
        return error_observation("release", "nothing held; grasp an object first");

    auto* entity = world.find(*world.held_entity);
    entity->position = {world.robot_pose.x, world.robot_pose.y, 0.0};
    world.held_entity.reset();
    world.sim_clock += kManipulationSeconds;

    json near = json::array();
    for (const auto& other: world.entities)
    {
        if (&other != entity && !other.graspable &&
            horizontal_distance(other.position, entity->position) <= world.container_radius + kBoundaryEpsilon)
            near.push_back(other.id);
    }

    Observation obs;
    obs.source_tool = "release";
    obs.content = "released " + entity->id + " at " + point_text(entity->position);
    if (!near.empty())
        obs.content += ", next to " + fmt::format("{}", fmt::join(near.get<std::vector<std::string>>(), ", "));
    obs.data = {{"released_id", entity->id},
                {"x", entity->position.x},
                {"y", entity->position.y},
                {"z", entity->position.z},
                {"near", std::move(near)}};
    obs.sim_elapsed = kManipulationSeconds;
    return obs;
}

// --- perception -------------------------------------------------------------

bool visible_from(const Pose& pose, const FovParams& fov, double x, double y) noexcept
{
    const double dx = x - pose.x;
    const double dy = y - pose.y;
    const double range = std::hypot(dx, dy);
    if (range > fov.range + kBoundaryEpsilon)
        return false;
    if (range < 1e-12)
        return true;
    const double bearing = std::atan2(dy, dx) * kRadToDeg;
    return std::abs(signed_angle(pose.yaw, bearing)) <= fov.half_angle + kBoundaryEpsilon;
}

std::vector<Detection> visible_entities(const World& world, const FovParams& fov, std::string_view class_filter)
{
    std::vector<Detection> out;
    const auto& pose = world.robot_pose;
    for (const auto& e: world.entities)
    {
        if (world.held_entity && *world.held_entity == e.id)
            continue;
        if (!class_filter.empty() && e.class_label != class_filter)
            continue;
        if (!visible_from(pose, fov, e.position.x, e.position.y))
            continue;
        const double dx = e.position.x - pose.x;
        const double dy = e.position.y - pose.y;
        const double range = std::hypot(dx, dy);
        const double bearing = range < 1e-12 ? 0.0 : signed_angle(pose.yaw, std::atan2(dy, dx) * kRadToDeg);
        out.push_back({e.id, e.class_label, bearing, range, e.position});
    }
    std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        return a.range != b.range ? a.range < b.range : a.id < b.id;
    });
    return out;
}

Observation detect(const World& world, const FovParams& fov, std::string_view class_filter)
{
    auto found = visible_entities(world, fov, class_filter);

    Observation obs;
    obs.source_tool = "detect";
    json list = json::array();
    std::string content;
    for (const auto& d: found)
    {
        list.push_back({{"id", d.id},
                        {"class_label", d.class_label},
                        {"bearing", d.bearing},
                        {"range", d.range},
                        {"x", d.position.x},
                        {"y", d.position.y},
                        {"z", d.position.z}});
        content += content.empty() ? "detected: " : "; ";
        content += d.class_label + " " + d.id + " at bearing " + num(d.bearing) + "°, range " + num(d.range) +
                   " m, position " + point_text(d.position);
    }
    if (found.empty())
        content = class_filter.empty() ? "nothing detected" : "nothing detected of class " + std::string(class_filter);

    obs.content = std::move(content);
    obs.data = {{"count", found.size()}, {"detections", std::move(list)}};
    if (!found.empty())
    {
        const auto& nearest = found.front();
        obs.data["nearest_id"] = nearest.id;
        obs.data["nearest_class"] = nearest.class_label;
        obs.data["nearest_range"] = nearest.range;
        obs.data["nearest_x"] = nearest.position.x;
        obs.data["nearest_y"] = nearest.position.y;
        obs.data["nearest_z"] = nearest.position.z;
    }
    return obs;
}

Observation vlm_describe(const World& world, const FovParams& fov, std::string_view question)
{
    auto seen = visible_entities(world, fov);
    const auto q = lower(question);

    // Class labels of the scene that the question mentions ("trash_can" also matches "trash can").
    std::vector<std::string> named;
    for (const auto& e: world.entities)
    {
        auto label = lower(e.class_label);
        auto spaced = label;
        std::replace(spaced.begin(), spaced.end(), '_', ' ');
        bool mentioned = q.find(label) != std::string::npos || q.find(spaced) != std::string::npos;
        if (mentioned && std::find(named.begin(), named.end(), e.class_label) == named.end())
            named.push_back(e.class_label);
    }

    Observation obs;
    obs.source_tool = "vlm_describe";
    json visible = json::array();
    for (const auto& d: seen)
        visible.push_back({{"id", d.id}, {"class_label", d.class_label}, {"bearing", d.bearing}, {"range", d.range}});

    json found = json::array();
    std::string answer;
    if (!named.empty())
    {
        for (const auto& label: named)
        {
            std::string part;
            for (const auto& d: seen)
            {
                if (d.class_label != label)
                    continue;
                part += part.empty() ? "Yes, I can see a " + label + " (" + d.id + ")" : "; another " + label + " (" + d.id + ")";
                part += " at bearing " + num(d.bearing) + "°, range " + num(d.range) + " m";
                found.push_back(d.id);
            }
            if (part.empty())
                part = "No " + label + " is visible from here";
            answer += answer.empty() ? "" : ". ";
            answer += part;
        }
        answer += ".";
    }
    else if (seen.empty())
    {
        answer = "Nothing notable is visible from here.";
    }
    else
    {
        answer = "I can see: ";
        for (std::size_t i = 0; i < seen.size(); ++i)
        {
            if (i > 0)
                answer += ", ";
            answer += "a " + seen[i].class_label + " at bearing " + num(seen[i].bearing) + "°, range " +
                      num(seen[i].range) + " m";
        }
        answer += ".";
    }

    obs.content = std::move(answer);
    obs.data = {{"visible", std::move(visible)}, {"found", std::move(found)}, {"asked", named}};
    return obs;
}

} // namespace leo::sim
