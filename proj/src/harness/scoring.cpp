// SPDX-License-Identifier: Apache-2.0
#include <leo/harness.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace leo::harness
{

namespace
{

Milestone m(std::string name, int points, std::string predicate, json params = json::object())
{
    return {std::move(name), points, std::move(predicate), std::move(params)};
}

// The twenty objects of data/scenarios/room.json.
constexpr std::array<const char*, 20> kRoomObjects = {
    "sofa_1",  "tv_1",       "table_1",    "chair_1", "chair_2",  "lamp_1",  "plant_1",
    "plant_2", "bookshelf_1", "book_1",    "laptop_1", "cup_1",   "bottle_1", "backpack_1",
    "shoe_1",  "ball_1",     "clock_1",    "bed_1",   "pillow_1", "trash_can_1"};

const std::string& text_param(const Milestone& ms, const char* key)
{
    auto it = ms.params.find(key);
    if (it == ms.params.end() || !it->is_string())
        throw ConfigError(fmt::format("milestone '{}' needs a string parameter '{}'", ms.name, key));
    return it->get_ref<const std::string&>();
}

double number_param(const Milestone& ms, const char* key)
{
    auto it = ms.params.find(key);
    if (it == ms.params.end() || !it->is_number())
        throw ConfigError(fmt::format("milestone '{}' needs a numeric parameter '{}'", ms.name, key));
    return it->get<double>();
}

const sim::Entity& entity(const sim::World& world, const std::string& id)
{
    const auto* e = world.find(id);
    if (e == nullptr)
        throw ConfigError("rubric names entity '" + id + "', which is not in the scenario");
    return *e;
}

double flat_distance(double ax, double ay, double bx, double by)
{
    return std::hypot(ax - bx, ay - by);
}

bool resting(const sim::World& world, const std::string& id)
{
    return !world.held_entity || *world.held_entity != id;
}

template <typename Fn>
bool any_observation(const Trace& trace, std::string_view tool, Fn&& fn)
{
    for (const auto& e: trace.entries)
    {
        if (e.kind != EntryKind::observation)
            continue;
        const auto& obs = e.observation();
        if (obs.is_error || obs.source_tool != tool)
            continue;
        if (fn(obs))
            return true;
    }
    return false;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool evaluate(const Milestone& ms, const sim::World& initial, const Trace& trace, const sim::World& final_world)
{
    const auto& p = ms.predicate;
    const double eps = sim::kBoundaryEpsilon;
    if (p == "entity_near_entity")
    {
        const auto& a = entity(final_world, text_param(ms, "entity"));
        const auto& b = entity(final_world, text_param(ms, "target"));
        return resting(final_world, a.id) &&
               flat_distance(a.position.x, a.position.y, b.position.x, b.position.y) <= number_param(ms, "radius") + eps;
    }
    if (p == "robot_near_origin")
    {
        const auto& r = final_world.robot_pose;
        return flat_distance(r.x, r.y, final_world.origin.x, final_world.origin.y) <= number_param(ms, "radius") + eps;
    }
    if (p == "held_nearest")
    {
        auto target = nearest_target(initial, text_param(ms, "class"), initial.origin.x, initial.origin.y);
        return any_observation(trace, "grasp", [&](const Observation& obs) {
            auto it = obs.data.find("held_id");
            return it != obs.data.end() && it->is_string() && *it == target;
        });
    }
    if (p == "returned_holding_nearest")
    {
        auto target = nearest_target(initial, text_param(ms, "class"), initial.origin.x, initial.origin.y);
        const auto& r = final_world.robot_pose;
        return final_world.held_entity && *final_world.held_entity == target &&
               flat_distance(r.x, r.y, final_world.origin.x, final_world.origin.y) <= number_param(ms, "radius") + eps;
    }
    if (p == "status_completed")
        return trace.status == "completed";
    if (p == "approached")
    {
        const auto& target = entity(initial, text_param(ms, "entity"));
        const double radius = number_param(ms, "radius");
        auto near = [&](double x, double y) {
            return flat_distance(x, y, target.position.x, target.position.y) <= radius + eps;
        };
        if (near(initial.robot_pose.x, initial.robot_pose.y))
            return true;
        return any_observation(trace, "move_to", [&](const Observation& obs) {
            return obs.data.contains("x") && obs.data.contains("y") &&
                   near(obs.data["x"].get<double>(), obs.data["y"].get<double>());
        });
    }
    if (p == "moved_class_near")
    {
        const auto& cls = text_param(ms, "class");
        const auto& target = entity(final_world, text_param(ms, "target"));
        const double radius = number_param(ms, "radius");
        for (const auto& e: final_world.entities)
        {
            if (e.class_label != cls || !resting(final_world, e.id))
                continue;
            const auto* before = initial.find(e.id);
            bool was_near = before != nullptr && flat_distance(before->position.x, before->position.y,
                                                               target.position.x, target.position.y) <= radius + eps;
            if (!was_near &&
                flat_distance(e.position.x, e.position.y, target.position.x, target.position.y) <= radius + eps)
                return true;
        }
        return false;
    }
    if (p == "report_mentions")
    {
        auto report = lower(trace.final_report);
        if (report.empty() || trace.status != "completed")
            return false;
        auto it = ms.params.find("keywords");
        if (it == ms.params.end() || !it->is_array())
            throw ConfigError("milestone '" + ms.name + "' needs a keywords array");
        return std::any_of(it->begin(), it->end(), [&](const json& k) {
            return k.is_string() && report.find(lower(k.get<std::string>())) != std::string::npos;
        });
    }
    if (p == "detected")
    {
        const auto& id = text_param(ms, "id");
        return any_observation(trace, "detect", [&](const Observation& obs) {
            auto it = obs.data.find("detections");
            if (it == obs.data.end() || !it->is_array())
                return false;
            return std::any_of(it->begin(), it->end(), [&](const json& d) { return d.value("id", "") == id; });
        });
    }
    if (p == "vlm_found")
    {
        const auto& id = text_param(ms, "id");
        return any_observation(trace, "vlm_describe", [&](const Observation& obs) {
            auto it = obs.data.find("found");
            return it != obs.data.end() && it->is_array() && std::find(it->begin(), it->end(), json(id)) != it->end();
        });
    }
    if (p == "robot_above")
    {
        const auto& target = entity(final_world, text_param(ms, "entity"));
        const auto& r = final_world.robot_pose;
        return flat_distance(r.x, r.y, target.position.x, target.position.y) <= number_param(ms, "radius") + eps;
    }
    throw ConfigError("unknown predicate '" + p + "' in milestone '" + ms.name + "'");
}

} // namespace

void Rubric::validate() const
{
    if (max_points <= 0)
        throw ConfigError("rubric '" + id + "' needs a positive max_points");
    int sum = 0;
    for (const auto& ms: milestones)
    {
        if (ms.points <= 0)
            throw ConfigError("milestone '" + ms.name + "' must be worth at least one point");
        sum += ms.points;
    }
    if (sum != max_points)
        throw ConfigError(fmt::format("rubric '{}' milestones sum to {}, not {}", id, sum, max_points));
}

Rubric find_rubric(std::string_view id)
{
    Rubric r;
    r.id = std::string(id);
    if (id == "delivery")
    {
        r.milestones = {
            m("bottle_1 on spot_1", 3, "entity_near_entity", {{"entity", "bottle_1"}, {"target", "spot_1"}, {"radius", 0.4}}),
            m("bottle_2 on spot_2", 3, "entity_near_entity", {{"entity", "bottle_2"}, {"target", "spot_2"}, {"radius", 0.4}}),
            m("bottle_3 on spot_3", 3, "entity_near_entity", {{"entity", "bottle_3"}, {"target", "spot_3"}, {"radius", 0.4}}),
            m("returned to origin", 1, "robot_near_origin", {{"radius", 0.3}}),
        };
        r.max_points = 10;
    }
    else if (id == "searching")
    {
        r.milestones = {
            m("nearest bottle held", 4, "held_nearest", {{"class", "bottle"}}),
            m("returned holding it", 4, "returned_holding_nearest", {{"class", "bottle"}, {"radius", 0.3}}),
            m("finished with final_response", 2, "status_completed"),
        };
        r.max_points = 10;
    }
    else if (id == "handover")
    {
        r.milestones = {
            m("approached the person by the chair", 2, "approached", {{"entity", "person_1"}, {"radius", 1.0}}),
            m("bottle placed by the person at the lamp", 4, "moved_class_near",
              {{"class", "bottle"}, {"target", "person_2"}, {"radius", 0.5}}),
            m("returned to origin", 2, "robot_near_origin", {{"radius", 0.3}}),
            m("report mentions the sub-task", 2, "report_mentions", {{"keywords", {"bottle"}}}),
        };
        r.max_points = 10;
    }
    else if (id == "room_search")
    {
        for (const auto* obj: kRoomObjects)
            r.milestones.push_back(m(std::string("found ") + obj, 1, "detected", {{"id", obj}}));
        r.max_points = 20;
    }
    else if (id == "city_search")
    {
        r.milestones = {
            m("pavilion seen", 4, "vlm_found", {{"id", "pavilion_1"}}),
            m("above the pavilion", 4, "robot_above", {{"entity", "pavilion_1"}, {"radius", 15.0}}),
            m("finished with final_response", 2, "status_completed"),
        };
        r.max_points = 10;
    }
    else if (id == "object_search")
    {
        r.milestones = {
            m("trash can detected", 3, "detected", {{"id", "trash_can_1"}}),
            m("hovering above the trash can", 5, "robot_above", {{"entity", "trash_can_1"}, {"radius", 0.4}}),
            m("finished with final_response", 2, "status_completed"),
        };
        r.max_points = 10;
    }
    else
    {
        throw ConfigError(fmt::format("unknown rubric '{}'", id));
    }
    r.validate();
    return r;
}

ScoreBreakdown score_run(const Rubric& rubric, const sim::World& initial, const Trace& trace,
                         const sim::World& final_world)
{
    ScoreBreakdown out;
    out.max_points = rubric.max_points;
    int points = 0;
    for (const auto& ms: rubric.milestones)
    {
        bool ok = evaluate(ms, initial, trace, final_world);
        if (ok)
            points += ms.points;
        out.milestones.emplace_back(ms.name, ok);
    }
    out.score = points;
    return out;
}

std::string nearest_target(const sim::World& world, std::string_view class_label, double from_x, double from_y)
{
    const sim::Entity* best = nullptr;
    double best_d = 0.0;
    for (const auto& e: world.entities)
    {
        if (e.class_label != class_label)
            continue;
        double d = flat_distance(e.position.x, e.position.y, from_x, from_y);
        if (best == nullptr || d < best_d || (d == best_d && e.id < best->id))
        {
            best = &e;
            best_d = d;
        }
    }
    if (best == nullptr)
        throw std::invalid_argument("no entity of class '" + std::string(class_label) + "'");
    return best->id;
}

int score_room_search(const History& trace)
{
    std::set<std::string> ids;
    for (const auto& e: trace)
    {
        if (e.kind != EntryKind::observation)
            continue;
        const auto& obs = e.observation();
        if (obs.source_tool != "detect" || obs.is_error)
            continue;
        auto it = obs.data.find("detections");
        if (it == obs.data.end() || !it->is_array())
            continue;
        for (const auto& d: *it)
        {
            if (d.contains("id") && d["id"].is_string())
                ids.insert(d["id"].get<std::string>());
        }
    }
    return static_cast<int>(ids.size());
}

// --- traces -------------------------------------------------------------------------

Trace make_trace(std::string task_id, agent::AgentKind kind, const sim::World& initial,
                 const agent::SessionResult& result, const sim::World& final_world)
{
    Trace t;
    t.task_id = std::move(task_id);
    t.agent = agent::to_string(kind);
    t.initial_world = sim::snapshot(initial);
    t.entries = result.history;
    t.status = agent::to_string(result.status);
    t.final_report = result.final_report;
    t.token_usage = result.token_usage;
    t.model_calls = result.model_calls;
    t.sim_time = result.sim_time;
    t.model_latency = result.model_latency;
    t.final_world = sim::snapshot(final_world);
    return t;
}

std::string serialize_trace(const Trace& trace)
{
    std::string out;
    json head = {{"kind", "session_start"}, {"task", trace.task_id}, {"agent", trace.agent},
                 {"world", trace.initial_world}};
    out += head.dump() + "\n";
    for (const auto& e: trace.entries)
        out += leo::to_json(e).dump() + "\n";
    json tail = {{"kind", "session_end"},
                 {"status", trace.status},
                 {"final_report", trace.final_report},
                 {"token_usage", leo::to_json(trace.token_usage)},
                 {"model_calls", trace.model_calls},
                 {"sim_time", trace.sim_time},
                 {"model_latency", trace.model_latency},
                 {"world", trace.final_world}};
    out += tail.dump() + "\n";
    return out;
}

void write_trace(const std::filesystem::path& path, const Trace& trace)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << serialize_trace(trace);
    if (!out)
        throw std::runtime_error("write failed for " + path.string());
}

Trace parse_trace(std::string_view text)
{
    Trace t;
    bool started = false;
    bool ended = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size())
    {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.empty())
            continue;
        auto j = json::parse(line, nullptr, false);
        if (!j.is_object() || !j.contains("kind"))
            throw ConfigError(fmt::format("trace line {} is not a JSON object with a kind", line_no));
        auto kind = j["kind"].get<std::string>();
        try
        {
            if (kind == "session_start")
            {
                t.task_id = j.value("task", "");
                t.agent = j.value("agent", "");
                t.initial_world = j.at("world");
                started = true;
            }
            else if (kind == "session_end")
            {
                t.status = j.at("status").get<std::string>();
                t.final_report = j.value("final_report", "");
                t.token_usage = usage_from_json(j.at("token_usage"));
                t.model_calls = j.value("model_calls", std::size_t{0});
                t.sim_time = j.value("sim_time", 0.0);
                t.model_latency = j.value("model_latency", 0.0);
                t.final_world = j.at("world");
                ended = true;
            }
            else
            {
                t.entries.push_back(history_entry_from_json(j));
            }
        }
        catch (const std::exception& e)
        {
            throw ConfigError(fmt::format("trace line {}: {}", line_no, e.what()));
        }
    }
    if (!started || !ended)
        throw ConfigError("trace is missing its session_start or session_end line");
    return t;
}

Trace read_trace(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read trace " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trace(ss.str());
}

} // namespace leo::harness
