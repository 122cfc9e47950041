// SPDX-License-Identifier: Apache-2.0
#include <leo/harness.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace leo::harness
{

namespace
{

const std::vector<std::string> kArchitectureHeader = {"Task",   "Agent",           "Score (10)",
                                                      "Token Usage", "Time (s)", "Success Time (s)",
                                                      "Perfect Rate (%)"};

const std::vector<std::string> kPromptHeader = {
    "Method",
    "Room score (20)",
    "Room token usage",
    "Room time (s)",
    "Room time/item (s)",
    "City success rate (%)",
    "City token usage",
    "City time (s)",
    "City success time (s)",
};

constexpr const char* kTimeNote =
    "Time (s) is simulated robot time plus the model latency reported by the backend; wall-clock time is kept "
    "separately in the run records.";

std::string task_label(const std::string& id)
{
    if (id.empty())
        return id;
    std::string out = id;
    for (auto& c: out)
    {
        if (c == '_')
            c = ' ';
    }
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

std::string agent_label(const std::string& agent)
{
    if (agent == "leo")
        return "LEO";
    if (agent == "das")
        return "DAS";
    if (agent == "cge")
        return "CGE";
    if (agent == "dllms")
        return "DLLMs";
    if (agent == "tllms")
        return "TLLMs";
    return agent;
}

std::string variant_label(const std::string& v)
{
    if (v == "zero_shot")
        return "zero-shot";
    if (v == "one_shot")
        return "one-shot";
    if (v == "cot")
        return "CoT";
    if (v == "one_shot_cot")
        return "one-shot+CoT";
    return v;
}

std::string num(double v, int digits)
{
    return fmt::format("{:.{}f}", v, digits);
}

std::string opt(const std::optional<double>& v, int digits)
{
    return v ? num(*v, digits) : kUndefined;
}

std::string csv_cell(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c: s)
    {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string render(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body,
                   ReportFormat format)
{
    std::string out;
    if (format == ReportFormat::markdown)
    {
        out += "| " + fmt::format("{}", fmt::join(header, " | ")) + " |\n";
        out += "|";
        for (std::size_t i = 0; i < header.size(); ++i)
            out += i < 2 ? "---|" : "---:|";
        out += "\n";
        for (const auto& row: body)
            out += "| " + fmt::format("{}", fmt::join(row, " | ")) + " |\n";
        out += std::string("\n") + kTimeNote + "\n";
        return out;
    }
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
        {
            if (i)
                out += ",";
            out += csv_cell(cells[i]);
        }
        out += "\n";
    };
    line(header);
    for (const auto& row: body)
        line(row);
    return out;
}

std::vector<std::vector<std::string>> architecture_rows(const std::vector<AggregateRow>& rows)
{
    std::vector<std::vector<std::string>> body;
    for (const auto& r: rows)
    {
        body.push_back({task_label(r.task_id), agent_label(r.agent), num(r.mean_score, 3), num(r.mean_tokens, 0),
                        num(r.mean_time, 2), opt(r.mean_success_time, 2), num(r.perfect_rate, 2)});
    }
    return body;
}

std::vector<std::vector<std::string>> prompt_rows(const std::vector<AggregateRow>& rows)
{
    // One line per variant, in first-seen order; missing scenario groups print the undefined marker.
    std::vector<std::string> order;
    std::map<std::string, const AggregateRow*> room, city;
    for (const auto& r: rows)
    {
        if (std::find(order.begin(), order.end(), r.variant) == order.end())
            order.push_back(r.variant);
        if (r.task_id == "room_search")
            room[r.variant] = &r;
        else if (r.task_id == "city_search")
            city[r.variant] = &r;
    }
    std::vector<std::vector<std::string>> body;
    for (const auto& v: order)
    {
        std::vector<std::string> line{variant_label(v)};
        if (auto it = room.find(v); it != room.end())
        {
            const auto& r = *it->second;
            line.insert(line.end(), {num(r.mean_items, 2), num(r.mean_tokens, 0), num(r.mean_time, 2),
                                     opt(r.time_per_item, 2)});
        }
        else
        {
            line.insert(line.end(), 4, kUndefined);
        }
        if (auto it = city.find(v); it != city.end())
        {
            const auto& r = *it->second;
            line.insert(line.end(), {num(r.perfect_rate, 1), num(r.mean_tokens, 0), num(r.mean_time, 2),
                                     opt(r.mean_success_time, 2)});
        }
        else
        {
            line.insert(line.end(), 4, kUndefined);
        }
        body.push_back(std::move(line));
    }
    return body;
}

} // namespace

std::string emit_report(const std::vector<AggregateRow>& rows, ReportFormat format, ReportLayout layout)
{
    if (layout == ReportLayout::prompt)
        return render(kPromptHeader, prompt_rows(rows), format);
    return render(kArchitectureHeader, architecture_rows(rows), format);
}

void write_report(const std::filesystem::path& path, const std::vector<AggregateRow>& rows, ReportFormat format,
                  ReportLayout layout)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write report to " + path.string());
    out << emit_report(rows, format, layout);
    if (!out)
        throw std::runtime_error("write failed for " + path.string());
}

// --- coverage export -------------------------------------------------------------

CoverageArtifact export_coverage(const History& trace, const sim::World& scenario)
{
    if (scenario.robot_kind != sim::RobotKind::uav)
        throw ConfigError("coverage export needs a UAV scenario, '" + scenario.name + "' has a " +
                          sim::to_string(scenario.robot_kind));
    CoverageArtifact art;
    art.grid = sim::CoverageGrid::for_bounds(scenario.bounds, scenario.coverage_cell);
    auto pose = scenario.robot_pose;
    art.path.push_back(pose);
    for (const auto& e: trace)
    {
        if (e.kind != EntryKind::observation)
            continue;
        const auto& obs = e.observation();
        const auto& tool = obs.source_tool;
        if (tool == "move_to" || tool == "rotate" || tool == "rotate_to")
        {
            // Failed moves leave the pose where it was but still mark a waypoint.
            if (!obs.is_error && obs.data.is_object() && obs.data.contains("x"))
            {
                pose.x = obs.data.value("x", pose.x);
                pose.y = obs.data.value("y", pose.y);
                pose.z = obs.data.value("z", pose.z);
                pose.yaw = obs.data.value("yaw", pose.yaw);
            }
            art.path.push_back(pose);
        }
        else if (!obs.is_error && (tool == "detect" || tool == "vlm_describe"))
        {
            sim::update_coverage(art.grid, pose, scenario.fov);
            ++art.perception_poses;
        }
    }
    return art;
}

std::string coverage_csv(const sim::CoverageGrid& grid)
{
    std::string out;
    for (std::size_t row = 0; row < grid.rows; ++row)
    {
        for (std::size_t col = 0; col < grid.cols; ++col)
        {
            if (col)
                out += ",";
            out += std::to_string(grid.at(col, row));
        }
        out += "\n";
    }
    return out;
}

json coverage_json(const CoverageArtifact& art, const sim::World& scenario)
{
    const auto& g = art.grid;
    json counts = json::array();
    for (std::size_t row = 0; row < g.rows; ++row)
    {
        json line = json::array();
        for (std::size_t col = 0; col < g.cols; ++col)
            line.push_back(g.at(col, row));
        counts.push_back(std::move(line));
    }
    json path = json::array();
    for (const auto& p: art.path)
        path.push_back(sim::pose_json(p));
    json entities = json::array();
    for (const auto& e: scenario.entities)
        entities.push_back({{"id", e.id}, {"class", e.class_label}, {"x", e.position.x}, {"y", e.position.y}});
    return {{"scenario", scenario.name},
            {"bounds",
             {{"min", {g.bounds.min.x, g.bounds.min.y, g.bounds.min.z}},
              {"max", {g.bounds.max.x, g.bounds.max.y, g.bounds.max.z}}}},
            {"cell_size", g.cell_size},
            {"cols", g.cols},
            {"rows", g.rows},
            {"counts", std::move(counts)},
            {"max_count", g.counts.empty() ? 0u : *std::max_element(g.counts.begin(), g.counts.end())},
            {"perception_poses", art.perception_poses},
            {"fov", {{"half_angle_deg", scenario.fov.half_angle}, {"range_m", scenario.fov.range}}},
            {"path", std::move(path)},
            {"entities", std::move(entities)}};
}

void write_coverage(const std::filesystem::path& dir, const CoverageArtifact& art, const sim::World& scenario)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "coverage.csv", std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + (dir / "coverage.csv").string());
        out << coverage_csv(art.grid);
    }
    std::ofstream out(dir / "coverage.json", std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + (dir / "coverage.json").string());
    out << coverage_json(art, scenario).dump(2) << "\n";
}

} // namespace leo::harness
