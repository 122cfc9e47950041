// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <leo/harness.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace leo;
using harness::ConfigError;

namespace
{

sim::World delivery_world()
{
    return sim::load_scenario(harness::find_task("delivery", test::data_dir()).scenario_path);
}

void place(sim::World& w, std::string_view id, std::string_view on)
{
    auto* e = w.find(id);
    const auto* target = w.find(on);
    ASSERT_NE(e, nullptr);
    ASSERT_NE(target, nullptr);
    e->position = target->position;
}

harness::Trace completed_trace(std::string report = "done")
{
    harness::Trace t;
    t.status = "completed";
    t.final_report = std::move(report);
    return t;
}

harness::RunRecord record(double score, bool success, double sim_time, std::int64_t tokens)
{
    harness::RunRecord r;
    r.task_id = "delivery";
    r.agent = "leo";
    r.variant = "zero_shot";
    r.score = score;
    r.max_points = 10;
    r.success = success;
    r.sim_time = sim_time;
    r.token_usage = {tokens, 0};
    return r;
}

std::vector<std::string> split_row(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream in(line);
    std::string cell;
    while (std::getline(in, cell, '|'))
    {
        auto b = cell.find_first_not_of(' ');
        auto e = cell.find_last_not_of(' ');
        if (b != std::string::npos)
            cells.push_back(cell.substr(b, e - b + 1));
    }
    return cells;
}

HistoryEntry observation(std::string tool, json data, bool error = false)
{
    HistoryEntry e;
    e.kind = EntryKind::observation;
    e.payload = Observation{std::move(tool), "x", std::move(data), error};
    return e;
}

json detections(std::initializer_list<const char*> ids)
{
    json list = json::array();
    for (const auto* id: ids)
        list.push_back({{"id", id}});
    return {{"detections", list}, {"count", list.size()}};
}

bool in_view(const sim::Pose& p, const sim::FovParams& fov, double cx, double cy)
{
    const double dx = cx - p.x, dy = cy - p.y;
    const double r = std::hypot(dx, dy);
    if (r > fov.range + 1e-9)
        return false;
    if (r < 1e-12)
        return true;
    double diff = std::remainder(std::atan2(dy, dx) * 180.0 / std::numbers::pi - p.yaw, 360.0);
    return std::abs(diff) <= fov.half_angle + 1e-9;
}

} // namespace

TEST(NearestTarget, MatchesBruteForceOnRandomWorlds)
{
    std::mt19937 rng(31);
    for (int c = 0; c < 1000; ++c)
    {
        sim::World w;
        std::uniform_int_distribution<int> n(1, 8), coord(0, 6), cls(0, 2);
        const char* classes[] = {"bottle", "cup", "chair"};
        int bottles = 0;
        for (int i = n(rng); i > 0; --i)
        {
            const char* label = classes[cls(rng)];
            bottles += std::string_view(label) == "bottle";
            // Integer coordinates make equal distances, and so ties, frequent.
            w.entities.push_back({std::string(label) + "_" + std::to_string(i), label,
                                  {double(coord(rng)), double(coord(rng)), double(coord(rng))}, true, ""});
        }
        const double fx = coord(rng), fy = coord(rng);
        if (bottles == 0)
        {
            EXPECT_THROW((void)harness::nearest_target(w, "bottle", fx, fy), std::invalid_argument);
            continue;
        }
        std::string best;
        double best_d2 = 1e300;
        for (const auto& e: w.entities)
        {
            if (e.class_label != "bottle")
                continue;
            const double d2 = (e.position.x - fx) * (e.position.x - fx) + (e.position.y - fy) * (e.position.y - fy);
            if (d2 < best_d2 || (d2 == best_d2 && e.id < best))
            {
                best = e.id;
                best_d2 = d2;
            }
        }
        ASSERT_EQ(harness::nearest_target(w, "bottle", fx, fy), best) << "world " << c;
    }
}

TEST(Rubric, DeliveryArithmetic)
{
    const auto rubric = harness::find_rubric("delivery");
    const auto initial = delivery_world();

    auto all = initial;
    place(all, "bottle_1", "spot_1");
    place(all, "bottle_2", "spot_2");
    place(all, "bottle_3", "spot_3");
    all.robot_pose.x = all.origin.x;
    all.robot_pose.y = all.origin.y;
    EXPECT_EQ(harness::score_run(rubric, initial, completed_trace(), all).score, 10.0);

    auto two = initial;
    place(two, "bottle_1", "spot_1");
    place(two, "bottle_3", "spot_3");
    two.robot_pose.x = two.origin.x + 5;
    auto partial = harness::score_run(rubric, initial, completed_trace(), two);
    EXPECT_EQ(partial.score, 6.0);
    EXPECT_EQ(partial.max_points, 10);
    ASSERT_EQ(partial.milestones.size(), 4u);
    EXPECT_TRUE(partial.milestones[0].second);
    EXPECT_FALSE(partial.milestones[1].second);

    auto none = initial;
    none.robot_pose.x = none.origin.x + 5;
    EXPECT_EQ(harness::score_run(rubric, initial, completed_trace(), none).score, 0.0);
}

TEST(Rubric, EveryTaskRubricSumsToItsMaximum)
{
    for (const auto& id: harness::task_ids())
    {
        auto r = harness::find_rubric(id);
        int sum = 0;
        for (const auto& m: r.milestones)
            sum += m.points;
        EXPECT_EQ(sum, r.max_points) << id;
        EXPECT_EQ(r.max_points, id == "room_search" ? 20 : 10) << id;
    }
    EXPECT_THROW((void)harness::find_rubric("juggling"), ConfigError);
    harness::Rubric broken{"x", {{"m", 3, "status_completed", json::object()}}, 10};
    EXPECT_THROW(broken.validate(), ConfigError);
}

TEST(Rubric, UnknownPredicateIsAConfigError)
{
    harness::Rubric r{"x", {{"m", 1, "telepathy", json::object()}}, 1};
    const auto w = test::small_uav_world();
    EXPECT_THROW((void)harness::score_run(r, w, completed_trace(), w), ConfigError);
}

TEST(Rubric, ScoringIsPure)
{
    const auto rubric = harness::find_rubric("delivery");
    const auto initial = delivery_world();
    auto fin = initial;
    place(fin, "bottle_2", "spot_2");
    const auto a = harness::score_run(rubric, initial, completed_trace(), fin);
    const auto b = harness::score_run(rubric, initial, completed_trace(), fin);
    EXPECT_EQ(a.score, b.score);
    EXPECT_EQ(a.milestones, b.milestones);
}

TEST(RoomSearch, CountsDistinctDetectedIds)
{
    History h{observation("detect", detections({"sofa_1", "lamp_1"})),
              observation("detect", detections({"lamp_1", "tv_1"})),
              observation("detect", detections({"ghost_1"}), true),
              observation("vlm_describe", detections({"plant_1"})),
              observation("detect", json::object())};
    EXPECT_EQ(harness::score_room_search(h), 3);
    EXPECT_EQ(harness::score_room_search({}), 0);
}

TEST(Aggregate, MeanAndPerfectRate)
{
    std::vector<harness::RunRecord> records;
    const double scores[] = {10, 10, 6, 0, 10};
    for (int i = 0; i < 5; ++i)
        records.push_back(record(scores[i], scores[i] == 10, 10.0 * (i + 1), 100 * (i + 1)));
    auto rows = harness::aggregate(records);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_DOUBLE_EQ(rows[0].mean_score, 7.2);
    EXPECT_DOUBLE_EQ(rows[0].perfect_rate, 60.0);
    EXPECT_DOUBLE_EQ(rows[0].mean_tokens, 300.0);
    EXPECT_DOUBLE_EQ(rows[0].mean_time, 30.0);
    ASSERT_TRUE(rows[0].mean_success_time);
    EXPECT_DOUBLE_EQ(*rows[0].mean_success_time, (10.0 + 20.0 + 50.0) / 3.0);
    EXPECT_EQ(rows[0].runs, 5);
    EXPECT_EQ(rows[0].successes, 3);
}

TEST(Aggregate, NoSuccessLeavesSuccessTimeUndefined)
{
    std::vector<harness::RunRecord> records{record(4, false, 12, 10), record(2, false, 8, 10)};
    auto rows = harness::aggregate(records);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_FALSE(rows[0].mean_success_time);
    const auto md = harness::emit_report(rows, harness::ReportFormat::markdown);
    auto lines = std::istringstream(md);
    std::string header, rule, row;
    std::getline(lines, header);
    std::getline(lines, rule);
    std::getline(lines, row);
    auto cells = split_row(row);
    ASSERT_EQ(cells.size(), 7u);
    EXPECT_EQ(cells[5], harness::kUndefined);
    EXPECT_EQ(cells[6], "0.00");
}

TEST(Aggregate, GroupsInFirstSeenOrder)
{
    auto a = record(10, true, 1, 1);
    auto b = record(5, false, 1, 1);
    b.agent = "das";
    auto rows = harness::aggregate({a, b, a});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].agent, "leo");
    EXPECT_EQ(rows[0].runs, 2);
    EXPECT_EQ(rows[1].agent, "das");
}

TEST(Aggregate, TimePerItemIsTotalTimeOverTotalItems)
{
    auto a = record(0, false, 30, 1);
    a.items = 3;
    auto b = record(0, false, 50, 1);
    b.items = 1;
    auto rows = harness::aggregate({a, b});
    ASSERT_TRUE(rows[0].time_per_item);
    EXPECT_DOUBLE_EQ(*rows[0].time_per_item, 80.0 / 4.0);
    auto none = harness::aggregate({record(0, false, 30, 1)});
    EXPECT_FALSE(none[0].time_per_item);
}

TEST(Report, ArchitectureHeaderAndShape)
{
    auto leo = record(10, true, 100, 1000);
    auto das = record(0, false, 10, 50);
    das.agent = "das";
    const auto md = harness::emit_report(harness::aggregate({leo, das}), harness::ReportFormat::markdown);
    std::istringstream in(md);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line) && !line.empty())
        rows.push_back(split_row(line));
    ASSERT_EQ(rows.size(), 4u); // header, rule, two data rows
    const std::vector<std::string> header = {"Task",     "Agent",            "Score (10)",      "Token Usage",
                                             "Time (s)", "Success Time (s)", "Perfect Rate (%)"};
    EXPECT_EQ(rows[0], header);
    EXPECT_EQ(rows[2].size(), 7u);
    EXPECT_EQ(rows[3].size(), 7u);
    EXPECT_EQ(rows[2][0], "Delivery");
    EXPECT_EQ(rows[2][1], "LEO");
    EXPECT_EQ(rows[2][2], "10.000");
    EXPECT_EQ(rows[3][1], "DAS");
    EXPECT_EQ(rows[3][5], harness::kUndefined);

    const auto csv = harness::emit_report(harness::aggregate({leo, das}), harness::ReportFormat::csv);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "Task,Agent,Score (10),Token Usage,Time (s),Success Time (s),Perfect Rate (%)");
}

TEST(Report, PromptLayoutHasRoomAndCityGroups)
{
    auto room = record(0, false, 40, 10);
    room.task_id = "room_search";
    room.items = 4;
    auto city = record(10, true, 20, 10);
    city.task_id = "city_search";
    city.variant = "cot";
    const auto csv =
        harness::emit_report(harness::aggregate({room, city}), harness::ReportFormat::csv, harness::ReportLayout::prompt);
    std::istringstream in(csv);
    std::string header, zero, cot;
    std::getline(in, header);
    std::getline(in, zero);
    std::getline(in, cot);
    EXPECT_EQ(zero, "zero-shot,4.00,10,40.00,10.00,--,--,--,--");
    EXPECT_EQ(cot, "CoT,--,--,--,--,100.0,10,20.00,20.00");
}

TEST(Records, JsonRoundTripWithoutTiming)
{
    auto r = record(6, false, 12.5, 345);
    r.breakdown = {{"a", true}, {"b", false}};
    r.status = "step_limit";
    r.final_report = "stopped";
    r.wall_time = 1.25;
    r.model_latency = 0.5;
    auto j = harness::to_json(r, false);
    EXPECT_FALSE(j.contains("timing"));
    auto back = harness::run_record_from_json(j);
    EXPECT_EQ(harness::to_json(back, false), j);
    EXPECT_DOUBLE_EQ(back.time(), 13.0);
}

TEST(Traces, RoundTripAndDeterminism)
{
    const auto task = harness::find_task("delivery", test::data_dir());
    const auto factory =
        harness::model_factory_from_spec("scripted:" + (test::data_dir() / "scripts" / "delivery_leo.json").string());
    harness::ExperimentOptions opts;
    opts.repetitions = 2;
    auto res = harness::run_experiment(task, agent::AgentKind::leo, factory, opts);
    ASSERT_EQ(res.traces.size(), 2u);
    const auto a = harness::serialize_trace(res.traces[0]);
    EXPECT_EQ(a, harness::serialize_trace(res.traces[1]));

    auto parsed = harness::parse_trace(a);
    EXPECT_EQ(harness::serialize_trace(parsed), a);
    EXPECT_EQ(parsed.status, "completed");
    EXPECT_EQ(parsed.entries.size(), res.traces[0].entries.size());

    std::istringstream lines(a);
    std::string first, last, line;
    std::getline(lines, first);
    while (std::getline(lines, line))
        last = line;
    EXPECT_EQ(json::parse(first).at("kind"), "session_start");
    EXPECT_EQ(json::parse(last).at("kind"), "session_end");

    // Rescoring the persisted trace reproduces the recorded score.
    const auto initial = sim::world_from_json(parsed.initial_world);
    const auto final_world = sim::world_from_json(parsed.final_world);
    EXPECT_EQ(harness::score_run(harness::find_rubric("delivery"), initial, parsed, final_world).score,
              res.records[0].score);
}

TEST(Experiment, FailedRunsAreRecorded)
{
    const auto task = harness::find_task("delivery", test::data_dir());
    const auto factory = [](int) {
        harness::ModelSet set;
        set.agent = std::make_unique<llm::ScriptedModel>(std::vector<std::string>{"no idea", "still none", "nope"});
        set.aux = std::make_unique<llm::EchoModel>();
        return set;
    };
    harness::ExperimentOptions opts;
    opts.repetitions = 3;
    auto res = harness::run_experiment(task, agent::AgentKind::leo, factory, opts);
    ASSERT_EQ(res.records.size(), 3u);
    for (const auto& r: res.records)
    {
        EXPECT_EQ(r.status, "unrecoverable_parse");
        EXPECT_FALSE(r.success);
    }
    ASSERT_EQ(res.report.size(), 1u);
    EXPECT_EQ(res.report[0].runs, 3);
}

TEST(Config, Errors)
{
    EXPECT_THROW((void)harness::find_task("cooking", test::data_dir()), ConfigError);
    // No worked example ships for delivery.
    const auto task = harness::find_task("delivery", test::data_dir(), harness::PromptVariant::one_shot);
    EXPECT_THROW((void)harness::session_config(task, agent::AgentKind::leo), ConfigError);
    EXPECT_THROW((void)harness::model_factory_from_spec("psychic"), ConfigError);
    auto missing = harness::find_task("delivery", "/nonexistent");
    EXPECT_THROW(
        (void)harness::run_experiment(missing, agent::AgentKind::leo,
                                      harness::model_factory_from_spec("scripted:/nonexistent.json"), {}),
        ConfigError);
}

TEST(Guidance, Variants)
{
    const auto example = test::data_dir() / "scenarios" / "room_search.example.txt";
    EXPECT_EQ(harness::assemble_guidance(harness::PromptVariant::zero_shot, example), "");
    const auto cot = harness::assemble_guidance(harness::PromptVariant::cot, example);
    EXPECT_NE(cot.find(harness::kCotGuidance), std::string::npos);
    const auto both = harness::assemble_guidance(harness::PromptVariant::one_shot_cot, example);
    EXPECT_NE(both.find(harness::kCotGuidance), std::string::npos);
    EXPECT_GT(both.size(), cot.size());
}

TEST(CoverageExport, MatchesGroundTruthPoses)
{
    const auto task = harness::find_task("room_search", test::data_dir());
    const auto scenario = sim::load_scenario(task.scenario_path);
    auto world = scenario;
    auto reg = harness::build_registry(task, world, nullptr);
    const double cx = (scenario.bounds.min.x + scenario.bounds.max.x) / 2;
    const double cy = (scenario.bounds.min.y + scenario.bounds.max.y) / 2;
    llm::ScriptedModel model({test::step("", "detect"),
                              test::step("", "move_to", {{"x", cx}, {"y", cy}, {"z", 1.5}}),
                              test::step("", "detect"),
                              test::step("", "rotate", {{"yaw_deg", 135}}),
                              test::step("", "detect"),
                              test::step("", "move_to", {{"x", 1e6}, {"y", 0}, {"z", 1}}), // rejected
                              test::step("", "detect"),
                              test::final_step("done")});
    agent::Session session(task.task_prompt, harness::session_config(task, agent::AgentKind::leo));
    std::vector<sim::Pose> perception_poses;
    for (;;)
    {
        auto out = agent::step(session, reg, model, world);
        if (out.terminal)
            break;
        const auto& last = session.entries().back();
        if (last.observation().source_tool == "detect")
            perception_poses.push_back(world.robot_pose);
    }
    ASSERT_EQ(perception_poses.size(), 4u);

    const auto art = harness::export_coverage(session.entries(), scenario);
    EXPECT_EQ(art.perception_poses, 4u);
    EXPECT_EQ(art.path.size(), 4u); // start plus three motion observations
    const auto& g = art.grid;
    for (std::size_t row = 0; row < g.rows; ++row)
    {
        for (std::size_t col = 0; col < g.cols; ++col)
        {
            const double x = g.bounds.min.x + (col + 0.5) * g.cell_size;
            const double y = g.bounds.min.y + (row + 0.5) * g.cell_size;
            std::uint32_t expected = 0;
            for (const auto& p: perception_poses)
                expected += in_view(p, scenario.fov, x, y);
            ASSERT_EQ(g.at(col, row), expected) << col << "," << row;
        }
    }
    const auto csv = harness::coverage_csv(g);
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), g.rows);
    EXPECT_EQ(harness::coverage_json(art, scenario).at("cols"), g.cols);
}

TEST(CoverageExport, RejectsGroundRobots)
{
    const auto delivery = delivery_world();
    ASSERT_NE(delivery.robot_kind, sim::RobotKind::uav);
    EXPECT_THROW((void)harness::export_coverage({}, delivery), ConfigError);
}
