// SPDX-License-Identifier: Apache-2.0
// Command-line front end: run experiments, score traces, export coverage, emit reports, serve.
#include <leo/gateway.hpp>
#include <leo/harness.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace
{

using namespace leo;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRunFailure = 2;

std::atomic<bool> g_interrupted{false};

std::filesystem::path default_data_dir()
{
    if (const char* env = std::getenv("LEO_DATA_DIR"); env && *env)
        return env;
#ifdef LEO_DEFAULT_DATA_DIR
    if (std::filesystem::is_directory(LEO_DEFAULT_DATA_DIR))
        return LEO_DEFAULT_DATA_DIR;
#endif
    return "data";
}

struct RunArgs
{
    std::string task;
    std::string agent = "leo";
    int reps = 1;
    std::string model;
    std::string out;
    std::string variant = "zero_shot";
    int threads = 0;
};

int cmd_run(const RunArgs& a, const std::filesystem::path& data_dir)
{
    auto kind = agent::agent_kind_from_string(a.agent);
    if (!kind)
        throw harness::ConfigError(fmt::format("unknown agent '{}'", a.agent));
    auto variant = harness::prompt_variant_from_string(a.variant);
    if (!variant)
        throw harness::ConfigError(fmt::format("unknown prompt variant '{}'", a.variant));
    auto task = harness::find_task(a.task, data_dir, *variant);
    auto factory = harness::model_factory_from_spec(a.model);
    auto result = harness::run_experiment(task, *kind, factory, {a.reps, a.out, a.threads});

    int failures = 0;
    for (const auto& r: result.records)
    {
        fmt::print("rep {:>3}  score {:>6.3f}/{}  status {:<20} tokens {:>7}  time {:>8.2f}s\n", r.rep, r.score,
                   r.max_points, r.status, r.token_usage.total(), r.time());
        if (r.status == "harness_error")
        {
            ++failures;
            fmt::print(stderr, "rep {} failed: {}\n", r.rep, r.final_report);
        }
    }
    std::cout << "\n" << harness::emit_report(result.report, harness::ReportFormat::markdown) << std::flush;
    return failures ? kRunFailure : kOk;
}

int cmd_score(const std::string& trace_path, const std::string& rubric_id)
{
    auto rubric = harness::find_rubric(rubric_id);
    harness::Trace trace;
    try
    {
        trace = harness::read_trace(trace_path);
    }
    catch (const std::exception& e)
    {
        throw harness::ConfigError(fmt::format("cannot read trace {}: {}", trace_path, e.what()));
    }
    auto initial = sim::world_from_json(trace.initial_world);
    auto final_world = trace.final_world.is_null() ? initial : sim::world_from_json(trace.final_world);
    auto score = harness::score_run(rubric, initial, trace, final_world);
    json breakdown = json::array();
    for (const auto& [name, ok]: score.milestones)
        breakdown.push_back({{"milestone", name}, {"achieved", ok}});
    json out = {{"rubric", rubric.id},
                {"score", score.score},
                {"max_points", score.max_points},
                {"items", harness::score_room_search(trace.entries)},
                {"breakdown", std::move(breakdown)}};
    std::cout << out.dump(2) << "\n";
    return kOk;
}

int cmd_coverage(const std::string& trace_path, const std::string& scenario_path, const std::string& out_dir)
{
    harness::Trace trace;
    sim::World scenario;
    try
    {
        trace = harness::read_trace(trace_path);
        scenario = sim::load_scenario(scenario_path);
    }
    catch (const std::exception& e)
    {
        throw harness::ConfigError(e.what());
    }
    auto art = harness::export_coverage(trace.entries, scenario);
    harness::write_coverage(out_dir, art, scenario);
    fmt::print("{}x{} cells, {} perception poses, {} waypoints -> {}\n", art.grid.cols, art.grid.rows,
               art.perception_poses, art.path.size(), out_dir);
    return kOk;
}

int cmd_report(const std::string& in_dir, const std::string& format, const std::string& layout)
{
    harness::ReportFormat fmt_kind;
    if (format == "markdown" || format == "md")
        fmt_kind = harness::ReportFormat::markdown;
    else if (format == "csv")
        fmt_kind = harness::ReportFormat::csv;
    else
        throw harness::ConfigError(fmt::format("unknown format '{}'", format));
    harness::ReportLayout lay;
    if (layout == "architecture")
        lay = harness::ReportLayout::architecture;
    else if (layout == "prompt")
        lay = harness::ReportLayout::prompt;
    else
        throw harness::ConfigError(fmt::format("unknown layout '{}'", layout));
    auto rows = harness::aggregate(harness::load_records(in_dir));
    std::cout << harness::emit_report(rows, fmt_kind, lay);
    return kOk;
}

int cmd_serve(gateway::GatewayConfig config)
{
    gateway::GatewayServer server(std::move(config));
    server.start();
    fmt::print("gateway listening on ws://127.0.0.1:{}/ws\n", server.port());
    std::fflush(stdout);
    std::signal(SIGINT, [](int) { g_interrupted = true; });
    std::signal(SIGTERM, [](int) { g_interrupted = true; });
    while (!g_interrupted)
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"LEO: robot agent runs, scoring, coverage, reports and the operator gateway"};
    app.require_subcommand(1);
    std::string data_dir = default_data_dir().string();
    app.add_option("--data", data_dir, "Directory with scenarios/ and scripts/");

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run repetitions of a task with one agent architecture");
    run_cmd->add_option("--task", run.task, "Task id")->required();
    run_cmd->add_option("--agent", run.agent, "leo, das, cge, dllms or tllms");
    run_cmd->add_option("--reps", run.reps, "Repetitions")->check(CLI::PositiveNumber);
    run_cmd->add_option("--model", run.model, "scripted:<path> or http")->required();
    run_cmd->add_option("--out", run.out, "Output directory for records and traces")->required();
    run_cmd->add_option("--variant", run.variant, "zero_shot, one_shot, cot or one_shot_cot");
    run_cmd->add_option("--threads", run.threads, "Parallel repetitions (0: OpenMP default)");

    std::string trace_path, rubric_id;
    auto* score_cmd = app.add_subcommand("score", "Score a trace against a rubric");
    score_cmd->add_option("--trace", trace_path, "Trace file (.jsonl)")->required();
    score_cmd->add_option("--rubric", rubric_id, "Rubric id")->required();

    std::string cov_trace, cov_scenario, cov_out;
    auto* cov_cmd = app.add_subcommand("coverage", "Export the perception coverage grid of a trace");
    cov_cmd->add_option("--trace", cov_trace, "Trace file (.jsonl)")->required();
    cov_cmd->add_option("--scenario", cov_scenario, "Scenario file")->required();
    cov_cmd->add_option("--out", cov_out, "Output directory")->required();

    std::string report_in, report_format = "markdown", report_layout = "architecture";
    auto* report_cmd = app.add_subcommand("report", "Aggregate run records into a table");
    report_cmd->add_option("--in", report_in, "Directory with records*.jsonl")->required();
    report_cmd->add_option("--format", report_format, "markdown or csv");
    report_cmd->add_option("--layout", report_layout, "architecture or prompt");

    gateway::GatewayConfig serve;
    auto* serve_cmd = app.add_subcommand("serve", "Start the WebSocket gateway");
    serve_cmd->add_option("--port", serve.port, "TCP port (0 picks one)");
    serve_cmd->add_option("--address", serve.address, "Listen address");
    serve_cmd->add_option("--snapshot-hz", serve.runtime.snapshot_hz, "World snapshot rate per session");
    serve_cmd->add_option("--max-queued-frames", serve.max_queued_frames, "Per-client outgoing frame cap");
    serve_cmd->add_option("--static", serve.static_dir, "Directory served at /");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try
    {
        if (*run_cmd)
            return cmd_run(run, data_dir);
        if (*score_cmd)
            return cmd_score(trace_path, rubric_id);
        if (*cov_cmd)
            return cmd_coverage(cov_trace, cov_scenario, cov_out);
        if (*report_cmd)
            return cmd_report(report_in, report_format, report_layout);
        if (*serve_cmd)
        {
            serve.runtime.data_dir = data_dir;
            return cmd_serve(std::move(serve));
        }
    }
    catch (const harness::ConfigError& e)
    {
        fmt::print(stderr, "error: {}\n", e.what());
        return kConfigError;
    }
    catch (const std::exception& e)
    {
        fmt::print(stderr, "error: {}\n", e.what());
        return kRunFailure;
    }
    return kOk;
}
