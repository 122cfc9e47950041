// SPDX-License-Identifier: Apache-2.0
#include <leo/harness.hpp>

#include <fmt/format.h>

#include <omp.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

namespace leo::harness
{

json to_json(const RunRecord& r, bool include_timing)
{
    json breakdown = json::array();
    for (const auto& [name, ok]: r.breakdown)
        breakdown.push_back({{"milestone", name}, {"achieved", ok}});
    json j = {{"task", r.task_id},
              {"agent", r.agent},
              {"variant", r.variant},
              {"rep", r.rep},
              {"score", r.score},
              {"max_points", r.max_points},
              {"breakdown", std::move(breakdown)},
              {"token_usage", leo::to_json(r.token_usage)},
              {"model_calls", r.model_calls},
              {"steps", r.steps},
              {"sim_time", r.sim_time},
              {"model_latency", r.model_latency},
              {"time", r.time()},
              {"success", r.success},
              {"status", r.status},
              {"final_report", r.final_report},
              {"items", r.items}};
    if (include_timing)
        j["timing"] = {{"wall_time", r.wall_time}};
    return j;
}

RunRecord run_record_from_json(const json& j)
{
    RunRecord r;
    r.task_id = j.at("task").get<std::string>();
    r.agent = j.at("agent").get<std::string>();
    r.variant = j.value("variant", "zero_shot");
    r.rep = j.value("rep", 0);
    r.score = j.at("score").get<double>();
    r.max_points = j.at("max_points").get<int>();
    for (const auto& b: j.value("breakdown", json::array()))
        r.breakdown.emplace_back(b.at("milestone").get<std::string>(), b.at("achieved").get<bool>());
    r.token_usage = usage_from_json(j.at("token_usage"));
    r.model_calls = j.value("model_calls", std::size_t{0});
    r.steps = j.value("steps", 0);
    r.sim_time = j.value("sim_time", 0.0);
    r.model_latency = j.value("model_latency", 0.0);
    r.success = j.at("success").get<bool>();
    r.status = j.value("status", "");
    r.final_report = j.value("final_report", "");
    r.items = j.value("items", 0);
    if (auto t = j.find("timing"); t != j.end())
        r.wall_time = t->value("wall_time", 0.0);
    return r;
}

ModelFactory model_factory_from_spec(std::string_view spec)
{
    constexpr std::string_view scripted = "scripted:";
    if (spec.substr(0, scripted.size()) == scripted)
    {
        std::filesystem::path path(std::string(spec.substr(scripted.size())));
        std::vector<std::string> replies;
        try
        {
            replies = llm::ScriptedModel::load_script(path);
        }
        catch (const std::exception& e)
        {
            throw ConfigError(fmt::format("cannot load script {}: {}", path.string(), e.what()));
        }
        return [replies](int) {
            return ModelSet{std::make_unique<llm::ScriptedModel>(replies), std::make_unique<llm::EchoModel>()};
        };
    }
    if (spec == "http")
    {
        auto config = llm::HttpConfig::from_env();
        return [config](int) {
            return ModelSet{std::make_unique<llm::HttpChatModel>(config), std::make_unique<llm::HttpChatModel>(config)};
        };
    }
    throw ConfigError(fmt::format("unknown model '{}'; use scripted:<path> or http", spec));
}

std::string trace_file_name(const RunRecord& record)
{
    return fmt::format("{}_{}_{}_rep{:03d}.jsonl", record.task_id, record.agent, record.variant, record.rep);
}

ExperimentResult run_experiment(const TaskSpec& task, agent::AgentKind kind, const ModelFactory& models,
                                const ExperimentOptions& options)
{
    if (options.repetitions < 1)
        throw ConfigError("repetitions must be at least 1");

    sim::World scenario;
    try
    {
        scenario = sim::load_scenario(task.scenario_path);
    }
    catch (const std::exception& e)
    {
        throw ConfigError(fmt::format("cannot load scenario for task '{}': {}", task.id, e.what()));
    }
    const auto rubric = find_rubric(task.rubric_id);
    const auto config = session_config(task, kind);

    const auto n = options.repetitions;
    ExperimentResult result;
    result.records.resize(static_cast<std::size_t>(n));
    result.traces.resize(static_cast<std::size_t>(n));
    std::vector<std::string> failures(static_cast<std::size_t>(n));

    const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int rep = 0; rep < n; ++rep)
    {
        try
        {
            auto set = models(rep);
            sim::World world = scenario;
            auto registry = build_registry(task, world, set.aux.get());
            auto session_result = agent::run_session(task.task_prompt, registry, *set.agent, world, config);
            auto trace = make_trace(task.id, kind, scenario, session_result, world);
            auto score = score_run(rubric, scenario, trace, world);

            RunRecord r;
            r.task_id = task.id;
            r.agent = agent::to_string(kind);
            r.variant = to_string(task.prompt_variant);
            r.rep = rep;
            r.score = score.score;
            r.max_points = score.max_points;
            r.breakdown = std::move(score.milestones);
            r.token_usage = session_result.token_usage;
            r.model_calls = session_result.model_calls;
            r.steps = static_cast<int>(std::count_if(session_result.history.begin(), session_result.history.end(),
                                                     [](const HistoryEntry& e) { return e.kind == EntryKind::agent_step; }));
            r.sim_time = session_result.sim_time;
            r.model_latency = session_result.model_latency;
            r.wall_time = session_result.wall_time;
            r.success = score.score >= score.max_points;
            r.status = agent::to_string(session_result.status);
            r.final_report = session_result.final_report;
            r.items = score_room_search(session_result.history);

            result.records[static_cast<std::size_t>(rep)] = std::move(r);
            result.traces[static_cast<std::size_t>(rep)] = std::move(trace);
        }
        catch (const std::exception& e)
        {
            failures[static_cast<std::size_t>(rep)] = e.what();
        }
    }

    for (int rep = 0; rep < n; ++rep)
    {
        const auto& why = failures[static_cast<std::size_t>(rep)];
        if (why.empty())
            continue;
        // A run that could not even start still counts, with zero score.
        RunRecord r;
        r.task_id = task.id;
        r.agent = agent::to_string(kind);
        r.variant = to_string(task.prompt_variant);
        r.rep = rep;
        r.max_points = rubric.max_points;
        r.status = "harness_error";
        r.final_report = why;
        result.records[static_cast<std::size_t>(rep)] = std::move(r);
    }

    if (!options.out_dir.empty())
    {
        std::filesystem::create_directories(options.out_dir / "traces");
        auto records_path = options.out_dir / fmt::format("records_{}_{}_{}.jsonl", task.id, agent::to_string(kind),
                                                          to_string(task.prompt_variant));
        std::ofstream out(records_path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + records_path.string());
        for (int rep = 0; rep < n; ++rep)
        {
            const auto& r = result.records[static_cast<std::size_t>(rep)];
            out << to_json(r).dump() << "\n";
            if (failures[static_cast<std::size_t>(rep)].empty())
                write_trace(options.out_dir / "traces" / trace_file_name(r), result.traces[static_cast<std::size_t>(rep)]);
        }
    }

    result.report = aggregate(result.records);
    return result;
}

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records)
{
    std::vector<AggregateRow> rows;
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
    struct Sums
    {
        double score = 0, tokens = 0, time = 0, success_time = 0, items = 0;
    };
    std::vector<Sums> sums;

    for (const auto& r: records)
    {
        auto key = std::make_tuple(r.task_id, r.agent, r.variant);
        auto [it, fresh] = index.try_emplace(key, rows.size());
        if (fresh)
        {
            AggregateRow row;
            row.task_id = r.task_id;
            row.agent = r.agent;
            row.variant = r.variant;
            row.max_points = r.max_points;
            rows.push_back(row);
            sums.emplace_back();
        }
        auto& row = rows[it->second];
        auto& s = sums[it->second];
        ++row.runs;
        s.score += r.score;
        s.tokens += static_cast<double>(r.token_usage.total());
        s.time += r.time();
        s.items += r.items;
        if (r.success)
        {
            ++row.successes;
            s.success_time += r.time();
        }
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
        auto& row = rows[i];
        const auto& s = sums[i];
        const double n = row.runs;
        row.mean_score = s.score / n;
        row.mean_tokens = s.tokens / n;
        row.mean_time = s.time / n;
        row.mean_items = s.items / n;
        if (row.successes > 0)
            row.mean_success_time = s.success_time / row.successes;
        row.perfect_rate = 100.0 * row.successes / n;
        if (s.items > 0)
            row.time_per_item = s.time / s.items;
    }
    return rows;
}

std::vector<RunRecord> load_records(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir))
        throw ConfigError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry: std::filesystem::directory_iterator(dir))
    {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("records", 0) == 0 && entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw ConfigError("no records*.jsonl files in " + dir.string());

    std::vector<RunRecord> out;
    for (const auto& path: files)
    {
        std::ifstream in(path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line))
        {
            ++line_no;
            if (line.empty())
                continue;
            auto j = json::parse(line, nullptr, false);
            if (j.is_discarded())
                throw ConfigError(fmt::format("{}:{}: not JSON", path.string(), line_no));
            try
            {
                out.push_back(run_record_from_json(j));
            }
            catch (const std::exception& e)
            {
                throw ConfigError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
            }
        }
    }
    return out;
}

} // namespace leo::harness
