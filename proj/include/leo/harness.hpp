// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/agent.hpp>
#include <leo/coverage.hpp>
#include <leo/llm.hpp>
#include <leo/simworld.hpp>
#include <leo/toolset.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace leo::harness
{

/// Bad task ids, variants, rubrics or files. The CLI maps it to exit code 1.
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// --- tasks ----------------------------------------------------------------------

enum class PromptVariant
{
    zero_shot,
    one_shot,
    cot,
    one_shot_cot,
};

[[nodiscard]] const char* to_string(PromptVariant v) noexcept;
[[nodiscard]] std::optional<PromptVariant> prompt_variant_from_string(std::string_view text) noexcept;

inline constexpr const char* kCotGuidance =
    "Think step by step about coverage, enumerate unvisited regions before moving.";

struct TaskSpec
{
    std::string id;
    std::filesystem::path scenario_path;
    std::string task_prompt;
    PromptVariant prompt_variant = PromptVariant::zero_shot;
    std::string rubric_id;
    agent::SessionConfig limits;
    /// Worked example transcript used by the one-shot variants.
    std::filesystem::path example_path;
    /// Registers the summarize tool (handover only).
    bool with_summarizer = false;
    bool with_talk = false;
    /// Perception tool: "detect" or "vlm_describe".
    std::string perception = "detect";
};

/// Task ids: delivery, searching, handover, room_search, city_search, object_search.
[[nodiscard]] std::vector<std::string> task_ids();
/// Throws ConfigError for an unknown id.
[[nodiscard]] TaskSpec find_task(std::string_view id, const std::filesystem::path& data_dir,
                                 PromptVariant variant = PromptVariant::zero_shot);

/// Guidance text for a variant: the example and/or the reasoning block, empty for zero_shot.
[[nodiscard]] std::string assemble_guidance(PromptVariant variant, const std::filesystem::path& example_path);

/// Session config for one run of `task` by `kind`.
[[nodiscard]] agent::SessionConfig session_config(const TaskSpec& task, agent::AgentKind kind);

/// The tools a task exposes, bound to the robot kind of `world`. `aux` backs summarize.
[[nodiscard]] tools::ToolRegistry build_registry(const TaskSpec& task, const sim::World& world, llm::ChatModel* aux);

// --- traces -----------------------------------------------------------------------

/// A persisted session: the scoring and replay input.
struct Trace
{
    std::string task_id;
    std::string agent;
    json initial_world;
    History entries;
    std::string status;
    std::string final_report;
    TokenUsage token_usage;
    std::size_t model_calls = 0;
    double sim_time = 0.0;
    double model_latency = 0.0;
    json final_world;
};

[[nodiscard]] Trace make_trace(std::string task_id, agent::AgentKind kind, const sim::World& initial,
                               const agent::SessionResult& result, const sim::World& final_world);

/// JSON lines: a session_start header, one HistoryEntry per line, a session_end footer.
/// No wall-clock values, so identical runs give identical files.
[[nodiscard]] std::string serialize_trace(const Trace& trace);
void write_trace(const std::filesystem::path& path, const Trace& trace);
[[nodiscard]] Trace parse_trace(std::string_view text);
[[nodiscard]] Trace read_trace(const std::filesystem::path& path);

// --- scoring ------------------------------------------------------------------------

struct Milestone
{
    std::string name;
    int points = 0;
    /// Predicate id; see score_run for the catalogue.
    std::string predicate;
    json params = json::object();
};

struct Rubric
{
    std::string id;
    std::vector<Milestone> milestones;
    int max_points = 0;

    /// Throws ConfigError unless points are positive and sum to max_points.
    void validate() const;
};

/// Rubric ids: delivery, searching, handover, room_search, city_search, object_search.
[[nodiscard]] Rubric find_rubric(std::string_view id);

struct ScoreBreakdown
{
    double score = 0.0;
    int max_points = 0;
    std::vector<std::pair<std::string, bool>> milestones;
};

/// Pure function of its inputs. Throws ConfigError for an unknown predicate id.
///
/// Predicates: entity_near_entity{entity,target,radius}, robot_near_origin{radius},
/// held_nearest{class}, returned_holding_nearest{class,radius}, status_completed{},
/// approached{entity,radius}, moved_class_near{class,target,radius}, report_mentions{keywords},
/// detected{id}, vlm_found{id}, robot_above{entity,radius}.
[[nodiscard]] ScoreBreakdown score_run(const Rubric& rubric, const sim::World& initial, const Trace& trace,
                                       const sim::World& final_world);

/// Id of the entity of `class_label` closest to `from` horizontally; ties go to the smallest id.
/// Throws std::invalid_argument when the class is absent.
[[nodiscard]] std::string nearest_target(const sim::World& world, std::string_view class_label, double from_x,
                                         double from_y);

/// Distinct entity ids reported by detect observations.
[[nodiscard]] int score_room_search(const History& trace);

// --- experiments ----------------------------------------------------------------------

struct RunRecord
{
    std::string task_id;
    std::string agent;
    std::string variant;
    int rep = 0;
    double score = 0.0;
    int max_points = 0;
    std::vector<std::pair<std::string, bool>> breakdown;
    TokenUsage token_usage;
    std::size_t model_calls = 0;
    int steps = 0;
    double sim_time = 0.0;
    double model_latency = 0.0;
    double wall_time = 0.0;
    bool success = false;
    std::string status;
    std::string final_report;
    /// Distinct detected items (room search).
    int items = 0;

    /// The reported "Time (s)": simulated time plus backend latency.
    [[nodiscard]] double time() const noexcept { return sim_time + model_latency; }
};

/// `include_timing` adds the wall-clock sub-object, which is excluded from record identity.
[[nodiscard]] json to_json(const RunRecord& record, bool include_timing = true);
[[nodiscard]] RunRecord run_record_from_json(const json& j);

struct ModelSet
{
    std::unique_ptr<llm::ChatModel> agent;
    /// Backs auxiliary tools such as summarize.
    std::unique_ptr<llm::ChatModel> aux;
};

/// Builds fresh models for repetition `rep`.
using ModelFactory = std::function<ModelSet(int rep)>;

/// "scripted:<path>" or "http". Throws ConfigError.
[[nodiscard]] ModelFactory model_factory_from_spec(std::string_view spec);

struct AggregateRow
{
    std::string task_id;
    std::string agent;
    std::string variant;
    int runs = 0;
    int successes = 0;
    int max_points = 0;
    double mean_score = 0.0;
    double mean_tokens = 0.0;
    double mean_time = 0.0;
    std::optional<double> mean_success_time;
    double perfect_rate = 0.0;
    double mean_items = 0.0;
    /// Mean time per distinct item found; undefined when nothing was found.
    std::optional<double> time_per_item;
};

/// Sequential fold in first-seen (task, agent, variant) order.
[[nodiscard]] std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records);

struct ExperimentOptions
{
    int repetitions = 1;
    /// Where records.jsonl and traces/ go; empty keeps everything in memory.
    std::filesystem::path out_dir;
    /// Parallel repetitions; 0 uses the OpenMP default.
    int threads = 0;
};

struct ExperimentResult
{
    std::vector<RunRecord> records;
    std::vector<Trace> traces;
    std::vector<AggregateRow> report;
};

/// Every repetition gets a fresh world, session and models. Failed runs are scored, never dropped.
/// Throws ConfigError when the scenario cannot be loaded, before any run starts.
ExperimentResult run_experiment(const TaskSpec& task, agent::AgentKind kind, const ModelFactory& models,
                                const ExperimentOptions& options);

[[nodiscard]] std::string trace_file_name(const RunRecord& record);

/// Reads every records*.jsonl under `dir`.
[[nodiscard]] std::vector<RunRecord> load_records(const std::filesystem::path& dir);

// --- reports ----------------------------------------------------------------------

enum class ReportFormat
{
    markdown,
    csv,
};

enum class ReportLayout
{
    /// One row per (task, agent): the architecture comparison table.
    architecture,
    /// One row per prompt variant, room and city column groups side by side.
    prompt,
};

inline constexpr const char* kUndefined = "--";

[[nodiscard]] std::string emit_report(const std::vector<AggregateRow>& rows, ReportFormat format,
                                      ReportLayout layout = ReportLayout::architecture);
/// Throws std::runtime_error when the file cannot be written.
void write_report(const std::filesystem::path& path, const std::vector<AggregateRow>& rows, ReportFormat format,
                  ReportLayout layout = ReportLayout::architecture);

// --- coverage export -----------------------------------------------------------------

struct CoverageArtifact
{
    sim::CoverageGrid grid;
    /// Start pose plus one waypoint per move/rotate observation.
    std::vector<sim::Pose> path;
    std::size_t perception_poses = 0;
};

/// Replays a UAV trace: every move/rotate observation sets the pose, every perception
/// call is folded into the grid. Throws ConfigError for a non-UAV scenario.
[[nodiscard]] CoverageArtifact export_coverage(const History& trace, const sim::World& scenario);

/// Row 0 (lowest y) first, comma separated counts.
[[nodiscard]] std::string coverage_csv(const sim::CoverageGrid& grid);
[[nodiscard]] json coverage_json(const CoverageArtifact& artifact, const sim::World& scenario);
void write_coverage(const std::filesystem::path& dir, const CoverageArtifact& artifact, const sim::World& scenario);

} // namespace leo::harness
