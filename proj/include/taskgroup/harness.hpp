#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskgroup/grouping.hpp"
#include "taskgroup/synth.hpp"
#include "taskgroup/trainer.hpp"

namespace taskgroup {

/// Stage lengths and per-stage epsilon for the three-stage pipeline.
struct StagePlan {
    std::size_t pretrain_iterations = 2000;
    std::size_t group_iterations = 3000;
    std::size_t finetune_iterations = 1000;
    double group_epsilon = 0.2;
};

struct AblationPlan {
    std::vector<double> epsilons{0.0, 0.1, 0.2, 0.3, 0.4};
    std::size_t heads = 2;
    /// Iterations of stage 2 over which assignment changes are counted.
    std::size_t horizon = 450;
};

struct ExperimentSpec {
    WorldSpec world = w3_world_spec();
    std::vector<std::size_t> head_counts{2};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    /// Template for every stage; stage, iterations, epsilon, seed and head
    /// count are filled in per run. Its first head config is the default shape.
    TrainConfig train;
    StagePlan stages;
    AblationPlan ablation;
    /// Per-head (embed, hidden) for the capacity experiment.
    std::vector<HeadShape> capacity_heads;
    /// Head count for the brute-force oracle.
    std::size_t oracle_heads = 2;
    std::filesystem::path output_dir = "out";
    std::size_t workers = 1;

    /// Throws ConfigError on any violated invariant.
    void validate() const;
    /// Config for one stage of one run.
    TrainConfig stage_config(Stage stage, std::size_t heads, std::uint64_t seed) const;
};

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

/// One task set that ended up on a single head, aggregated over runs.
struct OccurrenceRow {
    std::vector<TaskId> group;  // sorted
    std::size_t occurrences = 0;
    std::size_t heads_at_first_occurrence = 0;

    friend bool operator==(const OccurrenceRow&, const OccurrenceRow&) = default;
};

struct RunGrouping {
    std::size_t heads = 0;
    Grouping grouping;
};

/// Occurrence counts ordered by occurrences (descending), then by the head
/// count at first occurrence (ascending), then by task ids.
class OccurrenceTable {
public:
    OccurrenceTable() = default;
    explicit OccurrenceTable(std::vector<std::string> task_names) : names_(std::move(task_names)) {}

    static OccurrenceTable aggregate(std::span<const RunGrouping> runs, std::vector<std::string> task_names);

    const std::vector<OccurrenceRow>& rows() const noexcept { return rows_; }
    const std::vector<std::string>& task_names() const noexcept { return names_; }
    /// "+"-joined sorted task names, e.g. "T1+T2".
    std::string group_name(const std::vector<TaskId>& group) const;
    const OccurrenceRow* find(const std::vector<TaskId>& group) const;

    std::string to_csv() const;
    static OccurrenceTable from_csv(const std::string& text, std::vector<std::string> task_names);
    nlohmann::json to_json() const;

    friend bool operator==(const OccurrenceTable&, const OccurrenceTable&) = default;

private:
    std::vector<std::string> names_;
    std::vector<OccurrenceRow> rows_;
};

/// Outcome of one full three-stage pipeline run.
struct RunOutcome {
    std::size_t heads = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    Grouping grouping;
    bool equilibrium = false;
    std::size_t changes = 0;
    double final_group_loss = 0.0;
    std::vector<double> accuracy_before;
    std::vector<double> accuracy_after;
    std::size_t final_heads = 0;
};

struct SweepResult {
    OccurrenceTable table;
    std::vector<RunOutcome> runs;
    std::size_t failed() const;
};

/// Runs stages 1-3 for every (head count, seed) pair, writes per-run
/// checkpoints under <out>/runs/, and aggregates final groupings into
/// occurrence.csv / occurrence.json. Failed runs are kept as rows of runs.csv.
SweepResult run_sweep(const ExperimentSpec& spec);

/// Stages 1-2 only, for one (heads, seed); used by the sweep and acceptance.
GroupingResult run_grouping_stage(const ExperimentSpec& spec, const SynthWorld& world, std::size_t heads,
                                  std::uint64_t seed, const RecognitionHead& pretrained);

struct AblationRow {
    double epsilon = 0.0;
    double mean_changes = 0.0;
    std::vector<std::size_t> changes;  // per seed, in seed order
};

/// Stage-2 runs per (epsilon, seed), counting assignment changes within the
/// configured horizon. Writes ablation.csv. Needs >= 2 epsilons and >= 3 seeds.
std::vector<AblationRow> run_epsilon_ablation(const ExperimentSpec& spec);

struct CapacityRow {
    std::uint64_t seed = 0;
    ModelId head = 0;
    HeadShape shape;
    std::size_t parameters = 0;
    std::vector<TaskId> tasks;
    std::size_t charset_size = 0;       // union of assigned charsets (0 if none)
    std::size_t pruned_parameters = 0;  // 0 if no task assigned
};

struct CapacityResult {
    std::vector<CapacityRow> rows;
    /// Seeds where the head with the most parameters took the task with the
    /// largest charset.
    std::size_t largest_matches = 0;
    std::size_t seeds = 0;
};

/// Heads with distinct (embed, hidden), one per task, trained from scratch
/// through stage 2. Writes capacity.csv.
CapacityResult run_capacity_experiment(const ExperimentSpec& spec);

struct OracleEntry {
    Grouping grouping;
    std::vector<double> task_accuracy;
    double mean_accuracy = 0.0;
};

/// Largest m^t the oracle accepts.
inline constexpr std::size_t kOracleLimit = 64;

/// Trains every task→model map with a frozen one-hot assignment and epsilon 0
/// for the stage-2 budget, starting from `pretrained`, and ranks the maps by
/// unweighted mean per-task validation accuracy (heads pruned to their
/// group). Throws ConfigError when m^t > kOracleLimit.
std::vector<OracleEntry> brute_force_oracle(const SynthWorld& world, std::size_t m, const TrainConfig& config,
                                            const RecognitionHead& pretrained, std::size_t workers = 1);

/// The oracle for spec.oracle_heads using the first seed; writes oracle.csv.
std::vector<OracleEntry> run_oracle(const ExperimentSpec& spec);

std::string oracle_to_csv(const std::vector<OracleEntry>& entries, const std::vector<std::string>& names);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);
std::string capacity_to_csv(const CapacityResult& result, const std::vector<std::string>& names);

/// Grouping as "T1+T2 | T3" using task names, models in ascending order.
std::string describe_grouping(const Grouping& g, const std::vector<std::string>& names);

}  // namespace taskgroup
