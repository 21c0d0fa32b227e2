#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskgroup/grouping.hpp"
#include "taskgroup/heads.hpp"
#include "taskgroup/synth.hpp"

namespace taskgroup {

enum class Stage { Pretrain, Group, Finetune };

const char* to_string(Stage stage);
Stage stage_from_string(const std::string& name);

struct TrainConfig {
    Stage stage = Stage::Group;
    std::size_t iterations = 3000;
    std::size_t batch_size = 32;
    double epsilon = 0.2;
    double tau = 1.0;
    double lambda_group = 1.0;
    /// Weight of the task-classifier loss in the stage-2 objective (0 = off).
    double lambda_task = 0.0;
    /// Per-model minimum expected task load; empty means 1.0 for every model.
    std::vector<double> mu;
    /// One entry per recognition head; the pretrain stage uses the first.
    std::vector<HeadShape> head_configs{HeadShape{}, HeadShape{}};
    double lr = 1e-3;
    /// Adam step size for the assignment logits.
    double grouping_lr = 1e-2;
    std::uint64_t seed = 0;
    std::size_t eval_every = 10;
    /// Task sampling ratios; empty means the world's ratios.
    std::vector<double> ratios;
    /// Validation words per task used for accuracy reports.
    std::size_t validation_words = 200;

    std::size_t models() const noexcept { return head_configs.size(); }
    std::vector<double> mu_or_default() const;
    /// Throws ConfigError on any violated invariant.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

/// Noise-free hard assignments sampled during stage 2.
class AssignmentTrace {
public:
    struct Entry {
        std::size_t iteration;
        Grouping grouping;
    };

    /// Throws ContractError unless `iteration` exceeds the last recorded one.
    void record(std::size_t iteration, Grouping grouping);

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }
    const Entry& back() const { return entries_.back(); }

    /// "iteration,assignment" CSV with quoted assignment strings.
    std::string to_csv() const;
    static AssignmentTrace from_csv(const std::string& text);

private:
    std::vector<Entry> entries_;
};

/// Consecutive entry pairs with differing groupings whose later entry lies
/// at or before `horizon`.
std::size_t count_changes(const AssignmentTrace& trace, std::size_t horizon);

/// True iff the trace spans at least `window` iterations and no grouping
/// change happens inside the trailing `window` iterations.
bool detect_equilibrium(const AssignmentTrace& trace, std::size_t window);

/// Per-iteration diagnostics of the stage-2 objective.
struct IterationLog {
    std::size_t iteration = 0;
    double total = 0.0;
    double integrated = 0.0;   // with epsilon
    double integrated0 = 0.0;  // epsilon = 0, recomputed independently
    double loss_sum = 0.0;     // Σ_k Σ_j L_seq(j)(W_k)
    double group_loss = 0.0;
    double task_loss = 0.0;
    double min_weight = 0.0;   // min over (word, head) of p(M_j|W_k) + epsilon
    double max_weight = 0.0;
};

struct PretrainResult {
    RecognitionHead head;
    std::vector<double> losses;  // mean batch loss per iteration, before the update
};

struct GroupingResult {
    AssignmentLogits logits;
    std::vector<RecognitionHead> heads;
    AssignmentTrace trace;
    std::vector<IterationLog> log;  // one entry per eval_every iterations

    Grouping final_grouping() const { return hard_assignment(logits); }
};

struct FinetuneResult {
    /// Pruned heads that received at least one task, in model order.
    std::vector<RecognitionHead> heads;
    Grouping grouping;
    std::vector<double> accuracy_before;  // per task, assigned head before finetuning
    std::vector<double> accuracy_after;
};

/// Validation words per task, drawn from a stream that depends only on the
/// world seed and `per_task`.
std::vector<std::vector<WordInstance>> validation_set(const SynthWorld& world, std::size_t per_task);

/// Universal-charset head trained on all tasks with the plain mean sequence
/// loss. Throws NumericError if the loss diverges.
PretrainResult pretrain_universal(const TrainConfig& config, const SynthWorld& world);

/// m copies of `pretrained` with ids 0..m-1.
std::vector<RecognitionHead> replicate_head(const RecognitionHead& pretrained, std::size_t m);
/// Freshly initialized universal heads, one per entry of config.head_configs.
std::vector<RecognitionHead> fresh_heads(const TrainConfig& config, const SynthWorld& world);

/// Joint training of the heads and the assignment logits under
/// L_integrated + lambda_group · L_group (+ lambda_task · L_task).
GroupingResult train_grouping(const TrainConfig& config, const SynthWorld& world,
                              std::vector<RecognitionHead> heads);

/// Stage 2 with a frozen one-hot task→model map and epsilon = 0: each head
/// trains only on the words of its assigned tasks.
std::vector<RecognitionHead> train_fixed_grouping(const TrainConfig& config, const SynthWorld& world,
                                                  std::vector<RecognitionHead> heads,
                                                  const Grouping& grouping);

/// Prunes every assigned head to the union of its tasks' charsets and trains
/// it only on those tasks. Heads without tasks are dropped.
FinetuneResult finetune_heads(const TrainConfig& config, const Grouping& grouping,
                              std::span<const RecognitionHead> heads, const SynthWorld& world);

/// Per-task accuracy of the head each task is assigned to. With `pruned`,
/// every head is first restricted to the union of its tasks' charsets.
std::vector<double> grouping_accuracy(std::span<const RecognitionHead> heads, const Grouping& grouping,
                                      const SynthWorld& world,
                                      const std::vector<std::vector<WordInstance>>& validation,
                                      bool pruned);

/// Sorted union of the charsets of `tasks`.
std::vector<int> group_charset(const SynthWorld& world, std::span<const TaskId> tasks);

// Checkpoint layout: config.json, logits.json, trace.csv,
// heads/<id>.manifest.json + heads/<id>.params.bin.
void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& config,
                     const AssignmentLogits* logits, const AssignmentTrace* trace,
                     std::span<const RecognitionHead> heads);
std::string logits_to_json(const AssignmentLogits& logits);
AssignmentLogits logits_from_json(const std::string& text);
std::vector<RecognitionHead> load_heads(const std::filesystem::path& dir);

}  // namespace taskgroup
