#pragma once

#include <span>
#include <vector>

#include "taskgroup/diff/graph.hpp"
#include "taskgroup/diff/optimizer.hpp"
#include "taskgroup/grouping.hpp"
#include "taskgroup/heads.hpp"
#include "taskgroup/rng.hpp"

namespace taskgroup {

/// Symbols supported by one task.
struct CharsetSpec {
    TaskId task = 0;
    std::vector<int> symbols;

    /// Throws ContractError when empty or when a symbol repeats.
    void validate() const;
    bool contains(int code) const;
};

/// Sorted union of every task charset.
std::vector<int> universal_charset(std::span<const CharsetSpec> charsets);

/// One-hot rows from ground-truth task ids. Words without an id fall back to
/// word_task_from_coverage. Throws ContractError when an id is >= t.
diff::Tensor word_task_from_ground_truth(std::span<const WordInstance> words,
                                         std::span<const CharsetSpec> charsets);

/// Raw score for task i is the fraction of a word's labels found in L_i;
/// each row is normalized to sum to 1, or uniform when every score is 0.
diff::Tensor word_task_from_coverage(std::span<const WordInstance> words,
                                     std::span<const CharsetSpec> charsets);

/// Wraps a word-task matrix as a constant ProbMatrix on `g`.
ProbMatrix as_word_task(diff::Graph& g, diff::Tensor p_wt);

/// Two-layer perceptron over the mean feature row of each word.
class TaskClassifier {
public:
    TaskClassifier(std::size_t feature_dim, std::size_t hidden, std::size_t tasks, Rng& rng);

    std::size_t feature_dim() const noexcept { return w1_.rows(); }
    std::size_t tasks() const noexcept { return w2_.cols(); }

    /// w × t logits.
    diff::Var classify(diff::Graph& g, std::span<const WordInstance> words) const;
    /// Row-softmax of classify(), i.e. P_WT at inference time.
    ProbMatrix word_task_probs(diff::Graph& g, std::span<const WordInstance> words) const;

    std::vector<diff::NamedParam> parameters();

private:
    diff::Tensor w1_, b1_, w2_, b2_;
};

/// Mean over the batch of -log softmax(logits)[gt]. Throws ContractError
/// when a ground-truth task is out of range.
diff::Var task_loss(diff::Var logits, std::span<const TaskId> gt_tasks);

}  // namespace taskgroup
