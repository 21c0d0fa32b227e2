#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "taskgroup/diff/graph.hpp"
#include "taskgroup/diff/tensor.hpp"
#include "taskgroup/rng.hpp"

namespace taskgroup {

using TaskId = std::size_t;
using ModelId = std::size_t;

/// Learnable task→model routing scores, one row per task.
class AssignmentLogits {
public:
    /// t×m matrix with every entry 1.0.
    AssignmentLogits(std::size_t tasks, std::size_t models);
    explicit AssignmentLogits(diff::Tensor matrix);

    std::size_t tasks() const noexcept { return matrix_.rows(); }
    std::size_t models() const noexcept { return matrix_.cols(); }
    diff::Tensor& matrix() noexcept { return matrix_; }
    const diff::Tensor& matrix() const noexcept { return matrix_; }

    /// Throws NumericError when any entry is NaN or infinite.
    void check_finite() const;

private:
    diff::Tensor matrix_;
};

enum class ProbRole { WordTask, TaskModel, WordModel };

const char* to_string(ProbRole role);

/// Row-stochastic matrix living on a compute graph.
struct ProbMatrix {
    ProbRole role;
    diff::Var probs;
};

/// True when every entry is in [0, 1] and each row sums to 1 within `tol`.
bool is_row_stochastic(const diff::Tensor& m, double tol = 1e-6);

/// Total single-valued map from tasks to models. Not necessarily surjective.
class Grouping {
public:
    Grouping() = default;
    explicit Grouping(std::vector<ModelId> model_of_task) : model_of_(std::move(model_of_task)) {}

    std::size_t tasks() const noexcept { return model_of_.size(); }
    ModelId model_of(TaskId t) const { return model_of_.at(t); }
    const std::vector<ModelId>& assignment() const noexcept { return model_of_; }

    /// Tasks handled by each model that received at least one task.
    std::map<ModelId, std::set<TaskId>> groups() const;
    std::vector<TaskId> tasks_of(ModelId m) const;

    /// "0:1,1:1,2:0" (task:model pairs).
    std::string to_string() const;
    static Grouping parse(const std::string& text);

    friend bool operator==(const Grouping&, const Grouping&) = default;

private:
    std::vector<ModelId> model_of_;
};

/// i.i.d. standard Gumbel samples g = -log(-log(u)), u clamped to [1e-12, 1-1e-12].
diff::Tensor sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng);

/// Row-wise Gumbel-Softmax over task→model logits.
/// Soft mode: softmax((logits + g) / tau) per row, differentiable w.r.t. logits.
/// Hard mode: one-hot argmax of the perturbed row, or of the raw logits when
/// `rng` is null. Throws ContractError when tau <= 0.
ProbMatrix gumbel_softmax_rows(diff::Var logits, double tau, Rng* rng, bool hard);

/// P_WM = P_WT · P_TM. Throws ShapeError when the inner dimensions differ.
ProbMatrix word_model_probs(const ProbMatrix& p_wt, const ProbMatrix& p_tm);

/// Σ_j max(mu_j - Σ_i p(M_j|T_i), 0); subgradient 0 at the kink.
diff::Var grouping_loss(const ProbMatrix& p_tm, std::span<const double> mu);

/// Per-task argmax over models; ties go to the lowest model index.
Grouping hard_assignment(const diff::Tensor& logits);
inline Grouping hard_assignment(const AssignmentLogits& logits) {
    return hard_assignment(logits.matrix());
}

}  // namespace taskgroup
