#include "taskgroup/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "taskgroup/errors.hpp"

namespace taskgroup {

using diff::Tensor;
using diff::Var;
namespace ops = diff::ops;

AssignmentLogits::AssignmentLogits(std::size_t tasks, std::size_t models)
    : matrix_(tasks, models, 1.0) {
    if (tasks == 0 || models == 0) throw ContractError("assignment logits need t, m >= 1");
    matrix_.set_requires_grad(true);
}

AssignmentLogits::AssignmentLogits(Tensor matrix) : matrix_(std::move(matrix)) {
    if (matrix_.rows() == 0 || matrix_.cols() == 0) {
        throw ContractError("assignment logits need t, m >= 1");
    }
    matrix_.set_requires_grad(true);
}

void AssignmentLogits::check_finite() const {
    if (!matrix_.all_finite()) throw NumericError("assignment logits became non-finite", "R_TM");
}

const char* to_string(ProbRole role) {
    switch (role) {
        case ProbRole::WordTask: return "word-task";
        case ProbRole::TaskModel: return "task-model";
        case ProbRole::WordModel: return "word-model";
    }
    return "?";
}

bool is_row_stochastic(const Tensor& m, double tol) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double total = 0.0;
        for (double v : m.row_span(r)) {
            if (!(v >= 0.0 && v <= 1.0)) return false;
            total += v;
        }
        if (std::abs(total - 1.0) > tol) return false;
    }
    return true;
}

std::map<ModelId, std::set<TaskId>> Grouping::groups() const {
    std::map<ModelId, std::set<TaskId>> out;
    for (TaskId t = 0; t < model_of_.size(); ++t) out[model_of_[t]].insert(t);
    return out;
}

std::vector<TaskId> Grouping::tasks_of(ModelId m) const {
    std::vector<TaskId> out;
    for (TaskId t = 0; t < model_of_.size(); ++t) {
        if (model_of_[t] == m) out.push_back(t);
    }
    return out;
}

std::string Grouping::to_string() const {
    std::string out;
    for (TaskId t = 0; t < model_of_.size(); ++t) {
        if (t > 0) out += ',';
        out += std::to_string(t) + ':' + std::to_string(model_of_[t]);
    }
    return out;
}

Grouping Grouping::parse(const std::string& text) {
    std::vector<ModelId> model_of;
    std::istringstream in(text);
    std::string pair;
    while (std::getline(in, pair, ',')) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos) throw ConfigError("bad grouping entry '" + pair + "'");
        const auto task = std::stoul(pair.substr(0, colon));
        if (task != model_of.size()) throw ConfigError("grouping tasks must be listed in order");
        model_of.push_back(std::stoul(pair.substr(colon + 1)));
    }
    return Grouping(std::move(model_of));
}

Tensor sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Tensor out(rows, cols);
    for (double& v : out.values()) {
        const double u = std::clamp(uniform(rng), 1e-12, 1.0 - 1e-12);
        v = -std::log(-std::log(u));
    }
    return out;
}

namespace {

std::size_t row_argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

}  // namespace

ProbMatrix gumbel_softmax_rows(Var logits, double tau, Rng* rng, bool hard) {
    if (!(tau > 0.0)) throw ContractError("gumbel_softmax_rows: tau must be > 0");
    diff::Graph& g = logits.graph();
    const std::size_t t = logits.rows();
    const std::size_t m = logits.cols();

    if (hard) {
        Tensor scores = logits.value();
        if (rng != nullptr) {
            const Tensor noise = sample_gumbel(t, m, *rng);
            for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += noise[i];
        }
        Tensor one_hot(t, m);
        for (std::size_t r = 0; r < t; ++r) one_hot(r, row_argmax(scores.row_span(r))) = 1.0;
        return {ProbRole::TaskModel, g.constant(std::move(one_hot))};
    }

    Var perturbed = logits;
    if (rng != nullptr) perturbed = ops::add(logits, g.constant(sample_gumbel(t, m, *rng)));
    if (tau != 1.0) perturbed = ops::scale(perturbed, 1.0 / tau);
    return {ProbRole::TaskModel, ops::row_softmax(perturbed)};
}

ProbMatrix word_model_probs(const ProbMatrix& p_wt, const ProbMatrix& p_tm) {
    if (p_wt.probs.cols() != p_tm.probs.rows()) {
        throw ShapeError("word_model_probs", "P_WT " + p_wt.probs.value().shape_string() +
                                                 " cannot compose with P_TM " +
                                                 p_tm.probs.value().shape_string());
    }
    return {ProbRole::WordModel, ops::matmul(p_wt.probs, p_tm.probs)};
}

Var grouping_loss(const ProbMatrix& p_tm, std::span<const double> mu) {
    const std::size_t m = p_tm.probs.cols();
    if (mu.size() != m) {
        throw ShapeError("grouping_loss", std::to_string(mu.size()) + " mu values for " +
                                              std::to_string(m) + " models");
    }
    for (double v : mu) {
        if (v < 0.0) throw ContractError("grouping_loss: mu must be >= 0");
    }
    diff::Graph& g = p_tm.probs.graph();
    const Var load = ops::col_sum(p_tm.probs);
    const Var slack = ops::sub(g.constant(Tensor::row({mu.begin(), mu.end()})), load);
    return ops::sum(ops::maximum(slack, 0.0));
}

Grouping hard_assignment(const Tensor& logits) {
    std::vector<ModelId> model_of(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) model_of[r] = row_argmax(logits.row_span(r));
    return Grouping(std::move(model_of));
}

}  // namespace taskgroup
