#include "taskgroup/taskprob.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "taskgroup/errors.hpp"

namespace taskgroup {

using diff::Graph;
using diff::Tensor;
using diff::Var;
namespace ops = diff::ops;

void CharsetSpec::validate() const {
    if (symbols.empty()) throw ContractError("charset of task " + std::to_string(task) + " is empty");
    const std::set<int> unique(symbols.begin(), symbols.end());
    if (unique.size() != symbols.size()) {
        throw ContractError("charset of task " + std::to_string(task) + " repeats a symbol");
    }
}

bool CharsetSpec::contains(int code) const {
    return std::find(symbols.begin(), symbols.end(), code) != symbols.end();
}

std::vector<int> universal_charset(std::span<const CharsetSpec> charsets) {
    std::set<int> all;
    for (const auto& c : charsets) all.insert(c.symbols.begin(), c.symbols.end());
    return {all.begin(), all.end()};
}

namespace {

void coverage_row(const WordInstance& word, std::span<const std::set<int>> sets, Tensor& out,
                  std::size_t row) {
    if (word.labels.empty()) throw ContractError("coverage needs a non-empty label sequence");
    const std::size_t t = sets.size();
    double total = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        std::size_t hits = 0;
        for (int code : word.labels) hits += sets[i].contains(code) ? 1 : 0;
        out(row, i) = static_cast<double>(hits) / static_cast<double>(word.labels.size());
        total += out(row, i);
    }
    for (std::size_t i = 0; i < t; ++i) {
        out(row, i) = total > 0.0 ? out(row, i) / total : 1.0 / static_cast<double>(t);
    }
}

std::vector<std::set<int>> as_sets(std::span<const CharsetSpec> charsets) {
    std::vector<std::set<int>> sets;
    for (const auto& c : charsets) sets.emplace_back(c.symbols.begin(), c.symbols.end());
    return sets;
}

}  // namespace

Tensor word_task_from_coverage(std::span<const WordInstance> words,
                               std::span<const CharsetSpec> charsets) {
    if (charsets.empty()) throw ContractError("coverage needs at least one task charset");
    const auto sets = as_sets(charsets);
    Tensor out(words.size(), charsets.size());
    for (std::size_t k = 0; k < words.size(); ++k) coverage_row(words[k], sets, out, k);
    return out;
}

Tensor word_task_from_ground_truth(std::span<const WordInstance> words,
                                   std::span<const CharsetSpec> charsets) {
    const std::size_t t = charsets.size();
    if (t == 0) throw ContractError("ground-truth P_WT needs at least one task");
    std::vector<std::set<int>> sets;
    Tensor out(words.size(), t);
    for (std::size_t k = 0; k < words.size(); ++k) {
        if (const auto& gt = words[k].gt_task) {
            if (*gt >= t) {
                throw ContractError("ground-truth task " + std::to_string(*gt) + " out of range for " +
                                    std::to_string(t) + " tasks");
            }
            out(k, *gt) = 1.0;
        } else {
            if (sets.empty()) sets = as_sets(charsets);
            coverage_row(words[k], sets, out, k);
        }
    }
    return out;
}

ProbMatrix as_word_task(Graph& g, Tensor p_wt) {
    return {ProbRole::WordTask, g.constant(std::move(p_wt))};
}

TaskClassifier::TaskClassifier(std::size_t feature_dim, std::size_t hidden, std::size_t tasks,
                               Rng& rng) {
    auto init = [&rng](std::size_t r, std::size_t c) {
        const double a = std::sqrt(6.0 / static_cast<double>(r + c));
        std::uniform_real_distribution<double> dist(-a, a);
        Tensor t(r, c);
        for (double& v : t.values()) v = dist(rng);
        t.set_requires_grad(true);
        return t;
    };
    w1_ = init(feature_dim, hidden);
    b1_ = Tensor(1, hidden);
    b1_.set_requires_grad(true);
    w2_ = init(hidden, tasks);
    b2_ = Tensor(1, tasks);
    b2_.set_requires_grad(true);
}

Var TaskClassifier::classify(Graph& g, std::span<const WordInstance> words) const {
    const std::size_t d = feature_dim();
    Tensor pooled(words.size(), d);
    for (std::size_t k = 0; k < words.size(); ++k) {
        const auto& f = words[k].features;
        if (f.cols() != d) {
            throw ShapeError("task_classify", "features " + f.shape_string() +
                                                  " for classifier input dim " + std::to_string(d));
        }
        for (std::size_t r = 0; r < f.rows(); ++r) {
            for (std::size_t c = 0; c < d; ++c) pooled(k, c) += f(r, c);
        }
        for (std::size_t c = 0; c < d; ++c) pooled(k, c) /= static_cast<double>(f.rows());
    }
    const Var x = g.constant(std::move(pooled));
    const Var h = ops::relu(ops::add(ops::matmul(x, g.leaf(w1_)), g.leaf(b1_)));
    return ops::add(ops::matmul(h, g.leaf(w2_)), g.leaf(b2_));
}

ProbMatrix TaskClassifier::word_task_probs(Graph& g, std::span<const WordInstance> words) const {
    return {ProbRole::WordTask, ops::row_softmax(classify(g, words))};
}

std::vector<diff::NamedParam> TaskClassifier::parameters() {
    return {{"classifier.w1", &w1_}, {"classifier.b1", &b1_}, {"classifier.w2", &w2_},
            {"classifier.b2", &b2_}};
}

Var task_loss(Var logits, std::span<const TaskId> gt_tasks) {
    if (gt_tasks.size() != logits.rows()) {
        throw ShapeError("task_loss", std::to_string(gt_tasks.size()) + " targets for logits " +
                                          logits.value().shape_string());
    }
    std::vector<std::size_t> cols(gt_tasks.begin(), gt_tasks.end());
    for (auto c : cols) {
        if (c >= logits.cols()) {
            throw ContractError("task_loss: ground-truth task " + std::to_string(c) +
                                " out of range for " + std::to_string(logits.cols()) + " tasks");
        }
    }
    return ops::scale(ops::mean(ops::pick(ops::row_log_softmax(logits), cols)), -1.0);
}

}  // namespace taskgroup
