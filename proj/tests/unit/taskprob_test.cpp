#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "taskgroup/diff/grad_check.hpp"
#include "taskgroup/errors.hpp"
#include "taskgroup/synth.hpp"
#include "taskgroup/taskprob.hpp"

using namespace taskgroup;
using diff::Graph;
using diff::Tensor;
using diff::Var;

namespace {

WordInstance word(std::vector<int> labels, std::optional<TaskId> gt = std::nullopt, std::size_t d = 2) {
    WordInstance w;
    w.features = Tensor(labels.size(), d, 0.5);
    w.labels = std::move(labels);
    w.gt_task = gt;
    return w;
}

const std::vector<CharsetSpec> kTwo{{0, {1, 2, 3, 4}}, {1, {3, 4, 5, 6}}};

}  // namespace

TEST(CharsetSpec, Validate) {
    EXPECT_THROW((CharsetSpec{0, {}}).validate(), ContractError);
    EXPECT_THROW((CharsetSpec{0, {1, 2, 1}}).validate(), ContractError);
    EXPECT_NO_THROW((CharsetSpec{0, {4, 1}}).validate());
    EXPECT_TRUE((CharsetSpec{0, {4, 1}}).contains(4));
    EXPECT_EQ(universal_charset(kTwo), (std::vector<int>{1, 2, 3, 4, 5, 6}));
}

TEST(GroundTruth, OneHotRows) {
    const std::vector<CharsetSpec> four{{0, {1}}, {1, {2}}, {2, {3}}, {3, {4}}};
    const std::vector<WordInstance> words{word({3}, 2), word({1}, 0), word({4}, 3)};
    const Tensor p = word_task_from_ground_truth(words, four);
    EXPECT_EQ(p.rows(), 3u);
    const double row0[] = {0, 0, 1, 0};
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(p(0, c), row0[c]);
    EXPECT_TRUE(is_row_stochastic(p));
}

TEST(GroundTruth, MissingIdFallsBackToCoverage) {
    const std::vector<WordInstance> words{word({1, 2}, 1), word({1, 2, 3, 4})};
    const Tensor p = word_task_from_ground_truth(words, kTwo);
    EXPECT_EQ(p(0, 1), 1.0);
    const Tensor cov = word_task_from_coverage(std::span(words).subspan(1), kTwo);
    EXPECT_EQ(p(1, 0), cov(0, 0));
    EXPECT_EQ(p(1, 1), cov(0, 1));
    EXPECT_TRUE(is_row_stochastic(p));
}

TEST(GroundTruth, OutOfRangeIdIsContractError) {
    const std::vector<WordInstance> words{word({1}, 5)};
    EXPECT_THROW(word_task_from_ground_truth(words, kTwo), ContractError);
}

TEST(Coverage, Examples) {
    // All labels in L_1 only.
    EXPECT_EQ(word_task_from_coverage(std::vector{word({1, 2})}, kTwo), Tensor::row({1.0, 0.0}));
    // 4 chars in L_1, 2 of them in L_2: raw (1, 0.5) -> (2/3, 1/3).
    const Tensor p = word_task_from_coverage(std::vector{word({1, 2, 3, 4})}, kTwo);
    EXPECT_NEAR(p(0, 0), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p(0, 1), 1.0 / 3.0, 1e-15);
    // Nothing covered.
    EXPECT_EQ(word_task_from_coverage(std::vector{word({99})}, kTwo), Tensor::row({0.5, 0.5}));
}

TEST(Coverage, PermutationEquivariant) {
    const std::vector<CharsetSpec> swapped{{0, kTwo[1].symbols}, {1, kTwo[0].symbols}};
    const std::vector<WordInstance> words{word({1, 3, 5}), word({6, 6, 2, 4})};
    const Tensor a = word_task_from_coverage(words, kTwo);
    const Tensor b = word_task_from_coverage(words, swapped);
    for (std::size_t r = 0; r < 2; ++r) {
        EXPECT_EQ(a(r, 0), b(r, 1));
        EXPECT_EQ(a(r, 1), b(r, 0));
    }
}

TEST(Coverage, IgnoresFeatures) {
    std::vector<WordInstance> words{word({1, 3, 5})};
    const Tensor a = word_task_from_coverage(words, kTwo);
    words[0].features.fill(-7.0);
    EXPECT_EQ(word_task_from_coverage(words, kTwo), a);
}

TEST(Producers, RowStochasticOnRandomBatches) {
    const SynthWorld world = build_world(w3_world_spec());
    Rng rng(3);
    TaskClassifier clf(world.feature_dim(), 16, world.tasks(), rng);
    for (int k = 0; k < 100; ++k) {
        auto batch = sample_batch(world, world.ratios(), 8, rng);
        batch[static_cast<std::size_t>(k) % 8].gt_task.reset();
        EXPECT_TRUE(is_row_stochastic(word_task_from_ground_truth(batch, world.charsets())));
        EXPECT_TRUE(is_row_stochastic(word_task_from_coverage(batch, world.charsets())));
        Graph g;
        EXPECT_TRUE(is_row_stochastic(clf.word_task_probs(g, batch).probs.value()));
    }
}

TEST(TaskLoss, Examples) {
    Graph g;
    const std::vector<TaskId> gt{2};
    EXPECT_NEAR(task_loss(g.constant(Tensor(1, 4, 0.3)), gt).value().item(), std::log(4.0), 1e-12);
    EXPECT_NEAR(task_loss(g.constant(Tensor::row({-800, -800, 0, -800})), gt).value().item(), 0.0, 1e-300);
    const std::vector<TaskId> bad{4};
    EXPECT_THROW(task_loss(g.constant(Tensor(1, 4)), bad), ContractError);
}

TEST(TaskLoss, GradientAtTenPoints) {
    std::mt19937_64 gen(4);
    const std::vector<TaskId> gt{0, 3, 1, 1, 4};
    for (int k = 0; k < 10; ++k) {
        const Tensor logits = testing_support::random_tensor(5, 5, gen, -2, 2);
        const diff::UnaryFn fn = [&](Graph&, Var v) { return task_loss(v, gt); };
        EXPECT_LT(diff::grad_check(fn, logits), 1e-4);
    }
}

TEST(TaskClassifier, ShapesAndMismatch) {
    Rng rng(5);
    TaskClassifier clf(2, 8, 3, rng);
    EXPECT_EQ(clf.tasks(), 3u);
    EXPECT_EQ(clf.feature_dim(), 2u);
    Graph g;
    const std::vector<WordInstance> words{word({1, 2}), word({3})};
    EXPECT_EQ(clf.classify(g, words).value().shape(), (std::vector<std::size_t>{2, 3}));
    const std::vector<WordInstance> wide{word({1}, std::nullopt, 5)};
    EXPECT_THROW(clf.classify(g, wide), ShapeError);
}
