#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "taskgroup/diff/grad_check.hpp"
#include "taskgroup/errors.hpp"
#include "taskgroup/grouping.hpp"

using namespace taskgroup;
using diff::Graph;
using diff::Tensor;
using diff::Var;
using testing_support::random_stochastic;
using testing_support::random_tensor;

TEST(AssignmentLogits, StartsAtOnes) {
    const AssignmentLogits r(3, 2);
    EXPECT_EQ(r.matrix(), Tensor(3, 2, 1.0));
    EXPECT_TRUE(r.matrix().requires_grad());
    EXPECT_NO_THROW(r.check_finite());
    AssignmentLogits bad(Tensor::from_rows({{1.0, NAN}}));
    EXPECT_THROW(bad.check_finite(), NumericError);
}

TEST(Gumbel, FixedSeedIsDeterministic) {
    Rng a(42), b(42);
    EXPECT_EQ(sample_gumbel(4, 5, a), sample_gumbel(4, 5, b));
}

TEST(Gumbel, Moments) {
    Rng rng(1);
    const Tensor g = sample_gumbel(1000, 100, rng);
    double mean = 0.0;
    for (double v : g.values()) mean += v;
    mean /= static_cast<double>(g.size());
    double var = 0.0;
    for (double v : g.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(g.size() - 1);
    EXPECT_NEAR(mean, std::numbers::egamma, 0.01);
    EXPECT_NEAR(var, std::numbers::pi * std::numbers::pi / 6.0, 0.05);
}

TEST(GumbelSoftmax, SoftRowsSumToOne) {
    std::mt19937_64 gen(2);
    Rng rng(2);
    Graph g;
    const ProbMatrix p = gumbel_softmax_rows(g.constant(random_tensor(6, 4, gen, -3, 3)), 0.7, &rng, false);
    EXPECT_EQ(p.role, ProbRole::TaskModel);
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (double v : p.probs.value().row_span(r)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(GumbelSoftmax, SoftModeFormula) {
    // Independent evaluation: softmax((logits + g) / tau) with the same noise.
    std::mt19937_64 gen(3);
    const Tensor logits = random_tensor(3, 4, gen);
    Rng a(9), b(9);
    Graph g;
    const Tensor p = gumbel_softmax_rows(g.constant(logits), 0.5, &a, false).probs.value();
    const Tensor noise = sample_gumbel(3, 4, b);
    for (std::size_t r = 0; r < 3; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < 4; ++c) z += std::exp((logits(r, c) + noise(r, c)) / 0.5);
        for (std::size_t c = 0; c < 4; ++c) {
            EXPECT_NEAR(p(r, c), std::exp((logits(r, c) + noise(r, c)) / 0.5) / z, 1e-12);
        }
    }
}

TEST(GumbelSoftmax, UniformLogitArgmaxFrequencies) {
    const std::size_t m = 4;
    const std::size_t n = 10000;
    Rng rng(4);
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t k = 0; k < n; ++k) {
        Graph g;
        const Tensor h = gumbel_softmax_rows(g.constant(Tensor(1, m, 1.0)), 1.0, &rng, true).probs.value();
        for (std::size_t j = 0; j < m; ++j) {
            if (h(0, j) == 1.0) ++counts[j];
        }
    }
    const double p = 1.0 / static_cast<double>(m);
    const double sigma = std::sqrt(static_cast<double>(n) * p * (1 - p));
    for (std::size_t c : counts) EXPECT_LT(std::abs(static_cast<double>(c) - static_cast<double>(n) * p), 3 * sigma);
}

TEST(GumbelSoftmax, HardWithoutRngIsArgmax) {
    Graph g;
    const Tensor h = gumbel_softmax_rows(g.constant(Tensor::row({2.0, 1.0, 1.0})), 1.0, nullptr, true).probs.value();
    EXPECT_EQ(h, Tensor::row({1.0, 0.0, 0.0}));
}

TEST(GumbelSoftmax, NonPositiveTauIsContractError) {
    Graph g;
    Rng rng(1);
    EXPECT_THROW(gumbel_softmax_rows(g.constant(Tensor(2, 2)), 0.0, &rng, false), ContractError);
    EXPECT_THROW(gumbel_softmax_rows(g.constant(Tensor(2, 2)), -1.0, nullptr, true), ContractError);
}

TEST(GumbelSoftmax, GradientThroughLogits) {
    std::mt19937_64 gen(5);
    for (int point = 0; point < 10; ++point) {
        const Tensor logits = random_tensor(3, 2, gen);
        const Tensor w = random_tensor(3, 2, gen);
        const diff::UnaryFn fn = [&](Graph& g, Var v) {
            Rng rng(77);  // same noise on every evaluation
            const ProbMatrix p = gumbel_softmax_rows(v, 1.0, &rng, false);
            return diff::ops::sum(diff::ops::mul(p.probs, g.constant(w)));
        };
        EXPECT_LT(diff::grad_check(fn, logits), 1e-4);
    }
}

TEST(WordModel, IdentityTaskModel) {
    std::mt19937_64 gen(6);
    const Tensor pwt = random_stochastic(5, 3, gen);
    Graph g;
    const ProbMatrix out = word_model_probs({ProbRole::WordTask, g.constant(pwt)},
                                            {ProbRole::TaskModel, g.constant(Tensor::identity(3))});
    EXPECT_EQ(out.role, ProbRole::WordModel);
    EXPECT_EQ(out.probs.value(), pwt);
}

TEST(WordModel, OneHotWordPicksTaskRow) {
    Graph g;
    const ProbMatrix out = word_model_probs({ProbRole::WordTask, g.constant(Tensor::row({0.0, 1.0}))},
                                            {ProbRole::TaskModel, g.constant(Tensor::from_rows({{0.5, 0.5}, {0.3, 0.7}}))});
    EXPECT_NEAR(out.probs.value()(0, 0), 0.3, 1e-15);
    EXPECT_NEAR(out.probs.value()(0, 1), 0.7, 1e-15);
}

TEST(WordModel, RowStochasticOnRandomInstances) {
    std::mt19937_64 gen(7);
    for (int k = 0; k < 100; ++k) {
        Graph g;
        const ProbMatrix out = word_model_probs({ProbRole::WordTask, g.constant(random_stochastic(4, 3, gen))},
                                                {ProbRole::TaskModel, g.constant(random_stochastic(3, 2, gen))});
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (double v : out.probs.value().row_span(r)) s += v;
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(WordModel, MismatchIsShapeError) {
    Graph g;
    EXPECT_THROW(word_model_probs({ProbRole::WordTask, g.constant(Tensor(2, 3, 1.0 / 3))},
                                  {ProbRole::TaskModel, g.constant(Tensor(2, 2, 0.5))}),
                 ShapeError);
}

TEST(GroupingLoss, Examples) {
    Graph g;
    const std::vector<double> mu3(3, 1.0);
    EXPECT_EQ(grouping_loss({ProbRole::TaskModel, g.constant(Tensor::identity(3))}, mu3).value().item(), 0.0);
    EXPECT_NEAR(grouping_loss({ProbRole::TaskModel, g.constant(Tensor(2, 3, 1.0 / 3.0))}, mu3).value().item(), 1.0,
                1e-12);
    // t=7, m=2, column sums (5, 2).
    Tensor p(7, 2, 0.0);
    for (std::size_t i = 0; i < 5; ++i) p(i, 0) = 1.0;
    for (std::size_t i = 5; i < 7; ++i) p(i, 1) = 1.0;
    const std::vector<double> mu2(2, 1.0);
    EXPECT_EQ(grouping_loss({ProbRole::TaskModel, g.constant(p)}, mu2).value().item(), 0.0);
}

TEST(GroupingLoss, GradientOffKink) {
    std::mt19937_64 gen(8);
    const std::vector<double> mu{1.0, 1.5, 0.2};
    int checked = 0;
    while (checked < 10) {
        const Tensor logits = random_tensor(4, 3, gen, -2, 2);
        Graph probe;
        const Tensor p = diff::ops::row_softmax(probe.constant(logits)).value();
        bool near_kink = false;
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < 4; ++i) s += p(i, j);
            near_kink = near_kink || std::abs(mu[j] - s) < 0.05;
        }
        if (near_kink) continue;
        const diff::UnaryFn fn = [&](Graph&, Var v) {
            return grouping_loss({ProbRole::TaskModel, diff::ops::row_softmax(v)}, mu);
        };
        EXPECT_LT(diff::grad_check(fn, logits), 1e-4);
        ++checked;
    }
}

TEST(HardAssignment, Examples) {
    EXPECT_EQ(hard_assignment(AssignmentLogits(3, 4)), Grouping({0, 0, 0}));
    EXPECT_EQ(hard_assignment(Tensor::row({0.1, 5.0, 0.2})).model_of(0), 1u);
    std::mt19937_64 gen(9);
    Tensor r = random_tensor(5, 3, gen);
    for (std::size_t i = 0; i < 5; ++i) r(i, 2) += 10.0;
    EXPECT_EQ(hard_assignment(r), Grouping({2, 2, 2, 2, 2}));
}

TEST(HardAssignment, RowShiftInvariant) {
    std::mt19937_64 gen(10);
    const Tensor r = random_tensor(6, 3, gen);
    Tensor shifted = r;
    for (std::size_t i = 0; i < 6; ++i) {
        for (double& v : shifted.row_span(i)) v += static_cast<double>(i) * 3.5 - 7.0;
    }
    EXPECT_EQ(hard_assignment(r), hard_assignment(shifted));
}

TEST(Grouping, StringRoundTripAndGroups) {
    const Grouping g({1, 1, 0});
    EXPECT_EQ(g.to_string(), "0:1,1:1,2:0");
    EXPECT_EQ(Grouping::parse("0:1,1:1,2:0"), g);
    const auto groups = g.groups();
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_EQ(groups.at(1), (std::set<TaskId>{0, 1}));
    EXPECT_EQ(g.tasks_of(0), std::vector<TaskId>{2});
    EXPECT_TRUE(g.tasks_of(5).empty());
    EXPECT_THROW(Grouping::parse("0:1,0:2"), ConfigError);
}

TEST(ProbMatrix, RowStochasticCheck) {
    EXPECT_TRUE(is_row_stochastic(Tensor::from_rows({{0.25, 0.75}, {1.0, 0.0}})));
    EXPECT_FALSE(is_row_stochastic(Tensor::from_rows({{0.5, 0.6}})));
    EXPECT_FALSE(is_row_stochastic(Tensor::from_rows({{1.5, -0.5}})));
}
