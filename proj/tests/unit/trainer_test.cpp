#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "taskgroup/errors.hpp"
#include "taskgroup/trainer.hpp"

using namespace taskgroup;
namespace fs = std::filesystem;

namespace {

TrainConfig small(Stage stage, std::size_t iterations, std::uint64_t seed = 1) {
    TrainConfig c;
    c.stage = stage;
    c.iterations = iterations;
    c.batch_size = 8;
    c.head_configs = {HeadShape{8, 16}, HeadShape{8, 16}};
    c.seed = seed;
    c.validation_words = 20;
    return c;
}

AssignmentTrace trace_of(std::initializer_list<const char*> groupings, std::size_t step = 10) {
    AssignmentTrace trace;
    std::size_t it = step;
    for (const char* g : groupings) {
        trace.record(it, Grouping::parse(g));
        it += step;
    }
    return trace;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Stage, Names) {
    for (Stage s : {Stage::Pretrain, Stage::Group, Stage::Finetune}) EXPECT_EQ(stage_from_string(to_string(s)), s);
    EXPECT_THROW(stage_from_string("warmup"), ConfigError);
}

TEST(TrainConfig, Validate) {
    EXPECT_NO_THROW(TrainConfig{}.validate());
    auto bad = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](TrainConfig& c) { c.tau = 0.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.epsilon = -0.1; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.batch_size = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.head_configs.clear(); }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.mu = {1.0}; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.grouping_lr = 0.0; }).validate(), ConfigError);
    EXPECT_EQ(TrainConfig{}.mu_or_default(), (std::vector<double>{1.0, 1.0}));
}

TEST(TrainConfig, JsonRoundTrip) {
    TrainConfig c = small(Stage::Finetune, 17, 99);
    c.mu = {0.5, 2.0};
    c.lambda_task = 0.3;
    c.ratios = {1.0, 2.0, 3.0};
    const TrainConfig back = train_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(back.stage, Stage::Finetune);
    EXPECT_EQ(back.head_configs, c.head_configs);
}

TEST(AssignmentTrace, RecordAndCsvRoundTrip) {
    const AssignmentTrace trace = trace_of({"0:0,1:0,2:1", "0:1,1:1,2:0"});
    AssignmentTrace copy = trace;
    EXPECT_THROW(copy.record(20, Grouping::parse("0:0,1:0,2:0")), ContractError);
    const AssignmentTrace back = AssignmentTrace::from_csv(trace.to_csv());
    ASSERT_EQ(back.entries().size(), 2u);
    EXPECT_EQ(back.entries()[1].iteration, 20u);
    EXPECT_EQ(back.entries()[1].grouping, Grouping::parse("0:1,1:1,2:0"));
    EXPECT_EQ(back.to_csv(), trace.to_csv());
    EXPECT_THROW(AssignmentTrace::from_csv("it,grouping\n"), ConfigError);
}

TEST(CountChanges, Examples) {
    const char* a = "0:0,1:0";
    const char* b = "0:0,1:1";
    const AssignmentTrace trace = trace_of({a, a, b, b, a});
    EXPECT_EQ(count_changes(trace, 50), 2u);
    EXPECT_EQ(count_changes(trace, 30), 1u);
    EXPECT_EQ(count_changes(trace, 10), 0u);
    EXPECT_EQ(count_changes(trace_of({a, a, a}), 1000), 0u);
    EXPECT_THROW(count_changes(AssignmentTrace{}, 10), ContractError);
}

TEST(DetectEquilibrium, Examples) {
    const char* a = "0:0,1:0";
    const char* b = "0:0,1:1";
    // Iterations 10..100; last change lands at 40.
    const AssignmentTrace trace = trace_of({a, a, a, b, b, b, b, b, b, b});
    EXPECT_TRUE(detect_equilibrium(trace, 60));
    EXPECT_FALSE(detect_equilibrium(trace, 61));
    EXPECT_FALSE(detect_equilibrium(trace, 95));  // longer than the trace
    EXPECT_THROW(detect_equilibrium(AssignmentTrace{}, 1), ContractError);
}

TEST(Pretrain, InitialLossNearUniform) {
    const SynthWorld world = build_world(w3_world_spec());
    TrainConfig c = small(Stage::Pretrain, 40);
    c.head_configs = {HeadShape{}};
    const PretrainResult r = pretrain_universal(c, world);
    ASSERT_EQ(r.losses.size(), 40u);
    const double uniform = std::log(static_cast<double>(world.universal().size()));
    EXPECT_NEAR(r.losses.front(), uniform, 0.15 * uniform);
    EXPECT_LT(r.losses.back(), r.losses.front());
    EXPECT_EQ(r.head.charset(), world.universal());
}

TEST(Pretrain, WrongStageIsConfigError) {
    const SynthWorld world = build_world(w3_world_spec());
    EXPECT_THROW(pretrain_universal(small(Stage::Group, 5), world), ConfigError);
}

TEST(TrainGrouping, TraceSpacingAndWeightBounds) {
    const SynthWorld world = build_world(w3_world_spec());
    TrainConfig c = small(Stage::Group, 50);
    c.eval_every = 10;
    const GroupingResult r = train_grouping(c, world, fresh_heads(c, world));
    ASSERT_EQ(r.trace.entries().size(), 5u);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(r.trace.entries()[k].iteration, 10 * (k + 1));
    EXPECT_EQ(r.log.size(), 5u);
    for (const auto& log : r.log) {
        EXPECT_GE(log.min_weight, c.epsilon - 1e-12);
        EXPECT_LE(log.max_weight, 1.0 + c.epsilon + 1e-12);
        EXPECT_NEAR(log.integrated, log.integrated0 + c.epsilon * log.loss_sum, 1e-6 * std::abs(log.integrated));
    }
    EXPECT_EQ(r.final_grouping().tasks(), 3u);
    EXPECT_EQ(r.trace.back().grouping, r.final_grouping());
}

TEST(TrainGrouping, SingleHeadIsDegenerate) {
    const SynthWorld world = build_world(w3_world_spec());
    TrainConfig c = small(Stage::Group, 20);
    c.head_configs = {HeadShape{8, 16}};
    const GroupingResult r = train_grouping(c, world, fresh_heads(c, world));
    EXPECT_EQ(r.final_grouping(), Grouping({0, 0, 0}));
    EXPECT_EQ(count_changes(r.trace, 20), 0u);
}

TEST(TrainGrouping, HeadCountMismatch) {
    const SynthWorld world = build_world(w3_world_spec());
    TrainConfig c = small(Stage::Group, 5);
    auto heads = fresh_heads(c, world);
    heads.pop_back();
    EXPECT_THROW(train_grouping(c, world, heads), ConfigError);
}

TEST(Finetune, PrunesAndDropsEmptyHeads) {
    const SynthWorld world = build_world(w3_world_spec());
    TrainConfig c = small(Stage::Finetune, 5);
    c.head_configs = {HeadShape{8, 16}, HeadShape{8, 16}, HeadShape{8, 16}};
    const auto heads = fresh_heads(c, world);
    const FinetuneResult r = finetune_heads(c, Grouping({0, 0, 2}), heads, world);
    ASSERT_EQ(r.heads.size(), 2u);
    EXPECT_EQ(r.heads[0].id(), 0u);
    EXPECT_EQ(r.heads[0].charset().size(), 22u);
    EXPECT_EQ(r.heads[1].id(), 2u);
    EXPECT_EQ(r.heads[1].charset().size(), 40u);
    EXPECT_EQ(r.heads[1].charset(), world.charsets()[2].symbols);
    EXPECT_EQ(r.accuracy_before.size(), 3u);
    EXPECT_EQ(r.accuracy_after.size(), 3u);
    EXPECT_THROW(finetune_heads(c, Grouping({0, 0}), heads, world), ConfigError);
    EXPECT_THROW(finetune_heads(c, Grouping({0, 0, 5}), heads, world), ConfigError);
}

TEST(Checkpoint, GroupingRunIsByteDeterministic) {
    const SynthWorld world = build_world(w3_world_spec());
    const TrainConfig c = small(Stage::Group, 30, 4);
    const fs::path root = fs::temp_directory_path() / "taskgroup_trainer_ckpt";
    fs::remove_all(root);
    for (const char* name : {"a", "b"}) {
        const GroupingResult r = train_grouping(c, world, fresh_heads(c, world));
        save_checkpoint(root / name, c, &r.logits, &r.trace, r.heads);
    }
    for (const char* file : {"trace.csv", "logits.json", "config.json"}) {
        EXPECT_EQ(slurp(root / "a" / file), slurp(root / "b" / file)) << file;
    }
    const auto heads = load_heads(root / "a");
    ASSERT_EQ(heads.size(), 2u);
    const GroupingResult again = train_grouping(c, world, fresh_heads(c, world));
    EXPECT_TRUE(heads[0] == again.heads[0]);
    EXPECT_EQ(logits_from_json(logits_to_json(again.logits)).matrix(), again.logits.matrix());
    fs::remove_all(root);
}
