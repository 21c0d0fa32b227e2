#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "taskgroup/errors.hpp"
#include "taskgroup/harness.hpp"
#include "taskgroup/report.hpp"

using namespace taskgroup;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kNames{"T1", "T2", "T3"};

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("taskgroup_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ExperimentSpec tiny_spec(const fs::path& out) {
    ExperimentSpec s;
    s.seeds = {1, 2, 3};
    s.train.batch_size = 4;
    s.train.head_configs = {HeadShape{4, 8}};
    s.train.validation_words = 10;
    s.stages = {5, 20, 5, 0.2};
    s.ablation.horizon = 20;
    s.ablation.epsilons = {0.0, 0.2};
    s.output_dir = out;
    return s;
}

}  // namespace

TEST(OccurrenceTable, AggregateExamples) {
    const std::vector<RunGrouping> runs{
        {2, Grouping({0, 0, 1})}, {2, Grouping({1, 1, 0})}, {3, Grouping({0, 1, 2})}, {2, Grouping({0, 0, 0})}};
    const OccurrenceTable table = OccurrenceTable::aggregate(runs, kNames);
    ASSERT_GE(table.rows().size(), 4u);
    EXPECT_EQ(table.rows()[0].group, (std::vector<TaskId>{2}));
    EXPECT_EQ(table.rows()[0].occurrences, 3u);
    EXPECT_EQ(table.rows()[0].heads_at_first_occurrence, 2u);
    EXPECT_EQ(table.rows()[1].group, (std::vector<TaskId>{0, 1}));
    EXPECT_EQ(table.rows()[1].occurrences, 2u);
    // Singletons {T1} and {T2} first appear with 3 heads, after {T1,T2,T3} at 2.
    EXPECT_EQ(table.rows()[2].group, (std::vector<TaskId>{0, 1, 2}));
    EXPECT_EQ(table.find({0})->heads_at_first_occurrence, 3u);
    EXPECT_EQ(table.find({1, 2}), nullptr);
    EXPECT_EQ(table.group_name({0, 1}), "T1+T2");
}

TEST(OccurrenceTable, SumMatchesGroupsPerRun) {
    std::vector<RunGrouping> runs;
    std::size_t groups = 0;
    for (std::size_t n = 0; n < 27; ++n) {
        const Grouping g({n % 3, (n / 3) % 3, n / 9});
        groups += g.groups().size();
        runs.push_back({3, g});
    }
    const OccurrenceTable table = OccurrenceTable::aggregate(runs, kNames);
    std::size_t total = 0;
    for (const auto& r : table.rows()) total += r.occurrences;
    EXPECT_EQ(total, groups);
}

TEST(OccurrenceTable, CsvRoundTrip) {
    const std::vector<RunGrouping> runs{{2, Grouping({0, 0, 1})}, {3, Grouping({0, 1, 2})}};
    const OccurrenceTable table = OccurrenceTable::aggregate(runs, kNames);
    const std::string csv = table.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "group,occurrences,heads_at_first_occurrence");
    EXPECT_EQ(OccurrenceTable::from_csv(csv, kNames), table);
    EXPECT_THROW(OccurrenceTable::from_csv("a,b\n", kNames), ConfigError);
    EXPECT_THROW(OccurrenceTable::from_csv("group,occurrences,heads_at_first_occurrence\nT9,1,2\n", kNames),
                 ConfigError);
}

TEST(DescribeGrouping, UsesNames) {
    EXPECT_EQ(describe_grouping(Grouping({1, 1, 0}), kNames), "T3 | T1+T2");
}

TEST(ExperimentSpec, JsonRoundTripAndUnknownKey) {
    ExperimentSpec s = tiny_spec("somewhere");
    s.capacity_heads = {{8, 16}, {16, 32}, {32, 64}};
    const ExperimentSpec back = experiment_spec_from_json(to_json(s));
    EXPECT_EQ(to_json(back), to_json(s));
    EXPECT_THROW(experiment_spec_from_json({{"seedz", {1}}}), ConfigError);
    EXPECT_THROW(experiment_spec_from_json({{"seeds", "one"}}), ConfigError);
    EXPECT_THROW(load_experiment_spec("/nonexistent/spec.json"), ConfigError);
}

TEST(ExperimentSpec, ValidateAndStageConfig) {
    ExperimentSpec s;
    EXPECT_NO_THROW(s.validate());
    s.seeds = {1, 1};
    EXPECT_THROW(s.validate(), ConfigError);
    s.seeds = {4};
    const TrainConfig f = s.stage_config(Stage::Finetune, 3, 4);
    EXPECT_EQ(f.epsilon, 0.0);
    EXPECT_EQ(f.models(), 3u);
    EXPECT_EQ(f.seed, 4u);
    EXPECT_EQ(s.stage_config(Stage::Group, 2, 4).epsilon, s.stages.group_epsilon);
}

TEST(Oracle, RefusesLargeSearch) {
    const SynthWorld world = build_world(w3_world_spec());
    Rng rng(1);
    const RecognitionHead head(0, HeadShape{4, 8}, world.feature_dim(), world.universal(), rng);
    TrainConfig c;
    EXPECT_THROW(brute_force_oracle(world, 5, c, head), ConfigError);  // 125 > 64
}

TEST(Oracle, SingleTaskSingleHead) {
    WorldSpec ws;
    ws.scripts = {{"A", 5, {}, 0.1, 1.0}};
    const SynthWorld world = build_world(ws);
    Rng rng(2);
    const RecognitionHead head(0, HeadShape{4, 8}, world.feature_dim(), world.universal(), rng);
    TrainConfig c;
    c.iterations = 3;
    c.batch_size = 4;
    c.validation_words = 5;
    const auto entries = brute_force_oracle(world, 1, c, head);
    ASSERT_EQ(entries.size(), 1u);
    EXPECT_EQ(entries[0].grouping, Grouping({0}));
    EXPECT_EQ(entries[0].task_accuracy.size(), 1u);
    EXPECT_EQ(entries[0].mean_accuracy, entries[0].task_accuracy[0]);
}

TEST(Oracle, EnumeratesAllMapsSortedByAccuracy) {
    WorldSpec ws;
    ws.scripts = {{"A", 4, {}, 0.1, 1.0}, {"B", 4, {}, 0.1, 1.0}};
    const SynthWorld world = build_world(ws);
    Rng rng(3);
    const RecognitionHead head(0, HeadShape{4, 8}, world.feature_dim(), world.universal(), rng);
    TrainConfig c;
    c.iterations = 3;
    c.batch_size = 4;
    c.validation_words = 5;
    const auto entries = brute_force_oracle(world, 2, c, head);
    ASSERT_EQ(entries.size(), 4u);
    std::set<std::string> seen;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        seen.insert(entries[k].grouping.to_string());
        if (k > 0) {
            EXPECT_GE(entries[k - 1].mean_accuracy, entries[k].mean_accuracy);
        }
    }
    EXPECT_EQ(seen.size(), 4u);
}

TEST(Ablation, Preconditions) {
    ExperimentSpec s = tiny_spec(fresh_dir("ablation_pre"));
    s.ablation.epsilons = {0.2};
    EXPECT_THROW(run_epsilon_ablation(s), ConfigError);
    s.ablation.epsilons = {0.0, 0.2};
    s.seeds = {1, 2};
    EXPECT_THROW(run_epsilon_ablation(s), ConfigError);
}

TEST(Ablation, TinyRunWritesCsv) {
    const fs::path out = fresh_dir("ablation");
    const auto rows = run_epsilon_ablation(tiny_spec(out));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].epsilon, 0.2);
    EXPECT_EQ(rows[0].changes.size(), 3u);
    EXPECT_TRUE(fs::exists(out / "ablation.csv"));
    fs::remove_all(out);
}

TEST(Capacity, Preconditions) {
    ExperimentSpec s = tiny_spec(fresh_dir("capacity_pre"));
    s.capacity_heads = {{4, 8}, {8, 16}};
    EXPECT_THROW(run_capacity_experiment(s), ConfigError);
    s.capacity_heads = {{4, 8}, {8, 16}, {4, 8}};
    EXPECT_THROW(run_capacity_experiment(s), ConfigError);
}

TEST(Report, EmptyDirectory) {
    const fs::path dir = fresh_dir("report_empty");
    const ReportResult r = report(dir);
    EXPECT_TRUE(r.sections.empty());
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_TRUE(fs::exists(dir / "report.md"));
    EXPECT_THROW(report(dir / "missing"), ConfigError);
    fs::remove_all(dir);
}

TEST(Sweep, TinyRunAndReport) {
    const fs::path out = fresh_dir("sweep");
    ExperimentSpec s = tiny_spec(out);
    s.seeds = {1, 2};
    s.head_counts = {1, 2};
    const SweepResult r = run_sweep(s);
    ASSERT_EQ(r.runs.size(), 4u);
    EXPECT_EQ(r.failed(), 0u);
    for (const auto& run : r.runs) {
        EXPECT_TRUE(run.ok) << run.error;
        EXPECT_EQ(run.accuracy_after.size(), 3u);
        EXPECT_TRUE(fs::exists(out / "runs" / ("m" + std::to_string(run.heads) + "_s" + std::to_string(run.seed)) /
                               "group" / "trace.csv"));
    }
    // m = 1 runs put every task on the single head.
    const OccurrenceRow* all = r.table.find({0, 1, 2});
    ASSERT_NE(all, nullptr);
    EXPECT_GE(all->occurrences, 2u);
    EXPECT_EQ(all->heads_at_first_occurrence, 1u);

    std::ifstream in(out / "occurrence.csv");
    const std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(OccurrenceTable::from_csv(csv, kNames), r.table);

    const ReportResult rep = report(out);
    ASSERT_FALSE(rep.sections.empty());
    EXPECT_NE(rep.markdown.find("T1+T2+T3"), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "summary.csv"));
    fs::remove_all(out);
}

TEST(ShippedConfigs, LoadAndValidate) {
    const fs::path dir = TASKGROUP_CONFIG_DIR;
    const ExperimentSpec w3 = load_experiment_spec(dir / "w3.json");
    EXPECT_NO_THROW(w3.validate());
    EXPECT_EQ(build_world(w3.world).to_json(), build_world(w3_world_spec()).to_json());
    const ExperimentSpec cap = load_experiment_spec(dir / "capacity.json");
    EXPECT_NO_THROW(cap.validate());
    EXPECT_EQ(cap.capacity_heads.size(), build_world(cap.world).tasks());
    EXPECT_EQ(cap.train.lambda_group, 32.0);
}
