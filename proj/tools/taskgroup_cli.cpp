// taskgroup: command-line driver for the three training stages and the
// experiment harness.
//
// Exit codes: 0 success, 1 a run failed, 2 configuration error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "taskgroup/errors.hpp"
#include "taskgroup/harness.hpp"
#include "taskgroup/report.hpp"
#include "taskgroup/trainer.hpp"

using namespace taskgroup;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> workers;
};

ExperimentSpec load_spec(const Globals& g) {
    ExperimentSpec spec = g.config.empty() ? ExperimentSpec{} : load_experiment_spec(g.config);
    if (g.seed) spec.seeds = {*g.seed};
    if (!g.out.empty()) spec.output_dir = g.out;
    if (g.workers) spec.workers = *g.workers;
    spec.validate();
    return spec;
}

void print_accuracy(const std::vector<std::string>& names, const std::vector<double>& before,
                    const std::vector<double>& after) {
    for (std::size_t t = 0; t < names.size(); ++t) {
        std::printf("%s: %.4f -> %.4f\n", names[t].c_str(), before[t], after[t]);
    }
}

int cmd_pretrain(const Globals& g) {
    const ExperimentSpec spec = load_spec(g);
    const SynthWorld world = build_world(spec.world);
    const TrainConfig c = spec.stage_config(Stage::Pretrain, 1, spec.seeds.front());
    const PretrainResult r = pretrain_universal(c, world);
    save_checkpoint(spec.output_dir, c, nullptr, nullptr, std::span<const RecognitionHead>(&r.head, 1));
    std::printf("pretrain: %zu iterations, final loss %.4f\n", r.losses.size(),
                r.losses.empty() ? 0.0 : r.losses.back());
    return 0;
}

int cmd_group(const Globals& g, const std::string& from, std::optional<std::size_t> heads) {
    const ExperimentSpec spec = load_spec(g);
    const SynthWorld world = build_world(spec.world);
    const std::uint64_t seed = spec.seeds.front();
    const std::size_t m = heads.value_or(spec.head_counts.front());
    std::optional<RecognitionHead> pretrained;
    if (!from.empty()) {
        auto loaded = load_heads(from);
        if (loaded.empty()) throw ConfigError("no heads found in " + from);
        pretrained = std::move(loaded.front());
    } else {
        pretrained = pretrain_universal(spec.stage_config(Stage::Pretrain, 1, seed), world).head;
    }
    const TrainConfig c = spec.stage_config(Stage::Group, m, seed);
    const GroupingResult r = train_grouping(c, world, replicate_head(*pretrained, m));
    save_checkpoint(spec.output_dir, c, &r.logits, &r.trace, r.heads);
    std::printf("group: %s (%s)\n", r.final_grouping().to_string().c_str(),
                describe_grouping(r.final_grouping(), world.names()).c_str());
    return 0;
}

int cmd_finetune(const Globals& g, const std::string& from) {
    if (from.empty()) throw ConfigError("finetune needs --from <group checkpoint>");
    const ExperimentSpec spec = load_spec(g);
    const SynthWorld world = build_world(spec.world);
    std::ifstream in(fs::path(from) / "logits.json");
    if (!in) throw ConfigError("no logits.json in " + from);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const Grouping grouping = hard_assignment(logits_from_json(text));
    const auto heads = load_heads(from);
    const TrainConfig c = spec.stage_config(Stage::Finetune, heads.size(), spec.seeds.front());
    const FinetuneResult r = finetune_heads(c, grouping, heads, world);
    save_checkpoint(spec.output_dir, c, nullptr, nullptr, r.heads);
    print_accuracy(world.names(), r.accuracy_before, r.accuracy_after);
    return 0;
}

int cmd_sweep(const Globals& g) {
    const SweepResult r = run_sweep(load_spec(g));
    std::cout << r.table.to_csv();
    std::printf("runs: %zu, failed: %zu\n", r.runs.size(), r.failed());
    for (const auto& run : r.runs) {
        if (!run.ok) std::fprintf(stderr, "run m=%zu seed=%llu failed: %s\n", run.heads,
                                  static_cast<unsigned long long>(run.seed), run.error.c_str());
    }
    return r.failed() == 0 ? 0 : 1;
}

int cmd_ablate(const Globals& g) {
    std::cout << ablation_to_csv(run_epsilon_ablation(load_spec(g)));
    return 0;
}

int cmd_capacity(const Globals& g) {
    const ExperimentSpec spec = load_spec(g);
    const CapacityResult r = run_capacity_experiment(spec);
    std::cout << capacity_to_csv(r, build_world(spec.world).names());
    std::printf("largest head took the largest charset in %zu/%zu seeds\n", r.largest_matches, r.seeds);
    return 0;
}

int cmd_oracle(const Globals& g) {
    const ExperimentSpec spec = load_spec(g);
    std::cout << oracle_to_csv(run_oracle(spec), build_world(spec.world).names());
    return 0;
}

int cmd_report(const Globals& g) {
    const fs::path dir = g.out.empty() ? fs::path("out") : fs::path(g.out);
    const ReportResult r = report(dir);
    for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("wrote %s\n", (dir / "report.md").c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Task grouping trainer and experiment harness"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON experiment spec");
    app.add_option("--seed", g.seed, "Run with this single seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--workers", g.workers, "Parallel runs")->check(CLI::PositiveNumber);

    // Subcommands inherit this, so global options may follow the subcommand.
    app.fallthrough();

    std::string from;
    std::optional<std::size_t> heads;
    auto* pretrain = app.add_subcommand("pretrain", "Stage 1: universal head");
    auto* group = app.add_subcommand("group", "Stage 2: joint grouping");
    group->add_option("--from", from, "Pretrain checkpoint (default: pretrain inline)");
    group->add_option("--heads", heads, "Number of heads");
    auto* finetune = app.add_subcommand("finetune", "Stage 3: prune and finetune");
    finetune->add_option("--from", from, "Group checkpoint")->required();
    auto* sweep = app.add_subcommand("sweep", "All stages for every head count and seed");
    auto* ablate = app.add_subcommand("ablate-epsilon", "Assignment changes per epsilon");
    auto* capacity = app.add_subcommand("capacity", "Heads with different capacities");
    auto* oracle = app.add_subcommand("oracle", "Brute-force grouping oracle");
    auto* rep = app.add_subcommand("report", "Markdown and CSV summary of --out");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*pretrain) return cmd_pretrain(g);
        if (*group) return cmd_group(g, from, heads);
        if (*finetune) return cmd_finetune(g, from);
        if (*sweep) return cmd_sweep(g);
        if (*ablate) return cmd_ablate(g);
        if (*capacity) return cmd_capacity(g);
        if (*oracle) return cmd_oracle(g);
        if (*rep) return cmd_report(g);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
