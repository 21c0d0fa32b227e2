#include "taskgroup/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "taskgroup/errors.hpp"

namespace taskgroup {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::size_t equilibrium_window(std::size_t iterations) {
    return static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(iterations)));
}

HeadShape shape_from_json(const json& h) {
    if (h.is_array()) return {h.at(0).get<std::size_t>(), h.at(1).get<std::size_t>()};
    return {h.at("embed").get<std::size_t>(), h.at("hidden").get<std::size_t>()};
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; the first failure is
// rethrown after every job has finished.
template <class Fn>
void parallel_jobs(std::size_t n, std::size_t workers, Fn&& fn) {
    std::vector<std::exception_ptr> failures(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
    const int threads = static_cast<int>(std::max<std::size_t>(workers, 1));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            failures[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }
}

// One pretrained universal head per seed.
std::map<std::uint64_t, RecognitionHead> pretrain_all(const ExperimentSpec& spec, const SynthWorld& world,
                                                      std::span<const std::uint64_t> seeds) {
    std::vector<std::optional<RecognitionHead>> heads(seeds.size());
    parallel_jobs(seeds.size(), spec.workers, [&](std::size_t i) {
        heads[i] = pretrain_universal(spec.stage_config(Stage::Pretrain, 1, seeds[i]), world).head;
    });
    std::map<std::uint64_t, RecognitionHead> out;
    for (std::size_t i = 0; i < seeds.size(); ++i) out.emplace(seeds[i], std::move(*heads[i]));
    return out;
}

}  // namespace

// --- spec ------------------------------------------------------------------

void ExperimentSpec::validate() const {
    if (world.scripts.empty()) throw ConfigError("world has no scripts");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw ConfigError("seeds must be distinct");
    }
    for (std::size_t m : head_counts) {
        if (m == 0) throw ConfigError("head counts must be >= 1");
    }
    if (workers == 0) throw ConfigError("workers must be >= 1");
    if (stages.group_iterations == 0 || stages.finetune_iterations == 0) {
        throw ConfigError("group and finetune iterations must be >= 1");
    }
    if (!(stages.group_epsilon >= 0.0)) throw ConfigError("group_epsilon must be >= 0");
    if (oracle_heads == 0) throw ConfigError("oracle heads must be >= 1");
    if (ablation.heads == 0 || ablation.horizon == 0) throw ConfigError("ablation heads and horizon must be >= 1");
    for (double e : ablation.epsilons) {
        if (!(e >= 0.0)) throw ConfigError("ablation epsilons must be >= 0");
    }
    train.validate();
}

TrainConfig ExperimentSpec::stage_config(Stage stage, std::size_t heads, std::uint64_t seed) const {
    TrainConfig c = train;
    c.stage = stage;
    c.seed = seed;
    const HeadShape shape = train.head_configs.empty() ? HeadShape{} : train.head_configs.front();
    c.head_configs.assign(heads, shape);
    if (c.mu.size() != heads) c.mu.clear();
    switch (stage) {
        case Stage::Pretrain:
            c.iterations = stages.pretrain_iterations;
            break;
        case Stage::Group:
            c.iterations = stages.group_iterations;
            c.epsilon = stages.group_epsilon;
            break;
        case Stage::Finetune:
            c.iterations = stages.finetune_iterations;
            c.epsilon = 0.0;
            break;
    }
    return c;
}

ExperimentSpec experiment_spec_from_json(const json& j) {
    static const std::set<std::string> known{"world", "head_counts", "seeds", "train", "stages", "ablation",
                                             "capacity", "oracle", "output", "workers"};
    if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown experiment spec key '" + key + "'");
    }
    ExperimentSpec s;
    try {
        if (j.contains("world")) s.world = world_spec_from_json(j.at("world"));
        s.head_counts = j.value("head_counts", s.head_counts);
        s.seeds = j.value("seeds", s.seeds);
        if (j.contains("train")) s.train = train_config_from_json(j.at("train"), s.train);
        if (j.contains("stages")) {
            const auto& st = j.at("stages");
            s.stages.pretrain_iterations = st.value("pretrain_iterations", s.stages.pretrain_iterations);
            s.stages.group_iterations = st.value("group_iterations", s.stages.group_iterations);
            s.stages.finetune_iterations = st.value("finetune_iterations", s.stages.finetune_iterations);
            s.stages.group_epsilon = st.value("group_epsilon", s.stages.group_epsilon);
        }
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            s.ablation.epsilons = a.value("epsilons", s.ablation.epsilons);
            s.ablation.heads = a.value("heads", s.ablation.heads);
            s.ablation.horizon = a.value("horizon", s.ablation.horizon);
        }
        if (j.contains("capacity")) {
            for (const auto& h : j.at("capacity").at("heads")) s.capacity_heads.push_back(shape_from_json(h));
        }
        if (j.contains("oracle")) s.oracle_heads = j.at("oracle").value("heads", s.oracle_heads);
        if (j.contains("output")) s.output_dir = j.at("output").get<std::string>();
        s.workers = j.value("workers", s.workers);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed experiment spec: ") + e.what());
    }
    return s;
}

json to_json(const ExperimentSpec& s) {
    json capacity = json::array();
    for (const auto& h : s.capacity_heads) capacity.push_back({{"embed", h.embed}, {"hidden", h.hidden}});
    return {{"world", world_spec_to_json(s.world)},
            {"head_counts", s.head_counts},
            {"seeds", s.seeds},
            {"train", to_json(s.train)},
            {"stages",
             {{"pretrain_iterations", s.stages.pretrain_iterations},
              {"group_iterations", s.stages.group_iterations},
              {"finetune_iterations", s.stages.finetune_iterations},
              {"group_epsilon", s.stages.group_epsilon}}},
            {"ablation",
             {{"epsilons", s.ablation.epsilons}, {"heads", s.ablation.heads}, {"horizon", s.ablation.horizon}}},
            {"capacity", {{"heads", capacity}}},
            {"oracle", {{"heads", s.oracle_heads}}},
            {"output", s.output_dir.string()},
            {"workers", s.workers}};
}

ExperimentSpec load_experiment_spec(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return experiment_spec_from_json(j);
}

// --- occurrence table ------------------------------------------------------

std::string OccurrenceTable::group_name(const std::vector<TaskId>& group) const {
    std::string out;
    for (TaskId t : group) {
        if (!out.empty()) out += '+';
        out += t < names_.size() ? names_[t] : "T" + std::to_string(t + 1);
    }
    return out;
}

OccurrenceTable OccurrenceTable::aggregate(std::span<const RunGrouping> runs, std::vector<std::string> task_names) {
    OccurrenceTable table(std::move(task_names));
    std::map<std::vector<TaskId>, std::size_t> index;
    for (const auto& run : runs) {
        for (const auto& [model, tasks] : run.grouping.groups()) {
            std::vector<TaskId> key(tasks.begin(), tasks.end());
            auto it = index.find(key);
            if (it == index.end()) {
                index.emplace(key, table.rows_.size());
                table.rows_.push_back({key, 1, run.heads});
            } else {
                ++table.rows_[it->second].occurrences;
            }
        }
    }
    std::stable_sort(table.rows_.begin(), table.rows_.end(), [](const auto& a, const auto& b) {
        if (a.occurrences != b.occurrences) return a.occurrences > b.occurrences;
        if (a.heads_at_first_occurrence != b.heads_at_first_occurrence) {
            return a.heads_at_first_occurrence < b.heads_at_first_occurrence;
        }
        return a.group < b.group;
    });
    return table;
}

const OccurrenceRow* OccurrenceTable::find(const std::vector<TaskId>& group) const {
    for (const auto& r : rows_) {
        if (r.group == group) return &r;
    }
    return nullptr;
}

std::string OccurrenceTable::to_csv() const {
    std::string out = "group,occurrences,heads_at_first_occurrence\n";
    for (const auto& r : rows_) {
        out += group_name(r.group) + "," + std::to_string(r.occurrences) + "," +
               std::to_string(r.heads_at_first_occurrence) + "\n";
    }
    return out;
}

OccurrenceTable OccurrenceTable::from_csv(const std::string& text, std::vector<std::string> task_names) {
    OccurrenceTable table(std::move(task_names));
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "group,occurrences,heads_at_first_occurrence") {
        throw ConfigError("occurrence CSV: unexpected header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 3) throw ConfigError("occurrence CSV: bad row '" + line + "'");
        OccurrenceRow row;
        for (const auto& name : split(cells[0], '+')) {
            const auto it = std::find(table.names_.begin(), table.names_.end(), name);
            if (it == table.names_.end()) throw ConfigError("occurrence CSV: unknown task '" + name + "'");
            row.group.push_back(static_cast<TaskId>(it - table.names_.begin()));
        }
        std::sort(row.group.begin(), row.group.end());
        row.occurrences = std::stoul(cells[1]);
        row.heads_at_first_occurrence = std::stoul(cells[2]);
        table.rows_.push_back(std::move(row));
    }
    return table;
}

json OccurrenceTable::to_json() const {
    json rows = json::array();
    for (const auto& r : rows_) {
        rows.push_back({{"group", group_name(r.group)},
                        {"tasks", r.group},
                        {"occurrences", r.occurrences},
                        {"heads_at_first_occurrence", r.heads_at_first_occurrence}});
    }
    return {{"task_names", names_}, {"rows", rows}};
}

std::string describe_grouping(const Grouping& g, const std::vector<std::string>& names) {
    OccurrenceTable naming(names);
    std::string out;
    for (const auto& [model, tasks] : g.groups()) {
        if (!out.empty()) out += " | ";
        out += naming.group_name({tasks.begin(), tasks.end()});
    }
    return out;
}

// --- sweep -----------------------------------------------------------------

std::size_t SweepResult::failed() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return !r.ok; }));
}

GroupingResult run_grouping_stage(const ExperimentSpec& spec, const SynthWorld& world, std::size_t heads,
                                  std::uint64_t seed, const RecognitionHead& pretrained) {
    return train_grouping(spec.stage_config(Stage::Group, heads, seed), world, replicate_head(pretrained, heads));
}

SweepResult run_sweep(const ExperimentSpec& spec) {
    spec.validate();
    const SynthWorld world = build_world(spec.world);
    const fs::path out = spec.output_dir;

    std::vector<std::optional<RecognitionHead>> pretrained(spec.seeds.size());
    std::vector<std::string> pretrain_errors(spec.seeds.size());
    parallel_jobs(spec.seeds.size(), spec.workers, [&](std::size_t i) {
        const std::uint64_t seed = spec.seeds[i];
        try {
            const TrainConfig c = spec.stage_config(Stage::Pretrain, 1, seed);
            pretrained[i] = pretrain_universal(c, world).head;
            save_checkpoint(out / "pretrain" / ("s" + std::to_string(seed)), c, nullptr, nullptr,
                            std::span<const RecognitionHead>(&*pretrained[i], 1));
        } catch (const Error& e) {
            pretrain_errors[i] = std::string("pretrain: ") + e.what();
        }
    });

    SweepResult result;
    for (std::size_t m : spec.head_counts) {
        for (std::uint64_t seed : spec.seeds) {
            RunOutcome r;
            r.heads = m;
            r.seed = seed;
            result.runs.push_back(r);
        }
    }
    parallel_jobs(result.runs.size(), spec.workers, [&](std::size_t n) {
        RunOutcome& r = result.runs[n];
        const std::size_t si = n % spec.seeds.size();
        if (!pretrained[si]) {
            r.error = pretrain_errors[si];
            return;
        }
        try {
            const fs::path dir = out / "runs" / ("m" + std::to_string(r.heads) + "_s" + std::to_string(r.seed));
            const TrainConfig gc = spec.stage_config(Stage::Group, r.heads, r.seed);
            GroupingResult g = train_grouping(gc, world, replicate_head(*pretrained[si], r.heads));
            save_checkpoint(dir / "group", gc, &g.logits, &g.trace, g.heads);
            r.grouping = g.final_grouping();
            r.equilibrium = detect_equilibrium(g.trace, equilibrium_window(gc.iterations));
            r.changes = count_changes(g.trace, gc.iterations);
            if (!g.log.empty()) r.final_group_loss = g.log.back().group_loss;

            const TrainConfig fc = spec.stage_config(Stage::Finetune, r.heads, r.seed);
            FinetuneResult f = finetune_heads(fc, r.grouping, g.heads, world);
            save_checkpoint(dir / "finetune", fc, nullptr, nullptr, f.heads);
            r.accuracy_before = std::move(f.accuracy_before);
            r.accuracy_after = std::move(f.accuracy_after);
            r.final_heads = f.heads.size();
            r.ok = true;
        } catch (const Error& e) {
            r.error = e.what();
        }
    });

    std::vector<RunGrouping> groupings;
    for (const auto& r : result.runs) {
        if (r.ok) groupings.push_back({r.heads, r.grouping});
    }
    result.table = OccurrenceTable::aggregate(groupings, world.names());

    std::string runs_csv =
        "heads,seed,status,assignment,groups,equilibrium,changes,mean_accuracy_before,mean_accuracy_after,error\n";
    for (const auto& r : result.runs) {
        std::string error = r.error;
        std::replace(error.begin(), error.end(), '"', '\'');
        runs_csv += std::to_string(r.heads) + "," + std::to_string(r.seed) + "," + (r.ok ? "ok" : "failed") + ",";
        if (r.ok) {
            runs_csv += "\"" + r.grouping.to_string() + "\"," + describe_grouping(r.grouping, world.names()) + "," +
                        (r.equilibrium ? "true" : "false") + "," + std::to_string(r.changes) + "," +
                        fmt(mean(r.accuracy_before)) + "," + fmt(mean(r.accuracy_after)) + ",\n";
        } else {
            runs_csv += ",,,,,,\"" + error + "\"\n";
        }
    }
    write_file(out / "runs.csv", runs_csv);
    write_file(out / "occurrence.csv", result.table.to_csv());
    json occ = result.table.to_json();
    occ["runs"] = result.runs.size();
    occ["failed_runs"] = result.failed();
    write_file(out / "occurrence.json", occ.dump(2) + "\n");
    return result;
}

// --- epsilon ablation ------------------------------------------------------

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
    std::string out = "epsilon,mean_changes,changes_per_seed\n";
    for (const auto& r : rows) {
        std::string per;
        for (std::size_t c : r.changes) per += (per.empty() ? "" : " ") + std::to_string(c);
        out += fmt(r.epsilon, 4) + "," + fmt(r.mean_changes, 4) + "," + per + "\n";
    }
    return out;
}

std::vector<AblationRow> run_epsilon_ablation(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.ablation.epsilons.size() < 2) throw ConfigError("the epsilon ablation needs at least 2 epsilon values");
    if (spec.seeds.size() < 3) throw ConfigError("the epsilon ablation needs at least 3 seeds");
    const SynthWorld world = build_world(spec.world);
    const auto pretrained = pretrain_all(spec, world, spec.seeds);

    const std::size_t ne = spec.ablation.epsilons.size();
    const std::size_t ns = spec.seeds.size();
    std::vector<std::size_t> changes(ne * ns, 0);
    parallel_jobs(ne * ns, spec.workers, [&](std::size_t n) {
        const std::uint64_t seed = spec.seeds[n % ns];
        TrainConfig c = spec.stage_config(Stage::Group, spec.ablation.heads, seed);
        c.epsilon = spec.ablation.epsilons[n / ns];
        c.iterations = spec.ablation.horizon;
        const GroupingResult g = train_grouping(c, world, replicate_head(pretrained.at(seed), spec.ablation.heads));
        changes[n] = count_changes(g.trace, spec.ablation.horizon);
    });

    std::vector<AblationRow> rows;
    for (std::size_t e = 0; e < ne; ++e) {
        AblationRow row;
        row.epsilon = spec.ablation.epsilons[e];
        row.changes.assign(changes.begin() + static_cast<std::ptrdiff_t>(e * ns),
                           changes.begin() + static_cast<std::ptrdiff_t>((e + 1) * ns));
        double s = 0.0;
        for (std::size_t c : row.changes) s += static_cast<double>(c);
        row.mean_changes = s / static_cast<double>(ns);
        rows.push_back(std::move(row));
    }
    write_file(fs::path(spec.output_dir) / "ablation.csv", ablation_to_csv(rows));
    return rows;
}

// --- capacity --------------------------------------------------------------

std::string capacity_to_csv(const CapacityResult& result, const std::vector<std::string>& names) {
    OccurrenceTable naming(names);
    std::string out = "seed,head,embed,hidden,parameters,assigned_tasks,charset_size,final_parameters\n";
    for (const auto& r : result.rows) {
        out += std::to_string(r.seed) + "," + std::to_string(r.head) + "," + std::to_string(r.shape.embed) + "," +
               std::to_string(r.shape.hidden) + "," + std::to_string(r.parameters) + "," +
               naming.group_name(r.tasks) + "," + std::to_string(r.charset_size) + "," +
               std::to_string(r.pruned_parameters) + "\n";
    }
    return out;
}

CapacityResult run_capacity_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const SynthWorld world = build_world(spec.world);
    const std::size_t m = spec.capacity_heads.size();
    if (m != world.tasks()) {
        throw ConfigError("the capacity experiment needs one head per task (" + std::to_string(world.tasks()) +
                          " tasks, " + std::to_string(m) + " heads)");
    }
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) {
            if (spec.capacity_heads[a] == spec.capacity_heads[b]) {
                throw ConfigError("capacity head configs must be pairwise distinct");
            }
        }
    }

    const std::size_t d = world.feature_dim();
    const std::size_t universal = world.universal().size();
    ModelId largest_head = 0;
    for (ModelId j = 1; j < m; ++j) {
        if (RecognitionHead::parameter_count(spec.capacity_heads[j], universal, d) >
            RecognitionHead::parameter_count(spec.capacity_heads[largest_head], universal, d)) {
            largest_head = j;
        }
    }
    TaskId largest_task = 0;
    for (TaskId t = 1; t < world.tasks(); ++t) {
        if (world.charsets()[t].symbols.size() > world.charsets()[largest_task].symbols.size()) largest_task = t;
    }

    std::vector<Grouping> groupings(spec.seeds.size());
    parallel_jobs(spec.seeds.size(), spec.workers, [&](std::size_t i) {
        TrainConfig c = spec.stage_config(Stage::Group, m, spec.seeds[i]);
        c.head_configs = spec.capacity_heads;
        groupings[i] = train_grouping(c, world, fresh_heads(c, world)).final_grouping();
    });

    CapacityResult result;
    result.seeds = spec.seeds.size();
    for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
        if (groupings[i].model_of(largest_task) == largest_head) ++result.largest_matches;
        for (ModelId j = 0; j < m; ++j) {
            CapacityRow row;
            row.seed = spec.seeds[i];
            row.head = j;
            row.shape = spec.capacity_heads[j];
            row.parameters = RecognitionHead::parameter_count(row.shape, universal, d);
            row.tasks = groupings[i].tasks_of(j);
            if (!row.tasks.empty()) {
                row.charset_size = group_charset(world, row.tasks).size();
                row.pruned_parameters = RecognitionHead::parameter_count(row.shape, row.charset_size, d);
            }
            result.rows.push_back(std::move(row));
        }
    }
    write_file(fs::path(spec.output_dir) / "capacity.csv", capacity_to_csv(result, world.names()));
    return result;
}

// --- oracle ----------------------------------------------------------------

std::vector<OracleEntry> brute_force_oracle(const SynthWorld& world, std::size_t m, const TrainConfig& config,
                                            const RecognitionHead& pretrained, std::size_t workers) {
    const std::size_t t = world.tasks();
    if (m == 0) throw ConfigError("the oracle needs at least one head");
    std::size_t total = 1;
    for (std::size_t i = 0; i < t; ++i) {
        total *= m;
        if (total > kOracleLimit) {
            throw ConfigError("oracle refuses m^t = " + std::to_string(m) + "^" + std::to_string(t) +
                              " assignments (limit " + std::to_string(kOracleLimit) + ")");
        }
    }
    TrainConfig c = config;
    c.stage = Stage::Group;
    c.epsilon = 0.0;
    c.head_configs.assign(m, pretrained.shape());
    if (c.mu.size() != m) c.mu.clear();
    const auto validation = validation_set(world, c.validation_words);

    std::vector<OracleEntry> entries(total);
    parallel_jobs(total, workers, [&](std::size_t n) {
        std::vector<ModelId> assign(t);
        std::size_t rest = n;
        for (std::size_t i = t; i-- > 0;) {
            assign[i] = rest % m;
            rest /= m;
        }
        OracleEntry& e = entries[n];
        e.grouping = Grouping(std::move(assign));
        const auto heads = train_fixed_grouping(c, world, replicate_head(pretrained, m), e.grouping);
        e.task_accuracy = grouping_accuracy(heads, e.grouping, world, validation, true);
        e.mean_accuracy = mean(e.task_accuracy);
    });
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.mean_accuracy > b.mean_accuracy; });
    return entries;
}

std::string oracle_to_csv(const std::vector<OracleEntry>& entries, const std::vector<std::string>& names) {
    std::string out = "rank,assignment,groups,mean_accuracy";
    for (const auto& n : names) out += ",accuracy_" + n;
    out += "\n";
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto& e = entries[k];
        out += std::to_string(k + 1) + ",\"" + e.grouping.to_string() + "\"," + describe_grouping(e.grouping, names) +
               "," + fmt(e.mean_accuracy);
        for (double a : e.task_accuracy) out += "," + fmt(a);
        out += "\n";
    }
    return out;
}

std::vector<OracleEntry> run_oracle(const ExperimentSpec& spec) {
    spec.validate();
    const SynthWorld world = build_world(spec.world);
    const std::uint64_t seed = spec.seeds.front();
    const RecognitionHead pretrained =
        pretrain_universal(spec.stage_config(Stage::Pretrain, 1, seed), world).head;
    auto entries = brute_force_oracle(world, spec.oracle_heads, spec.stage_config(Stage::Group, spec.oracle_heads, seed),
                                      pretrained, spec.workers);
    write_file(fs::path(spec.output_dir) / "oracle.csv", oracle_to_csv(entries, world.names()));
    return entries;
}

}  // namespace taskgroup
