#include "taskgroup/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include "taskgroup/errors.hpp"
#include "taskgroup/taskprob.hpp"

namespace taskgroup {

using diff::Graph;
using diff::Tensor;
using diff::Var;
namespace ops = diff::ops;

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kFinetuneStream = 3;
constexpr std::uint64_t kInitStream = 4;
constexpr std::uint64_t kClassifierStream = 5;
constexpr std::uint64_t kValidationStream = 0x76616c;

}  // namespace

const char* to_string(Stage stage) {
    switch (stage) {
        case Stage::Pretrain: return "pretrain";
        case Stage::Group: return "group";
        case Stage::Finetune: return "finetune";
    }
    return "?";
}

Stage stage_from_string(const std::string& name) {
    if (name == "pretrain") return Stage::Pretrain;
    if (name == "group") return Stage::Group;
    if (name == "finetune") return Stage::Finetune;
    throw ConfigError("unknown stage '" + name + "'");
}

std::vector<double> TrainConfig::mu_or_default() const {
    return mu.empty() ? std::vector<double>(models(), 1.0) : mu;
}

void TrainConfig::validate() const {
    if (iterations == 0 && stage != Stage::Pretrain) throw ConfigError("iterations must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(lambda_group >= 0.0) || !(lambda_task >= 0.0)) throw ConfigError("loss weights must be >= 0");
    if (head_configs.empty()) throw ConfigError("at least one head config is required");
    if (!mu.empty() && mu.size() != head_configs.size()) {
        throw ConfigError("mu needs one value per head");
    }
    for (double v : mu) {
        if (!(v >= 0.0)) throw ConfigError("mu values must be >= 0");
    }
    if (!(lr > 0.0) || !(grouping_lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
    for (double r : ratios) {
        if (!(r >= 0.0)) throw ConfigError("ratios must be >= 0");
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : c.head_configs) heads.push_back({{"embed", h.embed}, {"hidden", h.hidden}});
    return {{"stage", to_string(c.stage)},
            {"iterations", c.iterations},
            {"batch_size", c.batch_size},
            {"epsilon", c.epsilon},
            {"tau", c.tau},
            {"lambda_group", c.lambda_group},
            {"lambda_task", c.lambda_task},
            {"mu", c.mu_or_default()},
            {"head_configs", heads},
            {"lr", c.lr},
            {"grouping_lr", c.grouping_lr},
            {"seed", c.seed},
            {"eval_every", c.eval_every},
            {"ratios", c.ratios},
            {"validation_words", c.validation_words}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    if (j.contains("stage")) c.stage = stage_from_string(j.at("stage").get<std::string>());
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.tau = j.value("tau", c.tau);
    c.lambda_group = j.value("lambda_group", c.lambda_group);
    c.lambda_task = j.value("lambda_task", c.lambda_task);
    c.mu = j.value("mu", c.mu);
    if (j.contains("head_configs")) {
        c.head_configs.clear();
        for (const auto& h : j.at("head_configs")) {
            if (h.is_array()) {
                c.head_configs.push_back({h.at(0).get<std::size_t>(), h.at(1).get<std::size_t>()});
            } else {
                c.head_configs.push_back({h.at("embed").get<std::size_t>(), h.at("hidden").get<std::size_t>()});
            }
        }
    }
    c.lr = j.value("lr", c.lr);
    c.grouping_lr = j.value("grouping_lr", c.grouping_lr);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.ratios = j.value("ratios", c.ratios);
    c.validation_words = j.value("validation_words", c.validation_words);
    return c;
}

// --- trace -----------------------------------------------------------------

void AssignmentTrace::record(std::size_t iteration, Grouping grouping) {
    if (!entries_.empty() && iteration <= entries_.back().iteration) {
        throw ContractError("trace iterations must be strictly increasing");
    }
    entries_.push_back({iteration, std::move(grouping)});
}

std::string AssignmentTrace::to_csv() const {
    std::string out = "iteration,assignment\n";
    for (const auto& e : entries_) out += std::to_string(e.iteration) + ",\"" + e.grouping.to_string() + "\"\n";
    return out;
}

AssignmentTrace AssignmentTrace::from_csv(const std::string& text) {
    AssignmentTrace trace;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line != "iteration,assignment") throw ConfigError("trace.csv has an unexpected header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("bad trace line '" + line + "'");
        std::string assignment = line.substr(comma + 1);
        if (assignment.size() >= 2 && assignment.front() == '"' && assignment.back() == '"') {
            assignment = assignment.substr(1, assignment.size() - 2);
        }
        trace.record(std::stoul(line.substr(0, comma)), Grouping::parse(assignment));
    }
    return trace;
}

std::size_t count_changes(const AssignmentTrace& trace, std::size_t horizon) {
    if (trace.empty()) throw ContractError("count_changes on an empty trace");
    const auto& e = trace.entries();
    std::size_t changes = 0;
    for (std::size_t k = 1; k < e.size() && e[k].iteration <= horizon; ++k) {
        if (!(e[k].grouping == e[k - 1].grouping)) ++changes;
    }
    return changes;
}

bool detect_equilibrium(const AssignmentTrace& trace, std::size_t window) {
    if (trace.empty()) throw ContractError("detect_equilibrium on an empty trace");
    const auto& e = trace.entries();
    const std::size_t last = e.back().iteration;
    if (window > last - e.front().iteration) return false;
    const std::size_t start = last - window;
    for (std::size_t k = 1; k < e.size(); ++k) {
        if (e[k].iteration > start && !(e[k].grouping == e[k - 1].grouping)) return false;
    }
    return true;
}

// --- helpers ---------------------------------------------------------------

namespace {

std::vector<double> effective_ratios(const TrainConfig& config, const SynthWorld& world) {
    if (config.ratios.empty()) return world.ratios();
    if (config.ratios.size() != world.tasks()) {
        throw ConfigError("config lists " + std::to_string(config.ratios.size()) + " ratios for " +
                          std::to_string(world.tasks()) + " tasks");
    }
    return config.ratios;
}

void require_stage(const TrainConfig& config, Stage stage) {
    config.validate();
    if (config.stage != stage) {
        throw ConfigError(std::string("expected a ") + to_string(stage) + " config, got " +
                          to_string(config.stage));
    }
}

std::vector<diff::NamedParam> all_parameters(std::vector<RecognitionHead>& heads) {
    std::vector<diff::NamedParam> out;
    for (auto& h : heads) {
        auto p = h.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

}  // namespace

std::vector<int> group_charset(const SynthWorld& world, std::span<const TaskId> tasks) {
    std::set<int> all;
    for (TaskId t : tasks) {
        const auto& s = world.charsets().at(t).symbols;
        all.insert(s.begin(), s.end());
    }
    return {all.begin(), all.end()};
}

std::vector<std::vector<WordInstance>> validation_set(const SynthWorld& world, std::size_t per_task) {
    Rng rng(derive_seed(world.seed(), {kValidationStream, per_task}));
    std::vector<std::vector<WordInstance>> out(world.tasks());
    for (TaskId t = 0; t < world.tasks(); ++t) {
        for (std::size_t k = 0; k < per_task; ++k) out[t].push_back(sample_word(world, t, world.lengths(), rng));
    }
    return out;
}

// --- stage 1 ---------------------------------------------------------------

PretrainResult pretrain_universal(const TrainConfig& config, const SynthWorld& world) {
    require_stage(config, Stage::Pretrain);
    Rng init_rng(derive_seed(config.seed, {kInitStream}));
    Rng data_rng(derive_seed(config.seed, {kDataStream}));
    std::vector<RecognitionHead> heads;
    heads.emplace_back(0, config.head_configs.front(), world.feature_dim(), world.universal(), init_rng);
    const auto ratios = effective_ratios(config, world);
    diff::Adam opt({.lr = config.lr});
    const auto params = all_parameters(heads);

    PretrainResult result{heads.front(), {}};
    for (std::size_t it = 1; it <= config.iterations; ++it) {
        const auto batch = sample_batch(world, ratios, config.batch_size, data_rng);
        Graph g;
        const PackedWords packed = pack_words(heads[0], batch);
        const Var loss = ops::mean(seq_losses(head_forward(bind(g, heads[0]), packed), packed));
        const double value = loss.value().item();
        if (!std::isfinite(value)) {
            throw NumericError("pretraining diverged at iteration " + std::to_string(it), "loss");
        }
        result.losses.push_back(value);
        opt.step(params, g.backward(loss));
    }
    result.head = std::move(heads.front());
    return result;
}

std::vector<RecognitionHead> replicate_head(const RecognitionHead& pretrained, std::size_t m) {
    std::vector<RecognitionHead> heads(m, pretrained);
    for (std::size_t j = 0; j < m; ++j) heads[j].set_id(j);
    return heads;
}

std::vector<RecognitionHead> fresh_heads(const TrainConfig& config, const SynthWorld& world) {
    std::vector<RecognitionHead> heads;
    for (std::size_t j = 0; j < config.models(); ++j) {
        Rng rng(derive_seed(config.seed, {kInitStream, j}));
        heads.emplace_back(j, config.head_configs[j], world.feature_dim(), world.universal(), rng);
    }
    return heads;
}

// --- stage 2 ---------------------------------------------------------------

GroupingResult train_grouping(const TrainConfig& config, const SynthWorld& world,
                              std::vector<RecognitionHead> heads) {
    require_stage(config, Stage::Group);
    const std::size_t m = config.models();
    const std::size_t t = world.tasks();
    if (heads.size() != m) {
        throw ConfigError("train_grouping got " + std::to_string(heads.size()) + " heads for " +
                          std::to_string(m) + " head configs");
    }
    const auto ratios = effective_ratios(config, world);
    const auto mu = config.mu_or_default();
    Rng data_rng(derive_seed(config.seed, {kDataStream}));
    Rng noise_rng(derive_seed(config.seed, {kNoiseStream}));

    GroupingResult result{AssignmentLogits(t, m), {}, {}, {}};
    diff::Adam head_opt({.lr = config.lr});
    diff::Adam logit_opt({.lr = config.grouping_lr});
    const auto head_params = all_parameters(heads);
    const diff::NamedParam logit_param{"R_TM", &result.logits.matrix()};

    std::optional<TaskClassifier> classifier;
    std::optional<diff::Adam> classifier_opt;
    std::vector<diff::NamedParam> classifier_params;
    if (config.lambda_task > 0.0) {
        Rng rng(derive_seed(config.seed, {kClassifierStream}));
        classifier.emplace(world.feature_dim(), 32, t, rng);
        classifier_opt.emplace(diff::AdamOptions{.lr = config.lr});
        classifier_params = classifier->parameters();
    }

    for (std::size_t it = 1; it <= config.iterations; ++it) {
        const auto batch = sample_batch(world, ratios, config.batch_size, data_rng);
        Graph g;
        const ProbMatrix p_wt = as_word_task(g, word_task_from_ground_truth(batch, world.charsets()));
        const Var r_tm = g.leaf(result.logits.matrix());
        const ProbMatrix p_tm = gumbel_softmax_rows(r_tm, config.tau, &noise_rng, false);
        const ProbMatrix p_wm = word_model_probs(p_wt, p_tm);

        std::vector<Var> columns;
        columns.reserve(m);
        for (const auto& head : heads) {
            const PackedWords packed = pack_words(head, batch);
            columns.push_back(seq_losses(head_forward(bind(g, head), packed), packed));
        }
        const Var losses = ops::concat_columns(columns);
        const Var integrated = integrated_loss(losses, p_wm, config.epsilon);
        Var total = integrated;
        double group_value = 0.0;
        if (config.lambda_group > 0.0) {
            const Var gl = grouping_loss(p_tm, mu);
            group_value = gl.value().item();
            total = ops::add(total, ops::scale(gl, config.lambda_group));
        }
        double task_value = 0.0;
        if (classifier) {
            std::vector<TaskId> gt;
            for (const auto& w : batch) gt.push_back(*w.gt_task);
            const Var tl = task_loss(classifier->classify(g, batch), gt);
            task_value = tl.value().item();
            total = ops::add(total, ops::scale(tl, config.lambda_task));
        }

        const Tensor& pw = p_wm.probs.value();
        const auto [lo, hi] = std::minmax_element(pw.values().begin(), pw.values().end());
        const double min_weight = *lo + config.epsilon;
        const double max_weight = *hi + config.epsilon;
        if (min_weight < config.epsilon - 1e-12 || max_weight > 1.0 + config.epsilon + 1e-12) {
            throw ContractError("effective (word, head) weight left [epsilon, 1 + epsilon]");
        }

        const double total_value = total.value().item();
        if (!std::isfinite(total_value)) {
            std::string last = result.trace.empty()
                                   ? std::string("none")
                                   : std::to_string(result.trace.back().iteration) + " " +
                                         result.trace.back().grouping.to_string();
            throw NumericError("grouping stage diverged at iteration " + std::to_string(it) +
                                   "; last trace entry: " + last,
                               "loss");
        }

        if (it % config.eval_every == 0) {
            IterationLog entry;
            entry.iteration = it;
            entry.total = total_value;
            entry.integrated = integrated.value().item();
            entry.group_loss = group_value;
            entry.task_loss = task_value;
            entry.min_weight = min_weight;
            entry.max_weight = max_weight;
            const Tensor& lv = losses.value();
            for (std::size_t i = 0; i < lv.size(); ++i) {
                entry.integrated0 += pw[i] * lv[i];
                entry.loss_sum += lv[i];
            }
            result.log.push_back(entry);
        }

        const diff::Gradients grads = g.backward(total);
        head_opt.step(head_params, grads);
        logit_opt.step(std::span<const diff::NamedParam>(&logit_param, 1), grads);
        if (classifier) classifier_opt->step(classifier_params, grads);
        result.logits.check_finite();

        if (it % config.eval_every == 0) result.trace.record(it, hard_assignment(result.logits));
    }
    result.heads = std::move(heads);
    return result;
}

std::vector<RecognitionHead> train_fixed_grouping(const TrainConfig& config, const SynthWorld& world,
                                                  std::vector<RecognitionHead> heads,
                                                  const Grouping& grouping) {
    require_stage(config, Stage::Group);
    if (grouping.tasks() != world.tasks()) throw ConfigError("grouping does not cover every task");
    for (TaskId t = 0; t < grouping.tasks(); ++t) {
        if (grouping.model_of(t) >= heads.size()) throw ConfigError("grouping names a missing head");
    }
    const auto ratios = effective_ratios(config, world);
    Rng data_rng(derive_seed(config.seed, {kDataStream}));
    diff::Adam opt({.lr = config.lr});
    const auto params = all_parameters(heads);

    for (std::size_t it = 1; it <= config.iterations; ++it) {
        const auto batch = sample_batch(world, ratios, config.batch_size, data_rng);
        std::vector<std::vector<WordInstance>> routed(heads.size());
        for (const auto& w : batch) routed[grouping.model_of(*w.gt_task)].push_back(w);

        Graph g;
        std::vector<Var> parts;
        for (std::size_t j = 0; j < heads.size(); ++j) {
            const HeadVars vars = bind(g, heads[j]);
            if (routed[j].empty()) continue;
            const PackedWords packed = pack_words(heads[j], routed[j]);
            parts.push_back(ops::sum(seq_losses(head_forward(vars, packed), packed)));
        }
        Var total = parts.front();
        for (std::size_t k = 1; k < parts.size(); ++k) total = ops::add(total, parts[k]);
        if (!std::isfinite(total.value().item())) {
            throw NumericError("fixed-grouping training diverged at iteration " + std::to_string(it), "loss");
        }
        opt.step(params, g.backward(total));
    }
    return heads;
}

// --- stage 3 ---------------------------------------------------------------

std::vector<double> grouping_accuracy(std::span<const RecognitionHead> heads, const Grouping& grouping,
                                      const SynthWorld& world,
                                      const std::vector<std::vector<WordInstance>>& validation,
                                      bool pruned) {
    std::vector<double> acc(world.tasks(), 0.0);
    for (const auto& [model, task_set] : grouping.groups()) {
        const std::vector<TaskId> tasks(task_set.begin(), task_set.end());
        const RecognitionHead& base = heads[model];
        const RecognitionHead head = pruned ? prune_head(base, group_charset(world, tasks)) : base;
        for (TaskId t : tasks) acc[t] = char_accuracy(head, validation[t]);
    }
    return acc;
}

FinetuneResult finetune_heads(const TrainConfig& config, const Grouping& grouping,
                              std::span<const RecognitionHead> heads, const SynthWorld& world) {
    require_stage(config, Stage::Finetune);
    if (grouping.tasks() != world.tasks()) throw ConfigError("grouping does not cover every task");
    for (TaskId t = 0; t < grouping.tasks(); ++t) {
        if (grouping.model_of(t) >= heads.size()) throw ConfigError("grouping names a missing head");
    }
    const auto validation = validation_set(world, config.validation_words);
    const auto base_ratios = effective_ratios(config, world);

    FinetuneResult result;
    result.grouping = grouping;
    result.accuracy_before = grouping_accuracy(heads, grouping, world, validation, false);
    result.accuracy_after.assign(world.tasks(), 0.0);

    const auto groups = grouping.groups();
    std::vector<std::pair<ModelId, std::vector<TaskId>>> jobs;
    for (const auto& [model, task_set] : groups) jobs.emplace_back(model, std::vector<TaskId>(task_set.begin(), task_set.end()));

    std::vector<std::optional<RecognitionHead>> trained(jobs.size());
    std::vector<std::exception_ptr> failures(jobs.size());
    const auto job_count = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t n = 0; n < job_count; ++n) {
        try {
            const auto& [model, tasks] = jobs[static_cast<std::size_t>(n)];
            std::vector<RecognitionHead> head;
            head.push_back(prune_head(heads[model], group_charset(world, tasks)));
            std::vector<double> ratios(world.tasks(), 0.0);
            for (TaskId t : tasks) ratios[t] = base_ratios[t];
            Rng rng(derive_seed(config.seed, {kFinetuneStream, model}));
            diff::Adam opt({.lr = config.lr});
            const auto params = all_parameters(head);
            for (std::size_t it = 1; it <= config.iterations; ++it) {
                const auto batch = sample_batch(world, ratios, config.batch_size, rng);
                Graph g;
                const PackedWords packed = pack_words(head[0], batch);
                const Var loss = ops::mean(seq_losses(head_forward(bind(g, head[0]), packed), packed));
                if (!std::isfinite(loss.value().item())) {
                    throw NumericError("finetuning head " + std::to_string(model) + " diverged", "loss");
                }
                opt.step(params, g.backward(loss));
            }
            trained[static_cast<std::size_t>(n)] = std::move(head[0]);
        } catch (...) {
            failures[static_cast<std::size_t>(n)] = std::current_exception();
        }
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }
    for (std::size_t n = 0; n < jobs.size(); ++n) {
        for (TaskId t : jobs[n].second) result.accuracy_after[t] = char_accuracy(*trained[n], validation[t]);
        result.heads.push_back(std::move(*trained[n]));
    }
    return result;
}

// --- checkpoints -----------------------------------------------------------

std::string logits_to_json(const AssignmentLogits& logits) {
    nlohmann::json rows = nlohmann::json::array();
    const Tensor& m = logits.matrix();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row_span(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows.dump() + "\n";
}

AssignmentLogits logits_from_json(const std::string& text) {
    const auto rows = nlohmann::json::parse(text);
    if (!rows.is_array() || rows.empty()) throw ConfigError("logits.json must be a non-empty array of rows");
    const std::size_t cols = rows[0].size();
    std::vector<double> values;
    for (const auto& row : rows) {
        if (row.size() != cols) throw ConfigError("logits.json rows have different lengths");
        for (const auto& v : row) values.push_back(v.get<double>());
    }
    return AssignmentLogits(Tensor(rows.size(), cols, std::move(values)));
}

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& config,
                     const AssignmentLogits* logits, const AssignmentTrace* trace,
                     std::span<const RecognitionHead> heads) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "config.json") << to_json(config).dump(2) << '\n';
    if (logits != nullptr) std::ofstream(dir / "logits.json") << logits_to_json(*logits);
    if (trace != nullptr) std::ofstream(dir / "trace.csv") << trace->to_csv();
    for (const auto& h : heads) save_head(h, dir / "heads");
}

std::vector<RecognitionHead> load_heads(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> manifests;
    if (std::filesystem::exists(dir / "heads")) {
        for (const auto& entry : std::filesystem::directory_iterator(dir / "heads")) {
            const auto name = entry.path().filename().string();
            if (name.ends_with(".manifest.json")) manifests.push_back(entry.path());
        }
    }
    std::vector<RecognitionHead> heads;
    for (const auto& p : manifests) heads.push_back(load_head(p));
    std::sort(heads.begin(), heads.end(), [](const auto& a, const auto& b) { return a.id() < b.id(); });
    return heads;
}

}  // namespace taskgroup
