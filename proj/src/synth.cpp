#include "taskgroup/synth.hpp"

#include <algorithm>
#include <cmath>

#include "taskgroup/errors.hpp"

namespace taskgroup {

using diff::Tensor;

std::span<const double> SynthWorld::prototype(int code) const {
    if (code < 0 || static_cast<std::size_t>(code) >= prototypes_.rows()) {
        throw ContractError("no prototype for character code " + std::to_string(code));
    }
    return prototypes_.row_span(static_cast<std::size_t>(code));
}

SynthWorld SynthWorld::with_sigma(TaskId t, double sigma) const {
    if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
    SynthWorld copy = *this;
    copy.sigmas_.at(t) = sigma;
    return copy;
}

nlohmann::json SynthWorld::to_json() const {
    nlohmann::json j;
    j["feature_dim"] = feature_dim_;
    j["seed"] = seed_;
    j["lengths"] = {lengths_.min, lengths_.max};
    j["tasks"] = nlohmann::json::array();
    for (TaskId t = 0; t < tasks(); ++t) {
        j["tasks"].push_back({{"name", names_[t]},
                              {"sigma", sigmas_[t]},
                              {"ratio", ratios_[t]},
                              {"charset", charsets_[t].symbols}});
    }
    nlohmann::json protos = nlohmann::json::object();
    for (int code : universal_) {
        const auto p = prototype(code);
        protos[std::to_string(code)] = std::vector<double>(p.begin(), p.end());
    }
    j["prototypes"] = std::move(protos);
    return j;
}

namespace {

double pair_overlap(const WorldSpec& spec, TaskId i, TaskId j) {
    const auto& a = spec.scripts[i].overlap;
    const auto& b = spec.scripts[j].overlap;
    const auto ia = a.find(j);
    const auto jb = b.find(i);
    const bool has_a = ia != a.end();
    const bool has_b = jb != b.end();
    if (has_a && has_b && ia->second != jb->second) {
        throw ConfigError("overlap between " + spec.scripts[i].name + " and " + spec.scripts[j].name +
                          " is specified inconsistently");
    }
    const double o = has_a ? ia->second : (has_b ? jb->second : 0.0);
    if (!(o >= 0.0 && o <= 1.0)) {
        throw ConfigError("overlap between " + spec.scripts[i].name + " and " + spec.scripts[j].name +
                          " must lie in [0, 1]");
    }
    return o;
}

}  // namespace

SynthWorld build_world(const WorldSpec& spec) {
    const std::size_t t = spec.scripts.size();
    if (t == 0) throw ConfigError("world needs at least one script");
    if (spec.feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
    if (spec.lengths.min < 1 || spec.lengths.max < spec.lengths.min) {
        throw ConfigError("invalid word length range");
    }
    for (const auto& s : spec.scripts) {
        if (s.charset_size == 0) throw ConfigError("script " + s.name + " has an empty charset");
        if (s.sigma < 0.0) throw ConfigError("script " + s.name + " has negative sigma");
        if (!(s.sampling_ratio > 0.0)) throw ConfigError("script " + s.name + " needs a positive ratio");
        for (const auto& [other, _] : s.overlap) {
            if (other >= t) throw ConfigError("script " + s.name + " overlaps unknown task " + std::to_string(other));
        }
    }

    std::vector<std::vector<std::size_t>> shared(t, std::vector<std::size_t>(t, 0));
    std::vector<std::size_t> committed(t, 0);
    for (TaskId i = 0; i < t; ++i) {
        for (TaskId j = i + 1; j < t; ++j) {
            const double o = pair_overlap(spec, i, j);
            const auto smaller = std::min(spec.scripts[i].charset_size, spec.scripts[j].charset_size);
            const auto n = static_cast<std::size_t>(std::lround(o * static_cast<double>(smaller)));
            shared[i][j] = shared[j][i] = n;
            committed[i] += n;
            committed[j] += n;
            for (TaskId k : {i, j}) {
                if (committed[k] > spec.scripts[k].charset_size) {
                    throw ConfigError("overlap (" + spec.scripts[i].name + ", " + spec.scripts[j].name +
                                      ") pushes shared symbols of " + spec.scripts[k].name + " to " +
                                      std::to_string(committed[k]) + " > charset size " +
                                      std::to_string(spec.scripts[k].charset_size));
                }
            }
        }
    }

    SynthWorld world;
    world.feature_dim_ = spec.feature_dim;
    world.seed_ = spec.seed;
    world.lengths_ = spec.lengths;
    world.charsets_.resize(t);
    int next = 0;
    for (TaskId i = 0; i < t; ++i) {
        world.charsets_[i].task = i;
        for (TaskId j = i + 1; j < t; ++j) {
            for (std::size_t n = 0; n < shared[i][j]; ++n, ++next) {
                world.charsets_[i].symbols.push_back(next);
                world.charsets_[j].symbols.push_back(next);
            }
        }
        const std::size_t fresh = spec.scripts[i].charset_size - committed[i];
        for (std::size_t n = 0; n < fresh; ++n) world.charsets_[i].symbols.push_back(next++);
    }
    for (auto& c : world.charsets_) {
        std::sort(c.symbols.begin(), c.symbols.end());
        c.validate();
    }
    world.universal_ = universal_charset(world.charsets_);
    for (const auto& s : spec.scripts) {
        world.names_.push_back(s.name);
        world.sigmas_.push_back(s.sigma);
        world.ratios_.push_back(s.sampling_ratio);
    }

    Rng rng(derive_seed(spec.seed, {0x70726f746fULL}));
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto codes = static_cast<std::size_t>(next);
    world.prototypes_ = Tensor(codes, spec.feature_dim);
    for (std::size_t c = 0; c < codes; ++c) {
        for (;;) {
            auto row = world.prototypes_.row_span(c);
            double norm = 0.0;
            for (double& v : row) {
                v = normal(rng);
                norm += v * v;
            }
            norm = std::sqrt(norm);
            if (norm < 1e-9) continue;
            for (double& v : row) v /= norm;
            bool distinct = true;
            for (std::size_t prev = 0; prev < c && distinct; ++prev) {
                distinct = !std::equal(row.begin(), row.end(), world.prototypes_.row_span(prev).begin());
            }
            if (distinct) break;
        }
    }
    return world;
}

WordInstance sample_word(const SynthWorld& world, TaskId task, LengthRange lengths, Rng& rng) {
    if (task >= world.tasks()) throw ContractError("sample_word: unknown task " + std::to_string(task));
    if (lengths.min < 1 || lengths.max < lengths.min) throw ContractError("sample_word: invalid length range");
    const auto& symbols = world.charsets()[task].symbols;
    std::uniform_int_distribution<std::size_t> length_dist(lengths.min, lengths.max);
    std::uniform_int_distribution<std::size_t> symbol_dist(0, symbols.size() - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double sigma = world.sigma(task);

    WordInstance word;
    const std::size_t s = length_dist(rng);
    word.features = Tensor(s, world.feature_dim());
    word.labels.reserve(s);
    word.gt_task = task;
    for (std::size_t l = 0; l < s; ++l) {
        const int code = symbols[symbol_dist(rng)];
        word.labels.push_back(code);
        const auto proto = world.prototype(code);
        auto row = word.features.row_span(l);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = proto[c];
            if (sigma > 0.0) row[c] += sigma * noise(rng);
        }
    }
    return word;
}

std::vector<WordInstance> sample_batch(const SynthWorld& world, std::span<const double> ratios,
                                       std::size_t batch_size, Rng& rng) {
    if (ratios.size() != world.tasks()) {
        throw ContractError("sample_batch: " + std::to_string(ratios.size()) + " ratios for " +
                            std::to_string(world.tasks()) + " tasks");
    }
    for (double r : ratios) {
        if (!(r >= 0.0)) throw ContractError("sample_batch: ratios must be non-negative");
    }
    if (std::all_of(ratios.begin(), ratios.end(), [](double r) { return r == 0.0; })) {
        throw ContractError("sample_batch: at least one ratio must be positive");
    }
    std::discrete_distribution<std::size_t> pick(ratios.begin(), ratios.end());
    std::vector<WordInstance> batch;
    batch.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) {
        const TaskId task = pick(rng);
        batch.push_back(sample_word(world, task, world.lengths(), rng));
    }
    return batch;
}

WorldSpec w3_world_spec(std::uint64_t seed) {
    WorldSpec spec;
    spec.feature_dim = 16;
    spec.seed = seed;
    spec.lengths = {1, 8};
    spec.scripts = {
        {"T1", 20, {{1, 0.9}}, 0.3, 1.0},
        {"T2", 20, {}, 0.3, 1.0},
        {"T3", 40, {}, 0.3, 1.0},
    };
    return spec;
}

WorldSpec world_spec_from_json(const nlohmann::json& j) {
    WorldSpec spec;
    spec.feature_dim = j.value("feature_dim", std::size_t{16});
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("lengths")) {
        const auto& l = j.at("lengths");
        spec.lengths = {l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>()};
    }
    const auto& scripts = j.at("scripts");
    for (std::size_t i = 0; i < scripts.size(); ++i) {
        const auto& s = scripts[i];
        ScriptSpec script;
        script.name = s.value("name", "T" + std::to_string(i + 1));
        script.charset_size = s.at("charset_size").get<std::size_t>();
        script.sigma = s.value("sigma", 0.3);
        script.sampling_ratio = s.value("ratio", 1.0);
        if (s.contains("overlap")) {
            for (const auto& [key, value] : s.at("overlap").items()) {
                script.overlap[std::stoul(key)] = value.get<double>();
            }
        }
        spec.scripts.push_back(std::move(script));
    }
    return spec;
}

nlohmann::json world_spec_to_json(const WorldSpec& spec) {
    nlohmann::json j;
    j["feature_dim"] = spec.feature_dim;
    j["seed"] = spec.seed;
    j["lengths"] = {spec.lengths.min, spec.lengths.max};
    j["scripts"] = nlohmann::json::array();
    for (const auto& s : spec.scripts) {
        nlohmann::json overlap = nlohmann::json::object();
        for (const auto& [other, value] : s.overlap) overlap[std::to_string(other)] = value;
        j["scripts"].push_back({{"name", s.name},
                                {"charset_size", s.charset_size},
                                {"overlap", overlap},
                                {"sigma", s.sigma},
                                {"ratio", s.sampling_ratio}});
    }
    return j;
}

}  // namespace taskgroup
