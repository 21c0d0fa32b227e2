#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskgroup/diff/tensor.hpp"
#include "taskgroup/heads.hpp"
#include "taskgroup/rng.hpp"
#include "taskgroup/taskprob.hpp"

namespace taskgroup {

/// One synthetic script (task). The task id is its position in the spec list.
struct ScriptSpec {
    std::string name;
    std::size_t charset_size = 20;
    /// Fraction of the smaller charset shared with another task. Either
    /// direction of a pair may carry the value; both must agree if both do.
    std::map<TaskId, double> overlap;
    double sigma = 0.3;
    double sampling_ratio = 1.0;
};

struct LengthRange {
    std::size_t min = 1;
    std::size_t max = 8;
};

struct WorldSpec {
    std::vector<ScriptSpec> scripts;
    std::size_t feature_dim = 16;
    std::uint64_t seed = 0;
    LengthRange lengths;
};

/// Immutable generated world: charsets and one prototype per character code.
class SynthWorld {
public:
    std::size_t tasks() const noexcept { return charsets_.size(); }
    std::size_t feature_dim() const noexcept { return feature_dim_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<CharsetSpec>& charsets() const noexcept { return charsets_; }
    const std::vector<int>& universal() const noexcept { return universal_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    double sigma(TaskId t) const { return sigmas_.at(t); }
    const std::vector<double>& ratios() const noexcept { return ratios_; }
    const LengthRange& lengths() const noexcept { return lengths_; }

    /// Unit vector for a character code.
    std::span<const double> prototype(int code) const;

    /// Same charsets and prototypes with a different noise level for one task.
    SynthWorld with_sigma(TaskId t, double sigma) const;

    nlohmann::json to_json() const;

private:
    friend SynthWorld build_world(const WorldSpec&);
    std::size_t feature_dim_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<CharsetSpec> charsets_;
    std::vector<int> universal_;
    std::vector<std::string> names_;
    std::vector<double> sigmas_;
    std::vector<double> ratios_;
    LengthRange lengths_;
    diff::Tensor prototypes_;  // row = character code
};

/// Allocates codes so that |L_i ∩ L_j| = round(overlap_ij · min(|L_i|, |L_j|))
/// and samples prototypes uniformly on the unit sphere. A pure function of
/// `spec`. Throws ConfigError naming the violated pair when the requested
/// shared counts do not fit a charset.
SynthWorld build_world(const WorldSpec& spec);

/// s uniform in `lengths`, labels uniform over L_task,
/// feature row l = prototype(label l) + N(0, sigma_task²) per coordinate.
WordInstance sample_word(const SynthWorld& world, TaskId task, LengthRange lengths, Rng& rng);

/// Tasks drawn i.i.d. from the normalized `ratios`, then one sample_word each.
std::vector<WordInstance> sample_batch(const SynthWorld& world, std::span<const double> ratios,
                                       std::size_t batch_size, Rng& rng);

/// Default acceptance world: 3 tasks of sizes (20, 20, 40), 90% overlap
/// between the first two, the third disjoint, sigma 0.3, d = 16, lengths 1-8.
WorldSpec w3_world_spec(std::uint64_t seed = 7);

WorldSpec world_spec_from_json(const nlohmann::json& j);
nlohmann::json world_spec_to_json(const WorldSpec& spec);

}  // namespace taskgroup
