#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "taskgroup/diff/graph.hpp"
#include "taskgroup/diff/optimizer.hpp"
#include "taskgroup/diff/tensor.hpp"
#include "taskgroup/grouping.hpp"
#include "taskgroup/rng.hpp"

namespace taskgroup {

/// One word sample: a feature row per character position plus its labels.
struct WordInstance {
    diff::Tensor features;  // s × d
    std::vector<int> labels;
    std::optional<TaskId> gt_task;

    std::size_t length() const noexcept { return labels.size(); }
    /// Throws ContractError when s == 0 or feature rows != label count.
    void validate() const;
};

struct HeadVars;

struct HeadShape {
    std::size_t embed = 32;
    std::size_t hidden = 64;

    friend bool operator==(const HeadShape&, const HeadShape&) = default;
};

/// Position-wise teacher-forced recognizer. Position l sees its feature row
/// and the embedding of label l-1 (a start embedding at l = 0):
///
///   h1 = relu(x W_feat + e W_prev + b1)
///   h2 = relu(h1 W2 + b2)
///   logits = h2 W_outᵀ + b_out
///
/// The embedding table has one row per charset symbol plus the start row
/// (row 0); W_out has one row per charset symbol, so pruning drops rows.
class RecognitionHead {
public:
    RecognitionHead(ModelId id, HeadShape shape, std::size_t feature_dim, std::vector<int> charset,
                    Rng& rng);

    ModelId id() const noexcept { return id_; }
    void set_id(ModelId id) noexcept { id_ = id; }
    const HeadShape& shape() const noexcept { return shape_; }
    std::size_t feature_dim() const noexcept { return feature_dim_; }
    const std::vector<int>& charset() const noexcept { return charset_; }
    std::optional<std::size_t> index_of(int code) const;

    std::size_t parameter_count() const;
    static std::size_t parameter_count(HeadShape shape, std::size_t charset_size,
                                       std::size_t feature_dim);

    /// Trainable tensors in checkpoint order, named "head<id>.<tensor>".
    std::vector<diff::NamedParam> parameters();
    std::vector<std::pair<std::string, const diff::Tensor*>> tensors() const;

    friend bool operator==(const RecognitionHead& a, const RecognitionHead& b);

private:
    friend RecognitionHead prune_head(const RecognitionHead&, std::span<const int>);
    friend RecognitionHead load_head(const std::filesystem::path&);
    RecognitionHead() = default;
    void rebuild_index();
    std::vector<diff::Tensor*> mutable_tensors();

    ModelId id_ = 0;
    HeadShape shape_;
    std::size_t feature_dim_ = 0;
    std::vector<int> charset_;
    std::unordered_map<int, std::size_t> index_;

    diff::Tensor embedding_;  // (|charset| + 1) × embed
    diff::Tensor w_feat_;     // d × hidden
    diff::Tensor w_prev_;     // embed × hidden
    diff::Tensor b1_;         // 1 × hidden
    diff::Tensor w2_;         // hidden × hidden
    diff::Tensor b2_;         // 1 × hidden
    diff::Tensor w_out_;      // |charset| × hidden
    diff::Tensor b_out_;      // 1 × |charset|

    friend HeadVars bind(diff::Graph&, const RecognitionHead&);
};

/// A head's parameters registered on a graph.
struct HeadVars {
    diff::Var embedding, w_feat, w_prev, b1, w2, b2, w_out, b_out;
};
HeadVars bind(diff::Graph& g, const RecognitionHead& head);

/// Words flattened into one position-major batch, with labels resolved to
/// the head's charset indices.
struct PackedWords {
    diff::Tensor features;                // P × d
    std::vector<std::size_t> prev_rows;   // embedding row per position
    std::vector<std::size_t> targets;     // charset index per position
    std::vector<std::size_t> offsets;     // word k spans [offsets[k], offsets[k+1])
};

/// Throws UnsupportedCharacter for labels outside the head charset and
/// ShapeError for feature-dimension mismatches.
PackedWords pack_words(const RecognitionHead& head, std::span<const WordInstance> words);

/// P × |charset| logits for a packed batch.
diff::Var head_forward(const HeadVars& vars, const PackedWords& packed);
/// s × |charset| logits for a single word.
diff::Var head_forward(diff::Graph& g, const RecognitionHead& head, const WordInstance& word);

/// Mean over positions of -log softmax(logits)[label]. logits is s × |charset|.
diff::Var seq_loss(diff::Var logits, std::span<const int> labels, const RecognitionHead& head);
/// Per-word sequence losses (w × 1) for a packed batch.
diff::Var seq_losses(diff::Var logits, const PackedWords& packed);

/// Σ_k Σ_j (p(M_j|W_k) + epsilon) · L_seq(j)(W_k) over a w × m loss matrix.
diff::Var integrated_loss(diff::Var losses, const ProbMatrix& p_wm, double epsilon);

/// Restricts the head to `keep` (a non-empty subset of its charset). Kept
/// rows are copied unchanged and keep the head's original order.
RecognitionHead prune_head(const RecognitionHead& head, std::span<const int> keep);

/// Teacher-forced argmax prediction per position.
std::vector<int> predict(const RecognitionHead& head, const WordInstance& word);
/// Fraction of positions predicted correctly over `words`.
double char_accuracy(const RecognitionHead& head, std::span<const WordInstance> words);

// Checkpoints: <dir>/<id>.manifest.json plus <dir>/<id>.params.bin holding
// little-endian float64 tensors concatenated in manifest order.
void save_head(const RecognitionHead& head, const std::filesystem::path& dir);
RecognitionHead load_head(const std::filesystem::path& manifest);

}  // namespace taskgroup
