#include "taskgroup/heads.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>

#include <json.hpp>

#include "taskgroup/errors.hpp"

namespace taskgroup {

using diff::Graph;
using diff::Tensor;
using diff::Var;
namespace ops = diff::ops;

void WordInstance::validate() const {
    if (labels.empty()) throw ContractError("word instance has no labels");
    if (features.rows() != labels.size()) {
        throw ContractError("word instance has " + std::to_string(features.rows()) +
                            " feature rows for " + std::to_string(labels.size()) + " labels");
    }
}

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    Tensor t(rows, cols);
    for (double& v : t.values()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

Tensor zeros(std::size_t rows, std::size_t cols) {
    Tensor t(rows, cols);
    t.set_requires_grad(true);
    return t;
}

const char* const kTensorNames[] = {"embedding", "w_feat", "w_prev", "b1",
                                    "w2",        "b2",     "w_out",  "b_out"};

}  // namespace

RecognitionHead::RecognitionHead(ModelId id, HeadShape shape, std::size_t feature_dim,
                                 std::vector<int> charset, Rng& rng)
    : id_(id), shape_(shape), feature_dim_(feature_dim), charset_(std::move(charset)) {
    if (charset_.empty()) throw ContractError("recognition head needs a non-empty charset");
    if (shape_.embed == 0 || shape_.hidden == 0 || feature_dim_ == 0) {
        throw ContractError("recognition head sizes must be positive");
    }
    rebuild_index();
    const std::size_t c = charset_.size();
    embedding_ = xavier(c + 1, shape_.embed, rng);
    w_feat_ = xavier(feature_dim_, shape_.hidden, rng);
    w_prev_ = xavier(shape_.embed, shape_.hidden, rng);
    b1_ = zeros(1, shape_.hidden);
    w2_ = xavier(shape_.hidden, shape_.hidden, rng);
    b2_ = zeros(1, shape_.hidden);
    w_out_ = xavier(c, shape_.hidden, rng);
    b_out_ = zeros(1, c);
}

void RecognitionHead::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < charset_.size(); ++i) {
        if (!index_.emplace(charset_[i], i).second) {
            throw ContractError("duplicate character code " + std::to_string(charset_[i]) +
                                " in head charset");
        }
    }
}

std::optional<std::size_t> RecognitionHead::index_of(int code) const {
    const auto it = index_.find(code);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t RecognitionHead::parameter_count(HeadShape shape, std::size_t charset_size,
                                             std::size_t feature_dim) {
    const std::size_t e = shape.embed, h = shape.hidden, c = charset_size;
    return (c + 1) * e + feature_dim * h + e * h + h + h * h + h + c * h + c;
}

std::size_t RecognitionHead::parameter_count() const {
    return parameter_count(shape_, charset_.size(), feature_dim_);
}

std::vector<Tensor*> RecognitionHead::mutable_tensors() {
    return {&embedding_, &w_feat_, &w_prev_, &b1_, &w2_, &b2_, &w_out_, &b_out_};
}

std::vector<diff::NamedParam> RecognitionHead::parameters() {
    std::vector<diff::NamedParam> out;
    const auto ts = mutable_tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        out.push_back({"head" + std::to_string(id_) + "." + kTensorNames[i], ts[i]});
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> RecognitionHead::tensors() const {
    auto* self = const_cast<RecognitionHead*>(this);
    std::vector<std::pair<std::string, const Tensor*>> out;
    const auto ts = self->mutable_tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) out.emplace_back(kTensorNames[i], ts[i]);
    return out;
}

bool operator==(const RecognitionHead& a, const RecognitionHead& b) {
    if (a.id_ != b.id_ || !(a.shape_ == b.shape_) || a.feature_dim_ != b.feature_dim_ ||
        a.charset_ != b.charset_) {
        return false;
    }
    const auto ta = a.tensors();
    const auto tb = b.tensors();
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (!(*ta[i].second == *tb[i].second)) return false;
    }
    return true;
}

HeadVars bind(Graph& g, const RecognitionHead& head) {
    return {g.leaf(head.embedding_), g.leaf(head.w_feat_), g.leaf(head.w_prev_), g.leaf(head.b1_),
            g.leaf(head.w2_),        g.leaf(head.b2_),     g.leaf(head.w_out_),  g.leaf(head.b_out_)};
}

PackedWords pack_words(const RecognitionHead& head, std::span<const WordInstance> words) {
    PackedWords out;
    std::size_t total = 0;
    for (const auto& w : words) {
        w.validate();
        if (w.features.cols() != head.feature_dim()) {
            throw ShapeError("head_forward", "word features " + w.features.shape_string() +
                                                 " for head input dim " +
                                                 std::to_string(head.feature_dim()));
        }
        total += w.length();
    }
    out.features = Tensor(total, head.feature_dim());
    out.prev_rows.reserve(total);
    out.targets.reserve(total);
    out.offsets.reserve(words.size() + 1);
    out.offsets.push_back(0);
    std::size_t row = 0;
    for (const auto& w : words) {
        std::size_t prev = 0;  // start embedding
        for (std::size_t l = 0; l < w.length(); ++l, ++row) {
            const auto idx = head.index_of(w.labels[l]);
            if (!idx) throw UnsupportedCharacter(head.id(), w.labels[l]);
            const auto src = w.features.row_span(l);
            std::copy(src.begin(), src.end(), out.features.row_span(row).begin());
            out.prev_rows.push_back(prev);
            out.targets.push_back(*idx);
            prev = *idx + 1;
        }
        out.offsets.push_back(row);
    }
    return out;
}

Var head_forward(const HeadVars& v, const PackedWords& packed) {
    Graph& g = v.embedding.graph();
    const Var x = g.constant(packed.features);
    const Var prev = ops::gather_rows(v.embedding, packed.prev_rows);
    const Var h1 = ops::relu(ops::add(ops::add(ops::matmul(x, v.w_feat), ops::matmul(prev, v.w_prev)), v.b1));
    const Var h2 = ops::relu(ops::add(ops::matmul(h1, v.w2), v.b2));
    return ops::add(ops::matmul_nt(h2, v.w_out), v.b_out);
}

Var head_forward(Graph& g, const RecognitionHead& head, const WordInstance& word) {
    const PackedWords packed = pack_words(head, std::span<const WordInstance>(&word, 1));
    return head_forward(bind(g, head), packed);
}

Var seq_loss(Var logits, std::span<const int> labels, const RecognitionHead& head) {
    if (logits.rows() != labels.size() || logits.cols() != head.charset().size()) {
        throw ShapeError("seq_loss", "logits " + logits.value().shape_string() + " for " +
                                         std::to_string(labels.size()) + " labels over " +
                                         std::to_string(head.charset().size()) + " symbols");
    }
    if (labels.empty()) throw ContractError("seq_loss on an empty label sequence");
    std::vector<std::size_t> targets;
    targets.reserve(labels.size());
    for (int code : labels) {
        const auto idx = head.index_of(code);
        if (!idx) throw UnsupportedCharacter(head.id(), code);
        targets.push_back(*idx);
    }
    return ops::scale(ops::mean(ops::pick(ops::row_log_softmax(logits), targets)), -1.0);
}

Var seq_losses(Var logits, const PackedWords& packed) {
    const Var picked = ops::pick(ops::row_log_softmax(logits), packed.targets);
    return ops::scale(ops::segment_mean(picked, packed.offsets), -1.0);
}

Var integrated_loss(Var losses, const ProbMatrix& p_wm, double epsilon) {
    if (!(epsilon >= 0.0)) throw ContractError("integrated_loss: epsilon must be >= 0");
    if (!losses.value().same_shape(p_wm.probs.value())) {
        throw ShapeError("integrated_loss", "losses " + losses.value().shape_string() + " vs P_WM " +
                                                p_wm.probs.value().shape_string());
    }
    const Var weights = epsilon == 0.0 ? p_wm.probs : ops::add_scalar(p_wm.probs, epsilon);
    return ops::sum(ops::mul(weights, losses));
}

RecognitionHead prune_head(const RecognitionHead& head, std::span<const int> keep) {
    if (keep.empty()) throw ContractError("prune_head: keep set is empty");
    std::set<int> wanted;
    for (int code : keep) {
        if (!head.index_of(code)) {
            throw ContractError("prune_head: code " + std::to_string(code) +
                                " is not in the charset of head " + std::to_string(head.id()));
        }
        wanted.insert(code);
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < head.charset_.size(); ++i) {
        if (wanted.contains(head.charset_[i])) rows.push_back(i);
    }

    RecognitionHead out;
    out.id_ = head.id_;
    out.shape_ = head.shape_;
    out.feature_dim_ = head.feature_dim_;
    out.w_feat_ = head.w_feat_;
    out.w_prev_ = head.w_prev_;
    out.b1_ = head.b1_;
    out.w2_ = head.w2_;
    out.b2_ = head.b2_;

    const std::size_t k = rows.size();
    out.embedding_ = Tensor(k + 1, head.shape_.embed);
    out.w_out_ = Tensor(k, head.shape_.hidden);
    out.b_out_ = Tensor(1, k);
    auto copy_row = [](const Tensor& src, std::size_t from, Tensor& dst, std::size_t to) {
        const auto s = src.row_span(from);
        std::copy(s.begin(), s.end(), dst.row_span(to).begin());
    };
    copy_row(head.embedding_, 0, out.embedding_, 0);
    for (std::size_t n = 0; n < k; ++n) {
        out.charset_.push_back(head.charset_[rows[n]]);
        copy_row(head.embedding_, rows[n] + 1, out.embedding_, n + 1);
        copy_row(head.w_out_, rows[n], out.w_out_, n);
        out.b_out_[n] = head.b_out_[rows[n]];
    }
    for (Tensor* t : out.mutable_tensors()) t->set_requires_grad(true);
    out.rebuild_index();
    return out;
}

std::vector<int> predict(const RecognitionHead& head, const WordInstance& word) {
    Graph g;
    const Tensor& logits = head_forward(g, head, word).value();
    std::vector<int> out;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row_span(r);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        out.push_back(head.charset()[best]);
    }
    return out;
}

double char_accuracy(const RecognitionHead& head, std::span<const WordInstance> words) {
    if (words.empty()) return 0.0;
    Graph g;
    const PackedWords packed = pack_words(head, words);
    const Tensor& logits = head_forward(bind(g, head), packed).value();
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row_span(r);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == packed.targets[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

namespace {

void write_le(std::ofstream& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    out.write(bytes, 8);
}

double read_le(std::ifstream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw ConfigError("head parameter blob is truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_head(const RecognitionHead& head, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string stem = std::to_string(head.id());
    nlohmann::json manifest;
    manifest["head_id"] = head.id();
    manifest["embed"] = head.shape().embed;
    manifest["hidden"] = head.shape().hidden;
    manifest["feature_dim"] = head.feature_dim();
    manifest["charset"] = head.charset();
    manifest["params"] = stem + ".params.bin";
    manifest["tensors"] = nlohmann::json::array();
    std::ofstream blob(dir / (stem + ".params.bin"), std::ios::binary);
    for (const auto& [name, t] : head.tensors()) {
        manifest["tensors"].push_back({{"name", name}, {"rows", t->rows()}, {"cols", t->cols()}});
        for (double v : t->values()) write_le(blob, v);
    }
    if (!blob) throw ConfigError("could not write " + (dir / (stem + ".params.bin")).string());
    std::ofstream(dir / (stem + ".manifest.json")) << manifest.dump(2) << '\n';
}

RecognitionHead load_head(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ConfigError("cannot open head manifest " + manifest_path.string());
    const auto manifest = nlohmann::json::parse(in);
    RecognitionHead head;
    head.id_ = manifest.at("head_id").get<ModelId>();
    head.shape_ = {manifest.at("embed").get<std::size_t>(), manifest.at("hidden").get<std::size_t>()};
    head.feature_dim_ = manifest.at("feature_dim").get<std::size_t>();
    head.charset_ = manifest.at("charset").get<std::vector<int>>();
    head.rebuild_index();

    std::ifstream blob(manifest_path.parent_path() / manifest.at("params").get<std::string>(),
                       std::ios::binary);
    if (!blob) throw ConfigError("cannot open parameter blob for " + manifest_path.string());
    const auto targets = head.mutable_tensors();
    const auto& entries = manifest.at("tensors");
    if (entries.size() != targets.size()) throw ConfigError("head manifest lists wrong tensor count");
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (entries[i].at("name").get<std::string>() != kTensorNames[i]) {
            throw ConfigError("unexpected tensor '" + entries[i].at("name").get<std::string>() + "'");
        }
        const auto rows = entries[i].at("rows").get<std::size_t>();
        const auto cols = entries[i].at("cols").get<std::size_t>();
        std::vector<double> values(rows * cols);
        for (double& v : values) v = read_le(blob);
        *targets[i] = Tensor(rows, cols, std::move(values));
        targets[i]->set_requires_grad(true);
    }
    const std::size_t c = head.charset_.size();
    if (head.embedding_.rows() != c + 1 || head.w_out_.rows() != c || head.b_out_.cols() != c) {
        throw ConfigError("head tensors disagree with the manifest charset");
    }
    return head;
}

}  // namespace taskgroup
