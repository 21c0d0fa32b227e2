#pragma once

#include <span>
#include <string>
#include <unordered_map>

#include "taskgroup/diff/graph.hpp"
#include "taskgroup/diff/tensor.hpp"

namespace taskgroup::diff {

/// A trainable tensor plus the name used in error reports.
struct NamedParam {
    std::string name;
    Tensor* tensor = nullptr;
};

class Optimizer {
public:
    virtual ~Optimizer() = default;

    /// Updates every parameter in place from its gradient in `grads`.
    /// Throws NumericError naming the parameter on a non-finite gradient;
    /// no parameter is touched in that case.
    void step(std::span<const NamedParam> params, const Gradients& grads);

protected:
    virtual void begin_step() {}
    virtual void update(const NamedParam& param, const Tensor& grad) = 0;
};

class Sgd final : public Optimizer {
public:
    explicit Sgd(double lr) : lr_(lr) {}

private:
    void update(const NamedParam& param, const Tensor& grad) override;
    double lr_;
};

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam final : public Optimizer {
public:
    explicit Adam(AdamOptions options = {}) : opt_(options) {}

    long steps() const noexcept { return t_; }

private:
    struct Moments {
        Tensor m;
        Tensor v;
    };

    void begin_step() override { ++t_; }
    void update(const NamedParam& param, const Tensor& grad) override;

    AdamOptions opt_;
    long t_ = 0;
    std::unordered_map<const Tensor*, Moments> state_;
};

}  // namespace taskgroup::diff
