#include "taskgroup/diff/optimizer.hpp"

#include <cmath>

#include "taskgroup/errors.hpp"

namespace taskgroup::diff {

void Optimizer::step(std::span<const NamedParam> params, const Gradients& grads) {
    for (const auto& p : params) {
        const Tensor& g = grads.of(*p.tensor);
        if (!g.same_shape(*p.tensor)) {
            throw ContractError("gradient shape " + g.shape_string() + " does not match parameter " +
                                p.name + " " + p.tensor->shape_string());
        }
        if (!g.all_finite()) throw NumericError("non-finite gradient for parameter " + p.name, p.name);
    }
    begin_step();
    for (const auto& p : params) update(p, grads.of(*p.tensor));
}

void Sgd::update(const NamedParam& param, const Tensor& grad) {
    auto values = param.tensor->values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr_ * grad[i];
}

void Adam::update(const NamedParam& param, const Tensor& grad) {
    auto [it, fresh] = state_.try_emplace(param.tensor);
    Moments& s = it->second;
    if (fresh) {
        s.m = Tensor(grad.rows(), grad.cols());
        s.v = Tensor(grad.rows(), grad.cols());
    } else if (!s.m.same_shape(grad)) {
        throw ContractError("optimizer state for " + param.name + " has shape " +
                            s.m.shape_string() + ", gradient " + grad.shape_string());
    }
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    auto values = param.tensor->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        s.m[i] = opt_.beta1 * s.m[i] + (1.0 - opt_.beta1) * grad[i];
        s.v[i] = opt_.beta2 * s.v[i] + (1.0 - opt_.beta2) * grad[i] * grad[i];
        const double m_hat = s.m[i] / c1;
        const double v_hat = s.v[i] / c2;
        values[i] -= opt_.lr * m_hat / (std::sqrt(v_hat) + opt_.eps);
    }
}

}  // namespace taskgroup::diff
