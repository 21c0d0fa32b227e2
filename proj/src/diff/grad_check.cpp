#include "taskgroup/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "taskgroup/errors.hpp"

namespace taskgroup::diff {

namespace {

double evaluate(const MultiFn& fn, const std::vector<Tensor>& points) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(points.size());
    for (const auto& p : points) vars.push_back(g.leaf(p));
    return fn(g, vars).value().item();
}

}  // namespace

double grad_check(const MultiFn& fn, std::span<const Tensor> points, double step) {
    if (!(step > 0.0)) throw ContractError("grad_check step must be positive");
    std::vector<Tensor> work(points.begin(), points.end());
    for (auto& t : work) t.set_requires_grad(true);

    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<Var> vars;
        for (const auto& p : work) vars.push_back(g.leaf(p));
        const Gradients grads = g.backward(fn(g, vars));
        for (const auto& p : work) analytic.push_back(grads.of(p));
    }

    double worst = 0.0;
    for (std::size_t t = 0; t < work.size(); ++t) {
        for (std::size_t i = 0; i < work[t].size(); ++i) {
            const double saved = work[t][i];
            work[t][i] = saved + step;
            const double up = evaluate(fn, work);
            work[t][i] = saved - step;
            const double down = evaluate(fn, work);
            work[t][i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[t][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

double grad_check(const UnaryFn& fn, const Tensor& point, double step) {
    const MultiFn wrapped = [&fn](Graph& g, std::span<const Var> vars) { return fn(g, vars[0]); };
    return grad_check(wrapped, std::span<const Tensor>(&point, 1), step);
}

}  // namespace taskgroup::diff
