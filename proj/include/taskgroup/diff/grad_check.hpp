#pragma once

#include <functional>
#include <span>

#include "taskgroup/diff/graph.hpp"

namespace taskgroup::diff {

/// Scalar-valued function of several tensors, built on the given graph.
using MultiFn = std::function<Var(Graph&, std::span<const Var>)>;
using UnaryFn = std::function<Var(Graph&, Var)>;

/// Compares backward() against central finite differences at `points`.
/// Returns max over all coordinates of
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Never throws on a large error; it only reports it.
double grad_check(const MultiFn& fn, std::span<const Tensor> points, double step = 1e-5);

double grad_check(const UnaryFn& fn, const Tensor& point, double step = 1e-5);

}  // namespace taskgroup::diff
