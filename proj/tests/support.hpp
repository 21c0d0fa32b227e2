#pragma once

#include <random>

#include "taskgroup/diff/tensor.hpp"

namespace testing_support {

inline taskgroup::diff::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                             double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    taskgroup::diff::Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
    return t;
}

// Random row-stochastic matrix with strictly positive entries.
inline taskgroup::diff::Tensor random_stochastic(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    taskgroup::diff::Tensor t = random_tensor(rows, cols, rng, 0.05, 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (double v : t.row_span(r)) s += v;
        for (double& v : t.row_span(r)) v /= s;
    }
    return t;
}

}  // namespace testing_support
