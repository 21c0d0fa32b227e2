#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "taskgroup/diff/tensor.hpp"
#include "taskgroup/errors.hpp"

namespace taskgroup::diff::kernels::detail {

inline void check_matmul(const char* name, std::size_t out_rows, std::size_t out_cols,
                         std::size_t inner_a, std::size_t inner_b, const Tensor& a,
                         const Tensor& b, const Tensor& out) {
    if (inner_a != inner_b || out.rows() != out_rows || out.cols() != out_cols) {
        throw ShapeError(name, "a " + a.shape_string() + ", b " + b.shape_string() + ", out " +
                                   out.shape_string());
    }
}

inline void check_rowwise(const char* name, const Tensor& x, const Tensor& out) {
    if (!x.same_shape(out) || x.cols() == 0) {
        throw ShapeError(name, "x " + x.shape_string() + ", out " + out.shape_string());
    }
}

// out[i, :] (+)= a[i, :] * b
inline void matmul_row(const Tensor& a, const Tensor& b, Tensor& out, std::size_t i,
                       bool accumulate) {
    const std::size_t n = b.cols();
    double* o = out.values().data() + i * n;
    if (!accumulate) std::fill(o, o + n, 0.0);
    const double* ar = a.values().data() + i * a.cols();
    const double* bv = b.values().data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
        const double aik = ar[k];
        const double* br = bv + k * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
    }
}

// out[i, :] (+)= a[i, :] * b^T
inline void matmul_nt_row(const Tensor& a, const Tensor& b, Tensor& out, std::size_t i,
                          bool accumulate) {
    const std::size_t inner = a.cols();
    const double* ar = a.values().data() + i * inner;
    double* o = out.values().data() + i * out.cols();
    for (std::size_t j = 0; j < b.rows(); ++j) {
        const double* br = b.values().data() + j * inner;
        double s = 0.0;
        for (std::size_t k = 0; k < inner; ++k) s += ar[k] * br[k];
        o[j] = accumulate ? o[j] + s : s;
    }
}

// out[i, :] (+)= (a^T)[i, :] * b, summing over the rows of a in ascending order.
inline void matmul_tn_row(const Tensor& a, const Tensor& b, Tensor& out, std::size_t i,
                          bool accumulate) {
    const std::size_t n = b.cols();
    double* o = out.values().data() + i * n;
    if (!accumulate) std::fill(o, o + n, 0.0);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double aki = a(k, i);
        const double* br = b.values().data() + k * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += aki * br[j];
    }
}

inline void softmax_row(const Tensor& x, Tensor& out, std::size_t r) {
    const auto in = x.row_span(r);
    auto o = out.row_span(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
        o[j] = std::exp(in[j] - mx);
        total += o[j];
    }
    for (double& v : o) v /= total;
}

inline void log_softmax_row(const Tensor& x, Tensor& out, std::size_t r) {
    const auto in = x.row_span(r);
    auto o = out.row_span(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double shift = mx + std::log(total);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = in[j] - shift;
}

}  // namespace taskgroup::diff::kernels::detail
