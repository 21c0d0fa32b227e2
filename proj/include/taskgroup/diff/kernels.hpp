#pragma once

#include "taskgroup/diff/tensor.hpp"

// Dense kernels used by the autodiff ops. Two implementations share one
// contract: `serial` is the straightforward reference, `parallel` splits the
// output rows across OpenMP threads. Every output element is accumulated in
// the same order by both, so their results are bit-identical.
//
// Output tensors must already have the result shape. When `accumulate` is
// true the product is added onto the existing contents of `out`.

namespace taskgroup::diff::kernels {

namespace serial {
void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void row_softmax(const Tensor& x, Tensor& out);
void row_log_softmax(const Tensor& x, Tensor& out);
}  // namespace serial

namespace parallel {
void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void row_softmax(const Tensor& x, Tensor& out);
void row_log_softmax(const Tensor& x, Tensor& out);
}  // namespace parallel

/// Number of OpenMP threads the parallel kernels may use (1 without OpenMP).
int max_threads();

/// Below this many multiply-adds the parallel kernels run on one thread.
inline constexpr std::size_t kParallelWorkThreshold = 1 << 15;

// Entry points used by the ops.
using parallel::matmul;
using parallel::matmul_nt;
using parallel::matmul_tn;
using parallel::row_log_softmax;
using parallel::row_softmax;

}  // namespace taskgroup::diff::kernels
