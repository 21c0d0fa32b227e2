#include "kernels_common.hpp"
#include "taskgroup/diff/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace taskgroup::diff::kernels {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace parallel {

namespace {
bool worth_splitting(std::size_t work) { return work >= kParallelWorkThreshold; }
}  // namespace

void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    detail::check_matmul("matmul", a.rows(), b.cols(), a.cols(), b.rows(), a, b, out);
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
    [[maybe_unused]] const bool split = worth_splitting(a.rows() * a.cols() * b.cols());
#pragma omp parallel for schedule(static) if (split)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        detail::matmul_row(a, b, out, static_cast<std::size_t>(i), accumulate);
    }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    detail::check_matmul("matmul_nt", a.rows(), b.rows(), a.cols(), b.cols(), a, b, out);
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
    [[maybe_unused]] const bool split = worth_splitting(a.rows() * a.cols() * b.rows());
#pragma omp parallel for schedule(static) if (split)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        detail::matmul_nt_row(a, b, out, static_cast<std::size_t>(i), accumulate);
    }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    detail::check_matmul("matmul_tn", a.cols(), b.cols(), a.rows(), b.rows(), a, b, out);
    const auto rows = static_cast<std::ptrdiff_t>(a.cols());
    [[maybe_unused]] const bool split = worth_splitting(a.rows() * a.cols() * b.cols());
#pragma omp parallel for schedule(static) if (split)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        detail::matmul_tn_row(a, b, out, static_cast<std::size_t>(i), accumulate);
    }
}

void row_softmax(const Tensor& x, Tensor& out) {
    detail::check_rowwise("row_softmax", x, out);
    const auto rows = static_cast<std::ptrdiff_t>(x.rows());
    [[maybe_unused]] const bool split = worth_splitting(x.size() * 8);
#pragma omp parallel for schedule(static) if (split)
    for (std::ptrdiff_t r = 0; r < rows; ++r) detail::softmax_row(x, out, static_cast<std::size_t>(r));
}

void row_log_softmax(const Tensor& x, Tensor& out) {
    detail::check_rowwise("row_log_softmax", x, out);
    const auto rows = static_cast<std::ptrdiff_t>(x.rows());
    [[maybe_unused]] const bool split = worth_splitting(x.size() * 8);
#pragma omp parallel for schedule(static) if (split)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        detail::log_softmax_row(x, out, static_cast<std::size_t>(r));
    }
}

}  // namespace parallel
}  // namespace taskgroup::diff::kernels
