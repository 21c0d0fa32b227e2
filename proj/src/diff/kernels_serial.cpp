#include "kernels_common.hpp"
#include "taskgroup/diff/kernels.hpp"

namespace taskgroup::diff::kernels::serial {

void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    detail::check_matmul("matmul", a.rows(), b.cols(), a.cols(), b.rows(), a, b, out);
    for (std::size_t i = 0; i < a.rows(); ++i) detail::matmul_row(a, b, out, i, accumulate);
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    detail::check_matmul("matmul_nt", a.rows(), b.rows(), a.cols(), b.cols(), a, b, out);
    for (std::size_t i = 0; i < a.rows(); ++i) detail::matmul_nt_row(a, b, out, i, accumulate);
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    detail::check_matmul("matmul_tn", a.cols(), b.cols(), a.rows(), b.rows(), a, b, out);
    // Reference loop order: rows of a outermost.
    if (!accumulate) out.fill(0.0);
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* br = b.values().data() + k * n;
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            double* o = out.values().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += aki * br[j];
        }
    }
}

void row_softmax(const Tensor& x, Tensor& out) {
    detail::check_rowwise("row_softmax", x, out);
    for (std::size_t r = 0; r < x.rows(); ++r) detail::softmax_row(x, out, r);
}

void row_log_softmax(const Tensor& x, Tensor& out) {
    detail::check_rowwise("row_log_softmax", x, out);
    for (std::size_t r = 0; r < x.rows(); ++r) detail::log_softmax_row(x, out, r);
}

}  // namespace taskgroup::diff::kernels::serial
