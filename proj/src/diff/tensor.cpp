#include "taskgroup/diff/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "taskgroup/errors.hpp"

namespace taskgroup::diff {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("tensor", "[" + std::to_string(rows) + ", " + std::to_string(cols) +
                                       "] needs " + std::to_string(rows * cols) +
                                       " values, got " + std::to_string(data_.size()));
    }
}

Tensor Tensor::scalar(double value) { return Tensor(1, 1, value); }

Tensor Tensor::row(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(1, n, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(n, 1, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("tensor", "ragged rows in from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::string Tensor::shape_string() const {
    return "[" + std::to_string(rows_) + ", " + std::to_string(cols_) + "]";
}

double Tensor::item() const {
    if (rows_ != 1 || cols_ != 1) throw ContractError("item() on non-scalar tensor " + shape_string());
    return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace taskgroup::diff
