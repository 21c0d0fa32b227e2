#include <cmath>
#include <string>

#include "taskgroup/diff/graph.hpp"
#include "taskgroup/diff/kernels.hpp"
#include "taskgroup/errors.hpp"

namespace taskgroup::diff::ops {

namespace {

[[noreturn]] void shape_fail(const char* kernel, const Var& a, const Var& b) {
    throw ShapeError(kernel, a.value().shape_string() + " vs " + b.value().shape_string());
}

void same_graph(const Var& a, const Var& b) {
    if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
}

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
    return b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
}

// Elementwise (or row-broadcast) a + sign * b.
Var add_signed(const char* kernel, Var a, Var b, double sign) {
    same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool broadcast = is_row_broadcast(av, bv);
    if (!broadcast && !av.same_shape(bv)) shape_fail(kernel, a, b);
    Tensor out = av;
    const std::size_t cols = av.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * bv[broadcast ? i % cols : i];
    const std::size_t ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.graph().record(std::move(out), parents,
                            [ai, bi, broadcast, cols, sign](Graph& g, const Tensor& up) {
                                if (Tensor* ga = g.grad_sink(ai)) {
                                    for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i];
                                }
                                if (Tensor* gb = g.grad_sink(bi)) {
                                    for (std::size_t i = 0; i < up.size(); ++i) {
                                        (*gb)[broadcast ? i % cols : i] += sign * up[i];
                                    }
                                }
                            });
}

template <class F, class D>
Var unary(Var a, F forward, D derivative) {
    const Tensor& av = a.value();
    Tensor out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = forward(av[i]);
    const std::size_t ai = a.id();
    const Var parents[] = {a};
    return a.graph().record(std::move(out), parents,
                            [ai, derivative](Graph& g, const Tensor& up) {
                                Tensor* ga = g.grad_sink(ai);
                                if (ga == nullptr) return;
                                const Tensor& x = g.value(ai);
                                for (std::size_t i = 0; i < up.size(); ++i) {
                                    (*ga)[i] += up[i] * derivative(x[i]);
                                }
                            });
}

}  // namespace

Var add(Var a, Var b) { return add_signed("add", a, b, 1.0); }
Var sub(Var a, Var b) { return add_signed("sub", a, b, -1.0); }

Var mul(Var a, Var b) {
    same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) shape_fail("mul", a, b);
    Tensor out(av.rows(), av.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    const std::size_t ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.graph().record(std::move(out), parents, [ai, bi](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.grad_sink(ai)) {
            const Tensor& y = g.value(bi);
            for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i] * y[i];
        }
        if (Tensor* gb = g.grad_sink(bi)) {
            const Tensor& x = g.value(ai);
            for (std::size_t i = 0; i < up.size(); ++i) (*gb)[i] += up[i] * x[i];
        }
    });
}

Var scale(Var a, double factor) {
    return unary(a, [factor](double x) { return factor * x; },
                 [factor](double) { return factor; });
}

Var add_scalar(Var a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Var matmul(Var a, Var b) {
    same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) shape_fail("matmul", a, b);
    Tensor out(av.rows(), bv.cols());
    kernels::matmul(av, bv, out);
    const std::size_t ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.graph().record(std::move(out), parents, [ai, bi](Graph& g, const Tensor& up) {
        // dA = up · Bᵀ, dB = Aᵀ · up
        if (Tensor* ga = g.grad_sink(ai)) kernels::matmul_nt(up, g.value(bi), *ga, true);
        if (Tensor* gb = g.grad_sink(bi)) kernels::matmul_tn(g.value(ai), up, *gb, true);
    });
}

Var matmul_nt(Var a, Var b) {
    same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols()) shape_fail("matmul_nt", a, b);
    Tensor out(av.rows(), bv.rows());
    kernels::matmul_nt(av, bv, out);
    const std::size_t ai = a.id(), bi = b.id();
    const Var parents[] = {a, b};
    return a.graph().record(std::move(out), parents, [ai, bi](Graph& g, const Tensor& up) {
        // Y = A·Bᵀ: dA = up · B, dB = upᵀ · A
        if (Tensor* ga = g.grad_sink(ai)) kernels::matmul(up, g.value(bi), *ga, true);
        if (Tensor* gb = g.grad_sink(bi)) kernels::matmul_tn(up, g.value(ai), *gb, true);
    });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
    for (double v : a.value().values()) {
        if (!std::isfinite(v)) throw DomainError("exp: non-finite operand");
    }
    return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
    for (double v : a.value().values()) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw DomainError("log: operand " + std::to_string(v) + " outside (0, inf)");
        }
    }
    return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var maximum(Var a, double floor) {
    return unary(a, [floor](double x) { return x > floor ? x : floor; },
                 [floor](double x) { return x > floor ? 1.0 : 0.0; });
}

Var sum(Var a) {
    double total = 0.0;
    for (double v : a.value().values()) total += v;
    const std::size_t ai = a.id();
    const Var parents[] = {a};
    return a.graph().record(Tensor::scalar(total), parents, [ai](Graph& g, const Tensor& up) {
        if (Tensor* ga = g.grad_sink(ai)) {
            for (double& v : ga->values()) v += up[0];
        }
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ShapeError("mean", "empty operand");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var col_sum(Var a) {
    const Tensor& av = a.value();
    Tensor out(1, av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
    }
    const std::size_t ai = a.id();
    const Var parents[] = {a};
    return a.graph().record(std::move(out), parents, [ai](Graph& g, const Tensor& up) {
        Tensor* ga = g.grad_sink(ai);
        if (ga == nullptr) return;
        for (std::size_t r = 0; r < ga->rows(); ++r) {
            for (std::size_t c = 0; c < ga->cols(); ++c) (*ga)(r, c) += up[c];
        }
    });
}

Var max(Var a) {
    const Tensor& av = a.value();
    if (av.size() == 0) throw ShapeError("max", "empty operand");
    std::size_t best = 0;
    for (std::size_t i = 1; i < av.size(); ++i) {
        if (av[i] > av[best]) best = i;
    }
    const std::size_t ai = a.id();
    const Var parents[] = {a};
    return a.graph().record(Tensor::scalar(av[best]), parents,
                            [ai, best](Graph& g, const Tensor& up) {
                                if (Tensor* ga = g.grad_sink(ai)) (*ga)[best] += up[0];
                            });
}

Var row_softmax(Var a) {
    const Tensor& av = a.value();
    if (av.cols() == 0) throw ShapeError("row_softmax", "empty rows " + av.shape_string());
    Tensor out(av.rows(), av.cols());
    kernels::row_softmax(av, out);
    const std::size_t ai = a.id();
    const Var parents[] = {a};
    const std::size_t yi = a.graph().size();
    return a.graph().record(std::move(out), parents, [ai, yi](Graph& g, const Tensor& up) {
        Tensor* ga = g.grad_sink(ai);
        if (ga == nullptr) return;
        const Tensor& y = g.value(yi);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) dot += up(r, c) * y(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) (*ga)(r, c) += y(r, c) * (up(r, c) - dot);
        }
    });
}

Var row_log_softmax(Var a) {
    const Tensor& av = a.value();
    if (av.cols() == 0) throw ShapeError("row_log_softmax", "empty rows " + av.shape_string());
    Tensor out(av.rows(), av.cols());
    kernels::row_log_softmax(av, out);
    const std::size_t ai = a.id();
    const Var parents[] = {a};
    const std::size_t self = a.graph().size();
    return a.graph().record(std::move(out), parents, [ai, self](Graph& g, const Tensor& up) {
        Tensor* ga = g.grad_sink(ai);
        if (ga == nullptr) return;
        const Tensor& logp = g.value(self);
        for (std::size_t r = 0; r < logp.rows(); ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < logp.cols(); ++c) total += up(r, c);
            for (std::size_t c = 0; c < logp.cols(); ++c) {
                (*ga)(r, c) += up(r, c) - std::exp(logp(r, c)) * total;
            }
        }
    });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
    const Tensor& tv = table.value();
    Tensor out(indices.size(), tv.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= tv.rows()) {
            throw ShapeError("gather_rows", "index " + std::to_string(indices[r]) +
                                                " out of range for table " + tv.shape_string());
        }
        const auto src = tv.row_span(indices[r]);
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
    }
    const std::size_t ti = table.id();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    const Var parents[] = {table};
    return table.graph().record(std::move(out), parents,
                                [ti, idx = std::move(idx)](Graph& g, const Tensor& up) {
                                    Tensor* gt = g.grad_sink(ti);
                                    if (gt == nullptr) return;
                                    for (std::size_t r = 0; r < idx.size(); ++r) {
                                        auto dst = gt->row_span(idx[r]);
                                        const auto src = up.row_span(r);
                                        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                                    }
                                });
}

Var pick(Var a, std::span<const std::size_t> cols) {
    const Tensor& av = a.value();
    if (cols.size() != av.rows()) {
        throw ShapeError("pick", std::to_string(cols.size()) + " indices for " + av.shape_string());
    }
    Tensor out(av.rows(), 1);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        if (cols[r] >= av.cols()) {
            throw ShapeError("pick", "column " + std::to_string(cols[r]) + " out of range for " +
                                         av.shape_string());
        }
        out[r] = av(r, cols[r]);
    }
    const std::size_t ai = a.id();
    std::vector<std::size_t> idx(cols.begin(), cols.end());
    const Var parents[] = {a};
    return a.graph().record(std::move(out), parents,
                            [ai, idx = std::move(idx)](Graph& g, const Tensor& up) {
                                Tensor* ga = g.grad_sink(ai);
                                if (ga == nullptr) return;
                                for (std::size_t r = 0; r < idx.size(); ++r) (*ga)(r, idx[r]) += up[r];
                            });
}

Var segment_mean(Var column, std::span<const std::size_t> offsets) {
    const Tensor& cv = column.value();
    if (cv.cols() != 1 || offsets.size() < 2 || offsets.front() != 0 || offsets.back() != cv.rows()) {
        throw ShapeError("segment_mean", "offsets do not partition " + cv.shape_string());
    }
    const std::size_t segments = offsets.size() - 1;
    Tensor out(segments, 1);
    for (std::size_t k = 0; k < segments; ++k) {
        if (offsets[k + 1] <= offsets[k]) throw ShapeError("segment_mean", "empty segment");
        double total = 0.0;
        for (std::size_t i = offsets[k]; i < offsets[k + 1]; ++i) total += cv[i];
        out[k] = total / static_cast<double>(offsets[k + 1] - offsets[k]);
    }
    const std::size_t ci = column.id();
    std::vector<std::size_t> off(offsets.begin(), offsets.end());
    const Var parents[] = {column};
    return column.graph().record(std::move(out), parents,
                                 [ci, off = std::move(off)](Graph& g, const Tensor& up) {
                                     Tensor* gc = g.grad_sink(ci);
                                     if (gc == nullptr) return;
                                     for (std::size_t k = 0; k + 1 < off.size(); ++k) {
                                         const double w = up[k] / static_cast<double>(off[k + 1] - off[k]);
                                         for (std::size_t i = off[k]; i < off[k + 1]; ++i) (*gc)[i] += w;
                                     }
                                 });
}

Var concat_columns(std::span<const Var> columns) {
    if (columns.empty()) throw ShapeError("concat_columns", "no operands");
    const std::size_t rows = columns.front().rows();
    for (const Var& c : columns) {
        same_graph(columns.front(), c);
        if (c.cols() != 1 || c.rows() != rows) shape_fail("concat_columns", columns.front(), c);
    }
    const std::size_t m = columns.size();
    Tensor out(rows, m);
    std::vector<std::size_t> ids;
    ids.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        const Tensor& cv = columns[j].value();
        for (std::size_t r = 0; r < rows; ++r) out(r, j) = cv[r];
        ids.push_back(columns[j].id());
    }
    return columns.front().graph().record(std::move(out), columns,
                                          [ids = std::move(ids)](Graph& g, const Tensor& up) {
                                              for (std::size_t j = 0; j < ids.size(); ++j) {
                                                  Tensor* gc = g.grad_sink(ids[j]);
                                                  if (gc == nullptr) continue;
                                                  for (std::size_t r = 0; r < up.rows(); ++r) {
                                                      (*gc)[r] += up(r, j);
                                                  }
                                              }
                                          });
}

}  // namespace taskgroup::diff::ops
