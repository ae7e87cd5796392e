#include "meta4/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "meta4/core/kernels.hpp"

namespace meta4 {

namespace {

thread_local bool g_grad_enabled = true;

size_t shape_numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) {
        require(d > 0, "tensor dimensions must be positive, got ",
                shape_str(shape));
        n *= d;
    }
    return n;
}

// dst += src, elementwise.
void accumulate(std::vector<double>& dst, const double* src, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        dst[static_cast<size_t>(i)] += src[static_cast<size_t>(i)];
    }
}

Tensor make_op(std::vector<size_t> shape, std::vector<double> value,
               std::vector<TensorNodePtr> parents,
               std::function<void(TensorNode&)> bw) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) rg = rg || p->requires_grad;
    }
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(bw);
    }
    return Tensor::wrap(std::move(n));
}

}  // namespace

std::string shape_str(const std::vector<size_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
    size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0),
                     requires_grad);
}

Tensor Tensor::full(std::vector<size_t> shape, double v, bool requires_grad) {
    size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, v),
                     requires_grad);
}

Tensor Tensor::from_data(std::vector<size_t> shape, std::vector<double> data,
                         bool requires_grad) {
    require(shape_numel(shape) == data.size(),
            "tensor data length ", data.size(), " does not match shape ",
            shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::xavier_uniform(size_t fan_in, size_t fan_out, SeededRng& rng,
                              bool requires_grad) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform({fan_in, fan_out}, -bound, bound, rng, requires_grad);
}

Tensor Tensor::uniform(std::vector<size_t> shape, double lo, double hi,
                       SeededRng& rng, bool requires_grad) {
    size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (size_t i = 0; i < n; ++i) data[i] = rng.uniform(lo, hi);
    return from_data(std::move(shape), std::move(data), requires_grad);
}

const std::vector<double>& Tensor::grad() const {
    require(has_grad(), "tensor has no gradient (not reached by backward)");
    return node_->grad;
}

std::vector<double>& Tensor::grad_mutable() {
    node_->ensure_grad();
    return node_->grad;
}

double Tensor::item() const {
    require(size() == 1, "item() requires a scalar tensor, got shape ",
            shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::initializer_list<size_t> idx) const {
    require(idx.size() == rank(), "at(): index rank ", idx.size(),
            " does not match tensor rank ", rank());
    size_t off = 0;
    size_t i = 0;
    for (size_t v : idx) {
        require(v < node_->shape[i], "at(): index out of range");
        off = off * node_->shape[i] + v;
        ++i;
    }
    return node_->value[off];
}

bool Tensor::all_finite() const {
    for (double v : node_->value) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::clone_detached(bool requires_grad) const {
    return from_data(node_->shape, node_->value, requires_grad);
}

// ---- grad mode ----------------------------------------------------------

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2,
            "matmul expects rank-2 tensors, got ", shape_str(a.shape()), " x ",
            shape_str(b.shape()));
    size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    require(k == k2, "matmul shape mismatch: ", shape_str(a.shape()), " x ",
            shape_str(b.shape()));
    std::vector<double> out(m * n);
    kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);

    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op({m, n}, std::move(out), {pa, pb},
                   [pa, pb, m, k, n](TensorNode& self) {
                       const double* g = self.grad.data();
                       if (pa->requires_grad) {
                           // dA += dC * B^T
                           std::vector<double> bt(k * n);
                           kernels::transpose(pb->value.data(), bt.data(), k, n);
                           std::vector<double> da(m * k);
                           kernels::matmul(g, bt.data(), da.data(), m, n, k);
                           pa->ensure_grad();
                           accumulate(pa->grad, da.data(), m * k);
                       }
                       if (pb->requires_grad) {
                           // dB += A^T * dC
                           std::vector<double> at(k * m);
                           kernels::transpose(pa->value.data(), at.data(), m, k);
                           std::vector<double> db(k * n);
                           kernels::matmul(at.data(), g, db.data(), k, m, n);
                           pb->ensure_grad();
                           accumulate(pb->grad, db.data(), k * n);
                       }
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add shape mismatch: ",
            shape_str(a.shape()), " vs ", shape_str(b.shape()));
    size_t n = a.size();
    std::vector<double> out(n);
    const double* av = a.data().data();
    const double* bv = b.data().data();
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        out[static_cast<size_t>(i)] =
            av[static_cast<size_t>(i)] + bv[static_cast<size_t>(i)];
    }
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op(a.shape(), std::move(out), {pa, pb},
                   [pa, pb, n](TensorNode& self) {
                       if (pa->requires_grad) {
                           pa->ensure_grad();
                           accumulate(pa->grad, self.grad.data(), n);
                       }
                       if (pb->requires_grad) {
                           pb->ensure_grad();
                           accumulate(pb->grad, self.grad.data(), n);
                       }
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "sub shape mismatch: ",
            shape_str(a.shape()), " vs ", shape_str(b.shape()));
    size_t n = a.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.data()[i] - b.data()[i];
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op(a.shape(), std::move(out), {pa, pb},
                   [pa, pb, n](TensorNode& self) {
                       if (pa->requires_grad) {
                           pa->ensure_grad();
                           accumulate(pa->grad, self.grad.data(), n);
                       }
                       if (pb->requires_grad) {
                           pb->ensure_grad();
                           for (size_t i = 0; i < n; ++i)
                               pb->grad[i] -= self.grad[i];
                       }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mul shape mismatch: ",
            shape_str(a.shape()), " vs ", shape_str(b.shape()));
    size_t n = a.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.data()[i] * b.data()[i];
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op(a.shape(), std::move(out), {pa, pb},
                   [pa, pb, n](TensorNode& self) {
                       if (pa->requires_grad) {
                           pa->ensure_grad();
                           for (size_t i = 0; i < n; ++i)
                               pa->grad[i] += self.grad[i] * pb->value[i];
                       }
                       if (pb->requires_grad) {
                           pb->ensure_grad();
                           for (size_t i = 0; i < n; ++i)
                               pb->grad[i] += self.grad[i] * pa->value[i];
                       }
                   });
}

Tensor add_rowwise(const Tensor& m, const Tensor& row) {
    require(m.rank() == 2, "add_rowwise expects a rank-2 left operand, got ",
            shape_str(m.shape()));
    size_t rows = m.dim(0), cols = m.dim(1);
    require(row.size() == cols, "add_rowwise width mismatch: matrix ",
            shape_str(m.shape()), " vs row ", shape_str(row.shape()));
    std::vector<double> out(m.size());
    const double* mv = m.data().data();
    const double* rv = row.data().data();
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(rows); ++i) {
        size_t off = static_cast<size_t>(i) * cols;
        for (size_t j = 0; j < cols; ++j) out[off + j] = mv[off + j] + rv[j];
    }
    auto pm = m.node_ptr(), pr = row.node_ptr();
    return make_op(m.shape(), std::move(out), {pm, pr},
                   [pm, pr, rows, cols](TensorNode& self) {
                       if (pm->requires_grad) {
                           pm->ensure_grad();
                           accumulate(pm->grad, self.grad.data(), rows * cols);
                       }
                       if (pr->requires_grad) {
                           pr->ensure_grad();
                           for (size_t i = 0; i < rows; ++i) {
                               for (size_t j = 0; j < cols; ++j) {
                                   pr->grad[j] += self.grad[i * cols + j];
                               }
                           }
                       }
                   });
}

Tensor scale(const Tensor& a, double s) {
    size_t n = a.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.data()[i] * s;
    auto pa = a.node_ptr();
    return make_op(a.shape(), std::move(out), {pa},
                   [pa, s, n](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       for (size_t i = 0; i < n; ++i)
                           pa->grad[i] += self.grad[i] * s;
                   });
}

Tensor transpose(const Tensor& a) {
    require(a.rank() == 2, "transpose expects a rank-2 tensor, got ",
            shape_str(a.shape()));
    size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    kernels::transpose(a.data().data(), out.data(), m, n);
    auto pa = a.node_ptr();
    return make_op({n, m}, std::move(out), {pa},
                   [pa, m, n](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       std::vector<double> gt(m * n);
                       kernels::transpose(self.grad.data(), gt.data(), n, m);
                       accumulate(pa->grad, gt.data(), m * n);
                   });
}

Tensor reshape(const Tensor& a, std::vector<size_t> shape) {
    require(shape_numel(shape) == a.size(), "reshape from ",
            shape_str(a.shape()), " to ", shape_str(shape),
            " changes element count");
    auto pa = a.node_ptr();
    size_t n = a.size();
    return make_op(std::move(shape), a.data(), {pa},
                   [pa, n](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       accumulate(pa->grad, self.grad.data(), n);
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    size_t rows = parts[0].dim(0);
    size_t total = 0;
    std::vector<TensorNodePtr> parents;
    std::vector<size_t> widths;
    for (const auto& p : parts) {
        require(p.rank() == 2 && p.dim(0) == rows,
                "concat_cols: row mismatch at ", shape_str(p.shape()));
        widths.push_back(p.dim(1));
        total += p.dim(1);
        parents.push_back(p.node_ptr());
    }
    std::vector<double> out(rows * total);
    size_t col = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& v = parts[pi].data();
        size_t w = widths[pi];
        for (size_t i = 0; i < rows; ++i) {
            std::copy(v.begin() + i * w, v.begin() + (i + 1) * w,
                      out.begin() + i * total + col);
        }
        col += w;
    }
    return make_op({rows, total}, std::move(out), parents,
                   [parents, widths, rows, total](TensorNode& self) {
                       size_t col = 0;
                       for (size_t pi = 0; pi < parents.size(); ++pi) {
                           size_t w = widths[pi];
                           auto& p = parents[pi];
                           if (p->requires_grad) {
                               p->ensure_grad();
                               for (size_t i = 0; i < rows; ++i) {
                                   for (size_t j = 0; j < w; ++j) {
                                       p->grad[i * w + j] +=
                                           self.grad[i * total + col + j];
                                   }
                               }
                           }
                           col += w;
                       }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    size_t cols = parts[0].dim(1);
    size_t total = 0;
    std::vector<TensorNodePtr> parents;
    std::vector<size_t> heights;
    for (const auto& p : parts) {
        require(p.rank() == 2 && p.dim(1) == cols,
                "concat_rows: column mismatch at ", shape_str(p.shape()));
        heights.push_back(p.dim(0));
        total += p.dim(0);
        parents.push_back(p.node_ptr());
    }
    std::vector<double> out;
    out.reserve(total * cols);
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return make_op({total, cols}, std::move(out), parents,
                   [parents, heights, cols](TensorNode& self) {
                       size_t row = 0;
                       for (size_t pi = 0; pi < parents.size(); ++pi) {
                           size_t h = heights[pi];
                           auto& p = parents[pi];
                           if (p->requires_grad) {
                               p->ensure_grad();
                               for (size_t k = 0; k < h * cols; ++k) {
                                   p->grad[k] += self.grad[row * cols + k];
                               }
                           }
                           row += h;
                       }
                   });
}

Tensor slice_cols(const Tensor& a, size_t c0, size_t c1) {
    require(a.rank() == 2, "slice_cols expects rank-2, got ",
            shape_str(a.shape()));
    size_t rows = a.dim(0), cols = a.dim(1);
    require(c0 < c1 && c1 <= cols, "slice_cols range [", c0, ",", c1,
            ") out of bounds for width ", cols);
    size_t w = c1 - c0;
    std::vector<double> out(rows * w);
    for (size_t i = 0; i < rows; ++i) {
        std::copy(a.data().begin() + i * cols + c0,
                  a.data().begin() + i * cols + c1, out.begin() + i * w);
    }
    auto pa = a.node_ptr();
    return make_op({rows, w}, std::move(out), {pa},
                   [pa, rows, cols, c0, w](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       for (size_t i = 0; i < rows; ++i) {
                           for (size_t j = 0; j < w; ++j) {
                               pa->grad[i * cols + c0 + j] +=
                                   self.grad[i * w + j];
                           }
                       }
                   });
}

Tensor slice_rows(const Tensor& a, size_t r0, size_t r1) {
    require(a.rank() == 2, "slice_rows expects rank-2, got ",
            shape_str(a.shape()));
    size_t rows = a.dim(0), cols = a.dim(1);
    require(r0 < r1 && r1 <= rows, "slice_rows range [", r0, ",", r1,
            ") out of bounds for ", rows, " rows");
    size_t h = r1 - r0;
    std::vector<double> out(a.data().begin() + r0 * cols,
                            a.data().begin() + r1 * cols);
    auto pa = a.node_ptr();
    return make_op({h, cols}, std::move(out), {pa},
                   [pa, r0, cols, h](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       for (size_t i = 0; i < h * cols; ++i) {
                           pa->grad[r0 * cols + i] += self.grad[i];
                       }
                   });
}

Tensor softmax(const Tensor& a, size_t axis) {
    require(axis < a.rank(), "softmax axis ", axis,
            " out of range for shape ", shape_str(a.shape()));
    size_t outer = 1, inner = 1;
    size_t len = a.shape()[axis];
    for (size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
    for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];

    std::vector<double> out(a.size());
    const double* x = a.data().data();
    long long n_slices = static_cast<long long>(outer * inner);
#pragma omp parallel for schedule(static)
    for (long long s = 0; s < n_slices; ++s) {
        size_t o = static_cast<size_t>(s) / inner;
        size_t in = static_cast<size_t>(s) % inner;
        size_t base = o * len * inner + in;
        double mx = x[base];
        for (size_t l = 1; l < len; ++l)
            mx = std::max(mx, x[base + l * inner]);
        double denom = 0.0;
        for (size_t l = 0; l < len; ++l) {
            double e = std::exp(x[base + l * inner] - mx);
            out[base + l * inner] = e;
            denom += e;
        }
        for (size_t l = 0; l < len; ++l) out[base + l * inner] /= denom;
    }
    auto pa = a.node_ptr();
    return make_op(a.shape(), std::move(out), {pa},
                   [pa, outer, inner, len](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       const double* s = self.value.data();
                       const double* g = self.grad.data();
                       long long n_slices = static_cast<long long>(outer * inner);
#pragma omp parallel for schedule(static)
                       for (long long sl = 0; sl < n_slices; ++sl) {
                           size_t o = static_cast<size_t>(sl) / inner;
                           size_t in = static_cast<size_t>(sl) % inner;
                           size_t base = o * len * inner + in;
                           double dot = 0.0;
                           for (size_t l = 0; l < len; ++l) {
                               size_t idx = base + l * inner;
                               dot += g[idx] * s[idx];
                           }
                           for (size_t l = 0; l < len; ++l) {
                               size_t idx = base + l * inner;
                               pa->grad[idx] += s[idx] * (g[idx] - dot);
                           }
                       }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    require(x.rank() >= 1, "layer_norm needs rank >= 1");
    size_t w = x.shape().back();
    require(gamma.size() == w && beta.size() == w,
            "layer_norm width mismatch: x ", shape_str(x.shape()),
            ", gamma ", shape_str(gamma.shape()), ", beta ",
            shape_str(beta.shape()));
    size_t rows = x.size() / w;
    constexpr double kEps = 1e-5;

    std::vector<double> out(x.size());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv = std::make_shared<std::vector<double>>(rows);
    const double* xv = x.data().data();
    const double* gv = gamma.data().data();
    const double* bv = beta.data().data();
#pragma omp parallel for schedule(static)
    for (long long r = 0; r < static_cast<long long>(rows); ++r) {
        size_t off = static_cast<size_t>(r) * w;
        double mu = 0.0;
        for (size_t j = 0; j < w; ++j) mu += xv[off + j];
        mu /= static_cast<double>(w);
        double var = 0.0;
        for (size_t j = 0; j < w; ++j) {
            double d = xv[off + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(w);
        double iv = 1.0 / std::sqrt(var + kEps);
        (*inv)[static_cast<size_t>(r)] = iv;
        for (size_t j = 0; j < w; ++j) {
            double h = (xv[off + j] - mu) * iv;
            (*xhat)[off + j] = h;
            out[off + j] = gv[j] * h + bv[j];
        }
    }
    auto px = x.node_ptr(), pg = gamma.node_ptr(), pb = beta.node_ptr();
    return make_op(
        x.shape(), std::move(out), {px, pg, pb},
        [px, pg, pb, xhat, inv, rows, w](TensorNode& self) {
            const double* g = self.grad.data();
            if (pg->requires_grad) {
                pg->ensure_grad();
                for (size_t r = 0; r < rows; ++r) {
                    for (size_t j = 0; j < w; ++j) {
                        pg->grad[j] += g[r * w + j] * (*xhat)[r * w + j];
                    }
                }
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t r = 0; r < rows; ++r) {
                    for (size_t j = 0; j < w; ++j) pb->grad[j] += g[r * w + j];
                }
            }
            if (px->requires_grad) {
                px->ensure_grad();
                const double* gv = pg->value.data();
#pragma omp parallel for schedule(static)
                for (long long r = 0; r < static_cast<long long>(rows); ++r) {
                    size_t off = static_cast<size_t>(r) * w;
                    double sum_dh = 0.0, sum_dh_h = 0.0;
                    for (size_t j = 0; j < w; ++j) {
                        double dh = g[off + j] * gv[j];
                        sum_dh += dh;
                        sum_dh_h += dh * (*xhat)[off + j];
                    }
                    double iv = (*inv)[static_cast<size_t>(r)];
                    double wd = static_cast<double>(w);
                    for (size_t j = 0; j < w; ++j) {
                        double dh = g[off + j] * gv[j];
                        px->grad[off + j] +=
                            iv * (dh - sum_dh / wd -
                                  (*xhat)[off + j] * sum_dh_h / wd);
                    }
                }
            }
        });
}

Tensor gelu(const Tensor& a) {
    // tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    size_t n = a.size();
    std::vector<double> out(n);
    const double* x = a.data().data();
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        double v = x[static_cast<size_t>(i)];
        double t = std::tanh(kC * (v + kA * v * v * v));
        out[static_cast<size_t>(i)] = 0.5 * v * (1.0 + t);
    }
    auto pa = a.node_ptr();
    return make_op(a.shape(), std::move(out), {pa},
                   [pa, n](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
#pragma omp parallel for schedule(static)
                       for (long long i = 0; i < static_cast<long long>(n);
                            ++i) {
                           size_t k = static_cast<size_t>(i);
                           double v = pa->value[k];
                           double u = kC * (v + kA * v * v * v);
                           double t = std::tanh(u);
                           double du = kC * (1.0 + 3.0 * kA * v * v);
                           double d =
                               0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                           pa->grad[k] += self.grad[k] * d;
                       }
                   });
}

Tensor add_constant(const Tensor& a, const std::vector<double>& bias) {
    require(bias.size() == a.size(), "add_constant length mismatch: ",
            bias.size(), " vs ", a.size());
    size_t n = a.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.data()[i] + bias[i];
    auto pa = a.node_ptr();
    return make_op(a.shape(), std::move(out), {pa},
                   [pa, n](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       accumulate(pa->grad, self.grad.data(), n);
                   });
}

Tensor dropout(const Tensor& a, double rate, SeededRng& rng) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1), got ",
            rate);
    if (rate == 0.0) return a;
    size_t n = a.size();
    double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(n);
    for (size_t i = 0; i < n; ++i) {
        (*mask)[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    }
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.data()[i] * (*mask)[i];
    auto pa = a.node_ptr();
    return make_op(a.shape(), std::move(out), {pa},
                   [pa, mask, n](TensorNode& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       for (size_t i = 0; i < n; ++i)
                           pa->grad[i] += self.grad[i] * (*mask)[i];
                   });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    require(table.rank() == 2, "embedding table must be rank-2, got ",
            shape_str(table.shape()));
    size_t vocab = table.dim(0), d = table.dim(1);
    require(!ids.empty(), "embedding_lookup: empty id list");
    for (int id : ids) {
        require(id >= 0 && static_cast<size_t>(id) < vocab,
                "embedding id ", id, " out of range for table of ", vocab,
                " rows");
    }
    std::vector<double> out(ids.size() * d);
    for (size_t i = 0; i < ids.size(); ++i) {
        std::copy(table.data().begin() + static_cast<size_t>(ids[i]) * d,
                  table.data().begin() + (static_cast<size_t>(ids[i]) + 1) * d,
                  out.begin() + i * d);
    }
    auto pt = table.node_ptr();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    return make_op({ids.size(), d}, std::move(out), {pt},
                   [pt, ids_copy, d](TensorNode& self) {
                       if (!pt->requires_grad) return;
                       pt->ensure_grad();
                       for (size_t i = 0; i < ids_copy->size(); ++i) {
                           size_t row = static_cast<size_t>((*ids_copy)[i]) * d;
                           for (size_t j = 0; j < d; ++j) {
                               pt->grad[row + j] += self.grad[i * d + j];
                           }
                       }
                   });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto pa = a.node_ptr();
    size_t n = a.size();
    return make_op({1}, {acc}, {pa}, [pa, n](TensorNode& self) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        double g = self.grad[0];
        for (size_t i = 0; i < n; ++i) pa->grad[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    size_t n = a.size();
    acc /= static_cast<double>(n);
    auto pa = a.node_ptr();
    return make_op({1}, {acc}, {pa}, [pa, n](TensorNode& self) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        double g = self.grad[0] / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) pa->grad[i] += g;
    });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require(pred.shape() == target.shape(), "mse_loss shape mismatch: ",
            shape_str(pred.shape()), " vs ", shape_str(target.shape()));
    size_t n = pred.size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = pred.data()[i] - target.data()[i];
        acc += d * d;
    }
    acc /= static_cast<double>(n);
    auto pp = pred.node_ptr(), pt = target.node_ptr();
    return make_op({1}, {acc}, {pp, pt}, [pp, pt, n](TensorNode& self) {
        double g = self.grad[0] * 2.0 / static_cast<double>(n);
        if (pp->requires_grad) {
            pp->ensure_grad();
            for (size_t i = 0; i < n; ++i)
                pp->grad[i] += g * (pp->value[i] - pt->value[i]);
        }
        if (pt->requires_grad) {
            pt->ensure_grad();
            for (size_t i = 0; i < n; ++i)
                pt->grad[i] -= g * (pp->value[i] - pt->value[i]);
        }
    });
}

Tensor cross_entropy_loss(const Tensor& logits,
                          const std::vector<int>& labels) {
    require(logits.rank() == 2, "cross_entropy_loss expects N x C logits, got ",
            shape_str(logits.shape()));
    size_t n = logits.dim(0), c = logits.dim(1);
    require(labels.size() == n, "cross_entropy_loss: ", labels.size(),
            " labels for ", n, " rows");
    auto probs = std::make_shared<std::vector<double>>(n * c);
    const double* x = logits.data().data();
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        int y = labels[i];
        require(y >= 0 && static_cast<size_t>(y) < c, "label ", y,
                " out of range for ", c, " classes");
        double mx = x[i * c];
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, x[i * c + j]);
        double denom = 0.0;
        for (size_t j = 0; j < c; ++j) {
            double e = std::exp(x[i * c + j] - mx);
            (*probs)[i * c + j] = e;
            denom += e;
        }
        for (size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= denom;
        loss += std::log(denom) + mx - x[i * c + static_cast<size_t>(y)];
    }
    loss /= static_cast<double>(n);
    auto pl = logits.node_ptr();
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    return make_op({1}, {loss}, {pl},
                   [pl, probs, labels_copy, n, c](TensorNode& self) {
                       if (!pl->requires_grad) return;
                       pl->ensure_grad();
                       double g = self.grad[0] / static_cast<double>(n);
                       for (size_t i = 0; i < n; ++i) {
                           for (size_t j = 0; j < c; ++j) {
                               double delta =
                                   static_cast<size_t>((*labels_copy)[i]) == j
                                       ? 1.0
                                       : 0.0;
                               pl->grad[i * c + j] +=
                                   g * ((*probs)[i * c + j] - delta);
                           }
                       }
                   });
}

void backward(const Tensor& loss) {
    require(loss.defined(), "backward: undefined tensor");
    require(loss.size() == 1, "backward: loss must be scalar, got shape ",
            shape_str(loss.shape()));

    // Post-order over parent edges; reversed, every consumer runs before
    // its producers.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node(), 0});
    visited.insert(loss.node());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_fn && !node->grad.empty()) {
            node->backward_fn(*node);
        }
    }
}

}  // namespace meta4
