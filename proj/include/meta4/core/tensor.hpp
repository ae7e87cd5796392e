#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "meta4/core/error.hpp"
#include "meta4/core/rng.hpp"

namespace meta4 {

struct TensorNode;
using TensorNodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    std::vector<size_t> shape;
    std::vector<double> value;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until backward first touches it
    std::vector<TensorNodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

// Dense row-major tensor of 64-bit floats with an optional gradient buffer.
// Copying a Tensor copies the handle; the storage is shared. Ops on tensors
// that require gradients record backward closures for reverse-mode autodiff.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<size_t> shape, double v,
                       bool requires_grad = false);
    static Tensor from_data(std::vector<size_t> shape,
                            std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    // Xavier-uniform init in +-sqrt(6 / (fan_in + fan_out)).
    static Tensor xavier_uniform(size_t fan_in, size_t fan_out, SeededRng& rng,
                                 bool requires_grad = true);
    static Tensor uniform(std::vector<size_t> shape, double lo, double hi,
                          SeededRng& rng, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<size_t>& shape() const { return node_->shape; }
    size_t rank() const { return node_->shape.size(); }
    size_t size() const { return node_->value.size(); }
    size_t dim(size_t i) const { return node_->shape.at(i); }

    std::vector<double>& data() { return node_->value; }
    const std::vector<double>& data() const { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    std::vector<double>& grad_mutable();
    void zero_grad() { node_->grad.clear(); }

    double item() const;
    double at(std::initializer_list<size_t> idx) const;

    bool all_finite() const;
    // Deep copy of values only; the copy is a fresh leaf.
    Tensor clone_detached(bool requires_grad = false) const;

    TensorNode* node() const { return node_.get(); }
    const TensorNodePtr& node_ptr() const { return node_; }

    static Tensor wrap(TensorNodePtr n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

  private:
    TensorNodePtr node_;
};

std::string shape_str(const std::vector<size_t>& shape);

// ---- graph construction mode ------------------------------------------

bool grad_enabled();

// Disables graph construction for its lifetime (inference paths).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// ---- differentiable ops ------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// m: R x C, row: C-vector (rank 1 or 1 x C); adds row to every row of m.
Tensor add_rowwise(const Tensor& m, const Tensor& row);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<size_t> shape);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, size_t c0, size_t c1);
Tensor slice_rows(const Tensor& a, size_t r0, size_t r1);
Tensor softmax(const Tensor& a, size_t axis);
// gamma/beta have the width of the last axis; epsilon 1e-5 in the root.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);
Tensor gelu(const Tensor& a);
// bias is a plain constant added elementwise (same length as a).
Tensor add_constant(const Tensor& a, const std::vector<double>& bias);
// Inverted dropout. rate == 0 is the identity and consumes no randomness;
// otherwise draws one uniform per element.
Tensor dropout(const Tensor& a, double rate, SeededRng& rng);
// table: V x d; out: ids.size() x d. Backward scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse_loss(const Tensor& pred, const Tensor& target);
// logits: N x C. Mean cross entropy with a stable log-sum-exp.
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels);

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor on
// the graph that requires them. loss must be scalar.
void backward(const Tensor& loss);

}  // namespace meta4
