#ifndef SCTRANSNET_TENSOR_HPP
#define SCTRANSNET_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sctransnet/common.hpp"
#include "sctransnet/matrix.hpp"
#include "sctransnet/rng.hpp"

namespace scnet {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense 64-bit tensor, row-major. Ops on tensors record a dynamic tape
// (parents + backprop closure per node); backward() consumes the tape and
// clears it, so each recorded graph can be differentiated exactly once.
class Tensor {
public:
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;

    // tape record, populated only while gradients are enabled
    std::vector<TensorPtr> parents;
    std::function<void(const Tensor&)> backprop;
    std::vector<double> grad;  // allocated during backward
    bool consumed = false;     // backward already ran through this node

    static TensorPtr create(std::vector<std::size_t> shape, std::vector<double> vals,
                            bool requires_grad = false);
    static TensorPtr zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static TensorPtr full(std::size_t rows, std::size_t cols, double fill,
                          bool requires_grad = false);
    static TensorPtr scalar(double v);
    static TensorPtr from_matrix(const Matrix& m, bool requires_grad = false);

    std::size_t numel() const { return values.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool is_matrix() const { return shape.size() == 2; }
    bool is_scalar() const { return numel() == 1; }

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    Matrix to_matrix() const;
};

// Gradients of one backward pass, keyed by parameter identity.
class GradientMap {
public:
    void insert(const Tensor* param, std::vector<double> g);
    bool contains(const Tensor* param) const;
    // Gradient values for `param`; ContractError if absent.
    const std::vector<double>& at(const Tensor* param) const;
    std::size_t size() const { return grads_.size(); }

private:
    std::unordered_map<const Tensor*, std::vector<double>> grads_;
};

// While an instance is alive, ops do not record tape entries (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// ---- forward ops (each registers its reverse rule on the tape) ----

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);

// the only implicit-shape ops: explicit row/column broadcasts
TensorPtr add_row_broadcast(const TensorPtr& a, const TensorPtr& row);   // a[p,q] + row[1,q]
TensorPtr mul_row_broadcast(const TensorPtr& a, const TensorPtr& row);
TensorPtr add_col_broadcast(const TensorPtr& a, const TensorPtr& col);   // a[p,q] + col[p,1]
TensorPtr mul_col_broadcast(const TensorPtr& a, const TensorPtr& col);
TensorPtr div_col_broadcast(const TensorPtr& a, const TensorPtr& col);

TensorPtr row_sums(const TensorPtr& a);  // [p,q] -> [p,1]
TensorPtr col_sums(const TensorPtr& a);  // [p,q] -> [1,q]

TensorPtr exp_elem(const TensorPtr& a);
TensorPtr log_elem(const TensorPtr& a);  // requires strictly positive entries
TensorPtr gelu(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr softmax_rows(const TensorPtr& a);
TensorPtr layer_norm_rows(const TensorPtr& a, double eps = 1e-5);

TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr slice_cols(const TensorPtr& a, std::size_t c0, std::size_t c1);
TensorPtr select_rows(const TensorPtr& a, const std::vector<int>& indices);
TensorPtr rows_dot(const TensorPtr& a, const TensorPtr& b);  // [p,q],[p,q] -> [p,1]

TensorPtr sum_all(const TensorPtr& a);
TensorPtr mean_all(const TensorPtr& a);

// mean over i of softplus(z_i) - y_i * z_i, evaluated in logit space
TensorPtr bce_with_logits_mean(const TensorPtr& logits, const std::vector<double>& labels);

// grouped softmax / weighted reduction over a segmented edge list;
// segment ids must be sorted ascending
TensorPtr segment_softmax(const TensorPtr& a, const std::vector<int>& segment_of_row,
                          int n_segments);
TensorPtr segment_weighted_sum_rows(const TensorPtr& rows, const TensorPtr& weights,
                                    const std::vector<int>& segment_of_row, int n_segments);

// ---- reverse pass ----

// Reverse accumulation from a scalar loss. Consumes and clears the recorded
// tape; calling it again on the same graph is a ContractError.
GradientMap backward(const TensorPtr& loss);

// ---- optimizer ----

// Adam over a fixed parameter list (all must require gradients).
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<TensorPtr> params, double learning_rate, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    // One update; every registered parameter must have a gradient entry.
    void step(const GradientMap& grads);

    std::int64_t step_count() const { return step_; }
    double learning_rate() const { return lr_; }
    const std::vector<TensorPtr>& params() const { return params_; }

private:
    std::vector<TensorPtr> params_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// ---- derivative verification ----

// Central-difference check of d(loss)/d(params). `loss_fn` must rebuild the
// forward graph from the current parameter values on every call; it is
// evaluated twice up front and rejected if the two results differ.
double grad_check(const std::function<TensorPtr()>& loss_fn,
                  const std::vector<TensorPtr>& params, double eps = 1e-5);

// ---- init helpers ----

TensorPtr random_normal(std::size_t rows, std::size_t cols, double sd, Rng& rng,
                        bool requires_grad = true);

// Named, insertion-ordered parameter registry (drives Adam order and
// checkpoint serialization).
class NamedParams {
public:
    TensorPtr add(const std::string& name, TensorPtr t);
    const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }
    TensorPtr find(const std::string& name) const;
    std::vector<TensorPtr> tensors() const;

private:
    std::vector<std::pair<std::string, TensorPtr>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace scnet

#endif
