#include "sctransnet/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace scnet {

namespace {

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenRowMat>;
using ConstMatMap = Eigen::Map<const EigenRowMat>;

thread_local bool g_grad_enabled = true;

void require_matrix(const TensorPtr& t, const char* op) {
    if (!t || !t->is_matrix()) {
        throw DimensionError(std::string(op) + ": operand must be a 2-d tensor");
    }
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape) {
        throw DimensionError(std::string(op) + ": shape mismatch (" +
                             std::to_string(a->rows()) + "x" + std::to_string(a->cols()) +
                             " vs " + std::to_string(b->rows()) + "x" +
                             std::to_string(b->cols()) + ")");
    }
}

// Builds a node; the tape entry is recorded only when gradients are enabled
// and some parent participates in differentiation.
TensorPtr make_op(std::vector<std::size_t> shape, std::vector<double> vals,
                  std::vector<TensorPtr> parents,
                  std::function<void(const Tensor&)> backprop) {
    auto out = Tensor::create(std::move(shape), std::move(vals));
    bool track = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p->requires_grad || !p->parents.empty()) {
                track = true;
                break;
            }
        }
    }
    if (track) {
        out->parents = std::move(parents);
        out->backprop = std::move(backprop);
    }
    return out;
}

std::vector<double>& grad_buffer(Tensor& t) {
    if (t.grad.empty()) t.grad.assign(t.numel(), 0.0);
    return t.grad;
}

double stable_softplus(double z) {
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

// ---- Tensor ----

TensorPtr Tensor::create(std::vector<std::size_t> shape, std::vector<double> vals,
                         bool requires_grad) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    if (n != vals.size()) {
        throw DimensionError("Tensor::create: " + std::to_string(vals.size()) +
                             " values for a shape holding " + std::to_string(n));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(vals);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return create({rows, cols}, std::vector<double>(rows * cols, 0.0), requires_grad);
}

TensorPtr Tensor::full(std::size_t rows, std::size_t cols, double fill, bool requires_grad) {
    return create({rows, cols}, std::vector<double>(rows * cols, fill), requires_grad);
}

TensorPtr Tensor::scalar(double v) { return create({1, 1}, {v}); }

TensorPtr Tensor::from_matrix(const Matrix& m, bool requires_grad) {
    return create({m.rows, m.cols}, m.v, requires_grad);
}

Matrix Tensor::to_matrix() const {
    Matrix m(rows(), cols());
    m.v = values;
    return m;
}

// ---- GradientMap ----

void GradientMap::insert(const Tensor* param, std::vector<double> g) {
    grads_[param] = std::move(g);
}

bool GradientMap::contains(const Tensor* param) const { return grads_.count(param) > 0; }

const std::vector<double>& GradientMap::at(const Tensor* param) const {
    auto it = grads_.find(param);
    if (it == grads_.end()) {
        throw ContractError("GradientMap: no gradient recorded for parameter");
    }
    return it->second;
}

// ---- NoGradGuard ----

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- elementwise & structural ops ----

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] + b->values[i];
    return make_op(a->shape, std::move(out), {a, b}, [](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        auto& gb = grad_buffer(*o.parents[1]);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            ga[i] += o.grad[i];
            gb[i] += o.grad[i];
        }
    });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] - b->values[i];
    return make_op(a->shape, std::move(out), {a, b}, [](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        auto& gb = grad_buffer(*o.parents[1]);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            ga[i] += o.grad[i];
            gb[i] -= o.grad[i];
        }
    });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * b->values[i];
    return make_op(a->shape, std::move(out), {a, b}, [](const Tensor& o) {
        Tensor& a = *o.parents[0];
        Tensor& b = *o.parents[1];
        auto& ga = grad_buffer(a);
        auto& gb = grad_buffer(b);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            ga[i] += o.grad[i] * b.values[i];
            gb[i] += o.grad[i] * a.values[i];
        }
    });
}

TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * c;
    return make_op(a->shape, std::move(out), {a}, [c](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += c * o.grad[i];
    });
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a->cols() != b->rows()) {
        throw DimensionError("matmul: inner extents differ (" + std::to_string(a->cols()) +
                             " vs " + std::to_string(b->rows()) + ")");
    }
    const std::size_t p = a->rows(), q = a->cols(), r = b->cols();
    std::vector<double> out(p * r);
    {
        ConstMatMap ma(a->values.data(), p, q);
        ConstMatMap mb(b->values.data(), q, r);
        MatMap mo(out.data(), p, r);
        mo.noalias() = ma * mb;
    }
    return make_op({p, r}, std::move(out), {a, b}, [p, q, r](const Tensor& o) {
        Tensor& a = *o.parents[0];
        Tensor& b = *o.parents[1];
        ConstMatMap go(o.grad.data(), p, r);
        ConstMatMap ma(a.values.data(), p, q);
        ConstMatMap mb(b.values.data(), q, r);
        MatMap ga(grad_buffer(a).data(), p, q);
        MatMap gb(grad_buffer(b).data(), q, r);
        ga.noalias() += go * mb.transpose();
        gb.noalias() += ma.transpose() * go;
    });
}

TensorPtr transpose(const TensorPtr& a) {
    require_matrix(a, "transpose");
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p * q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) out[j * p + i] = a->values[i * q + j];
    return make_op({q, p}, std::move(out), {a}, [p, q](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) ga[i * q + j] += o.grad[j * p + i];
    });
}

// ---- broadcast ops ----

TensorPtr add_row_broadcast(const TensorPtr& a, const TensorPtr& row) {
    require_matrix(a, "add_row_broadcast");
    if (row->rows() != 1 || row->cols() != a->cols()) {
        throw DimensionError("add_row_broadcast: bias must be 1x" + std::to_string(a->cols()));
    }
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p * q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) out[i * q + j] = a->values[i * q + j] + row->values[j];
    return make_op({p, q}, std::move(out), {a, row}, [p, q](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        auto& gr = grad_buffer(*o.parents[1]);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) {
                ga[i * q + j] += o.grad[i * q + j];
                gr[j] += o.grad[i * q + j];
            }
    });
}

TensorPtr mul_row_broadcast(const TensorPtr& a, const TensorPtr& row) {
    require_matrix(a, "mul_row_broadcast");
    if (row->rows() != 1 || row->cols() != a->cols()) {
        throw DimensionError("mul_row_broadcast: scale must be 1x" + std::to_string(a->cols()));
    }
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p * q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) out[i * q + j] = a->values[i * q + j] * row->values[j];
    return make_op({p, q}, std::move(out), {a, row}, [p, q](const Tensor& o) {
        Tensor& a = *o.parents[0];
        Tensor& r = *o.parents[1];
        auto& ga = grad_buffer(a);
        auto& gr = grad_buffer(r);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) {
                ga[i * q + j] += o.grad[i * q + j] * r.values[j];
                gr[j] += o.grad[i * q + j] * a.values[i * q + j];
            }
    });
}

TensorPtr add_col_broadcast(const TensorPtr& a, const TensorPtr& col) {
    require_matrix(a, "add_col_broadcast");
    if (col->cols() != 1 || col->rows() != a->rows()) {
        throw DimensionError("add_col_broadcast: column must be " + std::to_string(a->rows()) +
                             "x1");
    }
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p * q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) out[i * q + j] = a->values[i * q + j] + col->values[i];
    return make_op({p, q}, std::move(out), {a, col}, [p, q](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        auto& gc = grad_buffer(*o.parents[1]);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) {
                ga[i * q + j] += o.grad[i * q + j];
                gc[i] += o.grad[i * q + j];
            }
    });
}

TensorPtr mul_col_broadcast(const TensorPtr& a, const TensorPtr& col) {
    require_matrix(a, "mul_col_broadcast");
    if (col->cols() != 1 || col->rows() != a->rows()) {
        throw DimensionError("mul_col_broadcast: column must be " + std::to_string(a->rows()) +
                             "x1");
    }
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p * q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) out[i * q + j] = a->values[i * q + j] * col->values[i];
    return make_op({p, q}, std::move(out), {a, col}, [p, q](const Tensor& o) {
        Tensor& a = *o.parents[0];
        Tensor& c = *o.parents[1];
        auto& ga = grad_buffer(a);
        auto& gc = grad_buffer(c);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) {
                ga[i * q + j] += o.grad[i * q + j] * c.values[i];
                gc[i] += o.grad[i * q + j] * a.values[i * q + j];
            }
    });
}

TensorPtr div_col_broadcast(const TensorPtr& a, const TensorPtr& col) {
    require_matrix(a, "div_col_broadcast");
    if (col->cols() != 1 || col->rows() != a->rows()) {
        throw DimensionError("div_col_broadcast: column must be " + std::to_string(a->rows()) +
                             "x1");
    }
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p * q);
    for (std::size_t i = 0; i < p; ++i) {
        if (col->values[i] == 0.0) throw NumericError("div_col_broadcast: zero divisor");
        for (std::size_t j = 0; j < q; ++j) out[i * q + j] = a->values[i * q + j] / col->values[i];
    }
    return make_op({p, q}, std::move(out), {a, col}, [p, q](const Tensor& o) {
        Tensor& a = *o.parents[0];
        Tensor& c = *o.parents[1];
        auto& ga = grad_buffer(a);
        auto& gc = grad_buffer(c);
        for (std::size_t i = 0; i < p; ++i) {
            const double inv = 1.0 / c.values[i];
            double acc = 0.0;
            for (std::size_t j = 0; j < q; ++j) {
                ga[i * q + j] += o.grad[i * q + j] * inv;
                acc += o.grad[i * q + j] * a.values[i * q + j];
            }
            gc[i] -= acc * inv * inv;
        }
    });
}

TensorPtr row_sums(const TensorPtr& a) {
    require_matrix(a, "row_sums");
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) out[i] += a->values[i * q + j];
    return make_op({p, 1}, std::move(out), {a}, [p, q](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) ga[i * q + j] += o.grad[i];
    });
}

TensorPtr col_sums(const TensorPtr& a) {
    require_matrix(a, "col_sums");
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(q, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) out[j] += a->values[i * q + j];
    return make_op({1, q}, std::move(out), {a}, [p, q](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) ga[i * q + j] += o.grad[j];
    });
}

// ---- nonlinearities ----

TensorPtr exp_elem(const TensorPtr& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->values[i]);
    auto keep = out;  // exp(x) reused in the reverse rule
    return make_op(a->shape, std::move(out), {a}, [keep = std::move(keep)](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * keep[i];
    });
}

TensorPtr log_elem(const TensorPtr& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(a->values[i] > 0.0)) throw NumericError("log_elem: non-positive input");
        out[i] = std::log(a->values[i]);
    }
    return make_op(a->shape, std::move(out), {a}, [](const Tensor& o) {
        Tensor& a = *o.parents[0];
        auto& ga = grad_buffer(a);
        for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] / a.values[i];
    });
}

TensorPtr gelu(const TensorPtr& a) {
    // exact gelu: x * Phi(x)
    static const double kInvSqrt2 = 0.7071067811865475244;
    static const double kInvSqrt2Pi = 0.3989422804014326779;
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a->values[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return make_op(a->shape, std::move(out), {a}, [](const Tensor& o) {
        Tensor& a = *o.parents[0];
        auto& ga = grad_buffer(a);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double x = a.values[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga[i] += o.grad[i] * (cdf + x * pdf);
        }
    });
}

TensorPtr sigmoid(const TensorPtr& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double z = a->values[i];
        out[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    auto keep = out;
    return make_op(a->shape, std::move(out), {a}, [keep = std::move(keep)](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            ga[i] += o.grad[i] * keep[i] * (1.0 - keep[i]);
    });
}

TensorPtr softmax_rows(const TensorPtr& a) {
    require_matrix(a, "softmax_rows");
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p * q);
    for (std::size_t i = 0; i < p; ++i) {
        double mx = a->values[i * q];
        for (std::size_t j = 1; j < q; ++j) mx = std::max(mx, a->values[i * q + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < q; ++j) {
            out[i * q + j] = std::exp(a->values[i * q + j] - mx);
            sum += out[i * q + j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < q; ++j) out[i * q + j] *= inv;
    }
    auto keep = out;
    return make_op({p, q}, std::move(out), {a},
                   [p, q, keep = std::move(keep)](const Tensor& o) {
                       auto& ga = grad_buffer(*o.parents[0]);
                       for (std::size_t i = 0; i < p; ++i) {
                           double dot = 0.0;
                           for (std::size_t j = 0; j < q; ++j)
                               dot += o.grad[i * q + j] * keep[i * q + j];
                           for (std::size_t j = 0; j < q; ++j)
                               ga[i * q + j] += keep[i * q + j] * (o.grad[i * q + j] - dot);
                       }
                   });
}

TensorPtr layer_norm_rows(const TensorPtr& a, double eps) {
    require_matrix(a, "layer_norm_rows");
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p * q);
    std::vector<double> rstd(p);
    for (std::size_t i = 0; i < p; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < q; ++j) mean += a->values[i * q + j];
        mean /= static_cast<double>(q);
        double var = 0.0;
        for (std::size_t j = 0; j < q; ++j) {
            const double d = a->values[i * q + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(q);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < q; ++j)
            out[i * q + j] = (a->values[i * q + j] - mean) * rstd[i];
    }
    auto keep = out;
    return make_op({p, q}, std::move(out), {a},
                   [p, q, rstd = std::move(rstd), keep = std::move(keep)](const Tensor& o) {
                       auto& ga = grad_buffer(*o.parents[0]);
                       for (std::size_t i = 0; i < p; ++i) {
                           double gmean = 0.0, gymean = 0.0;
                           for (std::size_t j = 0; j < q; ++j) {
                               gmean += o.grad[i * q + j];
                               gymean += o.grad[i * q + j] * keep[i * q + j];
                           }
                           gmean /= static_cast<double>(q);
                           gymean /= static_cast<double>(q);
                           for (std::size_t j = 0; j < q; ++j) {
                               ga[i * q + j] += (o.grad[i * q + j] - gmean -
                                                 keep[i * q + j] * gymean) *
                                                rstd[i];
                           }
                       }
                   });
}

// ---- structural ops ----

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no operands");
    const std::size_t p = parts[0]->rows();
    std::size_t q = 0;
    for (const auto& t : parts) {
        require_matrix(t, "concat_cols");
        if (t->rows() != p) throw DimensionError("concat_cols: row counts differ");
        q += t->cols();
    }
    std::vector<double> out(p * q);
    std::size_t off = 0;
    for (const auto& t : parts) {
        const std::size_t w = t->cols();
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * q + off + j] = t->values[i * w + j];
        off += w;
    }
    std::vector<std::size_t> widths;
    for (const auto& t : parts) widths.push_back(t->cols());
    return make_op({p, q}, std::move(out), parts,
                   [p, q, widths = std::move(widths)](const Tensor& o) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < o.parents.size(); ++k) {
                           auto& gp = grad_buffer(*o.parents[k]);
                           const std::size_t w = widths[k];
                           for (std::size_t i = 0; i < p; ++i)
                               for (std::size_t j = 0; j < w; ++j)
                                   gp[i * w + j] += o.grad[i * q + off + j];
                           off += w;
                       }
                   });
}

TensorPtr slice_cols(const TensorPtr& a, std::size_t c0, std::size_t c1) {
    require_matrix(a, "slice_cols");
    if (c0 >= c1 || c1 > a->cols()) throw DimensionError("slice_cols: bad column range");
    const std::size_t p = a->rows(), q = a->cols(), w = c1 - c0;
    std::vector<double> out(p * w);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a->values[i * q + c0 + j];
    return make_op({p, w}, std::move(out), {a}, [p, q, w, c0](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < w; ++j) ga[i * q + c0 + j] += o.grad[i * w + j];
    });
}

TensorPtr select_rows(const TensorPtr& a, const std::vector<int>& indices) {
    require_matrix(a, "select_rows");
    const std::size_t q = a->cols();
    const std::size_t n = indices.size();
    std::vector<double> out(n * q);
    for (std::size_t r = 0; r < n; ++r) {
        const int idx = indices[r];
        if (idx < 0 || static_cast<std::size_t>(idx) >= a->rows()) {
            throw ContractError("select_rows: index " + std::to_string(idx) +
                                " out of range for " + std::to_string(a->rows()) + " rows");
        }
        for (std::size_t j = 0; j < q; ++j)
            out[r * q + j] = a->values[static_cast<std::size_t>(idx) * q + j];
    }
    return make_op({n, q}, std::move(out), {a}, [q, indices](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (std::size_t r = 0; r < indices.size(); ++r)
            for (std::size_t j = 0; j < q; ++j)
                ga[static_cast<std::size_t>(indices[r]) * q + j] += o.grad[r * q + j];
    });
}

TensorPtr rows_dot(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "rows_dot");
    require_matrix(a, "rows_dot");
    const std::size_t p = a->rows(), q = a->cols();
    std::vector<double> out(p, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j)
            out[i] += a->values[i * q + j] * b->values[i * q + j];
    return make_op({p, 1}, std::move(out), {a, b}, [p, q](const Tensor& o) {
        Tensor& a = *o.parents[0];
        Tensor& b = *o.parents[1];
        auto& ga = grad_buffer(a);
        auto& gb = grad_buffer(b);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) {
                ga[i * q + j] += o.grad[i] * b.values[i * q + j];
                gb[i * q + j] += o.grad[i] * a.values[i * q + j];
            }
    });
}

TensorPtr sum_all(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->values) s += v;
    return make_op({1, 1}, {s}, {a}, [](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (double& g : ga) g += o.grad[0];
    });
}

TensorPtr mean_all(const TensorPtr& a) {
    const double inv = 1.0 / static_cast<double>(a->numel());
    double s = 0.0;
    for (double v : a->values) s += v;
    return make_op({1, 1}, {s * inv}, {a}, [inv](const Tensor& o) {
        auto& ga = grad_buffer(*o.parents[0]);
        for (double& g : ga) g += o.grad[0] * inv;
    });
}

TensorPtr bce_with_logits_mean(const TensorPtr& logits, const std::vector<double>& labels) {
    if (logits->numel() == 0) throw ContractError("bce_with_logits_mean: empty batch");
    if (logits->numel() != labels.size()) {
        throw DimensionError("bce_with_logits_mean: " + std::to_string(logits->numel()) +
                             " logits vs " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = logits->numel();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        loss += stable_softplus(logits->values[i]) - labels[i] * logits->values[i];
    }
    loss /= static_cast<double>(n);
    return make_op({1, 1}, {loss}, {logits}, [labels, n](const Tensor& o) {
        Tensor& z = *o.parents[0];
        auto& gz = grad_buffer(z);
        const double inv = o.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = z.values[i];
            const double sig =
                v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            gz[i] += inv * (sig - labels[i]);
        }
    });
}

// ---- segment ops (edge lists grouped by target node) ----

namespace {
void check_segments(const std::vector<int>& seg, int n_segments, std::size_t rows,
                    const char* op) {
    if (seg.size() != rows) throw DimensionError(std::string(op) + ": segment id per row");
    for (std::size_t i = 0; i < seg.size(); ++i) {
        if (seg[i] < 0 || seg[i] >= n_segments)
            throw ContractError(std::string(op) + ": segment id out of range");
        if (i > 0 && seg[i] < seg[i - 1])
            throw ContractError(std::string(op) + ": segment ids must be sorted");
    }
}
}  // namespace

TensorPtr segment_softmax(const TensorPtr& a, const std::vector<int>& segment_of_row,
                          int n_segments) {
    require_matrix(a, "segment_softmax");
    if (a->cols() != 1) throw DimensionError("segment_softmax: expects a column vector");
    check_segments(segment_of_row, n_segments, a->rows(), "segment_softmax");
    const std::size_t n = a->rows();
    std::vector<double> out(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && segment_of_row[j] == segment_of_row[i]) ++j;
        double mx = a->values[i];
        for (std::size_t k = i; k < j; ++k) mx = std::max(mx, a->values[k]);
        double sum = 0.0;
        for (std::size_t k = i; k < j; ++k) {
            out[k] = std::exp(a->values[k] - mx);
            sum += out[k];
        }
        for (std::size_t k = i; k < j; ++k) out[k] /= sum;
        i = j;
    }
    auto keep = out;
    return make_op({n, 1}, std::move(out), {a},
                   [segment_of_row, keep = std::move(keep)](const Tensor& o) {
                       auto& ga = grad_buffer(*o.parents[0]);
                       const std::size_t n = keep.size();
                       std::size_t i = 0;
                       while (i < n) {
                           std::size_t j = i;
                           while (j < n && segment_of_row[j] == segment_of_row[i]) ++j;
                           double dot = 0.0;
                           for (std::size_t k = i; k < j; ++k) dot += o.grad[k] * keep[k];
                           for (std::size_t k = i; k < j; ++k)
                               ga[k] += keep[k] * (o.grad[k] - dot);
                           i = j;
                       }
                   });
}

TensorPtr segment_weighted_sum_rows(const TensorPtr& rows, const TensorPtr& weights,
                                    const std::vector<int>& segment_of_row, int n_segments) {
    require_matrix(rows, "segment_weighted_sum_rows");
    if (weights->cols() != 1 || weights->rows() != rows->rows())
        throw DimensionError("segment_weighted_sum_rows: one weight per row");
    check_segments(segment_of_row, n_segments, rows->rows(), "segment_weighted_sum_rows");
    const std::size_t n = rows->rows(), q = rows->cols();
    std::vector<double> out(static_cast<std::size_t>(n_segments) * q, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t s = static_cast<std::size_t>(segment_of_row[r]);
        for (std::size_t j = 0; j < q; ++j)
            out[s * q + j] += weights->values[r] * rows->values[r * q + j];
    }
    return make_op({static_cast<std::size_t>(n_segments), q}, std::move(out), {rows, weights},
                   [q, segment_of_row](const Tensor& o) {
                       Tensor& rows = *o.parents[0];
                       Tensor& w = *o.parents[1];
                       auto& gr = grad_buffer(rows);
                       auto& gw = grad_buffer(w);
                       for (std::size_t r = 0; r < segment_of_row.size(); ++r) {
                           const std::size_t s = static_cast<std::size_t>(segment_of_row[r]);
                           double acc = 0.0;
                           for (std::size_t j = 0; j < q; ++j) {
                               gr[r * q + j] += w.values[r] * o.grad[s * q + j];
                               acc += rows.values[r * q + j] * o.grad[s * q + j];
                           }
                           gw[r] += acc;
                       }
                   });
}

// ---- backward ----

GradientMap backward(const TensorPtr& loss) {
    if (!loss) throw ContractError("backward: null loss");
    if (!loss->is_scalar()) {
        throw ContractError("backward: loss must be scalar, got " +
                            std::to_string(loss->numel()) + " elements");
    }
    if (loss->consumed) {
        throw ContractError("backward: tape already consumed; re-record the forward pass");
    }

    // iterative post-order over the recorded graph
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next].get();
            ++next;
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Tensor* t : order) t->grad.assign(t->numel(), 0.0);
    loss->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* t = *it;
        if (t->backprop) t->backprop(*t);
    }

    GradientMap grads;
    for (Tensor* t : order) {
        if (t->requires_grad && t->parents.empty()) grads.insert(t, std::move(t->grad));
    }

    // release the tape; nodes cannot be differentiated again
    for (Tensor* t : order) {
        t->grad.clear();
        t->grad.shrink_to_fit();
        t->backprop = nullptr;
        t->parents.clear();
        t->consumed = true;
    }
    return grads;
}

// ---- Adam ----

AdamOptimizer::AdamOptimizer(std::vector<TensorPtr> params, double learning_rate, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr_ < 0.0) throw ContractError("AdamOptimizer: negative learning rate");
    for (const auto& p : params_) {
        if (!p->requires_grad)
            throw ContractError("AdamOptimizer: parameter does not require gradients");
        m_.emplace_back(p->numel(), 0.0);
        v_.emplace_back(p->numel(), 0.0);
    }
}

void AdamOptimizer::step(const GradientMap& grads) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = *params_[k];
        const std::vector<double>& g = grads.at(params_[k].get());
        if (g.size() != p.numel())
            throw ContractError("AdamOptimizer: gradient shape mismatch");
        for (std::size_t i = 0; i < g.size(); ++i) {
            m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
            v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m_[k][i] / bc1;
            const double vhat = v_[k][i] / bc2;
            p.values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ---- grad check ----

double grad_check(const std::function<TensorPtr()>& loss_fn,
                  const std::vector<TensorPtr>& params, double eps) {
    if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");

    const double l1 = loss_fn()->values[0];
    auto grads = backward(loss_fn());
    const double l2 = loss_fn()->values[0];
    if (l1 != l2) throw ContractError("grad_check: function is not deterministic");

    double worst = 0.0;
    NoGradGuard ng;  // numeric probes need values only
    for (const auto& p : params) {
        const std::vector<double>& analytic = grads.at(p.get());
        for (std::size_t i = 0; i < p->numel(); ++i) {
            const double saved = p->values[i];
            p->values[i] = saved + eps;
            const double lp = loss_fn()->values[0];
            p->values[i] = saved - eps;
            const double lm = loss_fn()->values[0];
            p->values[i] = saved;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double err =
                std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// ---- init & registry ----

TensorPtr random_normal(std::size_t rows, std::size_t cols, double sd, Rng& rng,
                        bool requires_grad) {
    std::vector<double> vals(rows * cols);
    for (double& v : vals) v = rng.normal(0.0, sd);
    return Tensor::create({rows, cols}, std::move(vals), requires_grad);
}

TensorPtr NamedParams::add(const std::string& name, TensorPtr t) {
    if (index_.count(name)) throw ContractError("NamedParams: duplicate name " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, t);
    return t;
}

TensorPtr NamedParams::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : items_[it->second].second;
}

std::vector<TensorPtr> NamedParams::tensors() const {
    std::vector<TensorPtr> out;
    out.reserve(items_.size());
    for (const auto& [name, t] : items_) out.push_back(t);
    return out;
}

}  // namespace scnet
