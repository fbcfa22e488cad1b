#include "sctransnet/pooling.hpp"

#include "sctransnet/common.hpp"

namespace scnet {

Matrix average_attention(const std::vector<Matrix>& matrices) {
    if (matrices.empty()) throw ContractError("average_attention: no attention matrices");
    const std::size_t t = matrices[0].rows;
    for (const Matrix& m : matrices) {
        if (m.rows != t || m.cols != t)
            throw DimensionError("average_attention: matrices must all be TxT");
    }
    Matrix out(t, t);
    const double inv = 1.0 / static_cast<double>(matrices.size());
    for (const Matrix& m : matrices)
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += m.v[i];
    for (double& x : out.v) x *= inv;
    return out;
}

std::vector<double> attention_sum(const Matrix& a_avg) {
    if (a_avg.rows != a_avg.cols) throw DimensionError("attention_sum: matrix must be square");
    std::vector<double> out(a_avg.cols, 0.0);
    for (std::size_t i = 0; i < a_avg.rows; ++i)
        for (std::size_t j = 0; j < a_avg.cols; ++j) out[j] += a_avg.at(i, j);
    return out;
}

std::vector<double> attention_sum_linear(const Matrix& q_features, const Matrix& k_features) {
    if (q_features.rows != k_features.rows || q_features.cols != k_features.cols)
        throw DimensionError("attention_sum_linear: feature shapes must match");
    const std::size_t t = q_features.rows, m = q_features.cols;

    // column mass of K'
    std::vector<double> k_mass(m, 0.0);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < m; ++j) k_mass[j] += k_features.at(i, j);

    // u = sum_i q'_i / (q'_i . k_mass)
    std::vector<double> u(m, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < m; ++j) denom += q_features.at(i, j) * k_mass[j];
        if (!(denom > 0.0))
            throw NumericError("attention_sum_linear: normalizer must be positive");
        const double w = 1.0 / denom;
        for (std::size_t j = 0; j < m; ++j) u[j] += w * q_features.at(i, j);
    }

    std::vector<double> out(t, 0.0);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += k_features.at(i, j) * u[j];
    return out;
}

std::vector<double> attention_sum_linear(const Tensor& q_features, const Tensor& k_features) {
    return attention_sum_linear(q_features.to_matrix(), k_features.to_matrix());
}

Matrix normalize_scores(const Matrix& per_cell_sums) {
    const std::size_t n = per_cell_sums.rows, t = per_cell_sums.cols;
    if (n == 0) throw ContractError("normalize_scores: needs at least one cell");
    Matrix out(n, t);
    for (std::size_t g = 0; g < t; ++g) {
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) total += per_cell_sums.at(c, g);
        if (total > 0.0) {
            for (std::size_t c = 0; c < n; ++c)
                out.at(c, g) = per_cell_sums.at(c, g) / total;
        } else {
            for (std::size_t c = 0; c < n; ++c) out.at(c, g) = 1.0 / static_cast<double>(n);
        }
    }
    return out;
}

TensorPtr pool_genes(const std::vector<TensorPtr>& cell_hidden, const Matrix& scores) {
    if (cell_hidden.empty()) throw ContractError("pool_genes: no cells");
    if (scores.rows != cell_hidden.size())
        throw DimensionError("pool_genes: one score row per cell");
    const std::size_t t = cell_hidden[0]->rows();
    if (scores.cols != t) throw DimensionError("pool_genes: one score column per gene");

    TensorPtr z;
    for (std::size_t n = 0; n < cell_hidden.size(); ++n) {
        if (cell_hidden[n]->rows() != t)
            throw DimensionError("pool_genes: cell hidden states disagree on gene count");
        auto weights = Tensor::create({t, 1}, scores.row(n));
        auto term = mul_col_broadcast(cell_hidden[n], weights);
        z = n == 0 ? term : add(z, term);
    }
    return z;
}

}  // namespace scnet
