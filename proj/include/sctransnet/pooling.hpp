#ifndef SCTRANSNET_POOLING_HPP
#define SCTRANSNET_POOLING_HPP

#include <vector>

#include "sctransnet/matrix.hpp"
#include "sctransnet/tensor.hpp"

namespace scnet {

// Element-wise mean over recorded attention matrices (all layers and heads of
// one cell); rows stay stochastic.
Matrix average_attention(const std::vector<Matrix>& matrices);

// a_n[j] = sum_i A(i,j): total attention received by gene j in this cell.
std::vector<double> attention_sum(const Matrix& a_avg);

// Same quantity for the attention matrix implied by performer features,
// computed in O(T*m) via 1^T Ahat = (K'(Q'^T D_hat^{-1} 1))^T.
std::vector<double> attention_sum_linear(const Matrix& q_features, const Matrix& k_features);
std::vector<double> attention_sum_linear(const Tensor& q_features, const Tensor& k_features);

// Normalizes a stack of per-cell attention sums (N x T) so that each gene's
// weights over cells sum to 1; an all-zero column falls back to uniform 1/N.
Matrix normalize_scores(const Matrix& per_cell_sums);

// Z_g[t] = sum_n scores[n,t] * hidden_n[t]. Scores are constants: gradients
// flow through the pooled embeddings only.
TensorPtr pool_genes(const std::vector<TensorPtr>& cell_hidden, const Matrix& scores);

}  // namespace scnet

#endif
