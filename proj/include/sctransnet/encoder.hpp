#ifndef SCTRANSNET_ENCODER_HPP
#define SCTRANSNET_ENCODER_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sctransnet/data.hpp"
#include "sctransnet/tensor.hpp"

namespace scnet {

enum class AttentionMode { exact, performer };

std::string attention_mode_name(AttentionMode m);
AttentionMode attention_mode_from(const std::string& name);

struct EncoderConfig {
    int embed_dim = 64;
    int layers = 2;
    int heads = 4;
    int ff_dim = 128;
    AttentionMode mode = AttentionMode::exact;
    int performer_features = 64;  // m, random features per head
    int bin_count = 51;
    bool raw_normalization = false;  // literal D^{-1}(QK^T)V instead of softmax
    double ln_eps = 1e-5;

    int head_dim() const { return embed_dim / heads; }
    void validate() const;
};

// Per-head random feature map for the softmax-kernel estimator.
struct PerformerFeatureMap {
    TensorPtr omega;       // head_dim x m, i.i.d. standard normal, fixed
    double scale_c = 1.0;
    std::uint64_t seed = 0;
};

struct EncoderBlockParams {
    TensorPtr ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    TensorPtr wq, bq, wk, bk, wv, bv, wo, bo;
    TensorPtr ff_w1, ff_b1, ff_w2, ff_b2;
};

struct EncoderParams {
    TensorPtr gene_table;  // T x d_e (gene2vec stand-in, trainable)
    TensorPtr bin_table;   // B x d_e expression-bin embedding
    std::vector<EncoderBlockParams> blocks;
    std::vector<PerformerFeatureMap> feature_maps;  // layers*heads, performer mode
};

// Creates and registers all encoder parameters under "encoder." names.
EncoderParams init_encoder_params(const EncoderConfig& cfg, std::size_t n_genes, Rng& rng,
                                  NamedParams& registry);

// Overwrites gene-table rows from a `symbol,v1,...,v_d` CSV; unknown symbols
// are skipped and counted, dimension mismatch is an InputError.
std::size_t load_gene_embeddings_csv(const std::string& path, const GeneVocabulary& vocab,
                                     const TensorPtr& gene_table);

// H0[t] = gene_table[t] + bin_table[bin(t)]
TensorPtr embed_inputs(const std::vector<int>& cell_bins, const TensorPtr& gene_table,
                       const TensorPtr& bin_table);

struct ExactAttentionResult {
    TensorPtr output;   // L_s x d_h
    TensorPtr weights;  // L_s x L_s, rows sum to 1
};

// Row-softmax of QK^T/sqrt(d_h) applied to V. `raw` keeps the printed
// D^{-1}(QK^T)V normalization without the exponential (study mode).
ExactAttentionResult exact_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                                     bool raw = false);

// phi(X) = c/sqrt(m) * exp(X omega - |x_row|^2/2), strictly positive
TensorPtr performer_features(const TensorPtr& x, const PerformerFeatureMap& fm);

struct PerformerAttentionResult {
    TensorPtr output;      // L_s x d_h
    TensorPtr q_features;  // L_s x m (of Q scaled by d_h^{-1/4})
    TensorPtr k_features;
};

// D_hat^{-1}(Q'((K')^T V)) without materializing the L_s x L_s matrix;
// approximates exact_attention since inputs are pre-scaled by d_h^{-1/4}.
PerformerAttentionResult performer_attention(const TensorPtr& q, const TensorPtr& k,
                                             const TensorPtr& v, const PerformerFeatureMap& fm);

struct EncoderState {
    std::vector<TensorPtr> hidden;  // H^0 .. H^L
    // exact mode: recorded per-layer per-head attention matrices
    std::vector<Matrix> attention;
    // performer mode: per-layer per-head feature pairs (Q', K') for the
    // linear attention-sum path
    std::vector<std::pair<TensorPtr, TensorPtr>> performer_feats;
};

EncoderState encoder_forward(const TensorPtr& h0, const EncoderParams& params,
                             const EncoderConfig& cfg);

}  // namespace scnet

#endif
