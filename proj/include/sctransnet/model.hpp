#ifndef SCTRANSNET_MODEL_HPP
#define SCTRANSNET_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sctransnet/data.hpp"
#include "sctransnet/encoder.hpp"
#include "sctransnet/gat.hpp"
#include "sctransnet/metrics.hpp"

namespace scnet {

struct AblationFlags {
    bool no_gnn = false;
    bool no_encoder = false;
    bool mean_pooling = false;
};

struct TrainConfig {
    int iterations = 100;
    double learning_rate = 0.003;
    std::uint64_t seed = 0;
    AblationFlags ablation;
    int head_hidden = 128;  // scoring channel MLP
    int head_out = 64;
    bool mlp_combiner = false;  // score pairs with an MLP instead of a dot product

    void validate() const;
};

struct ModelConfig {
    EncoderConfig encoder;
    GatConfig gat;
    TrainConfig train;

    // sorted key=value lines; the FNV hash of this text is stamped into every
    // output file of a run
    std::string canonical_text() const;
    std::string hash_hex() const;
    static ModelConfig from_text(const std::string& text);
};

struct ModelParams {
    NamedParams registry;
    EncoderParams encoder;
    GatParams gat;
    TensorPtr tf_w1, tf_b1, tf_w2, tf_b2;  // TF channel
    TensorPtr tg_w1, tg_b1, tg_w2, tg_b2;  // target channel
    TensorPtr comb_w1, comb_b1, comb_w2, comb_b2;  // optional MLP combiner
};

ModelParams init_model_params(const ModelConfig& cfg, std::size_t n_genes, std::size_t n_cells,
                              Rng& rng);

struct Dataset {
    ExpressionMatrix expression;
    BinnedMatrix binned;
    PriorNetwork network;
    LabeledSplits splits;
};

Dataset make_dataset(ExpressionMatrix expression, PriorNetwork network, LabeledSplits splits,
                     int bin_count);

struct ForwardResult {
    TensorPtr fused;           // T x (d_e + gat_width)
    TensorPtr tf_channel;      // T x head_out
    TensorPtr target_channel;  // T x head_out
    Matrix scores;             // N x T pooling scores (empty when unused)
};

// Full pipeline: encoder over every cell, attentive pooling, GAT over the
// structure graph, fusion, channel MLPs. Ablations zero the corresponding
// fused block and skip the dead computation.
ForwardResult model_forward(const Dataset& data, const GraphStructure& g,
                            const ModelParams& mp, const ModelConfig& cfg);

// Rowwise concatenation with ablation zeroing; width always d_e + gat_width.
TensorPtr fuse(const TensorPtr& pooled, const TensorPtr& gat_out, const AblationFlags& flags);

// Logits for directed pairs from the two channel outputs.
TensorPtr pair_logits(const ForwardResult& f, const std::vector<LabeledPair>& pairs,
                      const ModelParams& mp, bool mlp_combiner);

// sigmoid(tf_channel[i] . target_channel[j]) on frozen channel values
double score_pair(const Matrix& tf_channel, const Matrix& target_channel, int tf, int gene);

// Mean binary cross-entropy on probabilities, clamped to [1e-7, 1-1e-7].
double bce_loss(const std::vector<double>& probabilities, const std::vector<int>& labels);

struct HistoryRow {
    int iteration = 0;  // 1-based
    double loss = 0.0;
    double val_auroc = 0.0;
    double val_auprc = 0.0;
};

struct TrainedModel {
    ModelConfig config;
    GeneVocabulary vocab;
    std::vector<Edge> structure_edges;  // message-passing graph = training positives
    ModelParams params;                 // best-validation-AUPRC values
    std::vector<HistoryRow> history;
    int best_iteration = 0;
    Matrix tf_channel, target_channel;  // derived at the retained parameters
    std::size_t n_cells = 0;
};

// Full-batch supervised training. Deterministic given (seed, config, data);
// a non-finite loss aborts with the iteration index and parameter norms.
// A nonempty `pretrained_embeddings_csv` overwrites matching gene-table rows
// before the first iteration.
TrainedModel train(const Dataset& data, const ModelConfig& cfg,
                   const std::string& pretrained_embeddings_csv = "");

struct ScoredPair {
    int tf = 0;
    int gene = 0;
    double score = 0.0;
};

// Probabilities for explicit pairs; sources must be TFs.
std::vector<ScoredPair> predict_pairs(const TrainedModel& model,
                                      const std::vector<std::pair<int, int>>& pairs);
// Every TF -> other-gene pair, ranked by descending score (ties by index).
std::vector<ScoredPair> predict_all(const TrainedModel& model);

// Re-scores one split with the frozen model recomputed over `data`; rejects
// test splits that intersect train/validation pairs.
MetricsReport evaluate_model(const TrainedModel& model, const Dataset& data, SplitKind split);

// Versioned little-endian binary container: config text, vocabulary,
// structure edges, named f64 tensors (parameters + derived channels).
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

std::string dot_subgraph(const std::vector<ScoredPair>& ranked, std::size_t top_k,
                         const GeneVocabulary& vocab, const std::string& meta_comment);

}  // namespace scnet

#endif
