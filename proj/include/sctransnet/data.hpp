#ifndef SCTRANSNET_DATA_HPP
#define SCTRANSNET_DATA_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sctransnet/matrix.hpp"

namespace scnet {

struct GeneVocabulary {
    std::vector<std::string> symbols;  // upper-cased, unique
    std::vector<bool> is_tf;
    std::unordered_map<std::string, int> index;

    int add(const std::string& symbol);
    int find(const std::string& symbol) const;  // -1 if unknown
    std::size_t size() const { return symbols.size(); }
    std::size_t tf_count() const;
    std::vector<int> tf_indices() const;
};

struct ExpressionMatrix {
    Matrix counts;  // cells x genes
    GeneVocabulary vocab;
    std::vector<std::string> cell_ids;

    std::size_t n_cells() const { return counts.rows; }
    std::size_t n_genes() const { return counts.cols; }
};

struct BinnedMatrix {
    std::vector<std::uint16_t> bins;  // cells x genes, row-major; bin 0 = zero count
    std::size_t n_cells = 0;
    std::size_t n_genes = 0;
    int bin_count = 0;
    bool log_transformed = true;
    double nonzero_lo = 0.0;  // bounds of log1p(count) over nonzero entries
    double nonzero_hi = 0.0;

    std::uint16_t at(std::size_t cell, std::size_t gene) const {
        return bins[cell * n_genes + gene];
    }
    std::vector<int> cell_row(std::size_t cell) const;
};

struct Edge {
    int tf = 0;
    int target = 0;
    bool operator==(const Edge& o) const { return tf == o.tf && target == o.target; }
};

struct PriorNetwork {
    std::vector<Edge> edges;  // deduplicated; every source flagged TF in the vocabulary
    std::size_t dropped_unknown = 0;  // input rows naming genes outside the vocabulary
    std::size_t dropped_self = 0;
    std::size_t dropped_duplicate = 0;
};

enum class SplitKind { train, validation, test };
std::string split_name(SplitKind k);

struct LabeledPair {
    int tf = 0;
    int gene = 0;
    int label = 0;
};

struct LabeledSplits {
    std::vector<LabeledPair> train, validation, test;
    std::uint64_t seed = 0;
    double ratio_train = 0.0;  // achieved positives per negative
    double ratio_validation = 0.0;
    double ratio_test = 0.0;

    const std::vector<LabeledPair>& get(SplitKind k) const;
};

struct SamplingPlan {
    double network_density = 0.0;       // in (0,1)
    double hard_negative_fraction = 1.0;

    double target_ratio() const { return network_density / (1.0 - network_density); }
};

enum class Orientation { auto_detect, cells_rows, genes_rows };

// CSV with a header row and identifier column; result is cells x genes with
// upper-cased gene symbols. genes_rows files are transposed (per hint, or per
// the symbol-shape heuristic when the hint is auto_detect).
ExpressionMatrix load_expression(const std::string& path,
                                 Orientation hint = Orientation::auto_detect);

// Zero counts map to bin 0; nonzero counts are log1p-transformed and placed in
// bin_count-1 equal-width bins between the dataset-wide nonzero min and max.
BinnedMatrix bin_expression(const ExpressionMatrix& x, int bin_count);

// (TF,target) symbol pairs; unknown symbols are dropped and counted, sources
// gain the TF flag.
PriorNetwork load_network(const std::string& path, GeneVocabulary& vocab);

// |E| / (|TF| * (T-1)): edges over all candidate TF->other-gene pairs.
double network_density(const PriorNetwork& net, const GeneVocabulary& vocab);

// Leakage-free label construction: positives split 2/3 train (10% of that to
// validation) / 1/3 test, per-split negatives matched to
// density/(1-density), train negatives mostly sharing a TF with a positive.
LabeledSplits make_splits(const PriorNetwork& net, const GeneVocabulary& vocab,
                          const SamplingPlan& plan, std::uint64_t seed);

struct SynthDataset {
    ExpressionMatrix expression;
    PriorNetwork network;
};

// Planted-GRN generator: TF expression i.i.d. log-normal; each target is a
// convex positive-weighted combination of its regulators plus Gaussian noise,
// floored at zero and rounded to counts.
SynthDataset synth_generate(int n_genes, int n_tfs, int n_cells, double edge_prob,
                            double noise_sd, std::uint64_t seed);

// Audit CSV `tf,target,label,split` for one split.
std::string splits_to_csv(const LabeledSplits& splits, SplitKind kind,
                          const GeneVocabulary& vocab, const std::string& meta_comment);
std::vector<LabeledPair> pairs_from_csv(const std::string& path, const GeneVocabulary& vocab);

std::string expression_to_csv(const ExpressionMatrix& x, bool genes_as_rows,
                              const std::string& meta_comment);
std::string network_to_csv(const PriorNetwork& net, const GeneVocabulary& vocab,
                           const std::string& meta_comment);

}  // namespace scnet

#endif
