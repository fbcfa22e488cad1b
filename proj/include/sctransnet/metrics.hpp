#ifndef SCTRANSNET_METRICS_HPP
#define SCTRANSNET_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace scnet {

// Probability that a random positive outranks a random negative, ties at 0.5
// (Mann-Whitney). ValidationError unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision: sum over score thresholds (descending, ties grouped) of
// precision x recall increment. ValidationError if no positives.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

struct MetricsReport {
    double auroc = 0.0;
    double auprc = 0.0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::string split;
    std::uint64_t seed = 0;
    std::string config_hash;

    // key=value lines
    std::string text() const;
    static std::string csv_header();
    std::string csv_row() const;
};

MetricsReport make_report(const std::vector<double>& scores, const std::vector<int>& labels,
                          const std::string& split, std::uint64_t seed,
                          const std::string& config_hash);

}  // namespace scnet

#endif
