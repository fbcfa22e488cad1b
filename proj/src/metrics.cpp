#include "sctransnet/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "sctransnet/common.hpp"

namespace scnet {

namespace {
void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels,
                  const char* op) {
    if (scores.size() != labels.size())
        throw DimensionError(std::string(op) + ": score/label length mismatch");
    if (scores.empty()) throw ValidationError(std::string(op) + ": empty input");
    for (double s : scores)
        if (!is_finite(s)) throw NumericError(std::string(op) + ": non-finite score");
    for (int l : labels)
        if (l != 0 && l != 1) throw ValidationError(std::string(op) + ": labels must be 0/1");
}
}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels, "auroc");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (int l : labels) pos += static_cast<std::size_t>(l);
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) throw ValidationError("auroc: needs both classes");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // rank sum of positives with tie-averaged ranks; ranks are half-integers,
    // exact in double at these sizes
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels, "auprc");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (int l : labels) pos += static_cast<std::size_t>(l);
    if (pos == 0) throw ValidationError("auprc: needs at least one positive");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double tp = 0.0, seen = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        double group_tp = 0.0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            group_tp += labels[order[j]];
            ++j;
        }
        tp += group_tp;
        seen += static_cast<double>(j - i);
        const double precision = tp / seen;
        const double recall = tp / static_cast<double>(pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

std::string MetricsReport::text() const {
    std::ostringstream os;
    os << "split=" << split << "\n"
       << "auroc=" << format_double(auroc) << "\n"
       << "auprc=" << format_double(auprc) << "\n"
       << "positives=" << positives << "\n"
       << "negatives=" << negatives << "\n"
       << "seed=" << seed << "\n"
       << "config_hash=" << config_hash << "\n"
       << "auprc_estimator=average_precision\n";
    return os.str();
}

std::string MetricsReport::csv_header() {
    return "split,auroc,auprc,positives,negatives,seed,config_hash";
}

std::string MetricsReport::csv_row() const {
    std::ostringstream os;
    os << split << "," << format_double(auroc) << "," << format_double(auprc) << ","
       << positives << "," << negatives << "," << seed << "," << config_hash;
    return os.str();
}

MetricsReport make_report(const std::vector<double>& scores, const std::vector<int>& labels,
                          const std::string& split, std::uint64_t seed,
                          const std::string& config_hash) {
    MetricsReport r;
    r.auroc = auroc(scores, labels);
    r.auprc = auprc(scores, labels);
    for (int l : labels) r.positives += static_cast<std::size_t>(l);
    r.negatives = labels.size() - r.positives;
    r.split = split;
    r.seed = seed;
    r.config_hash = config_hash;
    return r;
}

}  // namespace scnet
