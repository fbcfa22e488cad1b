#include "sctransnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "sctransnet/common.hpp"
#include "sctransnet/csv.hpp"
#include "sctransnet/rng.hpp"

namespace scnet {

// ---- GeneVocabulary ----

int GeneVocabulary::add(const std::string& symbol) {
    auto it = index.find(symbol);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(symbols.size());
    symbols.push_back(symbol);
    is_tf.push_back(false);
    index[symbol] = id;
    return id;
}

int GeneVocabulary::find(const std::string& symbol) const {
    auto it = index.find(symbol);
    return it == index.end() ? -1 : it->second;
}

std::size_t GeneVocabulary::tf_count() const {
    std::size_t n = 0;
    for (bool b : is_tf) n += b ? 1 : 0;
    return n;
}

std::vector<int> GeneVocabulary::tf_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < is_tf.size(); ++i)
        if (is_tf[i]) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> BinnedMatrix::cell_row(std::size_t cell) const {
    std::vector<int> out(n_genes);
    for (std::size_t g = 0; g < n_genes; ++g) out[g] = bins[cell * n_genes + g];
    return out;
}

std::string split_name(SplitKind k) {
    switch (k) {
        case SplitKind::train: return "train";
        case SplitKind::validation: return "validation";
        default: return "test";
    }
}

const std::vector<LabeledPair>& LabeledSplits::get(SplitKind k) const {
    switch (k) {
        case SplitKind::train: return train;
        case SplitKind::validation: return validation;
        default: return test;
    }
}

// ---- expression loading ----

namespace {

double parse_count(const std::string& field, std::size_t line, std::size_t col) {
    try {
        std::size_t used = 0;
        double v = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("expression: non-numeric value '" + field + "' at line " +
                         std::to_string(line) + ", column " + std::to_string(col));
    }
}

// Gene symbols tend to be short, upper-case alphanumerics; cell identifiers
// from sequencing exports rarely are. Used only when the hint is auto_detect.
double gene_likeness(const std::vector<std::string>& ids) {
    if (ids.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& id : ids) {
        bool ok = !id.empty() && id.size() <= 12;
        bool has_alpha = false;
        for (char c : id) {
            const bool valid = (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                               c == '.';
            if (!valid) {
                ok = false;
                break;
            }
            if (c >= 'A' && c <= 'Z') has_alpha = true;
        }
        if (ok && has_alpha) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ids.size());
}

}  // namespace

ExpressionMatrix load_expression(const std::string& path, Orientation hint) {
    CsvFile csv = read_csv(path);
    if (csv.rows.size() < 2) throw ParseError("expression: " + path + " has no data rows");

    const auto& header = csv.rows[0];
    if (header.size() < 2) throw ParseError("expression: " + path + " has no data columns");

    std::vector<std::string> col_ids(header.begin() + 1, header.end());
    std::vector<std::string> row_ids;
    const std::size_t n_rows = csv.rows.size() - 1;
    const std::size_t n_cols = col_ids.size();

    Matrix body(n_rows, n_cols);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& fields = csv.rows[r + 1];
        if (fields.size() != n_cols + 1) {
            throw ParseError("expression: line " + std::to_string(r + 2) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(n_cols + 1));
        }
        row_ids.push_back(fields[0]);
        for (std::size_t c = 0; c < n_cols; ++c) {
            body.at(r, c) = parse_count(fields[c + 1], r + 2, c + 2);
        }
    }

    bool genes_as_rows = false;
    if (hint == Orientation::genes_rows) {
        genes_as_rows = true;
    } else if (hint == Orientation::auto_detect) {
        std::vector<std::string> rows_up, cols_up;
        for (const auto& s : row_ids) rows_up.push_back(upper_ascii(s));
        for (const auto& s : col_ids) cols_up.push_back(upper_ascii(s));
        genes_as_rows = gene_likeness(rows_up) > gene_likeness(cols_up);
    }

    ExpressionMatrix out;
    const auto& gene_ids = genes_as_rows ? row_ids : col_ids;
    const auto& cell_ids = genes_as_rows ? col_ids : row_ids;
    for (const auto& g : gene_ids) {
        std::string sym = upper_ascii(g);
        if (out.vocab.find(sym) >= 0)
            throw ValidationError("expression: duplicate gene symbol " + sym);
        out.vocab.add(sym);
    }
    out.cell_ids = cell_ids;

    const std::size_t n = cell_ids.size(), t = gene_ids.size();
    out.counts = Matrix(n, t);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            const double v = genes_as_rows ? body.at(j, i) : body.at(i, j);
            if (v < 0.0) {
                throw ValidationError("expression: negative count at cell '" + cell_ids[i] +
                                      "', gene '" + out.vocab.symbols[j] + "'");
            }
            out.counts.at(i, j) = v;
        }
    }
    return out;
}

// ---- binning ----

BinnedMatrix bin_expression(const ExpressionMatrix& x, int bin_count) {
    if (bin_count < 2) throw ContractError("bin_expression: bin_count must be >= 2");
    BinnedMatrix out;
    out.n_cells = x.n_cells();
    out.n_genes = x.n_genes();
    out.bin_count = bin_count;
    out.bins.assign(out.n_cells * out.n_genes, 0);

    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (double v : x.counts.v) {
        if (v > 0.0) {
            const double y = std::log1p(v);
            if (!any) {
                lo = hi = y;
                any = true;
            } else {
                lo = std::min(lo, y);
                hi = std::max(hi, y);
            }
        }
    }
    if (!any) throw ValidationError("bin_expression: matrix has no nonzero counts");
    out.nonzero_lo = lo;
    out.nonzero_hi = hi;

    const int nonzero_bins = bin_count - 1;
    const double width = hi - lo;
    for (std::size_t i = 0; i < x.counts.v.size(); ++i) {
        const double v = x.counts.v[i];
        if (v <= 0.0) continue;  // bin 0 reserved for zeros
        int b;
        if (width == 0.0) {
            b = 1;
        } else {
            const double y = std::log1p(v);
            b = 1 + static_cast<int>((y - lo) / width * nonzero_bins);
            b = std::min(std::max(b, 1), nonzero_bins);
        }
        out.bins[i] = static_cast<std::uint16_t>(b);
    }
    return out;
}

// ---- network loading ----

namespace {
bool looks_like_network_header(const std::vector<std::string>& fields) {
    if (fields.size() < 2) return false;
    static const std::set<std::string> src = {"TF", "SOURCE", "REGULATOR", "GENE1", "FROM"};
    static const std::set<std::string> dst = {"TARGET", "GENE", "GENE2", "TO"};
    return src.count(upper_ascii(fields[0])) > 0 || dst.count(upper_ascii(fields[1])) > 0;
}
}  // namespace

PriorNetwork load_network(const std::string& path, GeneVocabulary& vocab) {
    CsvFile csv = read_csv(path);
    PriorNetwork net;
    std::set<std::pair<int, int>> seen;

    std::size_t start = 0;
    if (!csv.rows.empty() && looks_like_network_header(csv.rows[0])) start = 1;

    for (std::size_t r = start; r < csv.rows.size(); ++r) {
        const auto& fields = csv.rows[r];
        if (fields.size() < 2) {
            throw ParseError("network: line " + std::to_string(r + 1) +
                             " needs two columns (TF,target)");
        }
        const int tf = vocab.find(upper_ascii(fields[0]));
        const int tg = vocab.find(upper_ascii(fields[1]));
        if (tf < 0 || tg < 0) {
            ++net.dropped_unknown;
            continue;
        }
        if (tf == tg) {
            ++net.dropped_self;
            continue;
        }
        if (!seen.insert({tf, tg}).second) {
            ++net.dropped_duplicate;
            continue;
        }
        net.edges.push_back({tf, tg});
        vocab.is_tf[static_cast<std::size_t>(tf)] = true;
    }
    if (net.edges.empty()) {
        throw ValidationError("network: no usable edges in " + path + " (" +
                              std::to_string(net.dropped_unknown) + " rows named unknown genes)");
    }
    return net;
}

double network_density(const PriorNetwork& net, const GeneVocabulary& vocab) {
    if (net.edges.empty()) throw ValidationError("network_density: empty network");
    const double tf = static_cast<double>(vocab.tf_count());
    const double t = static_cast<double>(vocab.size());
    return static_cast<double>(net.edges.size()) / (tf * (t - 1.0));
}

// ---- split construction ----

namespace {

std::size_t ratio_round(double x) { return static_cast<std::size_t>(std::llround(x)); }

// Candidate negatives per TF, excluding labeled edges and self pairs.
// Sampling removes by swap-with-last, so draws without replacement stay O(1).
struct NegativePool {
    std::vector<int> tfs;                       // TFs with at least one candidate
    std::vector<std::vector<int>> free_genes;   // parallel to tfs
    std::vector<std::size_t> tf_slot;           // vocab index -> slot (or npos)
    std::size_t total = 0;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    NegativePool(const PriorNetwork& net, const GeneVocabulary& vocab) {
        const int t = static_cast<int>(vocab.size());
        std::set<std::pair<int, int>> labeled;
        for (const Edge& e : net.edges) labeled.insert({e.tf, e.target});
        tf_slot.assign(vocab.size(), npos);
        for (int tf : vocab.tf_indices()) {
            std::vector<int> genes;
            for (int g = 0; g < t; ++g) {
                if (g == tf) continue;
                if (labeled.count({tf, g})) continue;
                genes.push_back(g);
            }
            if (!genes.empty()) {
                tf_slot[static_cast<std::size_t>(tf)] = tfs.size();
                total += genes.size();
                tfs.push_back(tf);
                free_genes.push_back(std::move(genes));
            }
        }
    }

    bool take_for_tf(int tf, Rng& rng, LabeledPair& out) {
        const std::size_t slot = tf_slot[static_cast<std::size_t>(tf)];
        if (slot == npos || free_genes[slot].empty()) return false;
        auto& genes = free_genes[slot];
        const std::size_t k = static_cast<std::size_t>(rng.uniform_int(genes.size()));
        out = {tf, genes[k], 0};
        genes[k] = genes.back();
        genes.pop_back();
        --total;
        return true;
    }

    bool take_uniform(Rng& rng, LabeledPair& out) {
        if (total == 0) return false;
        std::uint64_t pick = rng.uniform_int(total);
        for (std::size_t s = 0; s < tfs.size(); ++s) {
            if (pick < free_genes[s].size()) {
                auto& genes = free_genes[s];
                out = {tfs[s], genes[static_cast<std::size_t>(pick)], 0};
                genes[static_cast<std::size_t>(pick)] = genes.back();
                genes.pop_back();
                --total;
                return true;
            }
            pick -= free_genes[s].size();
        }
        return false;  // unreachable
    }
};

}  // namespace

LabeledSplits make_splits(const PriorNetwork& net, const GeneVocabulary& vocab,
                          const SamplingPlan& plan, std::uint64_t seed) {
    if (plan.network_density <= 0.0 || plan.network_density >= 1.0)
        throw ValidationError("make_splits: network density must lie in (0,1)");
    if (plan.hard_negative_fraction < 0.0 || plan.hard_negative_fraction > 1.0)
        throw ValidationError("make_splits: hard-negative fraction must lie in [0,1]");
    if (net.edges.empty()) throw ValidationError("make_splits: empty network");

    Rng rng(Rng::mix(seed, 0x5117));

    std::vector<Edge> positives = net.edges;
    rng.shuffle(positives);

    const std::size_t n_pos = positives.size();
    const std::size_t n_train_total = ratio_round(2.0 * static_cast<double>(n_pos) / 3.0);
    const std::size_t n_val = ratio_round(0.10 * static_cast<double>(n_train_total));
    const std::size_t n_train = n_train_total - n_val;

    LabeledSplits out;
    out.seed = seed;
    for (std::size_t i = 0; i < n_pos; ++i) {
        const LabeledPair p{positives[i].tf, positives[i].target, 1};
        if (i < n_train) out.train.push_back(p);
        else if (i < n_train_total) out.validation.push_back(p);
        else out.test.push_back(p);
    }

    // negatives per split at the density-matched ratio
    const double neg_per_pos = (1.0 - plan.network_density) / plan.network_density;
    const std::size_t need_train = ratio_round(static_cast<double>(n_train) * neg_per_pos);
    const std::size_t need_val = ratio_round(static_cast<double>(n_val) * neg_per_pos);
    const std::size_t need_test =
        ratio_round(static_cast<double>(n_pos - n_train_total) * neg_per_pos);

    NegativePool pool(net, vocab);
    const std::size_t needed = need_train + need_val + need_test;
    if (pool.total < needed) {
        throw ValidationError("make_splits: insufficient candidate negatives; need " +
                              std::to_string(needed) + ", have " + std::to_string(pool.total) +
                              " (deficit " + std::to_string(needed - pool.total) + ")");
    }

    // training negatives: hard fraction shares the TF of a paired positive
    const std::size_t n_hard =
        ratio_round(plan.hard_negative_fraction * static_cast<double>(need_train));
    std::size_t drawn = 0;
    LabeledPair neg;
    for (std::size_t i = 0; drawn < n_hard && !out.train.empty(); ++i) {
        const LabeledPair& pos = out.train[i % n_train];
        if (pool.take_for_tf(pos.tf, rng, neg)) {
            out.train.push_back(neg);
            ++drawn;
        } else if (pool.take_uniform(rng, neg)) {  // TF exhausted: fall back
            out.train.push_back(neg);
            ++drawn;
        } else {
            break;
        }
    }
    while (drawn < need_train && pool.take_uniform(rng, neg)) {
        out.train.push_back(neg);
        ++drawn;
    }

    for (std::size_t i = 0; i < need_val && pool.take_uniform(rng, neg); ++i)
        out.validation.push_back(neg);

    // test negatives only after train/validation are fixed (leakage clause)
    for (std::size_t i = 0; i < need_test && pool.take_uniform(rng, neg); ++i)
        out.test.push_back(neg);

    auto achieved = [](const std::vector<LabeledPair>& v) {
        std::size_t p = 0, n = 0;
        for (const auto& x : v) (x.label ? p : n)++;
        return n == 0 ? 0.0 : static_cast<double>(p) / static_cast<double>(n);
    };
    out.ratio_train = achieved(out.train);
    out.ratio_validation = achieved(out.validation);
    out.ratio_test = achieved(out.test);
    return out;
}

// ---- synthetic data ----

SynthDataset synth_generate(int n_genes, int n_tfs, int n_cells, double edge_prob,
                            double noise_sd, std::uint64_t seed) {
    if (n_tfs <= 0 || n_tfs >= n_genes)
        throw ValidationError("synth_generate: need 0 < n_tfs < n_genes");
    if (n_cells <= 0) throw ValidationError("synth_generate: need n_cells > 0");
    if (edge_prob <= 0.0 || edge_prob >= 1.0)
        throw ValidationError("synth_generate: edge_prob must lie in (0,1)");
    if (noise_sd < 0.0) throw ValidationError("synth_generate: negative noise_sd");

    const double expected_edges =
        static_cast<double>(n_tfs) * static_cast<double>(n_genes - n_tfs) * edge_prob;
    if (expected_edges < 1.0) {
        std::cerr << "synth_generate: expected edge count " << expected_edges
                  << " is below 1; the planted network may be empty\n";
    }

    Rng rng(Rng::mix(seed, 0x5e9d));

    SynthDataset out;
    auto& vocab = out.expression.vocab;
    char buf[32];
    for (int i = 0; i < n_tfs; ++i) {
        std::snprintf(buf, sizeof(buf), "TF%03d", i + 1);
        vocab.add(buf);
        vocab.is_tf[static_cast<std::size_t>(i)] = true;
    }
    for (int i = n_tfs; i < n_genes; ++i) {
        std::snprintf(buf, sizeof(buf), "G%04d", i - n_tfs + 1);
        vocab.add(buf);
    }

    // planted regulators, with positive weights normalized per target
    std::vector<std::vector<std::pair<int, double>>> regulators(
        static_cast<std::size_t>(n_genes));
    for (int tf = 0; tf < n_tfs; ++tf) {
        for (int g = n_tfs; g < n_genes; ++g) {
            if (rng.uniform() < edge_prob) {
                out.network.edges.push_back({tf, g});
                regulators[static_cast<std::size_t>(g)].push_back(
                    {tf, rng.uniform(0.5, 1.5)});
            }
        }
    }
    for (auto& regs : regulators) {
        double sum = 0.0;
        for (auto& [tf, w] : regs) sum += w;
        for (auto& [tf, w] : regs) w /= sum;
    }

    out.expression.counts = Matrix(static_cast<std::size_t>(n_cells),
                                   static_cast<std::size_t>(n_genes));
    auto& counts = out.expression.counts;
    for (int c = 0; c < n_cells; ++c) {
        std::snprintf(buf, sizeof(buf), "CELL%04d", c + 1);
        out.expression.cell_ids.push_back(buf);
        // exogenous genes first (TFs and unregulated targets)
        for (int g = 0; g < n_genes; ++g) {
            if (g < n_tfs || regulators[static_cast<std::size_t>(g)].empty()) {
                counts.at(static_cast<std::size_t>(c), static_cast<std::size_t>(g)) =
                    std::round(rng.lognormal(1.0, 0.8));
            }
        }
        for (int g = n_tfs; g < n_genes; ++g) {
            const auto& regs = regulators[static_cast<std::size_t>(g)];
            if (regs.empty()) continue;
            double v = 0.0;
            for (const auto& [tf, w] : regs)
                v += w * counts.at(static_cast<std::size_t>(c), static_cast<std::size_t>(tf));
            if (noise_sd > 0.0) v += rng.normal(0.0, noise_sd);
            counts.at(static_cast<std::size_t>(c), static_cast<std::size_t>(g)) =
                std::round(std::max(0.0, v));
        }
    }
    return out;
}

// ---- serialization ----

std::string splits_to_csv(const LabeledSplits& splits, SplitKind kind,
                          const GeneVocabulary& vocab, const std::string& meta_comment) {
    std::ostringstream os;
    if (!meta_comment.empty()) os << "# " << meta_comment << "\n";
    os << "tf,target,label,split\n";
    const std::string name = split_name(kind);
    for (const LabeledPair& p : splits.get(kind)) {
        os << vocab.symbols[static_cast<std::size_t>(p.tf)] << ","
           << vocab.symbols[static_cast<std::size_t>(p.gene)] << "," << p.label << "," << name
           << "\n";
    }
    return os.str();
}

std::vector<LabeledPair> pairs_from_csv(const std::string& path, const GeneVocabulary& vocab) {
    CsvFile csv = read_csv(path);
    std::vector<LabeledPair> out;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& f = csv.rows[r];
        if (r == 0 && !f.empty() && upper_ascii(f[0]) == "TF") continue;  // header
        if (f.size() < 3) {
            throw ParseError("pairs: line " + std::to_string(r + 1) +
                             " needs tf,target,label columns");
        }
        const int tf = vocab.find(upper_ascii(f[0]));
        const int tg = vocab.find(upper_ascii(f[1]));
        if (tf < 0 || tg < 0) {
            throw ValidationError("pairs: unknown gene in line " + std::to_string(r + 1) +
                                  " of " + path);
        }
        const int label = f[2] == "1" ? 1 : (f[2] == "0" ? 0 : -1);
        if (label < 0)
            throw ParseError("pairs: bad label '" + f[2] + "' at line " + std::to_string(r + 1));
        out.push_back({tf, tg, label});
    }
    return out;
}

std::string expression_to_csv(const ExpressionMatrix& x, bool genes_as_rows,
                              const std::string& meta_comment) {
    std::ostringstream os;
    if (!meta_comment.empty()) os << "# " << meta_comment << "\n";
    if (genes_as_rows) {
        os << "gene";
        for (const auto& c : x.cell_ids) os << "," << c;
        os << "\n";
        for (std::size_t g = 0; g < x.n_genes(); ++g) {
            os << x.vocab.symbols[g];
            for (std::size_t c = 0; c < x.n_cells(); ++c)
                os << "," << format_double(x.counts.at(c, g));
            os << "\n";
        }
    } else {
        os << "cell";
        for (const auto& s : x.vocab.symbols) os << "," << s;
        os << "\n";
        for (std::size_t c = 0; c < x.n_cells(); ++c) {
            os << x.cell_ids[c];
            for (std::size_t g = 0; g < x.n_genes(); ++g)
                os << "," << format_double(x.counts.at(c, g));
            os << "\n";
        }
    }
    return os.str();
}

std::string network_to_csv(const PriorNetwork& net, const GeneVocabulary& vocab,
                           const std::string& meta_comment) {
    std::ostringstream os;
    if (!meta_comment.empty()) os << "# " << meta_comment << "\n";
    os << "TF,target\n";
    for (const Edge& e : net.edges) {
        os << vocab.symbols[static_cast<std::size_t>(e.tf)] << ","
           << vocab.symbols[static_cast<std::size_t>(e.target)] << "\n";
    }
    return os.str();
}

}  // namespace scnet
