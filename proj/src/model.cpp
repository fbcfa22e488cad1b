#include "sctransnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "sctransnet/csv.hpp"
#include "sctransnet/pooling.hpp"

namespace scnet {

void TrainConfig::validate() const {
    if (iterations < 1) throw ValidationError("train config: iterations must be >= 1");
    if (learning_rate < 0.0) throw ValidationError("train config: negative learning rate");
    if (head_hidden <= 0 || head_out <= 0)
        throw ValidationError("train config: non-positive head width");
}

// ---- config snapshot ----

std::string ModelConfig::canonical_text() const {
    std::map<std::string, std::string> kv;
    kv["encoder.embed_dim"] = std::to_string(encoder.embed_dim);
    kv["encoder.layers"] = std::to_string(encoder.layers);
    kv["encoder.heads"] = std::to_string(encoder.heads);
    kv["encoder.ff_dim"] = std::to_string(encoder.ff_dim);
    kv["encoder.mode"] = attention_mode_name(encoder.mode);
    kv["encoder.performer_features"] = std::to_string(encoder.performer_features);
    kv["encoder.bin_count"] = std::to_string(encoder.bin_count);
    kv["encoder.raw_normalization"] = encoder.raw_normalization ? "1" : "0";
    std::string widths;
    for (std::size_t i = 0; i < gat.widths.size(); ++i) {
        if (i) widths += ";";
        widths += std::to_string(gat.widths[i]);
    }
    kv["gat.widths"] = widths;
    kv["gat.type_dim"] = std::to_string(gat.type_dim);
    kv["gat.rel_dim"] = std::to_string(gat.rel_dim);
    kv["gat.key_dim"] = std::to_string(gat.key_dim);
    kv["train.iterations"] = std::to_string(train.iterations);
    kv["train.learning_rate"] = format_double(train.learning_rate);
    kv["train.seed"] = std::to_string(train.seed);
    kv["train.no_gnn"] = train.ablation.no_gnn ? "1" : "0";
    kv["train.no_encoder"] = train.ablation.no_encoder ? "1" : "0";
    kv["train.mean_pooling"] = train.ablation.mean_pooling ? "1" : "0";
    kv["train.head_hidden"] = std::to_string(train.head_hidden);
    kv["train.head_out"] = std::to_string(train.head_out);
    kv["train.mlp_combiner"] = train.mlp_combiner ? "1" : "0";

    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

std::string ModelConfig::hash_hex() const { return to_hex(fnv1a64(canonical_text())); }

ModelConfig ModelConfig::from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError("config: bad line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto geti = [&](const std::string& k, int dflt) {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : std::stoi(it->second);
    };
    auto getd = [&](const std::string& k, double dflt) {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : std::stod(it->second);
    };
    auto gets = [&](const std::string& k, const std::string& dflt) {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : it->second;
    };

    ModelConfig cfg;
    cfg.encoder.embed_dim = geti("encoder.embed_dim", cfg.encoder.embed_dim);
    cfg.encoder.layers = geti("encoder.layers", cfg.encoder.layers);
    cfg.encoder.heads = geti("encoder.heads", cfg.encoder.heads);
    cfg.encoder.ff_dim = geti("encoder.ff_dim", cfg.encoder.ff_dim);
    cfg.encoder.mode = attention_mode_from(gets("encoder.mode", "exact"));
    cfg.encoder.performer_features =
        geti("encoder.performer_features", cfg.encoder.performer_features);
    cfg.encoder.bin_count = geti("encoder.bin_count", cfg.encoder.bin_count);
    cfg.encoder.raw_normalization = geti("encoder.raw_normalization", 0) != 0;
    std::string widths = gets("gat.widths", "");
    if (!widths.empty()) {
        cfg.gat.widths.clear();
        std::istringstream ws(widths);
        std::string tok;
        while (std::getline(ws, tok, ';')) cfg.gat.widths.push_back(std::stoi(tok));
    }
    cfg.gat.type_dim = geti("gat.type_dim", cfg.gat.type_dim);
    cfg.gat.rel_dim = geti("gat.rel_dim", cfg.gat.rel_dim);
    cfg.gat.key_dim = geti("gat.key_dim", cfg.gat.key_dim);
    cfg.train.iterations = geti("train.iterations", cfg.train.iterations);
    cfg.train.learning_rate = getd("train.learning_rate", cfg.train.learning_rate);
    cfg.train.seed = static_cast<std::uint64_t>(std::stoull(gets("train.seed", "0")));
    cfg.train.ablation.no_gnn = geti("train.no_gnn", 0) != 0;
    cfg.train.ablation.no_encoder = geti("train.no_encoder", 0) != 0;
    cfg.train.ablation.mean_pooling = geti("train.mean_pooling", 0) != 0;
    cfg.train.head_hidden = geti("train.head_hidden", cfg.train.head_hidden);
    cfg.train.head_out = geti("train.head_out", cfg.train.head_out);
    cfg.train.mlp_combiner = geti("train.mlp_combiner", 0) != 0;
    return cfg;
}

// ---- parameters ----

ModelParams init_model_params(const ModelConfig& cfg, std::size_t n_genes, std::size_t n_cells,
                              Rng& rng) {
    ModelParams mp;
    mp.encoder = init_encoder_params(cfg.encoder, n_genes, rng, mp.registry);
    mp.gat = init_gat_params(cfg.gat, n_cells, rng, mp.registry);

    const std::size_t fused = static_cast<std::size_t>(cfg.encoder.embed_dim) +
                              static_cast<std::size_t>(cfg.gat.widths.back());
    const std::size_t hid = static_cast<std::size_t>(cfg.train.head_hidden);
    const std::size_t out = static_cast<std::size_t>(cfg.train.head_out);
    auto wsd = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

    mp.tf_w1 = mp.registry.add("head.tf_w1", random_normal(fused, hid, wsd(fused), rng));
    mp.tf_b1 = mp.registry.add("head.tf_b1", Tensor::zeros(1, hid, true));
    mp.tf_w2 = mp.registry.add("head.tf_w2", random_normal(hid, out, wsd(hid), rng));
    mp.tf_b2 = mp.registry.add("head.tf_b2", Tensor::zeros(1, out, true));
    mp.tg_w1 = mp.registry.add("head.tg_w1", random_normal(fused, hid, wsd(fused), rng));
    mp.tg_b1 = mp.registry.add("head.tg_b1", Tensor::zeros(1, hid, true));
    mp.tg_w2 = mp.registry.add("head.tg_w2", random_normal(hid, out, wsd(hid), rng));
    mp.tg_b2 = mp.registry.add("head.tg_b2", Tensor::zeros(1, out, true));

    mp.comb_w1 =
        mp.registry.add("head.comb_w1", random_normal(2 * out, hid, wsd(2 * out), rng));
    mp.comb_b1 = mp.registry.add("head.comb_b1", Tensor::zeros(1, hid, true));
    mp.comb_w2 = mp.registry.add("head.comb_w2", random_normal(hid, 1, wsd(hid), rng));
    mp.comb_b2 = mp.registry.add("head.comb_b2", Tensor::zeros(1, 1, true));
    return mp;
}

Dataset make_dataset(ExpressionMatrix expression, PriorNetwork network, LabeledSplits splits,
                     int bin_count) {
    Dataset d;
    d.binned = bin_expression(expression, bin_count);
    d.expression = std::move(expression);
    d.network = std::move(network);
    d.splits = std::move(splits);
    return d;
}

// ---- forward ----

namespace {

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    return add_row_broadcast(matmul(x, w), b);
}

TensorPtr channel_mlp(const TensorPtr& x, const TensorPtr& w1, const TensorPtr& b1,
                      const TensorPtr& w2, const TensorPtr& b2) {
    return linear(gelu(linear(x, w1, b1)), w2, b2);
}

double sigmoid_value(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

TensorPtr fuse(const TensorPtr& pooled, const TensorPtr& gat_out, const AblationFlags& flags) {
    if (pooled->rows() != gat_out->rows())
        throw ContractError("fuse: encoder and GAT row counts differ");
    TensorPtr a = flags.no_encoder ? Tensor::zeros(pooled->rows(), pooled->cols()) : pooled;
    TensorPtr b = flags.no_gnn ? Tensor::zeros(gat_out->rows(), gat_out->cols()) : gat_out;
    if (flags.no_encoder && flags.no_gnn) {
        std::cerr << "fuse: both encoder and GNN ablated; fused representation is all-zero\n";
    }
    return concat_cols({a, b});
}

ForwardResult model_forward(const Dataset& data, const GraphStructure& g,
                            const ModelParams& mp, const ModelConfig& cfg) {
    const std::size_t t = data.expression.n_genes();
    const std::size_t n = data.expression.n_cells();
    if (data.binned.n_genes != t || data.binned.n_cells != n)
        throw ContractError("model_forward: binned matrix does not match expression");
    if (data.binned.bin_count != cfg.encoder.bin_count)
        throw ContractError("model_forward: bin count differs from encoder config");

    const AblationFlags& flags = cfg.train.ablation;
    ForwardResult f;

    TensorPtr pooled;
    if (!flags.no_encoder) {
        std::vector<TensorPtr> cell_hidden;
        cell_hidden.reserve(n);
        Matrix sums(n, t);
        const bool need_scores = !flags.mean_pooling;
        for (std::size_t c = 0; c < n; ++c) {
            auto h0 = embed_inputs(data.binned.cell_row(c), mp.encoder.gene_table,
                                   mp.encoder.bin_table);
            EncoderState st = encoder_forward(h0, mp.encoder, cfg.encoder);
            cell_hidden.push_back(st.hidden.back());
            if (!need_scores) continue;
            if (cfg.encoder.mode == AttentionMode::exact) {
                if (st.attention.empty())
                    throw ContractError(
                        "model_forward: attentive pooling needs at least one encoder layer");
                sums.set_row(c, attention_sum(average_attention(st.attention)));
            } else {
                if (st.performer_feats.empty())
                    throw ContractError(
                        "model_forward: attentive pooling needs at least one encoder layer");
                std::vector<double> acc(t, 0.0);
                for (const auto& [qf, kf] : st.performer_feats) {
                    auto a_n = attention_sum_linear(*qf, *kf);
                    for (std::size_t i = 0; i < t; ++i) acc[i] += a_n[i];
                }
                const double inv = 1.0 / static_cast<double>(st.performer_feats.size());
                for (double& x : acc) x *= inv;
                sums.set_row(c, acc);
            }
        }
        f.scores = flags.mean_pooling ? Matrix(n, t, 1.0 / static_cast<double>(n))
                                      : normalize_scores(sums);
        pooled = pool_genes(cell_hidden, f.scores);
    } else {
        pooled = Tensor::zeros(t, static_cast<std::size_t>(cfg.encoder.embed_dim));
    }

    TensorPtr gat_out;
    if (!flags.no_gnn) {
        auto features = Tensor::from_matrix(gene_count_features(data.expression));
        gat_out = gat_forward(features, g, cfg.gat, mp.gat);
    } else {
        gat_out = Tensor::zeros(t, static_cast<std::size_t>(cfg.gat.widths.back()));
    }

    f.fused = fuse(pooled, gat_out, flags);
    f.tf_channel = channel_mlp(f.fused, mp.tf_w1, mp.tf_b1, mp.tf_w2, mp.tf_b2);
    f.target_channel = channel_mlp(f.fused, mp.tg_w1, mp.tg_b1, mp.tg_w2, mp.tg_b2);
    return f;
}

TensorPtr pair_logits(const ForwardResult& f, const std::vector<LabeledPair>& pairs,
                      const ModelParams& mp, bool mlp_combiner) {
    if (pairs.empty()) throw ContractError("pair_logits: empty pair list");
    std::vector<int> src, dst;
    src.reserve(pairs.size());
    dst.reserve(pairs.size());
    for (const LabeledPair& p : pairs) {
        src.push_back(p.tf);
        dst.push_back(p.gene);
    }
    auto a = select_rows(f.tf_channel, src);
    auto b = select_rows(f.target_channel, dst);
    if (!mlp_combiner) return rows_dot(a, b);
    return channel_mlp(concat_cols({a, b}), mp.comb_w1, mp.comb_b1, mp.comb_w2, mp.comb_b2);
}

double score_pair(const Matrix& tf_channel, const Matrix& target_channel, int tf, int gene) {
    if (tf < 0 || static_cast<std::size_t>(tf) >= tf_channel.rows || gene < 0 ||
        static_cast<std::size_t>(gene) >= target_channel.rows)
        throw ContractError("score_pair: index outside the gene set");
    double dot = 0.0;
    for (std::size_t j = 0; j < tf_channel.cols; ++j)
        dot += tf_channel.at(static_cast<std::size_t>(tf), j) *
               target_channel.at(static_cast<std::size_t>(gene), j);
    return sigmoid_value(dot);
}

double bce_loss(const std::vector<double>& probabilities, const std::vector<int>& labels) {
    if (probabilities.empty()) throw ContractError("bce_loss: empty batch");
    if (probabilities.size() != labels.size())
        throw DimensionError("bce_loss: probability/label length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw ValidationError("bce_loss: labels must be 0/1");
        const double p = std::min(1.0 - 1e-7, std::max(1e-7, probabilities[i]));
        loss += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss / static_cast<double>(probabilities.size());
}

// ---- training ----

namespace {

std::vector<bool> tf_flags(const GeneVocabulary& vocab) {
    std::vector<bool> out(vocab.size());
    for (std::size_t i = 0; i < vocab.size(); ++i) out[i] = vocab.is_tf[i];
    return out;
}

bool starts_with(const std::string& s, const char* prefix) {
    return s.rfind(prefix, 0) == 0;
}

std::string param_norms_by_group(const NamedParams& reg) {
    std::map<std::string, double> sq;
    for (const auto& [name, t] : reg.items()) {
        const std::string group = name.substr(0, name.find('.'));
        for (double v : t->values) sq[group] += v * v;
    }
    std::string out;
    for (const auto& [g, s] : sq) out += " |" + g + "|=" + format_double(std::sqrt(s));
    return out;
}

struct ValidationScores {
    std::vector<double> scores;
    std::vector<int> labels;
    bool usable = false;
};

ValidationScores validation_scores(const std::vector<LabeledPair>& pairs, const Matrix& ctf,
                                   const Matrix& ctg) {
    ValidationScores v;
    std::size_t pos = 0;
    for (const LabeledPair& p : pairs) {
        v.scores.push_back(score_pair(ctf, ctg, p.tf, p.gene));
        v.labels.push_back(p.label);
        pos += static_cast<std::size_t>(p.label);
    }
    v.usable = !pairs.empty() && pos > 0 && pos < pairs.size();
    return v;
}

}  // namespace

TrainedModel train(const Dataset& data, const ModelConfig& cfg,
                   const std::string& pretrained_embeddings_csv) {
    cfg.encoder.validate();
    cfg.gat.validate();
    cfg.train.validate();
    if (data.expression.vocab.size() != data.expression.n_genes())
        throw ContractError("train: vocabulary does not match expression matrix");
    if (data.splits.train.empty()) throw ValidationError("train: empty training split");

    const std::size_t t = data.expression.n_genes();
    const std::size_t n = data.expression.n_cells();

    Rng rng(Rng::mix(cfg.train.seed, 0xA11));
    ModelParams mp = init_model_params(cfg, t, n, rng);
    if (!pretrained_embeddings_csv.empty()) {
        load_gene_embeddings_csv(pretrained_embeddings_csv, data.expression.vocab,
                                 mp.encoder.gene_table);
    }

    // message passing sees training positives only
    std::vector<Edge> structure;
    for (const LabeledPair& p : data.splits.train)
        if (p.label == 1) structure.push_back({p.tf, p.gene});
    GraphStructure g = GraphStructure::build(structure, tf_flags(data.expression.vocab));

    std::vector<TensorPtr> trainable;
    for (const auto& [name, tensor] : mp.registry.items()) {
        if (cfg.train.ablation.no_encoder && starts_with(name, "encoder.")) continue;
        if (cfg.train.ablation.no_gnn && starts_with(name, "gat.")) continue;
        if (!cfg.train.mlp_combiner && starts_with(name, "head.comb_")) continue;
        trainable.push_back(tensor);
    }
    AdamOptimizer opt(trainable, cfg.train.learning_rate);

    std::vector<double> train_labels;
    for (const LabeledPair& p : data.splits.train)
        train_labels.push_back(static_cast<double>(p.label));

    TrainedModel model;
    model.config = cfg;
    model.vocab = data.expression.vocab;
    model.structure_edges = structure;
    model.n_cells = n;

    double best_auprc = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_values;
    Matrix best_ctf, best_ctg;

    for (int it = 1; it <= cfg.train.iterations; ++it) {
        ForwardResult f = model_forward(data, g, mp, cfg);
        auto logits = pair_logits(f, data.splits.train, mp, cfg.train.mlp_combiner);
        auto loss = bce_with_logits_mean(logits, train_labels);
        const double loss_value = loss->values[0];
        if (!is_finite(loss_value)) {
            throw NumericError("train: loss became non-finite at iteration " +
                               std::to_string(it) + ";" + param_norms_by_group(mp.registry));
        }

        // validation metrics for the parameters entering this iteration
        Matrix ctf = f.tf_channel->to_matrix();
        Matrix ctg = f.target_channel->to_matrix();
        ValidationScores vs = validation_scores(data.splits.validation, ctf, ctg);
        double va = std::numeric_limits<double>::quiet_NaN();
        double vp = std::numeric_limits<double>::quiet_NaN();
        if (vs.usable) {
            va = auroc(vs.scores, vs.labels);
            vp = auprc(vs.scores, vs.labels);
        }
        model.history.push_back({it, loss_value, va, vp});

        if (vs.usable && vp > best_auprc) {
            best_auprc = vp;
            model.best_iteration = it;
            best_values.clear();
            for (const auto& [name, tensor] : mp.registry.items())
                best_values.push_back(tensor->values);
            best_ctf = std::move(ctf);
            best_ctg = std::move(ctg);
        }

        GradientMap grads = backward(loss);
        opt.step(grads);
    }

    if (model.best_iteration > 0) {
        const auto& items = mp.registry.items();
        for (std::size_t i = 0; i < items.size(); ++i)
            items[i].second->values = best_values[i];
        model.tf_channel = std::move(best_ctf);
        model.target_channel = std::move(best_ctg);
    } else {
        // no usable validation signal: keep the final parameters
        model.best_iteration = cfg.train.iterations;
        NoGradGuard ng;
        ForwardResult f = model_forward(data, g, mp, cfg);
        model.tf_channel = f.tf_channel->to_matrix();
        model.target_channel = f.target_channel->to_matrix();
    }
    model.params = std::move(mp);
    return model;
}

// ---- prediction ----

std::vector<ScoredPair> predict_pairs(const TrainedModel& model,
                                      const std::vector<std::pair<int, int>>& pairs) {
    std::vector<ScoredPair> out;
    for (const auto& [tf, gene] : pairs) {
        if (tf < 0 || static_cast<std::size_t>(tf) >= model.vocab.size())
            throw ContractError("predict: TF index outside vocabulary");
        if (!model.vocab.is_tf[static_cast<std::size_t>(tf)])
            throw ContractError("predict: pair source " + model.vocab.symbols[tf] +
                                " is not a TF");
        out.push_back({tf, gene, score_pair(model.tf_channel, model.target_channel, tf, gene)});
    }
    return out;
}

std::vector<ScoredPair> predict_all(const TrainedModel& model) {
    std::vector<ScoredPair> out;
    for (int tf : model.vocab.tf_indices()) {
        for (std::size_t gidx = 0; gidx < model.vocab.size(); ++gidx) {
            const int gene = static_cast<int>(gidx);
            if (gene == tf) continue;
            out.push_back(
                {tf, gene, score_pair(model.tf_channel, model.target_channel, tf, gene)});
        }
    }
    std::sort(out.begin(), out.end(), [](const ScoredPair& a, const ScoredPair& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.tf != b.tf) return a.tf < b.tf;
        return a.gene < b.gene;
    });
    return out;
}

// ---- evaluation ----

MetricsReport evaluate_model(const TrainedModel& model, const Dataset& data, SplitKind split) {
    if (model.vocab.symbols != data.expression.vocab.symbols)
        throw ValidationError("evaluate: dataset vocabulary differs from the trained model");

    const std::vector<LabeledPair>& pairs = data.splits.get(split);
    if (pairs.empty()) throw ValidationError("evaluate: empty split");

    // leakage assertion: the evaluated split must not share pairs with the others
    std::set<std::pair<int, int>> others;
    for (SplitKind k : {SplitKind::train, SplitKind::validation, SplitKind::test}) {
        if (k == split) continue;
        for (const LabeledPair& p : data.splits.get(k)) others.insert({p.tf, p.gene});
    }
    for (const LabeledPair& p : pairs) {
        if (others.count({p.tf, p.gene})) {
            throw ValidationError("evaluate: pair " + model.vocab.symbols[p.tf] + "->" +
                                  model.vocab.symbols[p.gene] +
                                  " leaks across splits");
        }
    }

    NoGradGuard ng;
    GraphStructure g =
        GraphStructure::build(model.structure_edges, tf_flags(model.vocab));
    ForwardResult f = model_forward(data, g, model.params, model.config);
    Matrix ctf = f.tf_channel->to_matrix();
    Matrix ctg = f.target_channel->to_matrix();

    std::vector<double> scores;
    std::vector<int> labels;
    for (const LabeledPair& p : pairs) {
        scores.push_back(score_pair(ctf, ctg, p.tf, p.gene));
        labels.push_back(p.label);
    }
    return make_report(scores, labels, split_name(split), model.config.train.seed,
                       model.config.hash_hex());
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[4] = {'S', 'C', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw CheckpointError("checkpoint: truncated file");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1]))
                           << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_tensor(std::string& out, const std::string& name, std::size_t rows, std::size_t cols,
                const std::vector<double>& values) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(rows));
    put_u32(out, static_cast<std::uint32_t>(cols));
    for (double v : values) put_f64(out, v);
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    std::string config_text = model.config.canonical_text();
    put_u32(out, kVersion);
    put_u64(out, model.config.train.seed);
    put_u64(out, fnv1a64(config_text));
    put_u32(out, static_cast<std::uint32_t>(config_text.size()));
    out += config_text;

    put_u32(out, static_cast<std::uint32_t>(model.vocab.size()));
    for (std::size_t i = 0; i < model.vocab.size(); ++i) {
        put_u16(out, static_cast<std::uint16_t>(model.vocab.symbols[i].size()));
        out += model.vocab.symbols[i];
        out.push_back(model.vocab.is_tf[i] ? 1 : 0);
    }
    put_u32(out, static_cast<std::uint32_t>(model.n_cells));
    put_u32(out, static_cast<std::uint32_t>(model.structure_edges.size()));
    for (const Edge& e : model.structure_edges) {
        put_u32(out, static_cast<std::uint32_t>(e.tf));
        put_u32(out, static_cast<std::uint32_t>(e.target));
    }
    put_u32(out, static_cast<std::uint32_t>(model.best_iteration));

    const auto& items = model.params.registry.items();
    put_u32(out, static_cast<std::uint32_t>(items.size() + 2));
    for (const auto& [name, t] : items) put_tensor(out, name, t->rows(), t->cols(), t->values);
    put_tensor(out, "derived.tf_channel", model.tf_channel.rows, model.tf_channel.cols,
               model.tf_channel.v);
    put_tensor(out, "derived.target_channel", model.target_channel.rows,
               model.target_channel.cols, model.target_channel.v);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError("checkpoint write failed: " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();
    Reader r{buf};

    if (r.bytes(4) != std::string(kMagic, 4))
        throw CheckpointError("checkpoint: bad magic bytes in " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));

    TrainedModel model;
    const std::uint64_t seed = r.u64();
    const std::uint64_t stored_hash = r.u64();
    const std::uint32_t config_len = r.u32();
    const std::string config_text = r.bytes(config_len);
    if (fnv1a64(config_text) != stored_hash)
        throw CheckpointError("checkpoint: config hash mismatch");
    model.config = ModelConfig::from_text(config_text);
    if (model.config.train.seed != seed)
        throw CheckpointError("checkpoint: seed field disagrees with config");

    const std::uint32_t n_genes = r.u32();
    for (std::uint32_t i = 0; i < n_genes; ++i) {
        const std::uint16_t len = r.u16();
        const std::string sym = r.bytes(len);
        model.vocab.add(sym);
        model.vocab.is_tf[i] = r.bytes(1)[0] != 0;
    }
    model.n_cells = r.u32();
    const std::uint32_t n_edges = r.u32();
    for (std::uint32_t i = 0; i < n_edges; ++i) {
        Edge e;
        e.tf = static_cast<int>(r.u32());
        e.target = static_cast<int>(r.u32());
        model.structure_edges.push_back(e);
    }
    model.best_iteration = static_cast<int>(r.u32());

    Rng rng(Rng::mix(model.config.train.seed, 0xA11));
    model.params = init_model_params(model.config, n_genes, model.n_cells, rng);

    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.bytes(name_len);
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        for (double& v : values) v = r.f64();
        if (name == "derived.tf_channel") {
            model.tf_channel = Matrix(rows, cols);
            model.tf_channel.v = std::move(values);
        } else if (name == "derived.target_channel") {
            model.target_channel = Matrix(rows, cols);
            model.target_channel.v = std::move(values);
        } else {
            TensorPtr t = model.params.registry.find(name);
            if (!t) throw CheckpointError("checkpoint: unknown tensor " + name);
            if (t->rows() != rows || t->cols() != cols)
                throw CheckpointError("checkpoint: shape mismatch for " + name);
            t->values = std::move(values);
        }
    }
    return model;
}

std::string dot_subgraph(const std::vector<ScoredPair>& ranked, std::size_t top_k,
                         const GeneVocabulary& vocab, const std::string& meta_comment) {
    std::ostringstream os;
    if (!meta_comment.empty()) os << "// " << meta_comment << "\n";
    os << "digraph predicted_grn {\n";
    const std::size_t k = std::min(top_k, ranked.size());
    for (std::size_t i = 0; i < k; ++i) {
        const ScoredPair& p = ranked[i];
        char label[32];
        std::snprintf(label, sizeof(label), "%.3f", p.score);
        os << "  \"" << vocab.symbols[static_cast<std::size_t>(p.tf)] << "\" -> \""
           << vocab.symbols[static_cast<std::size_t>(p.gene)] << "\" [label=\"" << label
           << "\"];\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace scnet
