#include "sctransnet/encoder.hpp"

#include <cmath>

#include "sctransnet/csv.hpp"

namespace scnet {

std::string attention_mode_name(AttentionMode m) {
    return m == AttentionMode::exact ? "exact" : "performer";
}

AttentionMode attention_mode_from(const std::string& name) {
    if (name == "exact") return AttentionMode::exact;
    if (name == "performer") return AttentionMode::performer;
    throw ValidationError("unknown attention mode: " + name);
}

void EncoderConfig::validate() const {
    if (embed_dim <= 0 || layers < 0 || heads <= 0 || ff_dim <= 0 || bin_count < 2)
        throw ValidationError("encoder config: non-positive dimension");
    if (embed_dim % heads != 0)
        throw ValidationError("encoder config: embed_dim must be divisible by heads");
    if (mode == AttentionMode::performer && performer_features < 1)
        throw ValidationError("encoder config: performer needs at least one random feature");
}

EncoderParams init_encoder_params(const EncoderConfig& cfg, std::size_t n_genes, Rng& rng,
                                  NamedParams& registry) {
    cfg.validate();
    const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
    const std::size_t ff = static_cast<std::size_t>(cfg.ff_dim);
    const double wsd = 1.0 / std::sqrt(static_cast<double>(d));

    EncoderParams p;
    p.gene_table = registry.add("encoder.gene_table", random_normal(n_genes, d, 0.02, rng));
    p.bin_table = registry.add("encoder.bin_table",
                               random_normal(static_cast<std::size_t>(cfg.bin_count), d, 0.02, rng));

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string base = "encoder.block" + std::to_string(l) + ".";
        EncoderBlockParams b;
        b.ln1_gain = registry.add(base + "ln1_gain", Tensor::full(1, d, 1.0, true));
        b.ln1_bias = registry.add(base + "ln1_bias", Tensor::zeros(1, d, true));
        b.wq = registry.add(base + "wq", random_normal(d, d, wsd, rng));
        b.bq = registry.add(base + "bq", Tensor::zeros(1, d, true));
        b.wk = registry.add(base + "wk", random_normal(d, d, wsd, rng));
        b.bk = registry.add(base + "bk", Tensor::zeros(1, d, true));
        b.wv = registry.add(base + "wv", random_normal(d, d, wsd, rng));
        b.bv = registry.add(base + "bv", Tensor::zeros(1, d, true));
        b.wo = registry.add(base + "wo", random_normal(d, d, wsd, rng));
        b.bo = registry.add(base + "bo", Tensor::zeros(1, d, true));
        b.ln2_gain = registry.add(base + "ln2_gain", Tensor::full(1, d, 1.0, true));
        b.ln2_bias = registry.add(base + "ln2_bias", Tensor::zeros(1, d, true));
        b.ff_w1 = registry.add(base + "ff_w1", random_normal(d, ff, wsd, rng));
        b.ff_b1 = registry.add(base + "ff_b1", Tensor::zeros(1, ff, true));
        b.ff_w2 = registry.add(base + "ff_w2",
                               random_normal(ff, d, 1.0 / std::sqrt(static_cast<double>(ff)), rng));
        b.ff_b2 = registry.add(base + "ff_b2", Tensor::zeros(1, d, true));
        p.blocks.push_back(std::move(b));
    }

    if (cfg.mode == AttentionMode::performer) {
        const std::size_t dh = static_cast<std::size_t>(cfg.head_dim());
        const std::size_t m = static_cast<std::size_t>(cfg.performer_features);
        for (int l = 0; l < cfg.layers; ++l) {
            for (int h = 0; h < cfg.heads; ++h) {
                PerformerFeatureMap fm;
                fm.seed = rng.next_u64();
                Rng draw(fm.seed);
                fm.omega = random_normal(dh, m, 1.0, draw, /*requires_grad=*/false);
                p.feature_maps.push_back(std::move(fm));
            }
        }
    }
    return p;
}

std::size_t load_gene_embeddings_csv(const std::string& path, const GeneVocabulary& vocab,
                                     const TensorPtr& gene_table) {
    CsvFile csv = read_csv(path);
    const std::size_t d = gene_table->cols();
    std::size_t loaded = 0;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& f = csv.rows[r];
        if (r == 0 && f.size() >= 2 && upper_ascii(f[0]) == "SYMBOL") continue;
        if (f.size() != d + 1) {
            throw InputError("gene embeddings: line " + std::to_string(r + 1) + " has " +
                             std::to_string(f.size() - 1) + " values, expected " +
                             std::to_string(d));
        }
        const int idx = vocab.find(upper_ascii(f[0]));
        if (idx < 0) continue;
        for (std::size_t j = 0; j < d; ++j) {
            try {
                gene_table->at(static_cast<std::size_t>(idx), j) = std::stod(f[j + 1]);
            } catch (const std::exception&) {
                throw ParseError("gene embeddings: non-numeric value at line " +
                                 std::to_string(r + 1));
            }
        }
        ++loaded;
    }
    return loaded;
}

TensorPtr embed_inputs(const std::vector<int>& cell_bins, const TensorPtr& gene_table,
                       const TensorPtr& bin_table) {
    if (cell_bins.size() != gene_table->rows())
        throw DimensionError("embed_inputs: one bin per gene token");
    for (int b : cell_bins) {
        if (b < 0 || static_cast<std::size_t>(b) >= bin_table->rows())
            throw ContractError("embed_inputs: bin id " + std::to_string(b) +
                                " outside the embedding table");
    }
    return add(gene_table, select_rows(bin_table, cell_bins));
}

ExactAttentionResult exact_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                                     bool raw) {
    if (q->shape != k->shape || k->shape != v->shape)
        throw DimensionError("exact_attention: Q, K, V shapes must match");
    ExactAttentionResult r;
    if (raw) {
        // literal D^{-1}(QK^T)V; rows sum to 1 but entries may be negative
        auto s = matmul(q, transpose(k));
        r.weights = div_col_broadcast(s, row_sums(s));
    } else {
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q->cols()));
        r.weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d));
    }
    r.output = matmul(r.weights, v);
    return r;
}

TensorPtr performer_features(const TensorPtr& x, const PerformerFeatureMap& fm) {
    const std::size_t m = fm.omega->cols();
    auto proj = matmul(x, fm.omega);
    auto half_sq_norm = scale(row_sums(mul(x, x)), -0.5);
    auto feats = exp_elem(add_col_broadcast(proj, half_sq_norm));
    return scale(feats, fm.scale_c / std::sqrt(static_cast<double>(m)));
}

PerformerAttentionResult performer_attention(const TensorPtr& q, const TensorPtr& k,
                                             const TensorPtr& v,
                                             const PerformerFeatureMap& fm) {
    if (q->shape != k->shape || k->shape != v->shape)
        throw DimensionError("performer_attention: Q, K, V shapes must match");
    if (fm.omega->rows() != q->cols())
        throw DimensionError("performer_attention: feature map width mismatch");

    // the 1/sqrt(d) of softmax attention moves into the features: exp(q.k/sqrt(d))
    // is the kernel of q/d^{1/4} against k/d^{1/4}
    const double pre = std::pow(static_cast<double>(q->cols()), -0.25);
    PerformerAttentionResult r;
    r.q_features = performer_features(scale(q, pre), fm);
    r.k_features = performer_features(scale(k, pre), fm);

    auto summariser = matmul(transpose(r.k_features), v);        // m x d
    auto numer = matmul(r.q_features, summariser);               // L x d
    auto k_mass = transpose(col_sums(r.k_features));             // m x 1
    auto denom = matmul(r.q_features, k_mass);                   // L x 1
    for (double d : denom->values) {
        if (!(d > 0.0))
            throw NumericError("performer_attention: normalizer must be positive");
    }
    r.output = div_col_broadcast(numer, denom);
    return r;
}

namespace {

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    return add_row_broadcast(matmul(x, w), b);
}

TensorPtr ln_affine(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                    double eps) {
    return add_row_broadcast(mul_row_broadcast(layer_norm_rows(x, eps), gain), bias);
}

}  // namespace

EncoderState encoder_forward(const TensorPtr& h0, const EncoderParams& params,
                             const EncoderConfig& cfg) {
    cfg.validate();
    if (h0->cols() != static_cast<std::size_t>(cfg.embed_dim))
        throw DimensionError("encoder_forward: H0 width must equal embed_dim");
    if (params.blocks.size() != static_cast<std::size_t>(cfg.layers))
        throw ContractError("encoder_forward: parameter blocks do not match layer count");

    EncoderState st;
    st.hidden.push_back(h0);
    const int dh = cfg.head_dim();

    TensorPtr x = h0;
    for (int l = 0; l < cfg.layers; ++l) {
        const EncoderBlockParams& b = params.blocks[static_cast<std::size_t>(l)];

        // pre-norm attention sublayer
        auto n1 = ln_affine(x, b.ln1_gain, b.ln1_bias, cfg.ln_eps);
        auto qf = linear(n1, b.wq, b.bq);
        auto kf = linear(n1, b.wk, b.bk);
        auto vf = linear(n1, b.wv, b.bv);

        std::vector<TensorPtr> head_outs;
        for (int h = 0; h < cfg.heads; ++h) {
            const std::size_t c0 = static_cast<std::size_t>(h * dh);
            const std::size_t c1 = c0 + static_cast<std::size_t>(dh);
            auto qh = slice_cols(qf, c0, c1);
            auto kh = slice_cols(kf, c0, c1);
            auto vh = slice_cols(vf, c0, c1);
            if (cfg.mode == AttentionMode::exact) {
                auto att = exact_attention(qh, kh, vh, cfg.raw_normalization);
                st.attention.push_back(att.weights->to_matrix());
                head_outs.push_back(att.output);
            } else {
                const auto& fm =
                    params.feature_maps[static_cast<std::size_t>(l * cfg.heads + h)];
                auto att = performer_attention(qh, kh, vh, fm);
                st.performer_feats.emplace_back(att.q_features, att.k_features);
                head_outs.push_back(att.output);
            }
        }
        auto attn = linear(concat_cols(head_outs), b.wo, b.bo);
        x = add(x, attn);

        // pre-norm feedforward sublayer
        auto n2 = ln_affine(x, b.ln2_gain, b.ln2_bias, cfg.ln_eps);
        auto ff = linear(gelu(linear(n2, b.ff_w1, b.ff_b1)), b.ff_w2, b.ff_b2);
        x = add(x, ff);
        st.hidden.push_back(x);
    }
    return st;
}

}  // namespace scnet
