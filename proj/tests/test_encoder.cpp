#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sctransnet/csv.hpp"
#include "sctransnet/encoder.hpp"

using namespace scnet;

namespace {

TensorPtr random_tensor(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0,
                        bool requires_grad = false) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.normal(0.0, sd);
    return Tensor::create({r, c}, std::move(v), requires_grad);
}

// direct softmax(QK^T/sqrt(d)) V, written independently of the engine ops
Matrix direct_attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v) {
    const std::size_t t = q.rows(), d = q.cols();
    Matrix out(t, v.cols());
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> row(t);
        double mx = -1e300;
        for (std::size_t j = 0; j < t; ++j) {
            double dot = 0.0;
            for (std::size_t x = 0; x < d; ++x) dot += q.at(i, x) * k.at(j, x);
            row[j] = dot * inv;
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < t; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < t; ++j) row[j] /= sum;
        for (std::size_t c = 0; c < v.cols(); ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < t; ++j) acc += row[j] * v.at(j, c);
            out.at(i, c) = acc;
        }
    }
    return out;
}

double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

EncoderConfig small_config(AttentionMode mode, int layers = 1) {
    EncoderConfig cfg;
    cfg.embed_dim = 8;
    cfg.layers = layers;
    cfg.heads = 2;
    cfg.ff_dim = 8;
    cfg.bin_count = 6;
    cfg.mode = mode;
    cfg.performer_features = 64;
    return cfg;
}

}  // namespace

TEST_CASE("embed_inputs adds gene and bin rows") {
    auto genes = Tensor::zeros(3, 4, true);
    auto bins_table = Tensor::zeros(5, 4, true);
    auto h0 = embed_inputs({0, 2, 4}, genes, bins_table);
    for (double v : h0->values) CHECK(v == 0.0);

    Rng rng(3);
    auto genes2 = random_tensor(3, 4, rng, 1.0, true);
    auto h1 = embed_inputs({1, 1, 0}, genes2, bins_table);
    CHECK(h1->values == genes2->values);  // zero expression table keeps gene rows

    auto bins2 = random_tensor(5, 4, rng);
    auto a = embed_inputs({0, 3, 2}, genes2, bins2);
    auto b = embed_inputs({0, 3, 2}, genes2, bins2);
    CHECK(a->values == b->values);  // identical bins give identical H0

    CHECK_THROWS_AS(embed_inputs({0, 5, 1}, genes2, bins2), ContractError);
    CHECK_THROWS_AS(embed_inputs({0, -1, 1}, genes2, bins2), ContractError);
}

TEST_CASE("exact_attention: degenerate and oracle cases") {
    // zero queries/keys: uniform weights, output is the column mean of V
    auto q = Tensor::zeros(3, 2);
    auto k = Tensor::zeros(3, 2);
    auto v = Tensor::create({3, 2}, {1, 2, 3, 4, 5, 6});
    auto r = exact_attention(q, k, v);
    for (double w : r.weights->values) CHECK(w == doctest::Approx(1.0 / 3));
    CHECK(r.output->at(0, 0) == doctest::Approx(3.0));
    CHECK(r.output->at(0, 1) == doctest::Approx(4.0));

    // sequence length one
    auto q1 = Tensor::create({1, 2}, {0.3, -0.7});
    auto r1 = exact_attention(q1, q1, Tensor::create({1, 2}, {5.0, -2.0}));
    CHECK(r1.weights->values[0] == 1.0);
    CHECK(r1.output->values[0] == 5.0);
    CHECK(r1.output->values[1] == -2.0);

    // random case against the direct formula
    Rng rng(5);
    auto qq = random_tensor(3, 2, rng);
    auto kk = random_tensor(3, 2, rng);
    auto vv = random_tensor(3, 2, rng);
    auto rr = exact_attention(qq, kk, vv);
    Matrix oracle = direct_attention_oracle(*qq, *kk, *vv);
    for (std::size_t i = 0; i < oracle.v.size(); ++i)
        CHECK(std::abs(rr.output->values[i] - oracle.v[i]) < 1e-12);
}

TEST_CASE("exact_attention rows are stochastic") {
    Rng rng(7);
    auto q = random_tensor(6, 4, rng);
    auto k = random_tensor(6, 4, rng);
    auto v = random_tensor(6, 4, rng);
    auto r = exact_attention(q, k, v);
    for (std::size_t i = 0; i < 6; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 6; ++j) sum += r.weights->at(i, j);
        CHECK(std::abs(sum - 1.0) < 1e-10);
        for (std::size_t j = 0; j < 6; ++j) CHECK(r.weights->at(i, j) >= 0.0);
    }
}

TEST_CASE("raw normalization preserves the printed formula") {
    auto q = Tensor::create({2, 1}, {1.0, 2.0});
    auto k = Tensor::create({2, 1}, {1.0, 2.0});
    auto v = Tensor::create({2, 1}, {10.0, 20.0});
    auto r = exact_attention(q, k, v, /*raw=*/true);
    CHECK(r.weights->at(0, 0) == doctest::Approx(1.0 / 3));
    CHECK(r.weights->at(0, 1) == doctest::Approx(2.0 / 3));
    CHECK(r.weights->at(1, 0) == doctest::Approx(1.0 / 3));
    CHECK(r.weights->at(1, 1) == doctest::Approx(2.0 / 3));
    CHECK(r.output->at(0, 0) == doctest::Approx(10.0 / 3 + 40.0 / 3));
}

TEST_CASE("performer features are strictly positive") {
    Rng rng(11);
    PerformerFeatureMap fm;
    fm.seed = 13;
    Rng draw(fm.seed);
    fm.omega = random_tensor(4, 32, draw);
    auto x = random_tensor(6, 4, rng, 3.0);
    auto feats = performer_features(x, fm);
    for (double v : feats->values) CHECK(v > 0.0);
}

TEST_CASE("performer_attention approximates exact attention at large m") {
    Rng rng(17);
    double total = 0.0;
    int cases = 0;
    for (int rep = 0; rep < 5; ++rep) {
        auto q = random_tensor(8, 4, rng);
        auto k = random_tensor(8, 4, rng);
        auto v = random_tensor(8, 4, rng);
        PerformerFeatureMap fm;
        fm.seed = rng.next_u64();
        Rng draw(fm.seed);
        fm.omega = random_tensor(4, 4096, draw);
        auto approx = performer_attention(q, k, v, fm);
        auto exact = exact_attention(q, k, v);
        total += mean_abs_diff(approx.output->values, exact.output->values);
        ++cases;
    }
    CHECK(total / cases < 0.05);
}

TEST_CASE("performer_attention: zero values give zero output for any m") {
    Rng rng(19);
    for (int m : {1, 7, 64}) {
        auto q = random_tensor(5, 3, rng);
        auto k = random_tensor(5, 3, rng);
        auto v = Tensor::zeros(5, 3);
        PerformerFeatureMap fm;
        fm.seed = 23;
        Rng draw(fm.seed);
        fm.omega = random_tensor(3, static_cast<std::size_t>(m), draw);
        auto r = performer_attention(q, k, v, fm);
        for (double x : r.output->values) CHECK(x == 0.0);
    }
}

TEST_CASE("performer error is non-increasing as m doubles (20 seeds)") {
    Rng rng(29);
    std::vector<int> ms = {64, 128, 256};
    std::vector<double> mean_err(ms.size(), 0.0);
    for (int seed = 0; seed < 20; ++seed) {
        auto q = random_tensor(8, 4, rng);
        auto k = random_tensor(8, 4, rng);
        auto v = random_tensor(8, 4, rng);
        auto exact = exact_attention(q, k, v);
        for (std::size_t mi = 0; mi < ms.size(); ++mi) {
            PerformerFeatureMap fm;
            fm.seed = 1000 + static_cast<std::uint64_t>(seed);
            Rng draw(fm.seed);
            fm.omega = random_tensor(4, static_cast<std::size_t>(ms[mi]), draw);
            auto approx = performer_attention(q, k, v, fm);
            mean_err[mi] += mean_abs_diff(approx.output->values, exact.output->values);
        }
    }
    for (std::size_t mi = 1; mi < ms.size(); ++mi)
        CHECK(mean_err[mi] <= mean_err[mi - 1]);
}

TEST_CASE("encoder_forward: zero layers return the input") {
    Rng rng(31);
    NamedParams reg;
    EncoderConfig cfg = small_config(AttentionMode::exact, 0);
    EncoderParams p = init_encoder_params(cfg, 4, rng, reg);
    auto h0 = random_tensor(4, 8, rng);
    EncoderState st = encoder_forward(h0, p, cfg);
    CHECK(st.hidden.size() == 1);
    CHECK(st.hidden[0]->values == h0->values);
}

TEST_CASE("encoder_forward is permutation equivariant (no positions)") {
    // mathematically exact; compared at 1e-12 because permuting rows reorders
    // floating-point reductions
    Rng rng(37);
    NamedParams reg;
    EncoderConfig cfg = small_config(AttentionMode::exact, 2);
    EncoderParams p = init_encoder_params(cfg, 5, rng, reg);
    auto h0 = random_tensor(5, 8, rng);

    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<double> pv(5 * 8);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j) pv[i * 8 + j] = h0->at(perm[i], j);
    auto hp = Tensor::create({5, 8}, std::move(pv));

    auto out = encoder_forward(h0, p, cfg).hidden.back();
    auto outp = encoder_forward(hp, p, cfg).hidden.back();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(std::abs(outp->at(i, j) - out->at(perm[i], j)) < 1e-12);
}

TEST_CASE("encoder_forward records row-stochastic attention in exact mode") {
    Rng rng(41);
    NamedParams reg;
    EncoderConfig cfg = small_config(AttentionMode::exact, 2);
    EncoderParams p = init_encoder_params(cfg, 6, rng, reg);
    auto h0 = random_tensor(6, 8, rng);
    EncoderState st = encoder_forward(h0, p, cfg);
    CHECK(st.attention.size() == 4);  // 2 layers x 2 heads
    for (const Matrix& a : st.attention) {
        for (std::size_t i = 0; i < a.rows; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < a.cols; ++j) sum += a.at(i, j);
            CHECK(std::abs(sum - 1.0) < 1e-10);
        }
    }

    EncoderConfig pcfg = small_config(AttentionMode::performer, 2);
    NamedParams reg2;
    Rng rng2(43);
    EncoderParams pp = init_encoder_params(pcfg, 6, rng2, reg2);
    EncoderState stp = encoder_forward(h0, pp, pcfg);
    CHECK(stp.attention.empty());
    CHECK(stp.performer_feats.size() == 4);
    for (const auto& [qf, kf] : stp.performer_feats) {
        for (double v : qf->values) CHECK(v > 0.0);
        for (double v : kf->values) CHECK(v > 0.0);
    }
}

TEST_CASE("exact and performer modes agree within 0.05 for one layer") {
    Rng rng(47);
    EncoderConfig pcfg = small_config(AttentionMode::performer, 1);
    pcfg.performer_features = 4096;
    NamedParams reg;
    EncoderParams p = init_encoder_params(pcfg, 6, rng, reg);

    EncoderConfig ecfg = pcfg;
    ecfg.mode = AttentionMode::exact;
    EncoderParams pe = p;  // same weights, feature maps unused in exact mode

    auto h0 = random_tensor(6, 8, rng, 0.5);
    auto exact_out = encoder_forward(h0, pe, ecfg).hidden.back();
    auto perf_out = encoder_forward(h0, p, pcfg).hidden.back();
    CHECK(mean_abs_diff(exact_out->values, perf_out->values) < 0.05);
}

TEST_CASE("gradient check through one full encoder block") {
    Rng rng(53);
    NamedParams reg;
    EncoderConfig cfg = small_config(AttentionMode::exact, 1);
    EncoderParams p = init_encoder_params(cfg, 5, rng, reg);
    std::vector<int> bins = {0, 2, 1, 5, 3};

    std::vector<double> wv(5 * 8);
    for (double& x : wv) x = rng.uniform(0.5, 1.5);
    auto wt = Tensor::create({5, 8}, std::move(wv));

    auto loss_fn = [&] {
        auto h0 = embed_inputs(bins, p.gene_table, p.bin_table);
        auto out = encoder_forward(h0, p, cfg).hidden.back();
        return sum_all(mul(out, wt));
    };
    CHECK(grad_check(loss_fn, reg.tensors(), 1e-5) < 1e-3);
}

TEST_CASE("config validation") {
    EncoderConfig cfg;
    cfg.embed_dim = 10;
    cfg.heads = 4;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.embed_dim = 8;
    cfg.mode = AttentionMode::performer;
    cfg.performer_features = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("pretrained gene embeddings overwrite matching rows") {
    GeneVocabulary vocab;
    vocab.add("SOX2");
    vocab.add("NANOG");
    auto table = Tensor::zeros(2, 3, true);
    auto path = std::filesystem::temp_directory_path() / "sctransnet_test_emb.csv";
    write_text_file(path.string(),
                    "symbol,v1,v2,v3\n"
                    "sox2,1,2,3\n"
                    "OTHER,9,9,9\n");
    std::size_t loaded = load_gene_embeddings_csv(path.string(), vocab, table);
    CHECK(loaded == 1);
    CHECK(table->at(0, 0) == 1.0);
    CHECK(table->at(0, 2) == 3.0);
    CHECK(table->at(1, 0) == 0.0);

    write_text_file(path.string(), "symbol,v1\nSOX2,1\n");
    CHECK_THROWS_AS(load_gene_embeddings_csv(path.string(), vocab, table), InputError);
}
