#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "sctransnet/csv.hpp"
#include "sctransnet/data.hpp"
#include "sctransnet/rng.hpp"

using namespace scnet;

namespace {

std::string temp_file(const std::string& name, const std::string& contents) {
    auto path = std::filesystem::temp_directory_path() / ("sctransnet_test_" + name);
    write_text_file(path.string(), contents);
    return path.string();
}

GeneVocabulary toy_vocab(int n_genes, const std::vector<int>& tfs) {
    GeneVocabulary v;
    for (int i = 0; i < n_genes; ++i) v.add("G" + std::to_string(i));
    for (int t : tfs) v.is_tf[static_cast<std::size_t>(t)] = true;
    return v;
}

std::set<std::pair<int, int>> pair_set(const std::vector<LabeledPair>& v) {
    std::set<std::pair<int, int>> s;
    for (const auto& p : v) s.insert({p.tf, p.gene});
    return s;
}

std::size_t count_label(const std::vector<LabeledPair>& v, int label) {
    std::size_t n = 0;
    for (const auto& p : v) n += p.label == label ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("load_expression: cells-as-rows file") {
    auto path = temp_file("expr1.csv",
                          "cell,SOX2,NANOG\n"
                          "c1,0,3\n"
                          "c2,1,0\n"
                          "c3,2,5\n");
    ExpressionMatrix x = load_expression(path);
    CHECK(x.n_cells() == 3);
    CHECK(x.n_genes() == 2);
    CHECK(x.vocab.symbols[0] == "SOX2");
    CHECK(x.counts.at(2, 1) == 5.0);
    CHECK(x.cell_ids[1] == "c2");
}

TEST_CASE("load_expression: genes-as-rows transposed via hint") {
    auto path = temp_file("expr2.csv",
                          "gene,c1,c2,c3\n"
                          "SOX2,0,1,2\n"
                          "NANOG,3,0,5\n");
    ExpressionMatrix x = load_expression(path, Orientation::genes_rows);
    CHECK(x.n_cells() == 3);
    CHECK(x.n_genes() == 2);
    CHECK(x.counts.at(0, 1) == 3.0);  // cell c1, gene NANOG
    CHECK(x.counts.at(2, 0) == 2.0);  // cell c3, gene SOX2
}

TEST_CASE("load_expression: auto-detection flips BEELINE-style files") {
    auto path = temp_file("expr3.csv",
                          ",H9_day0_rep1_a,H9_day0_rep1_b,H9_day2_rep1_c\n"
                          "SOX2,0,1,2\n"
                          "NANOG,3,0,5\n");
    ExpressionMatrix x = load_expression(path, Orientation::auto_detect);
    CHECK(x.n_cells() == 3);
    CHECK(x.n_genes() == 2);
    CHECK(x.counts.at(0, 1) == 3.0);
}

TEST_CASE("load_expression: error cases name coordinates") {
    auto neg = temp_file("expr4.csv", "cell,A,B\nc1,1,-2\n");
    CHECK_THROWS_WITH_AS(load_expression(neg), doctest::Contains("negative count"),
                         ValidationError);

    auto bad = temp_file("expr5.csv", "cell,A,B\nc1,1,x7\n");
    try {
        load_expression(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        CHECK(std::string(e.what()).find("column 3") != std::string::npos);
    }

    auto dup = temp_file("expr6.csv", "cell,A,a\nc1,1,2\n");
    CHECK_THROWS_AS(load_expression(dup), ValidationError);
}

TEST_CASE("bin_expression: zeros, equal counts, grid oracle") {
    ExpressionMatrix x;
    x.vocab = toy_vocab(3, {});
    x.cell_ids = {"c1", "c2"};
    x.counts = Matrix(2, 3);
    x.counts.v = {4.0, 4.0, 0.0, 4.0, 4.0, 4.0};
    BinnedMatrix b = bin_expression(x, 7);
    CHECK(b.at(0, 2) == 0);
    CHECK(b.at(0, 0) >= 1);
    CHECK(b.at(0, 1) == b.at(0, 0));
    CHECK(b.at(1, 0) == b.at(0, 0));
    CHECK(b.at(1, 2) == b.at(0, 0));

    // transformed values {1, 1.5, 2.5, 3.5, 4.5, 5} with B=5: four unit-width
    // bins over [1,5], all interior values half a bin away from any edge
    ExpressionMatrix g;
    g.vocab = toy_vocab(6, {});
    g.cell_ids = {"c1"};
    g.counts = Matrix(1, 6);
    const double ys[6] = {1.0, 1.5, 2.5, 3.5, 4.5, 5.0};
    for (int i = 0; i < 6; ++i) g.counts.v[static_cast<std::size_t>(i)] = std::expm1(ys[i]);
    BinnedMatrix gb = bin_expression(g, 5);
    const int expected[6] = {1, 1, 2, 3, 4, 4};
    for (std::size_t i = 0; i < 6; ++i) CHECK(gb.at(0, i) == expected[i]);

    // exhaustive edge-comparison oracle on the same data
    const double step = (gb.nonzero_hi - gb.nonzero_lo) / 4.0;
    for (std::size_t i = 0; i < 6; ++i) {
        const double y = std::log1p(g.counts.v[i]);
        int k = 1;
        while (k < 4 && y >= gb.nonzero_lo + static_cast<double>(k) * step) ++k;
        CHECK(gb.at(0, i) == k);
    }
}

TEST_CASE("bin_expression: monotone in the count for every entry pair") {
    Rng rng(59);
    ExpressionMatrix x;
    x.vocab = toy_vocab(20, {});
    x.counts = Matrix(15, 20);
    for (std::size_t c = 0; c < 15; ++c) x.cell_ids.push_back("c" + std::to_string(c));
    for (double& v : x.counts.v)
        v = rng.uniform() < 0.3 ? 0.0 : std::floor(rng.uniform(0.0, 40.0));
    BinnedMatrix b = bin_expression(x, 11);
    for (std::size_t i = 0; i < x.counts.v.size(); ++i) {
        for (std::size_t j = 0; j < x.counts.v.size(); ++j) {
            if (x.counts.v[i] <= x.counts.v[j]) CHECK(b.bins[i] <= b.bins[j]);
        }
    }
}

TEST_CASE("bin_expression: contract errors") {
    ExpressionMatrix x;
    x.vocab = toy_vocab(2, {});
    x.cell_ids = {"c1"};
    x.counts = Matrix(1, 2);
    CHECK_THROWS_AS(bin_expression(x, 5), ValidationError);  // all-zero matrix
    x.counts.v = {1.0, 2.0};
    CHECK_THROWS_AS(bin_expression(x, 1), ContractError);
}

TEST_CASE("load_network: mapping, dropping, dedup, TF flags") {
    GeneVocabulary vocab;
    for (const char* s : {"TFA", "G1", "G2", "G3"}) vocab.add(s);

    auto path = temp_file("net1.csv",
                          "TF,target\n"
                          "tfa,G1\n"
                          "TFA,G2\n"
                          "TFA,G2\n"
                          "TFA,UNKNOWN\n"
                          "TFA,TFA\n");
    PriorNetwork net = load_network(path, vocab);
    CHECK(net.edges.size() == 2);
    CHECK(net.dropped_unknown == 1);
    CHECK(net.dropped_duplicate == 1);
    CHECK(net.dropped_self == 1);
    CHECK(vocab.is_tf[0]);
    CHECK_FALSE(vocab.is_tf[1]);

    auto empty = temp_file("net2.csv", "TF,target\nX1,X2\n");
    GeneVocabulary v2 = toy_vocab(3, {});
    CHECK_THROWS_AS(load_network(empty, v2), ValidationError);
}

TEST_CASE("network_density counts candidate TF pairs") {
    GeneVocabulary vocab = toy_vocab(5, {0});
    PriorNetwork net;
    net.edges = {{0, 1}, {0, 2}};
    CHECK(network_density(net, vocab) == doctest::Approx(0.5));

    net.edges = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
    CHECK(network_density(net, vocab) == doctest::Approx(1.0));

    GeneVocabulary big = toy_vocab(30, {0, 1, 2});
    PriorNetwork single;
    single.edges = {{0, 5}};
    CHECK(network_density(single, big) == doctest::Approx(1.0 / (3.0 * 29.0)));
}

TEST_CASE("make_splits: fractions, ratios, disjointness, leakage") {
    // 6 TFs x 80 targets, 90 planted edges
    GeneVocabulary vocab = toy_vocab(86, {0, 1, 2, 3, 4, 5});
    PriorNetwork net;
    Rng rng(61);
    std::set<std::pair<int, int>> chosen;
    while (net.edges.size() < 90) {
        int tf = static_cast<int>(rng.uniform_int(6));
        int tg = 6 + static_cast<int>(rng.uniform_int(80));
        if (chosen.insert({tf, tg}).second) net.edges.push_back({tf, tg});
    }

    SamplingPlan plan;
    plan.network_density = 0.2;  // ratio positives/negatives = 0.25
    CHECK(plan.target_ratio() == doctest::Approx(0.25));
    LabeledSplits s = make_splits(net, vocab, plan, 7);

    const double n_pos = 90.0;
    const std::size_t train_pos = count_label(s.train, 1);
    const std::size_t val_pos = count_label(s.validation, 1);
    const std::size_t test_pos = count_label(s.test, 1);
    CHECK(train_pos + val_pos + test_pos == 90);
    CHECK(std::abs(static_cast<double>(train_pos + val_pos) - 2.0 * n_pos / 3.0) <= 1.0);
    CHECK(std::abs(static_cast<double>(val_pos) -
                   0.1 * static_cast<double>(train_pos + val_pos)) <= 1.0);

    // achieved ratio within one sample of 0.25 per split
    for (auto kind : {SplitKind::train, SplitKind::validation, SplitKind::test}) {
        const auto& v = s.get(kind);
        const double pos = static_cast<double>(count_label(v, 1));
        const double neg = static_cast<double>(count_label(v, 0));
        CHECK(std::abs(neg - 4.0 * pos) <= 1.0);
    }

    // disjointness and leakage
    auto tr = pair_set(s.train), va = pair_set(s.validation), te = pair_set(s.test);
    for (const auto& p : va) CHECK(tr.count(p) == 0);
    for (const auto& p : te) {
        CHECK(tr.count(p) == 0);
        CHECK(va.count(p) == 0);
    }

    // every pair's source is a TF; hard negatives share TFs with positives
    std::set<int> pos_tfs;
    for (const auto& p : s.train)
        if (p.label == 1) pos_tfs.insert(p.tf);
    for (const auto& p : s.train) {
        CHECK(vocab.is_tf[static_cast<std::size_t>(p.tf)]);
        if (p.label == 0) CHECK(pos_tfs.count(p.tf) == 1);
    }
}

TEST_CASE("make_splits: density 0.5 gives a one-to-one ratio") {
    GeneVocabulary vocab = toy_vocab(40, {0, 1, 2});
    PriorNetwork net;
    Rng rng(67);
    std::set<std::pair<int, int>> chosen;
    while (net.edges.size() < 30) {
        int tf = static_cast<int>(rng.uniform_int(3));
        int tg = 3 + static_cast<int>(rng.uniform_int(37));
        if (chosen.insert({tf, tg}).second) net.edges.push_back({tf, tg});
    }
    SamplingPlan plan;
    plan.network_density = 0.5;
    LabeledSplits s = make_splits(net, vocab, plan, 3);
    for (auto kind : {SplitKind::train, SplitKind::validation, SplitKind::test}) {
        const auto& v = s.get(kind);
        CHECK(std::abs(static_cast<double>(count_label(v, 1)) -
                       static_cast<double>(count_label(v, 0))) <= 1.0);
    }
}

TEST_CASE("make_splits: deterministic per seed, seed changes negatives") {
    GeneVocabulary vocab = toy_vocab(30, {0, 1});
    PriorNetwork net;
    for (int g = 2; g < 14; ++g) net.edges.push_back({g % 2, g});
    SamplingPlan plan;
    plan.network_density = 0.3;

    LabeledSplits a = make_splits(net, vocab, plan, 42);
    LabeledSplits b = make_splits(net, vocab, plan, 42);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].tf == b.train[i].tf);
        CHECK(a.train[i].gene == b.train[i].gene);
        CHECK(a.train[i].label == b.train[i].label);
    }
    CHECK(pair_set(a.validation) == pair_set(b.validation));
    CHECK(pair_set(a.test) == pair_set(b.test));

    LabeledSplits c = make_splits(net, vocab, plan, 43);
    auto negatives = [](const std::vector<LabeledPair>& v) {
        std::set<std::pair<int, int>> s;
        for (const auto& p : v)
            if (p.label == 0) s.insert({p.tf, p.gene});
        return s;
    };
    CHECK(negatives(a.train) != negatives(c.train));
}

TEST_CASE("make_splits: insufficient negatives reports the deficit") {
    GeneVocabulary vocab = toy_vocab(5, {0});
    PriorNetwork net;
    net.edges = {{0, 1}, {0, 2}, {0, 3}};  // only one candidate negative remains
    SamplingPlan plan;
    plan.network_density = 0.05;  // demands 19 negatives per positive
    CHECK_THROWS_WITH_AS(make_splits(net, vocab, plan, 1), doctest::Contains("deficit"),
                         ValidationError);
}

TEST_CASE("synth_generate: noise-free single regulator copies counts") {
    // two genes, one TF; the single edge is forced by a near-one probability
    SynthDataset d = synth_generate(2, 1, 25, 0.999999, 0.0, 5);
    REQUIRE(d.network.edges.size() == 1);
    for (std::size_t c = 0; c < 25; ++c)
        CHECK(d.expression.counts.at(c, 1) == d.expression.counts.at(c, 0));
}

TEST_CASE("synth_generate: edge_prob near one plants the complete bipartite graph") {
    SynthDataset d = synth_generate(8, 2, 3, 0.999999, 0.1, 5);
    CHECK(d.network.edges.size() == 12);
    for (const Edge& e : d.network.edges) {
        CHECK(e.tf < 2);
        CHECK(e.target >= 2);
    }
}

TEST_CASE("synth_generate: bit-identical for a fixed seed") {
    SynthDataset a = synth_generate(30, 5, 10, 0.2, 0.4, 99);
    SynthDataset b = synth_generate(30, 5, 10, 0.2, 0.4, 99);
    CHECK(a.expression.counts.v == b.expression.counts.v);
    REQUIRE(a.network.edges.size() == b.network.edges.size());
    for (std::size_t i = 0; i < a.network.edges.size(); ++i) {
        CHECK(a.network.edges[i].tf == b.network.edges[i].tf);
        CHECK(a.network.edges[i].target == b.network.edges[i].target);
    }
    SynthDataset c = synth_generate(30, 5, 10, 0.2, 0.4, 100);
    CHECK(a.expression.counts.v != c.expression.counts.v);
}

TEST_CASE("synth_generate: sub-one expected edge count warns but succeeds") {
    SynthDataset d = synth_generate(4, 1, 3, 0.01, 0.1, 8);
    CHECK(d.expression.n_genes() == 4);  // no throw; the network may be empty
}

TEST_CASE("splits CSV round-trips through the audit format") {
    GeneVocabulary vocab = toy_vocab(20, {0});
    PriorNetwork net;
    for (int g = 1; g < 8; ++g) net.edges.push_back({0, g});
    SamplingPlan plan;
    plan.network_density = 0.5;
    LabeledSplits s = make_splits(net, vocab, plan, 11);

    auto path = temp_file("splits.csv", splits_to_csv(s, SplitKind::train, vocab, "seed=11"));
    std::vector<LabeledPair> back = pairs_from_csv(path, vocab);
    REQUIRE(back.size() == s.train.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].tf == s.train[i].tf);
        CHECK(back[i].gene == s.train[i].gene);
        CHECK(back[i].label == s.train[i].label);
    }
}
