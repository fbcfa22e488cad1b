#include "sctransnet/gat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scnet {

void GatConfig::validate() const {
    if (widths.empty()) throw ValidationError("gat config: needs at least one layer");
    for (int w : widths)
        if (w <= 0) throw ValidationError("gat config: non-positive layer width");
    if (type_dim <= 0 || rel_dim <= 0 || key_dim <= 0)
        throw ValidationError("gat config: non-positive embedding width");
}

GraphStructure GraphStructure::build(const std::vector<Edge>& edges,
                                     const std::vector<bool>& is_tf) {
    GraphStructure g;
    g.n_nodes = static_cast<int>(is_tf.size());
    struct Row {
        int src, dst, rel;
    };
    std::vector<Row> rows;
    rows.reserve(edges.size() * 2 + is_tf.size());
    for (const Edge& e : edges) {
        if (e.tf < 0 || e.tf >= g.n_nodes || e.target < 0 || e.target >= g.n_nodes)
            throw ContractError("GraphStructure: edge endpoint outside vocabulary");
        rows.push_back({e.tf, e.target, kRelRegulates});
        rows.push_back({e.target, e.tf, kRelReverse});
    }
    for (int n = 0; n < g.n_nodes; ++n) rows.push_back({n, n, kRelSelf});
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.dst != b.dst) return a.dst < b.dst;
        if (a.rel != b.rel) return a.rel < b.rel;
        return a.src < b.src;
    });
    for (const Row& r : rows) {
        g.src.push_back(r.src);
        g.dst.push_back(r.dst);
        g.rel.push_back(r.rel);
        g.src_type.push_back(is_tf[static_cast<std::size_t>(r.src)] ? kNodeTf : kNodeGene);
        g.dst_type.push_back(is_tf[static_cast<std::size_t>(r.dst)] ? kNodeTf : kNodeGene);
    }
    return g;
}

GatParams init_gat_params(const GatConfig& cfg, std::size_t n_features, Rng& rng,
                          NamedParams& registry) {
    cfg.validate();
    const std::size_t td = static_cast<std::size_t>(cfg.type_dim);
    const std::size_t rd = static_cast<std::size_t>(cfg.rel_dim);
    const std::size_t kd = static_cast<std::size_t>(cfg.key_dim);
    auto wsd = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

    GatParams p;
    p.type_table = registry.add("gat.type_table", random_normal(2, td, 0.02, rng));
    p.rel_table =
        registry.add("gat.rel_table", random_normal(kRelationCount, rd, 0.02, rng));

    const std::size_t fr_in = rd + 2 * td;
    p.fr_w1 = registry.add("gat.fr_w1", random_normal(fr_in, rd, wsd(fr_in), rng));
    p.fr_b1 = registry.add("gat.fr_b1", Tensor::zeros(1, rd, true));
    p.fr_w2 = registry.add("gat.fr_w2", random_normal(rd, rd, wsd(rd), rng));
    p.fr_b2 = registry.add("gat.fr_b2", Tensor::zeros(1, rd, true));

    const std::size_t w0 = static_cast<std::size_t>(cfg.widths[0]);
    p.in_w = registry.add("gat.in_w", random_normal(n_features, w0, wsd(n_features), rng));
    p.in_b = registry.add("gat.in_b", Tensor::zeros(1, w0, true));

    for (int l = 0; l < cfg.layer_count(); ++l) {
        const std::string base = "gat.layer" + std::to_string(l) + ".";
        const std::size_t in = static_cast<std::size_t>(cfg.layer_in_width(l));
        const std::size_t out = static_cast<std::size_t>(cfg.widths[static_cast<std::size_t>(l)]);
        GatLayerParams lp;
        lp.fq_w = registry.add(base + "fq_w", random_normal(in + td, kd, wsd(in + td), rng));
        lp.fq_b = registry.add(base + "fq_b", Tensor::zeros(1, kd, true));
        lp.fk_w =
            registry.add(base + "fk_w", random_normal(in + td + rd, kd, wsd(in + td + rd), rng));
        lp.fk_b = registry.add(base + "fk_b", Tensor::zeros(1, kd, true));
        lp.fm_w =
            registry.add(base + "fm_w", random_normal(in + td + rd, out, wsd(in + td + rd), rng));
        lp.fm_b = registry.add(base + "fm_b", Tensor::zeros(1, out, true));
        lp.fn_w1 = registry.add(base + "fn_w1", random_normal(out, out, wsd(out), rng));
        lp.fn_b1 = registry.add(base + "fn_b1", Tensor::zeros(1, out, true));
        lp.fn_w2 = registry.add(base + "fn_w2", random_normal(out, out, wsd(out), rng));
        lp.fn_b2 = registry.add(base + "fn_b2", Tensor::zeros(1, out, true));
        if (in != out) {
            lp.res_w = registry.add(base + "res_w", random_normal(in, out, wsd(in), rng));
        }
        p.layers.push_back(std::move(lp));
    }
    return p;
}

namespace {
TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    return add_row_broadcast(matmul(x, w), b);
}
}  // namespace

TensorPtr relation_embed(const GatParams& p, const std::vector<int>& rel,
                         const std::vector<int>& src_type, const std::vector<int>& dst_type) {
    if (rel.size() != src_type.size() || rel.size() != dst_type.size())
        throw DimensionError("relation_embed: per-edge id lists must align");
    for (int r : rel)
        if (r < 0 || r >= kRelationCount)
            throw ContractError("relation_embed: unknown relation id");
    for (std::size_t i = 0; i < src_type.size(); ++i)
        if (src_type[i] < 0 || src_type[i] > 1 || dst_type[i] < 0 || dst_type[i] > 1)
            throw ContractError("relation_embed: unknown node type id");
    auto cat = concat_cols({select_rows(p.rel_table, rel), select_rows(p.type_table, src_type),
                            select_rows(p.type_table, dst_type)});
    return linear(gelu(linear(cat, p.fr_w1, p.fr_b1)), p.fr_w2, p.fr_b2);
}

TensorPtr message(const GatLayerParams& lp, const TensorPtr& src_states,
                  const TensorPtr& src_type_emb, const TensorPtr& rel_emb) {
    return linear(concat_cols({src_states, src_type_emb, rel_emb}), lp.fm_w, lp.fm_b);
}

TensorPtr neighborhood_attention(const TensorPtr& q_rows, const TensorPtr& k_rows,
                                 const std::vector<int>& target_of_edge, int n_nodes) {
    if (q_rows->shape != k_rows->shape)
        throw DimensionError("neighborhood_attention: q/k row shapes must match");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q_rows->cols()));
    auto gamma = scale(rows_dot(q_rows, k_rows), inv_sqrt_d);
    return segment_softmax(gamma, target_of_edge, n_nodes);
}

TensorPtr gat_layer(const TensorPtr& states, const GraphStructure& g, const GatParams& p,
                    int layer_index) {
    const GatLayerParams& lp = p.layers.at(static_cast<std::size_t>(layer_index));

    auto u_src = select_rows(p.type_table, g.src_type);
    auto u_dst = select_rows(p.type_table, g.dst_type);
    auto r = relation_embed(p, g.rel, g.src_type, g.dst_type);

    auto v_src = select_rows(states, g.src);
    auto v_dst = select_rows(states, g.dst);

    auto m = message(lp, v_src, u_src, r);
    auto q = linear(concat_cols({v_src, u_src}), lp.fq_w, lp.fq_b);
    auto k = linear(concat_cols({v_dst, u_dst, r}), lp.fk_w, lp.fk_b);
    auto alpha = neighborhood_attention(q, k, g.dst, g.n_nodes);

    auto agg = segment_weighted_sum_rows(m, alpha, g.dst, g.n_nodes);
    auto fn = linear(gelu(linear(agg, lp.fn_w1, lp.fn_b1)), lp.fn_w2, lp.fn_b2);

    auto residual = lp.res_w ? matmul(states, lp.res_w) : states;
    return add(fn, residual);
}

TensorPtr gat_forward(const TensorPtr& features, const GraphStructure& g, const GatConfig& cfg,
                      const GatParams& p) {
    cfg.validate();
    if (features->rows() != static_cast<std::size_t>(g.n_nodes))
        throw DimensionError("gat_forward: one feature row per node");
    auto v = linear(features, p.in_w, p.in_b);
    for (int l = 0; l < cfg.layer_count(); ++l) v = gat_layer(v, g, p, l);
    return v;
}

Matrix gene_count_features(const ExpressionMatrix& x) {
    Matrix out(x.n_genes(), x.n_cells());
    for (std::size_t c = 0; c < x.n_cells(); ++c)
        for (std::size_t gidx = 0; gidx < x.n_genes(); ++gidx)
            out.at(gidx, c) = std::log1p(x.counts.at(c, gidx));
    return out;
}

}  // namespace scnet
