#ifndef SCTRANSNET_GAT_HPP
#define SCTRANSNET_GAT_HPP

#include <vector>

#include "sctransnet/data.hpp"
#include "sctransnet/tensor.hpp"

namespace scnet {

struct GatConfig {
    std::vector<int> widths = {256, 128};  // per-layer output widths
    int type_dim = 8;   // TF vs gene embedding
    int rel_dim = 8;    // relation embedding (regulates / reverse / self)
    int key_dim = 32;   // attention key width D

    int layer_count() const { return static_cast<int>(widths.size()); }
    int layer_in_width(int layer) const { return widths[layer == 0 ? 0 : layer - 1]; }
    void validate() const;
};

// node types
inline constexpr int kNodeGene = 0;
inline constexpr int kNodeTf = 1;
// relations
inline constexpr int kRelRegulates = 0;
inline constexpr int kRelReverse = 1;
inline constexpr int kRelSelf = 2;
inline constexpr int kRelationCount = 3;

// Edge-list view of the message-passing graph: one regulates edge per prior
// edge, one reverse edge, one self-loop per node. Sorted by (target,
// relation, source) so reductions have a fixed order.
struct GraphStructure {
    std::vector<int> src, dst, rel;
    std::vector<int> src_type, dst_type;
    int n_nodes = 0;

    std::size_t edge_count() const { return src.size(); }
    static GraphStructure build(const std::vector<Edge>& edges, const std::vector<bool>& is_tf);
};

struct GatLayerParams {
    TensorPtr fq_w, fq_b;  // (in + type) -> key
    TensorPtr fk_w, fk_b;  // (in + type + rel) -> key
    TensorPtr fm_w, fm_b;  // (in + type + rel) -> out, linear
    TensorPtr fn_w1, fn_b1, fn_w2, fn_b2;  // out -> out -> out, gelu
    TensorPtr res_w;       // in -> out when the widths differ, else null
};

struct GatParams {
    TensorPtr type_table;  // 2 x type_dim
    TensorPtr rel_table;   // 3 x rel_dim
    TensorPtr fr_w1, fr_b1, fr_w2, fr_b2;  // (rel + 2*type) -> rel -> rel, shared across layers
    TensorPtr in_w, in_b;  // feature projection: n_features -> widths[0]
    std::vector<GatLayerParams> layers;
};

GatParams init_gat_params(const GatConfig& cfg, std::size_t n_features, Rng& rng,
                          NamedParams& registry);

// r_st = f_r(rel embedding, source type embedding, target type embedding),
// one row per edge.
TensorPtr relation_embed(const GatParams& p, const std::vector<int>& rel,
                         const std::vector<int>& src_type, const std::vector<int>& dst_type);

// m_st = f_m(v_s, u_s, r_st), one row per edge.
TensorPtr message(const GatLayerParams& lp, const TensorPtr& src_states,
                  const TensorPtr& src_type_emb, const TensorPtr& rel_emb);

// alpha_st = softmax over each target's in-neighborhood (incl. self) of
// q_s . k_t / sqrt(D).
TensorPtr neighborhood_attention(const TensorPtr& q_rows, const TensorPtr& k_rows,
                                 const std::vector<int>& target_of_edge, int n_nodes);

// One round of typed message passing with residual update.
TensorPtr gat_layer(const TensorPtr& states, const GraphStructure& g, const GatParams& p,
                    int layer_index);

// Projects raw features to widths[0], then applies all layers.
TensorPtr gat_forward(const TensorPtr& features, const GraphStructure& g, const GatConfig& cfg,
                      const GatParams& p);

// log1p-scaled per-gene count vectors across cells (T x N), the raw GNN node
// features.
Matrix gene_count_features(const ExpressionMatrix& x);

}  // namespace scnet

#endif
