#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "wakeforge/autodiff.hpp"
#include "wakeforge/graph.hpp"
#include "wakeforge/rng.hpp"

namespace wakeforge {

struct TransformerConfig {
  int n_blocks = 2;
  int n_heads = 2;
  int d_model = 64;
  int enc_hidden = 128;
  int dec_hidden = 128;
  int ffn_hidden = 128;
  double dropout = 0.0;

  void validate() const {
    if (n_blocks < 1 || n_heads < 1 || d_model < 1)
      throw std::invalid_argument("TransformerConfig: non-positive sizes");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("TransformerConfig: d_model must be divisible by n_heads");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("TransformerConfig: dropout must lie in [0, 1)");
  }
};

struct GnnConfig {
  int n_blocks = 3;
  int mlp_hidden = 64;
  int latent_vertex = 64;
  int latent_edge = 64;
  int latent_global = 64;

  void validate() const {
    if (n_blocks < 1 || mlp_hidden < 1 || latent_vertex < 1 || latent_edge < 1 ||
        latent_global < 1)
      throw std::invalid_argument("GnnConfig: non-positive sizes");
  }
};

namespace nn {

template <class S>
struct Linear {
  ad::Tensor<S> w;  // in x out
  ad::Tensor<S> b;  // 1 x out

  ad::Tensor<S> operator()(const ad::Tensor<S>& x) const { return ad::add(ad::matmul(x, w), b); }
};

// Two affine layers with a GELU in between.
template <class S>
struct Mlp2 {
  Linear<S> l1, l2;

  ad::Tensor<S> operator()(const ad::Tensor<S>& x) const { return l2(ad::gelu(l1(x))); }
};

template <class S>
struct LayerNorm {
  ad::Tensor<S> gamma, beta;  // 1 x d

  ad::Tensor<S> operator()(const ad::Tensor<S>& x) const {
    return ad::layer_norm(x, gamma, beta);
  }
};

template <class S>
struct MhaWeights {
  ad::Tensor<S> wq, wk, wv, wo;  // d x d
  int n_heads = 1;
};

using KeyMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

template <class S>
struct TransformerBlock {
  LayerNorm<S> ln_attn_in, ln_attn_out, ln_ffn_in;
  MhaWeights<S> attn;
  Linear<S> ff1, ff2;
};

template <class S>
struct TransformerWeights {
  TransformerConfig cfg;
  Mlp2<S> encoder;  // 5 -> enc_hidden -> d
  std::vector<TransformerBlock<S>> blocks;
  Mlp2<S> decoder;  // d -> dec_hidden -> 1

  std::vector<std::pair<std::string, ad::Tensor<S>>> named_params() const;
  std::vector<ad::Tensor<S>> params() const {
    std::vector<ad::Tensor<S>> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }
};

template <class S>
struct GnnWeights {
  GnnConfig cfg;
  Mlp2<S> enc_vertex, enc_edge, enc_global;
  struct Block {
    Mlp2<S> edge_mlp, vertex_mlp, global_mlp;
  };
  std::vector<Block> blocks;
  Mlp2<S> decoder;

  std::vector<std::pair<std::string, ad::Tensor<S>>> named_params() const;
  std::vector<ad::Tensor<S>> params() const {
    std::vector<ad::Tensor<S>> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }
};

// ---------------------------------------------------------------------------
// initialization

template <class S>
ad::Tensor<S> xavier(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  ad::Mat<S> w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i)
    for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = S(rng.uniform(-bound, bound));
  return ad::Tensor<S>::param(std::move(w));
}

template <class S>
Linear<S> linear_init(Eigen::Index in, Eigen::Index out, Rng& rng) {
  return {xavier<S>(in, out, rng), ad::Tensor<S>::param(ad::Mat<S>::Zero(1, out))};
}

template <class S>
Mlp2<S> mlp2_init(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng) {
  return {linear_init<S>(in, hidden, rng), linear_init<S>(hidden, out, rng)};
}

template <class S>
LayerNorm<S> layer_norm_init(Eigen::Index d) {
  return {ad::Tensor<S>::param(ad::Mat<S>::Ones(1, d)),
          ad::Tensor<S>::param(ad::Mat<S>::Zero(1, d))};
}

template <class S>
TransformerWeights<S> transformer_init(const TransformerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(splitmix64(seed ^ 0x7472616e73ull));
  TransformerWeights<S> w;
  w.cfg = cfg;
  const Eigen::Index d = cfg.d_model;
  w.encoder = mlp2_init<S>(5, cfg.enc_hidden, d, rng);
  for (int b = 0; b < cfg.n_blocks; ++b) {
    TransformerBlock<S> blk;
    blk.ln_attn_in = layer_norm_init<S>(d);
    blk.ln_attn_out = layer_norm_init<S>(d);
    blk.ln_ffn_in = layer_norm_init<S>(d);
    blk.attn = {xavier<S>(d, d, rng), xavier<S>(d, d, rng), xavier<S>(d, d, rng),
                xavier<S>(d, d, rng), cfg.n_heads};
    blk.ff1 = linear_init<S>(d, cfg.ffn_hidden, rng);
    blk.ff2 = linear_init<S>(cfg.ffn_hidden, d, rng);
    w.blocks.push_back(std::move(blk));
  }
  w.decoder = mlp2_init<S>(d, cfg.dec_hidden, 1, rng);
  return w;
}

template <class S>
GnnWeights<S> gnn_init(const GnnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(splitmix64(seed ^ 0x676e6eull));
  GnnWeights<S> w;
  w.cfg = cfg;
  w.enc_vertex = mlp2_init<S>(3, cfg.mlp_hidden, cfg.latent_vertex, rng);
  w.enc_edge = mlp2_init<S>(2, cfg.mlp_hidden, cfg.latent_edge, rng);
  w.enc_global = mlp2_init<S>(2, cfg.mlp_hidden, cfg.latent_global, rng);
  for (int b = 0; b < cfg.n_blocks; ++b) {
    typename GnnWeights<S>::Block blk;
    blk.edge_mlp = mlp2_init<S>(cfg.latent_edge + 2 * cfg.latent_vertex + cfg.latent_global,
                                cfg.mlp_hidden, cfg.latent_edge, rng);
    blk.vertex_mlp = mlp2_init<S>(cfg.latent_edge + cfg.latent_vertex + cfg.latent_global,
                                  cfg.mlp_hidden, cfg.latent_vertex, rng);
    blk.global_mlp = mlp2_init<S>(cfg.latent_vertex + cfg.latent_edge + cfg.latent_global,
                                  cfg.mlp_hidden, cfg.latent_global, rng);
    w.blocks.push_back(std::move(blk));
  }
  w.decoder = mlp2_init<S>(cfg.latent_vertex, cfg.mlp_hidden, 1, rng);
  return w;
}

// ---------------------------------------------------------------------------
// named parameter walks

namespace detail {
template <class S, class F>
void walk_mlp(const std::string& prefix, const Mlp2<S>& m, F&& f) {
  f(prefix + ".l1.w", m.l1.w);
  f(prefix + ".l1.b", m.l1.b);
  f(prefix + ".l2.w", m.l2.w);
  f(prefix + ".l2.b", m.l2.b);
}
}  // namespace detail

template <class S>
std::vector<std::pair<std::string, ad::Tensor<S>>> TransformerWeights<S>::named_params() const {
  std::vector<std::pair<std::string, ad::Tensor<S>>> out;
  auto push = [&out](const std::string& n, const ad::Tensor<S>& t) { out.emplace_back(n, t); };
  detail::walk_mlp<S>("enc", encoder, push);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string p = "block" + std::to_string(b);
    const auto& blk = blocks[b];
    push(p + ".ln_attn_in.gamma", blk.ln_attn_in.gamma);
    push(p + ".ln_attn_in.beta", blk.ln_attn_in.beta);
    push(p + ".attn.wq", blk.attn.wq);
    push(p + ".attn.wk", blk.attn.wk);
    push(p + ".attn.wv", blk.attn.wv);
    push(p + ".attn.wo", blk.attn.wo);
    push(p + ".ln_attn_out.gamma", blk.ln_attn_out.gamma);
    push(p + ".ln_attn_out.beta", blk.ln_attn_out.beta);
    push(p + ".ln_ffn_in.gamma", blk.ln_ffn_in.gamma);
    push(p + ".ln_ffn_in.beta", blk.ln_ffn_in.beta);
    detail::walk_mlp<S>(p + ".ffn1", Mlp2<S>{blk.ff1, blk.ff2}, push);
  }
  detail::walk_mlp<S>("dec", decoder, push);
  return out;
}

template <class S>
std::vector<std::pair<std::string, ad::Tensor<S>>> GnnWeights<S>::named_params() const {
  std::vector<std::pair<std::string, ad::Tensor<S>>> out;
  auto push = [&out](const std::string& n, const ad::Tensor<S>& t) { out.emplace_back(n, t); };
  detail::walk_mlp<S>("enc_v", enc_vertex, push);
  detail::walk_mlp<S>("enc_e", enc_edge, push);
  detail::walk_mlp<S>("enc_u", enc_global, push);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string p = "block" + std::to_string(b);
    detail::walk_mlp<S>(p + ".edge", blocks[b].edge_mlp, push);
    detail::walk_mlp<S>(p + ".vertex", blocks[b].vertex_mlp, push);
    detail::walk_mlp<S>(p + ".global", blocks[b].global_mlp, push);
  }
  detail::walk_mlp<S>("dec", decoder, push);
  return out;
}

// ---------------------------------------------------------------------------
// forward passes

/// One item of a stacked row matrix: rows [offset, offset+count), with an
/// optional per-key validity mask of length count.
struct ItemSpan {
  Eigen::Index offset = 0;
  Eigen::Index count = 0;
  const KeyMask* key_mask = nullptr;
};

/// Per-item, per-block, per-head post-softmax attention maps.
template <class S>
using AttentionMaps = std::vector<std::vector<std::vector<ad::Mat<S>>>>;

struct DropoutSampler {
  Rng* rng = nullptr;
  double p = 0.0;
};

template <class S>
ad::Tensor<S> apply_dropout(const ad::Tensor<S>& x, DropoutSampler* drop) {
  if (!drop || drop->p <= 0.0) return x;
  ad::BoolArray mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) mask(i, j) = drop->rng->bernoulli(drop->p);
  return ad::scale(ad::masked_fill(x, mask, S(0)), S(1.0 / (1.0 - drop->p)));
}

/// Self-attention over stacked item rows: the Q/K/V and output projections
/// run on the full stack, only the per-head score/softmax/value products run
/// within items.
template <class S>
ad::Tensor<S> multi_head_attention_packed(const ad::Tensor<S>& x, const MhaWeights<S>& w,
                                          const std::vector<ItemSpan>& items,
                                          std::size_t block_index,
                                          AttentionMaps<S>* attention = nullptr) {
  const Eigen::Index d = x.cols();
  if (w.wq.rows() != d)
    ad::shape_error("multi_head_attention", x.rows(), d, w.wq.rows(), w.wq.cols());
  if (d % w.n_heads != 0)
    throw std::invalid_argument("multi_head_attention: width not divisible by head count");
  for (const ItemSpan& span : items)
    if (span.key_mask && span.key_mask->size() != span.count)
      throw std::invalid_argument("multi_head_attention: key mask length mismatch");
  const Eigen::Index dk = d / w.n_heads;
  const S inv_sqrt_dk = S(1) / std::sqrt(S(dk));
  auto q = ad::matmul(x, w.wq);
  auto k = ad::matmul(x, w.wk);
  auto v = ad::matmul(x, w.wv);
  std::vector<ad::Tensor<S>> per_item;
  per_item.reserve(items.size());
  for (std::size_t it = 0; it < items.size(); ++it) {
    const ItemSpan& span = items[it];
    if (span.key_mask && !span.key_mask->any())
      throw std::invalid_argument("multi_head_attention: no attendable keys for any query");
    const bool need_mask = span.key_mask && !span.key_mask->all();
    ad::BoolArray masked_cols;
    if (need_mask) masked_cols = (!span.key_mask->transpose()).replicate(span.count, 1);
    auto qi = ad::slice_rows(q, span.offset, span.count);
    auto ki = ad::slice_rows(k, span.offset, span.count);
    auto vi = ad::slice_rows(v, span.offset, span.count);
    std::vector<ad::Tensor<S>> heads;
    heads.reserve(static_cast<std::size_t>(w.n_heads));
    for (int h = 0; h < w.n_heads; ++h) {
      auto qh = ad::slice_cols(qi, h * dk, dk);
      auto kh = ad::slice_cols(ki, h * dk, dk);
      auto vh = ad::slice_cols(vi, h * dk, dk);
      auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dk);
      if (need_mask)
        scores = ad::masked_fill(scores, masked_cols, -std::numeric_limits<S>::infinity());
      auto attn = ad::row_softmax(scores);
      if (attention) (*attention)[it][block_index].push_back(attn.value());
      heads.push_back(ad::matmul(attn, vh));
    }
    per_item.push_back(w.n_heads == 1 ? heads.front() : ad::concat_cols(heads));
  }
  auto stacked = items.size() == 1 ? per_item.front() : ad::concat_rows(per_item);
  return ad::matmul(stacked, w.wo);
}

/// Scaled dot-product self-attention over one set of rows, with an output
/// projection. Keys where key_mask is false are excluded from every softmax
/// (weight exactly zero). When attention_out is given, the per-head
/// post-softmax maps are appended to it.
template <class S>
ad::Tensor<S> multi_head_attention(const ad::Tensor<S>& x, const MhaWeights<S>& w,
                                   const KeyMask* key_mask = nullptr,
                                   std::vector<ad::Mat<S>>* attention_out = nullptr) {
  const std::vector<ItemSpan> whole = {{0, x.rows(), key_mask}};
  if (!attention_out) return multi_head_attention_packed(x, w, whole, 0);
  AttentionMaps<S> maps(1);
  maps[0].resize(1);
  auto out = multi_head_attention_packed(x, w, whole, 0, &maps);
  for (auto& head : maps[0][0]) attention_out->push_back(std::move(head));
  return out;
}

/// Encoder MLP -> n_blocks x (LN -> attention -> LN -> +residual,
/// LN -> GELU feed-forward -> +residual) -> decoder MLP. `rows` stacks the
/// 5-feature vertex rows of every item; attention runs within items only.
template <class S>
ad::Tensor<S> transformer_apply(const TransformerWeights<S>& w, const ad::Tensor<S>& rows,
                                const std::vector<ItemSpan>& items,
                                AttentionMaps<S>* attention = nullptr,
                                DropoutSampler* dropout = nullptr) {
  if (attention) {
    attention->assign(items.size(), {});
    for (auto& per_item : *attention) per_item.resize(static_cast<std::size_t>(w.cfg.n_blocks));
  }
  auto h = w.encoder(rows);
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const auto& blk = w.blocks[b];
    auto a = blk.ln_attn_in(h);
    auto attn_out = multi_head_attention_packed(a, blk.attn, items, b, attention);
    attn_out = blk.ln_attn_out(attn_out);
    attn_out = apply_dropout(attn_out, dropout);
    h = ad::add(h, attn_out);
    auto f = blk.ln_ffn_in(h);
    f = blk.ff2(ad::gelu(blk.ff1(f)));
    f = apply_dropout(f, dropout);
    h = ad::add(h, f);
  }
  return w.decoder(h);
}

/// Message-passing forward: encode vertex/edge/global features, then per
/// block update edges from (edge, src, dst, global), vertices from (summed
/// incoming edges, vertex, global) and globals from pooled means. To make
/// relabelling a no-op at the bit level, computation runs in a canonical
/// vertex order keyed by the vertex features themselves; the result is
/// returned in the original vertex order.
template <class S>
ad::Tensor<S> gnn_apply(const GnnWeights<S>& w, const FarmGraph& g) {
  const Eigen::Index n = g.n_vertices();
  const Eigen::Index ne = g.n_edges();

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < 3; ++c) {
      if (g.vertices(a, c) != g.vertices(b, c)) return g.vertices(a, c) < g.vertices(b, c);
    }
    return a < b;
  });
  std::vector<int> canon_of(static_cast<std::size_t>(n));
  for (int i = 0; i < static_cast<int>(n); ++i) canon_of[static_cast<std::size_t>(order[i])] = i;

  std::vector<int> edge_order(static_cast<std::size_t>(ne));
  std::iota(edge_order.begin(), edge_order.end(), 0);
  std::sort(edge_order.begin(), edge_order.end(), [&](int a, int b) {
    const auto ka = std::make_pair(canon_of[static_cast<std::size_t>(g.edges[a].first)],
                                   canon_of[static_cast<std::size_t>(g.edges[a].second)]);
    const auto kb = std::make_pair(canon_of[static_cast<std::size_t>(g.edges[b].first)],
                                   canon_of[static_cast<std::size_t>(g.edges[b].second)]);
    return ka < kb;
  });

  ad::Mat<S> vmat(n, 3), emat(ne, 2);
  std::vector<int> src(static_cast<std::size_t>(ne)), dst(static_cast<std::size_t>(ne));
  for (Eigen::Index i = 0; i < n; ++i)
    vmat.row(i) = g.vertices.row(order[static_cast<std::size_t>(i)]).template cast<S>();
  for (Eigen::Index e = 0; e < ne; ++e) {
    const int orig = edge_order[static_cast<std::size_t>(e)];
    emat.row(e) = g.edge_features.row(orig).template cast<S>();
    src[static_cast<std::size_t>(e)] = canon_of[static_cast<std::size_t>(g.edges[orig].first)];
    dst[static_cast<std::size_t>(e)] = canon_of[static_cast<std::size_t>(g.edges[orig].second)];
  }
  ad::Mat<S> umat = g.globals.transpose().template cast<S>();

  auto v = w.enc_vertex(ad::Tensor<S>::constant(std::move(vmat)));
  auto e = w.enc_edge(ad::Tensor<S>::constant(std::move(emat)));
  auto u = w.enc_global(ad::Tensor<S>::constant(std::move(umat)));

  for (const auto& blk : w.blocks) {
    if (ne > 0) {
      auto src_feats = ad::gather_rows(v, src);
      auto dst_feats = ad::gather_rows(v, dst);
      auto u_e = ad::broadcast_row(u, ne);
      e = blk.edge_mlp(ad::concat_cols<S>({e, src_feats, dst_feats, u_e}));
    }
    auto incoming = ad::scatter_sum_rows(e, dst, n);
    auto u_v = ad::broadcast_row(u, n);
    v = blk.vertex_mlp(ad::concat_cols<S>({incoming, v, u_v}));
    auto pooled_v = ad::mean_rows(v);
    auto pooled_e = ne > 0 ? ad::mean_rows(e)
                           : ad::Tensor<S>::constant(ad::Mat<S>::Zero(1, e.cols()));
    u = blk.global_mlp(ad::concat_cols<S>({pooled_v, pooled_e, u}));
  }
  return ad::gather_rows(w.decoder(v), canon_of);
}

}  // namespace nn
}  // namespace wakeforge
