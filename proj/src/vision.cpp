#include "knowdial/vision.hpp"

#include <cmath>

namespace knowdial {

VisualGraphParams::VisualGraphParams(int d_v, int d_r, int d_h, Rng& rng) {
  auto init = [&](int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
  };
  node_proj = init(d_h, d_v);
  node_bias = Tensor({d_h}, 0.0, true);
  edge_from_pair = init(d_h, 2 * d_h);
  edge_proj = init(d_h, d_r);
}

VisualGraph construct_visual_graph(Tape& tape, const Tensor& object_features,
                                   const VisualGraphParams& params,
                                   const std::vector<Tensor>* relation_features,
                                   const std::vector<std::uint8_t>* mask) {
  if (object_features.rank() != 2) {
    throw ShapeError("visual graph: object features of shape " +
                     shape_str(object_features.shape()) + " are not rank 2");
  }
  const int n = object_features.dim(0);
  const size_t n2 = static_cast<size_t>(n) * static_cast<size_t>(n);
  if (relation_features && relation_features->size() != n2) {
    throw ShapeError("visual graph: " +
                     std::to_string(relation_features->size()) +
                     " relation features for " + std::to_string(n) +
                     " objects");
  }
  if (mask && mask->size() != n2) {
    throw ShapeError("visual graph: mask size " + std::to_string(mask->size()) +
                     " does not cover " + std::to_string(n) + " objects");
  }

  VisualGraph g;
  g.nodes.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor feat = ops::row(tape, object_features, i);
    g.nodes.push_back(
        ops::add(tape, ops::matmul(tape, params.node_proj, feat),
                 params.node_bias));
  }

  g.mask.assign(n2, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const size_t idx = static_cast<size_t>(i) * n + j;
      g.mask[idx] = mask ? (*mask)[idx] : 1;
    }
  }

  const int d_h = params.node_proj.dim(0);
  const Tensor zero_edge({d_h}, 0.0, false);
  g.edges.assign(n2, zero_edge);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i) * n + j;
      if (!g.mask[idx]) continue;
      if (relation_features) {
        g.edges[idx] =
            ops::matmul(tape, params.edge_proj, (*relation_features)[idx]);
      } else {
        g.edges[idx] = ops::tanh(
            tape, ops::matmul(tape, params.edge_from_pair,
                              ops::concat(tape, {g.nodes[static_cast<size_t>(i)],
                                                 g.nodes[static_cast<size_t>(j)]})));
      }
    }
  }
  return g;
}

GcnParams::GcnParams(int d_h, Rng& rng) {
  auto init = [&](int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
  };
  attn_proj = init(d_h, 4 * d_h);
  attn_vec = Tensor::uniform({d_h}, -1.0 / std::sqrt(d_h), 1.0 / std::sqrt(d_h),
                             rng, true);
  message_proj = init(d_h, 2 * d_h);
  update_proj = init(d_h, 2 * d_h);
}

std::vector<Tensor> GcnParams::parameters() const {
  return {attn_proj, attn_vec, message_proj, update_proj};
}

std::vector<std::string> GcnParams::parameter_names(
    const std::string& prefix) const {
  return {prefix + ".attn_proj", prefix + ".attn_vec",
          prefix + ".message_proj", prefix + ".update_proj"};
}

PurifiedNodes gcn_purify(Tape& tape, const std::vector<Tensor>& nodes,
                         const std::vector<Tensor>& edges,
                         const std::vector<std::uint8_t>& mask,
                         const Tensor& question, const GcnParams& params) {
  const int n = static_cast<int>(nodes.size());
  if (n == 0) {
    throw ShapeError("gcn_purify: no nodes");
  }
  const int d_h = nodes[0].dim(0);
  if (edges.size() != static_cast<size_t>(n) * n ||
      mask.size() != static_cast<size_t>(n) * n) {
    throw ShapeError("gcn_purify: edge/mask buffers do not cover " +
                     std::to_string(n) + " nodes");
  }
  Tensor q = question.defined() ? question : Tensor({d_h}, 0.0, false);
  if (q.shape() != Shape{d_h}) {
    throw ShapeError("gcn_purify: question of shape " + shape_str(q.shape()) +
                     " does not match node dim " + std::to_string(d_h));
  }

  PurifiedNodes out;
  out.nodes.reserve(static_cast<size_t>(n));
  out.attention.resize(static_cast<size_t>(n));
  out.neighbor_index.resize(static_cast<size_t>(n));

  for (int i = 0; i < n; ++i) {
    std::vector<int> neighbors;
    for (int j = 0; j < n; ++j) {
      if (mask[static_cast<size_t>(i) * n + j]) neighbors.push_back(j);
    }
    out.neighbor_index[static_cast<size_t>(i)] = neighbors;

    Tensor message;
    if (neighbors.empty()) {
      message = Tensor({d_h}, 0.0, false);
    } else {
      std::vector<Tensor> logits;
      std::vector<Tensor> transformed;
      logits.reserve(neighbors.size());
      transformed.reserve(neighbors.size());
      for (int j : neighbors) {
        const Tensor& e = edges[static_cast<size_t>(i) * n + j];
        Tensor cat = ops::concat(
            tape, {q, nodes[static_cast<size_t>(i)],
                   nodes[static_cast<size_t>(j)], e});
        logits.push_back(ops::matmul(
            tape, params.attn_vec,
            ops::tanh(tape, ops::matmul(tape, params.attn_proj, cat))));
        transformed.push_back(ops::tanh(
            tape, ops::matmul(tape, params.message_proj,
                              ops::concat(tape, {nodes[static_cast<size_t>(j)], e}))));
      }
      Tensor alpha = ops::softmax(tape, ops::concat(tape, logits), 0);
      out.attention[static_cast<size_t>(i)] = alpha.values();
      message = ops::matmul(tape, alpha, ops::stack_rows(tape, transformed));
    }

    out.nodes.push_back(ops::tanh(
        tape, ops::matmul(tape, params.update_proj,
                          ops::concat(tape, {nodes[static_cast<size_t>(i)],
                                             message}))));
  }
  return out;
}

}  // namespace knowdial
