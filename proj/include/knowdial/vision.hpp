#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "knowdial/ops.hpp"
#include "knowdial/tensor.hpp"

namespace knowdial {

/// Object graph over detected regions: projected node features, pairwise
/// relation features, and an adjacency mask whose diagonal is always
/// false. Edge slots outside the mask hold the zero vector.
struct VisualGraph {
  std::vector<Tensor> nodes;       // N features [d_h]
  std::vector<Tensor> edges;       // N*N row-major, [d_h] each
  std::vector<std::uint8_t> mask;  // N*N adjacency

  int node_count() const { return static_cast<int>(nodes.size()); }
  const Tensor& edge(int i, int j) const {
    return edges[static_cast<size_t>(i) * nodes.size() +
                 static_cast<size_t>(j)];
  }
  bool adjacent(int i, int j) const {
    return mask[static_cast<size_t>(i) * nodes.size() +
                static_cast<size_t>(j)] != 0;
  }
};

struct VisualGraphParams {
  Tensor node_proj;      // [d_h, d_v]
  Tensor node_bias;      // [d_h]
  Tensor edge_from_pair; // [d_h, 2*d_h], used when no relation features come in
  Tensor edge_proj;      // [d_h, d_r], used when relation features are given

  VisualGraphParams() = default;
  VisualGraphParams(int d_v, int d_r, int d_h, Rng& rng);
};

// Builds the graph from an [N, d_v] feature block. Without explicit
// relation features, edges are learned from the projected endpoint pair;
// with them, each [d_r] relation vector is projected to d_h. The default
// mask is fully connected minus self-loops.
VisualGraph construct_visual_graph(
    Tape& tape, const Tensor& object_features,
    const VisualGraphParams& params,
    const std::vector<Tensor>* relation_features = nullptr,
    const std::vector<std::uint8_t>* mask = nullptr);

struct GcnParams {
  Tensor attn_proj;   // [d_h, 4*d_h] over [question, node_i, node_j, edge]
  Tensor attn_vec;    // [d_h]
  Tensor message_proj;  // [d_h, 2*d_h] over [node_j, edge]
  Tensor update_proj;   // [d_h, 2*d_h] over [node_i, message]

  GcnParams() = default;
  GcnParams(int d_h, Rng& rng);

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;
};

struct PurifiedNodes {
  std::vector<Tensor> nodes;  // same count as input, dim d_h
  // Per node, attention over its masked-in neighbors (empty row for
  // isolated nodes); used by property tests and traces.
  std::vector<std::vector<double>> attention;
  std::vector<std::vector<int>> neighbor_index;
};

// One round of question-conditioned, relation-aware message passing.
// Neighbor logits use [question, node_i, node_j, edge_ij]; messages use
// tanh-transformed [node_j, edge_ij]; isolated nodes fall back to a zero
// message. Passing an undefined question tensor zeroes its contribution.
PurifiedNodes gcn_purify(Tape& tape, const std::vector<Tensor>& nodes,
                         const std::vector<Tensor>& edges,
                         const std::vector<std::uint8_t>& mask,
                         const Tensor& question, const GcnParams& params);

}  // namespace knowdial
