#pragma once

// Typed dynamic networks and their reduction to per-block edge-count series.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdsbm/error.hpp"

namespace sdsbm {

using VertexIndex = std::uint32_t;

/// Number of distinct undirected vertex pairs spanning two vertex classes.
/// Same-type blocks exclude self-loops: |a|(|a|-1)/2; mixed blocks: |a||b|.
inline std::int64_t possible_edges(std::int64_t size_a, std::int64_t size_b, bool same_type) {
  if (size_a < 1 || size_b < 1) {
    throw InvalidArgument("possible_edges: class sizes must be positive");
  }
  if (same_type) {
    if (size_a != size_b) {
      throw InvalidArgument("possible_edges: same-type block needs equal sizes");
    }
    return size_a * (size_a - 1) / 2;
  }
  return size_a * size_b;
}

/// Canonical (a, b) type pair with a <= b in byte-lexicographic label order.
struct BlockKey {
  std::string a;
  std::string b;

  BlockKey() = default;
  BlockKey(std::string x, std::string y) : a(std::move(x)), b(std::move(y)) {
    if (b < a) std::swap(a, b);
  }

  bool same_type() const { return a == b; }
  std::string name() const { return a + "-" + b; }

  friend bool operator==(const BlockKey&, const BlockKey&) = default;
  friend auto operator<=>(const BlockKey&, const BlockKey&) = default;
};

/// Assignment of every vertex to exactly one type label. Vertices and labels
/// are kept in sorted order so indices are stable for a given input set.
class VertexTyping {
 public:
  VertexTyping() = default;

  explicit VertexTyping(const std::vector<std::pair<std::string, std::string>>& vertex_types) {
    std::map<std::string, std::string> by_vertex;
    for (const auto& [vertex, type] : vertex_types) {
      if (type.empty()) throw InvalidArgument("vertex '" + vertex + "' has an empty type label");
      auto [it, inserted] = by_vertex.emplace(vertex, type);
      if (!inserted && it->second != type) {
        throw InvalidArgument("vertex '" + vertex + "' has more than one type");
      }
    }
    std::map<std::string, std::int64_t> sizes;
    for (const auto& [vertex, type] : by_vertex) {
      vertices_.push_back(vertex);
      sizes[type] += 1;
    }
    for (const auto& [label, size] : sizes) {
      labels_.push_back(label);
      sizes_.push_back(size);
    }
    for (const auto& [vertex, type] : by_vertex) {
      type_of_.push_back(static_cast<std::size_t>(
          std::lower_bound(labels_.begin(), labels_.end(), type) - labels_.begin()));
    }
  }

  /// Builds a typing and checks that each declared label has at least one vertex.
  VertexTyping(const std::vector<std::pair<std::string, std::string>>& vertex_types,
               const std::vector<std::string>& declared_labels)
      : VertexTyping(vertex_types) {
    for (const auto& label : declared_labels) {
      if (!std::binary_search(labels_.begin(), labels_.end(), label)) {
        throw InvalidArgument("declared type '" + label + "' has no vertices");
      }
    }
    if (declared_labels.size() < labels_.size()) {
      for (const auto& label : labels_) {
        if (std::find(declared_labels.begin(), declared_labels.end(), label) ==
            declared_labels.end()) {
          throw InvalidArgument("type '" + label + "' was not declared");
        }
      }
    }
  }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t type_count() const { return labels_.size(); }
  const std::vector<std::string>& vertices() const { return vertices_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::int64_t class_size(std::size_t type) const { return sizes_.at(type); }

  std::optional<VertexIndex> index_of(const std::string& vertex) const {
    auto it = std::lower_bound(vertices_.begin(), vertices_.end(), vertex);
    if (it == vertices_.end() || *it != vertex) return std::nullopt;
    return static_cast<VertexIndex>(it - vertices_.begin());
  }

  std::size_t type_index(VertexIndex v) const { return type_of_.at(v); }
  const std::string& type_label(VertexIndex v) const { return labels_[type_of_.at(v)]; }

  std::optional<std::size_t> label_index(const std::string& label) const {
    auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
    if (it == labels_.end() || *it != label) return std::nullopt;
    return static_cast<std::size_t>(it - labels_.begin());
  }

  /// Vertices of one type, in vertex order.
  std::vector<VertexIndex> members(std::size_t type) const {
    std::vector<VertexIndex> out;
    for (VertexIndex v = 0; v < type_of_.size(); ++v) {
      if (type_of_[v] == type) out.push_back(v);
    }
    return out;
  }

  /// All canonical blocks (a <= b), in label order.
  std::vector<BlockKey> blocks() const {
    std::vector<BlockKey> out;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      for (std::size_t j = i; j < labels_.size(); ++j) out.emplace_back(labels_[i], labels_[j]);
    }
    return out;
  }

  std::int64_t possible_edges(const BlockKey& block) const {
    auto ia = label_index(block.a);
    auto ib = label_index(block.b);
    if (!ia || !ib) throw InvalidArgument("unknown block " + block.name());
    return sdsbm::possible_edges(sizes_[*ia], sizes_[*ib], block.same_type());
  }

  friend bool operator==(const VertexTyping&, const VertexTyping&) = default;

 private:
  std::vector<std::string> vertices_;
  std::vector<std::size_t> type_of_;
  std::vector<std::string> labels_;
  std::vector<std::int64_t> sizes_;
};

/// Undirected edge stored with u < v.
struct Edge {
  VertexIndex u;
  VertexIndex v;

  Edge(VertexIndex x, VertexIndex y) : u(std::min(x, y)), v(std::max(x, y)) {}

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// One time step. An unobserved snapshot carries no edges and is skipped by
/// the filter's update step.
struct Snapshot {
  std::vector<Edge> edges;
  bool observed = true;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

/// Sequence of simple undirected graphs over one typed vertex set.
class DynamicNetwork {
 public:
  DynamicNetwork() = default;

  DynamicNetwork(VertexTyping typing, std::vector<Snapshot> snapshots)
      : typing_(std::move(typing)), snapshots_(std::move(snapshots)) {
    for (std::size_t t = 0; t < snapshots_.size(); ++t) {
      auto& edges = snapshots_[t].edges;
      std::sort(edges.begin(), edges.end());
      edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
      for (const auto& e : edges) {
        if (e.u == e.v) {
          throw InvalidArgument("snapshot " + std::to_string(t + 1) + " contains a self-loop");
        }
        if (e.v >= typing_.vertex_count()) {
          throw InvalidArgument("snapshot " + std::to_string(t + 1) +
                                " references an unknown vertex");
        }
      }
      if (!snapshots_[t].observed && !edges.empty()) {
        throw InvalidArgument("unobserved snapshot " + std::to_string(t + 1) + " has edges");
      }
    }
  }

  const VertexTyping& typing() const { return typing_; }
  const std::vector<Snapshot>& snapshots() const { return snapshots_; }
  std::size_t steps() const { return snapshots_.size(); }

  friend bool operator==(const DynamicNetwork&, const DynamicNetwork&) = default;

 private:
  VertexTyping typing_;
  std::vector<Snapshot> snapshots_;
};

/// Formed-edge counts of one block over time; nullopt marks a missing step.
struct BlockSeries {
  BlockKey block;
  std::int64_t n = 0;
  std::vector<std::optional<std::int64_t>> counts;

  std::size_t steps() const { return counts.size(); }

  static BlockSeries from_counts(BlockKey block, std::int64_t n,
                                 const std::vector<std::int64_t>& values) {
    BlockSeries s{std::move(block), n, {}};
    s.counts.assign(values.begin(), values.end());
    return s;
  }

  friend bool operator==(const BlockSeries&, const BlockSeries&) = default;
};

/// Counts each snapshot's edges per canonical block. Every block of the typing
/// is returned, including blocks with no possible edges.
inline std::vector<BlockSeries> extract_block_series(const DynamicNetwork& network) {
  const auto& typing = network.typing();
  const std::size_t k = typing.type_count();
  auto slot = [k](std::size_t i, std::size_t j) {
    if (j < i) std::swap(i, j);
    return i * k + j;
  };

  std::vector<BlockSeries> out;
  std::vector<std::size_t> position(k * k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      position[slot(i, j)] = out.size();
      BlockSeries s;
      s.block = BlockKey(typing.labels()[i], typing.labels()[j]);
      s.n = sdsbm::possible_edges(typing.class_size(i), typing.class_size(j), i == j);
      s.counts.reserve(network.steps());
      out.push_back(std::move(s));
    }
  }

  std::vector<std::int64_t> tally(out.size());
  for (const auto& snap : network.snapshots()) {
    if (!snap.observed) {
      for (auto& s : out) s.counts.emplace_back(std::nullopt);
      continue;
    }
    std::fill(tally.begin(), tally.end(), 0);
    for (const auto& e : snap.edges) {
      tally[position[slot(typing.type_index(e.u), typing.type_index(e.v))]] += 1;
    }
    for (std::size_t b = 0; b < out.size(); ++b) out[b].counts.emplace_back(tally[b]);
  }
  return out;
}

}  // namespace sdsbm
