#pragma once

// Parsing of timestamped edge events and vertex types, and bucketing of
// events into network snapshots.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdsbm/error.hpp"
#include "sdsbm/graph_model.hpp"

namespace sdsbm {

struct EdgeEvent {
  double timestamp = 0.0;
  VertexIndex src = 0;
  VertexIndex dst = 0;

  friend bool operator==(const EdgeEvent&, const EdgeEvent&) = default;
};

enum class MissingPolicy {
  empty_graph,          // a bucket with no events is an observed empty graph
  missing_observation,  // a bucket with no events is unobserved
};

struct BucketingConfig {
  double origin = 0.0;
  double width = 1.0;
  std::optional<std::size_t> steps;  // cap on T; inferred from the last event otherwise
  MissingPolicy missing_policy = MissingPolicy::empty_graph;

  void validate() const {
    if (!(width > 0.0) || !std::isfinite(width)) throw InvalidArgument("bucket width must be > 0");
    if (!std::isfinite(origin)) throw InvalidArgument("bucket origin must be finite");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Visits the non-blank rows of a CSV stream, skipping `header` when it is
/// the first row. The callback receives the fields and the 1-based line number.
template <typename F>
void for_each_row(std::istream& in, const std::vector<std::string>& header, F&& on_row) {
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (first) {
      first = false;
      if (fields == header) continue;
    }
    on_row(fields, lineno);
  }
}

inline double parse_number(const std::string& text, const std::string& what, std::size_t lineno) {
  if (text.empty()) throw DataError("line " + std::to_string(lineno) + ": empty " + what);
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(lineno) + ": invalid " + what + " '" + text + "'");
  }
  return value;
}

}  // namespace detail

/// Reads a `vertex,type` CSV (header optional).
inline VertexTyping parse_types(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> rows;
  std::set<std::string> seen;
  detail::for_each_row(in, {"vertex", "type"}, [&](const auto& f, std::size_t lineno) {
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw DataError("types line " + std::to_string(lineno) + ": expected 'vertex,type'");
    }
    if (!seen.insert(f[0]).second) {
      throw DataError("types line " + std::to_string(lineno) + ": vertex '" + f[0] +
                      "' listed twice");
    }
    rows.emplace_back(f[0], f[1]);
  });
  return VertexTyping(rows);
}

/// Reads a `timestamp,src,dst` CSV (header optional) against a typing.
inline std::vector<EdgeEvent> parse_events(std::istream& in, const VertexTyping& typing) {
  std::vector<EdgeEvent> events;
  detail::for_each_row(in, {"timestamp", "src", "dst"}, [&](const auto& f, std::size_t lineno) {
    const std::string where = "events line " + std::to_string(lineno);
    if (f.size() != 3) throw DataError(where + ": expected 'timestamp,src,dst'");
    EdgeEvent e;
    try {
      e.timestamp = detail::parse_number(f[0], "timestamp", lineno);
    } catch (const DataError&) {
      throw DataError(where + ": invalid timestamp '" + f[0] + "'");
    }
    const auto src = typing.index_of(f[1]);
    const auto dst = typing.index_of(f[2]);
    if (!src) throw DataError(where + ": vertex " + f[1] + " has no type");
    if (!dst) throw DataError(where + ": vertex " + f[2] + " has no type");
    if (*src == *dst) throw DataError(where + ": self-loop on vertex " + f[1]);
    e.src = *src;
    e.dst = *dst;
    events.push_back(e);
  });
  return events;
}

struct ParsedInputs {
  std::vector<EdgeEvent> events;
  VertexTyping typing;
};

inline ParsedInputs parse_inputs(const std::string& events_path, const std::string& types_path) {
  std::ifstream types_in(types_path);
  if (!types_in) throw DataError("cannot open types file " + types_path);
  std::ifstream events_in(events_path);
  if (!events_in) throw DataError("cannot open events file " + events_path);
  ParsedInputs out;
  out.typing = parse_types(types_in);
  out.events = parse_events(events_in, out.typing);
  return out;
}

/// Bucket index of a timestamp under half-open intervals
/// [origin + t*width, origin + (t+1)*width).
inline std::size_t bucket_of(double timestamp, const BucketingConfig& config) {
  if (timestamp < config.origin) {
    throw DataError("event at " + std::to_string(timestamp) + " precedes the bucket origin");
  }
  return static_cast<std::size_t>(std::floor((timestamp - config.origin) / config.width));
}

/// Collapses events into binary snapshots: an edge exists in bucket t when at
/// least one event touches the pair within the bucket. Events past a step
/// cap are ignored.
inline DynamicNetwork bucketize(const std::vector<EdgeEvent>& events, const VertexTyping& typing,
                                const BucketingConfig& config) {
  config.validate();
  std::size_t steps = 0;
  if (config.steps) {
    steps = *config.steps;
  }
  std::vector<std::size_t> bucket(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    bucket[i] = bucket_of(events[i].timestamp, config);
    if (!config.steps) steps = std::max(steps, bucket[i] + 1);
  }
  std::vector<Snapshot> snapshots(steps);
  std::vector<bool> touched(steps, false);
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (bucket[i] >= steps) continue;
    snapshots[bucket[i]].edges.emplace_back(events[i].src, events[i].dst);
    touched[bucket[i]] = true;
  }
  if (config.missing_policy == MissingPolicy::missing_observation) {
    for (std::size_t t = 0; t < steps; ++t) snapshots[t].observed = touched[t];
  }
  return DynamicNetwork(typing, std::move(snapshots));
}

}  // namespace sdsbm
