#pragma once

// Versioned, checksummed JSON persistence of fitted per-block parameters.
//
// Layout:
//   {
//     "version": 1,
//     "d": 7,
//     "config": {...},
//     "blocks": [{"a", "b", "n", "q_m", "q_s", "r", "mu0", "sigma0",
//                 "steps", "terminal_mean", "terminal_cov"}, ...],
//     "checksum": "fnv1a64:<16 hex digits>"
//   }
//
// Doubles are written with 17 significant digits so they reload bit-exactly.
// The checksum covers every byte before the checksum member.

#include <Eigen/Dense>
#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdsbm/error.hpp"
#include "sdsbm/graph_model.hpp"
#include "sdsbm/kalman.hpp"
#include "sdsbm/random.hpp"
#include "sdsbm/ssm.hpp"

namespace sdsbm {

inline constexpr int kModelFormatVersion = 1;

class ModelFileError : public DataError {
 public:
  enum class Kind { version, checksum, schema, io };

  ModelFileError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct FittedBlock {
  BlockKey block;
  std::int64_t n = 0;
  ModelParams params;
  std::size_t steps = 0;                   // length of the series the fit saw
  std::optional<GaussianBelief> terminal;  // filtered belief at t = steps

  friend bool operator==(const FittedBlock& x, const FittedBlock& y) {
    if (!(x.block == y.block && x.n == y.n && x.params == y.params && x.steps == y.steps)) {
      return false;
    }
    if (x.terminal.has_value() != y.terminal.has_value()) return false;
    if (!x.terminal) return true;
    return x.terminal->mean.size() == y.terminal->mean.size() &&
           x.terminal->mean == y.terminal->mean && x.terminal->cov.rows() == y.terminal->cov.rows() &&
           x.terminal->cov == y.terminal->cov;
  }
};

struct ModelFile {
  int period = 0;
  std::vector<FittedBlock> blocks;
  nlohmann::json config = nlohmann::json::object();

  const FittedBlock* find(const BlockKey& key) const {
    for (const auto& b : blocks) {
      if (b.block == key) return &b;
    }
    return nullptr;
  }

  friend bool operator==(const ModelFile& x, const ModelFile& y) {
    return x.period == y.period && x.blocks == y.blocks && x.config == y.config;
  }
};

namespace detail {

inline void put_double(std::string& out, double v) {
  if (v == 0.0) v = 0.0;  // "-0" would reload as integer 0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline void put_vector(std::string& out, const Eigen::VectorXd& v) {
  out += '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    put_double(out, v[i]);
  }
  out += ']';
}

inline void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
  out += '[';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ", ";
    put_vector(out, m.row(i).transpose());
  }
  out += ']';
}

inline std::string checksum_of(const std::string& body) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016" PRIx64, fnv1a(body));
  return buf;
}

inline std::string model_body(const ModelFile& model) {
  std::string out = "{\n  \"version\": " + std::to_string(kModelFormatVersion) +
                    ",\n  \"d\": " + std::to_string(model.period) +
                    ",\n  \"config\": " + model.config.dump() + ",\n  \"blocks\": [";
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const auto& b = model.blocks[i];
    out += i ? ",\n    {" : "\n    {";
    out += "\"a\": " + nlohmann::json(b.block.a).dump();
    out += ", \"b\": " + nlohmann::json(b.block.b).dump();
    out += ", \"n\": " + std::to_string(b.n);
    out += ", \"q_m\": ";
    put_double(out, b.params.q_m);
    out += ", \"q_s\": ";
    put_double(out, b.params.q_s);
    out += ", \"r\": ";
    put_double(out, b.params.r);
    out += ", \"mu0\": ";
    put_vector(out, b.params.mu0);
    out += ", \"sigma0\": ";
    put_matrix(out, b.params.sigma0);
    out += ", \"steps\": " + std::to_string(b.steps);
    if (b.terminal) {
      out += ", \"terminal_mean\": ";
      put_vector(out, b.terminal->mean);
      out += ", \"terminal_cov\": ";
      put_matrix(out, b.terminal->cov);
    }
    out += '}';
  }
  out += model.blocks.empty() ? "]" : "\n  ]";
  return out;
}

inline Eigen::VectorXd read_vector(const nlohmann::json& j, Eigen::Index size, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw ModelFileError(ModelFileError::Kind::schema,
                         std::string("model file: '") + what + "' has the wrong shape");
  }
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

inline Eigen::MatrixXd read_matrix(const nlohmann::json& j, Eigen::Index size, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw ModelFileError(ModelFileError::Kind::schema,
                         std::string("model file: '") + what + "' has the wrong shape");
  }
  Eigen::MatrixXd m(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    m.row(i) = read_vector(j[static_cast<std::size_t>(i)], size, what).transpose();
  }
  return m;
}

}  // namespace detail

inline std::string serialize_model(const ModelFile& model) {
  const std::string body = detail::model_body(model);
  return body + ",\n  \"checksum\": \"" + detail::checksum_of(body) + "\"\n}\n";
}

inline ModelFile parse_model(const std::string& text) {
  using Kind = ModelFileError::Kind;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw ModelFileError(Kind::checksum, "model file is truncated or corrupt");
  }
  if (!doc.is_object() || !doc.contains("version")) {
    throw ModelFileError(Kind::schema, "model file has no format version");
  }
  if (!doc["version"].is_number_integer() || doc["version"].get<int>() != kModelFormatVersion) {
    throw ModelFileError(Kind::version, "unsupported model format version " + doc["version"].dump() +
                                            " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  ModelFile model;
  try {
    model.period = doc.at("d").get<int>();
    if (model.period < 2) throw ModelFileError(Kind::schema, "model file: d must be >= 2");
    if (doc.contains("config")) model.config = doc["config"];
    for (const auto& jb : doc.at("blocks")) {
      FittedBlock b;
      b.block = BlockKey(jb.at("a").get<std::string>(), jb.at("b").get<std::string>());
      b.n = jb.at("n").get<std::int64_t>();
      b.params.period = model.period;
      b.params.q_m = jb.at("q_m").get<double>();
      b.params.q_s = jb.at("q_s").get<double>();
      b.params.r = jb.at("r").get<double>();
      b.params.mu0 = detail::read_vector(jb.at("mu0"), model.period, "mu0");
      b.params.sigma0 = detail::read_matrix(jb.at("sigma0"), model.period, "sigma0");
      b.steps = jb.value("steps", std::size_t{0});
      if (jb.contains("terminal_mean")) {
        b.terminal = GaussianBelief{
            detail::read_vector(jb.at("terminal_mean"), model.period, "terminal_mean"),
            detail::read_matrix(jb.at("terminal_cov"), model.period, "terminal_cov")};
      }
      model.blocks.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(Kind::schema, std::string("model file: ") + e.what());
  }
  const std::string expected = detail::checksum_of(detail::model_body(model));
  if (!doc.contains("checksum") || !doc["checksum"].is_string() ||
      doc["checksum"].get<std::string>() != expected) {
    throw ModelFileError(Kind::checksum, "model file checksum mismatch");
  }
  for (const auto& b : model.blocks) {
    try {
      b.params.validate();
    } catch (const InvalidArgument& e) {
      throw ModelFileError(Kind::schema, "model file block " + b.block.name() + ": " + e.what());
    }
  }
  return model;
}

inline void save_model(const ModelFile& model, const std::string& path) {
  for (const auto& b : model.blocks) b.params.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelFileError(ModelFileError::Kind::io, "cannot write model file " + path);
  out << serialize_model(model);
  if (!out) throw ModelFileError(ModelFileError::Kind::io, "failed writing model file " + path);
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFileError(ModelFileError::Kind::io, "cannot open model file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace sdsbm
