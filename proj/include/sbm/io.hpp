// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbm/common.hpp"
#include "sbm/designs.hpp"
#include "sbm/model.hpp"

namespace sbm {

enum class NetworkFormat { kTernaryMatrixCsv, kEdgeList };
enum class EdgeListDefault { kMissing, kAbsent };

namespace detail {

inline std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline bool is_na_token(std::string tok) {
  std::transform(tok.begin(), tok.end(), tok.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return tok == "na" || tok == "nan";
}

inline std::optional<DyadState> parse_state(const std::string& raw) {
  const std::string tok = trim(raw);
  if (is_na_token(tok)) return DyadState::kMissing;
  if (tok == "0") return DyadState::kAbsent;
  if (tok == "1") return DyadState::kPresent;
  return std::nullopt;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline std::vector<std::string> read_nonempty_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

/// Ternary matrix CSV: an n x n grid over {0,1,NA}; the diagonal is ignored
/// and symmetric entries must agree. Edge list: one "i j s" line per dyad with
/// 1-based node ids; unlisted pairs take the configured default state.
inline ObservedNetwork load_network(std::istream& in, NetworkFormat format,
                                    EdgeListDefault missing_default = EdgeListDefault::kMissing) {
  if (format == NetworkFormat::kTernaryMatrixCsv) {
    const auto lines = detail::read_nonempty_lines(in);
    const int n = static_cast<int>(lines.size());
    if (n < 1) throw InputError("load_network: empty matrix");
    ObservedNetwork net(n);
    for (int i = 0; i < n; ++i) {
      const auto cells = detail::split_csv(lines[i]);
      if (static_cast<int>(cells.size()) != n)
        throw InputError("load_network: ragged row in ternary matrix");
      for (int j = 0; j < n; ++j) {
        if (j <= i) continue;
        const auto state = detail::parse_state(cells[j]);
        if (!state) throw InputError("load_network: bad cell '" + cells[j] + "'");
        net.set_state(i, j, *state);
      }
    }
    // Symmetry check against the lower triangle.
    for (int i = 0; i < n; ++i) {
      const auto cells = detail::split_csv(lines[i]);
      for (int j = 0; j < i; ++j) {
        const auto state = detail::parse_state(cells[j]);
        if (!state) throw InputError("load_network: bad cell '" + cells[j] + "'");
        if (*state != net.state(i, j))
          throw InputError("load_network: conflicting symmetric entries");
      }
    }
    return net;
  }

  const auto lines = detail::read_nonempty_lines(in);
  int n = 0;
  struct Entry { int i, j; DyadState s; };
  std::vector<Entry> entries;
  for (const auto& line : lines) {
    std::stringstream ss(line);
    int i = 0, j = 0;
    std::string stok;
    if (!(ss >> i >> j >> stok)) throw InputError("load_network: bad edge-list line: " + line);
    const auto state = detail::parse_state(stok);
    if (!state) throw InputError("load_network: bad edge state '" + stok + "'");
    if (i < 1 || j < 1 || i == j) throw InputError("load_network: node index out of range");
    entries.push_back({i - 1, j - 1, *state});
    n = std::max(n, std::max(i, j));
  }
  if (n < 1) throw InputError("load_network: empty edge list");
  ObservedNetwork net(n, missing_default == EdgeListDefault::kMissing ? DyadState::kMissing
                                                                      : DyadState::kAbsent);
  for (const auto& e : entries) net.set_state(e.i, e.j, e.s);
  return net;
}

inline ObservedNetwork load_network(const std::string& path, NetworkFormat format,
                                    EdgeListDefault missing_default = EdgeListDefault::kMissing) {
  std::ifstream in(path);
  if (!in) throw InputError("load_network: cannot open " + path);
  return load_network(in, format, missing_default);
}

inline void save_network(const ObservedNetwork& net, std::ostream& out, NetworkFormat format) {
  const int n = net.node_count();
  if (format == NetworkFormat::kTernaryMatrixCsv) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j > 0) out << ',';
        if (i == j) {
          out << 0;
        } else {
          switch (net.state(i, j)) {
            case DyadState::kAbsent: out << 0; break;
            case DyadState::kPresent: out << 1; break;
            case DyadState::kMissing: out << "NA"; break;
          }
        }
      }
      out << '\n';
    }
    return;
  }
  // Every dyad is written explicitly so the round trip is exact regardless of
  // the reader's default state.
  net.for_each_dyad([&](int i, int j, DyadState s) {
    out << (i + 1) << ' ' << (j + 1) << ' ';
    switch (s) {
      case DyadState::kAbsent: out << 0; break;
      case DyadState::kPresent: out << 1; break;
      case DyadState::kMissing: out << "NA"; break;
    }
    out << '\n';
  });
}

inline void save_network(const ObservedNetwork& net, const std::string& path,
                         NetworkFormat format) {
  std::ofstream out(path);
  if (!out) throw InputError("save_network: cannot open " + path);
  save_network(net, out, format);
}

/// Confidence-thresholded adjacency from a symmetric weight matrix:
/// Present if w > 1-gamma, Missing if gamma <= w <= 1-gamma, Absent if
/// w < gamma. Absent weights are encoded as 0 and therefore map to Absent.
inline ObservedNetwork threshold_weighted(const Matrix& weights, double gamma) {
  if (!(gamma > 0.0 && gamma < 0.5))
    throw InputError("threshold_weighted: gamma must lie in (0, 0.5)");
  if (weights.rows() != weights.cols())
    throw InputError("threshold_weighted: weight matrix must be square");
  const int n = static_cast<int>(weights.rows());
  ObservedNetwork net(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(weights(i, j) - weights(j, i)) > 1e-12)
        throw InputError("threshold_weighted: weight matrix must be symmetric");
      const double w = weights(i, j);
      if (w > 1.0 - gamma)
        net.set_state(i, j, DyadState::kPresent);
      else if (w < gamma)
        net.set_state(i, j, DyadState::kAbsent);
      else
        net.set_state(i, j, DyadState::kMissing);
    }
  return net;
}

/// CSV of doubles; empty cells and NA map to weight 0.
inline Matrix load_weight_matrix(std::istream& in) {
  const auto lines = detail::read_nonempty_lines(in);
  const int n = static_cast<int>(lines.size());
  if (n < 1) throw InputError("load_weight_matrix: empty file");
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    const auto cells = detail::split_csv(lines[i]);
    if (static_cast<int>(cells.size()) != n)
      throw InputError("load_weight_matrix: ragged row");
    for (int j = 0; j < n; ++j) {
      const std::string tok = detail::trim(cells[j]);
      if (tok.empty() || detail::is_na_token(tok)) {
        w(i, j) = 0.0;
      } else {
        try {
          w(i, j) = std::stod(tok);
        } catch (const std::exception&) {
          throw InputError("load_weight_matrix: bad cell '" + tok + "'");
        }
      }
    }
  }
  return w;
}

inline Matrix load_weight_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("load_weight_matrix: cannot open " + path);
  return load_weight_matrix(in);
}

/// One 1-based block label per line.
inline BlockAssignment load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("load_labels: cannot open " + path);
  BlockAssignment z;
  std::string line;
  while (std::getline(in, line)) {
    const std::string tok = detail::trim(line);
    if (tok.empty()) continue;
    const int label = std::stoi(tok);
    if (label < 1) throw InputError("load_labels: labels are 1-based");
    z.labels.push_back(label - 1);
    z.q = std::max(z.q, label);
  }
  if (z.labels.empty()) throw InputError("load_labels: empty file");
  return z;
}

inline void save_labels(const BlockAssignment& z, std::ostream& out) {
  for (int label : z.labels) out << (label + 1) << '\n';
}

// ---------------------------------------------------------------------------
// JSON records
// ---------------------------------------------------------------------------

inline nlohmann::json design_to_json(const SamplingDesign& design) {
  nlohmann::json params;
  if (const auto* rd = std::get_if<RandomDyadSampling>(&design)) {
    params["rho"] = rd->rho;
  } else if (const auto* st = std::get_if<StarSampling>(&design)) {
    params["rho"] = st->rho;
  } else if (const auto* sb = std::get_if<SnowballSampling>(&design)) {
    params["rho"] = sb->rho;
    params["waves"] = sb->waves;
  } else if (const auto* ds = std::get_if<DoubleStandardSampling>(&design)) {
    params["rho0"] = ds->rho0;
    params["rho1"] = ds->rho1;
  } else if (const auto* sd = std::get_if<StarDegreeSampling>(&design)) {
    params["a"] = sd->intercept;
    params["b"] = sd->slope;
  } else {
    const auto& cs = std::get<ClassSampling>(design);
    params["rho"] = std::vector<double>(cs.rho.data(), cs.rho.data() + cs.rho.size());
  }
  return nlohmann::json{{"type", design_name(design)}, {"params", params}};
}

inline SamplingDesign design_from_json(const nlohmann::json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    if (type == "random-dyad") return RandomDyadSampling{params.at("rho").get<double>()};
    if (type == "star") return StarSampling{params.at("rho").get<double>()};
    if (type == "snowball")
      return SnowballSampling{params.at("rho").get<double>(), params.value("waves", 1)};
    if (type == "double-standard")
      return DoubleStandardSampling{params.at("rho0").get<double>(),
                                    params.at("rho1").get<double>()};
    if (type == "star-degree")
      return StarDegreeSampling{params.at("a").get<double>(), params.at("b").get<double>()};
    if (type == "class") {
      const auto rho = params.at("rho").get<std::vector<double>>();
      ClassSampling cs;
      cs.rho = Eigen::Map<const Vector>(rho.data(), rho.size());
      return cs;
    }
    throw InputError("design_from_json: unknown design type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("design_from_json: ") + e.what());
  }
}

inline nlohmann::json params_to_json(const SbmParameters& theta) {
  nlohmann::json j;
  j["alpha"] = std::vector<double>(theta.alpha.data(), theta.alpha.data() + theta.alpha.size());
  std::vector<std::vector<double>> pi(theta.pi.rows());
  for (Eigen::Index a = 0; a < theta.pi.rows(); ++a) {
    pi[a].resize(theta.pi.cols());
    for (Eigen::Index b = 0; b < theta.pi.cols(); ++b) pi[a][b] = theta.pi(a, b);
  }
  j["pi"] = pi;
  return j;
}

inline SbmParameters params_from_json(const nlohmann::json& j) {
  try {
    SbmParameters theta;
    const auto alpha = j.at("alpha").get<std::vector<double>>();
    theta.alpha = Eigen::Map<const Vector>(alpha.data(), alpha.size());
    const auto pi = j.at("pi").get<std::vector<std::vector<double>>>();
    theta.pi.resize(pi.size(), pi.size());
    for (std::size_t a = 0; a < pi.size(); ++a) {
      if (pi[a].size() != pi.size()) throw InputError("params_from_json: pi must be square");
      for (std::size_t b = 0; b < pi.size(); ++b) theta.pi(a, b) = pi[a][b];
    }
    theta.validate();
    return theta;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("params_from_json: ") + e.what());
  }
}

inline nlohmann::json fit_to_json(const FitResult& fit) {
  nlohmann::json j;
  j["theta"] = params_to_json(fit.theta);
  j["psi"] = fit.psi;
  j["icl"] = fit.icl;
  j["bound_trace"] = fit.bound_trace;
  std::vector<int> labels = fit.hard_labels();
  for (int& l : labels) ++l;  // 1-based on the wire
  j["labels"] = labels;
  j["flags"] = fit.flags;
  // Summary of the imputed missing dyads, when any were modeled.
  double lo = 1.0, hi = 0.0, sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < fit.nu.rows(); ++i)
    for (Eigen::Index k = i + 1; k < fit.nu.cols(); ++k)
      if (fit.nu(i, k) > 0.0) {
        lo = std::min(lo, fit.nu(i, k));
        hi = std::max(hi, fit.nu(i, k));
        sum += fit.nu(i, k);
        ++count;
      }
  if (count > 0)
    j["nu_summary"] = {{"count", count}, {"mean", sum / count}, {"min", lo}, {"max", hi}};
  return j;
}

}  // namespace sbm
