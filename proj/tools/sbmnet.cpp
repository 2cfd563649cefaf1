// Apache License, Version 2.0, refer to LICENSE.txt
//
// sbmnet: estimate stochastic block models from partially observed networks.
// Subcommands: simulate, sample, fit, select, oracle, experiment.
// Exit codes: 0 success, 2 input error, 3 numerical degeneracy.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbm/designs.hpp"
#include "sbm/experiment.hpp"
#include "sbm/init.hpp"
#include "sbm/io.hpp"
#include "sbm/metrics.hpp"
#include "sbm/model.hpp"
#include "sbm/moments.hpp"
#include "sbm/vem_mar.hpp"
#include "sbm/vem_nmar.hpp"

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sbm::InputError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw sbm::InputError(std::string("bad JSON in ") + path + ": " + e.what());
  }
}

json parse_json_text(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw sbm::InputError(std::string("bad JSON for ") + what + ": " + e.what());
  }
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw sbm::InputError("bad numeric list entry '" + tok + "'");
    }
  }
  return out;
}

/// "3", "1,2,5" or "1-6".
std::vector<int> parse_q_list(const std::string& text) {
  std::vector<int> out;
  const auto dash = text.find('-');
  if (dash != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dash));
    const int hi = std::stoi(text.substr(dash + 1));
    if (lo < 1 || hi < lo) throw sbm::InputError("bad q range '" + text + "'");
    for (int q = lo; q <= hi; ++q) out.push_back(q);
    return out;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) throw sbm::InputError("empty q list");
  return out;
}

sbm::SamplingDesign design_from_cli(const std::string& design_arg, const std::string& psi_arg) {
  if (!design_arg.empty() && design_arg.front() == '{')
    return sbm::design_from_json(parse_json_text(design_arg, "--design"));
  const std::vector<double> psi = psi_arg.empty() ? std::vector<double>{} : parse_double_list(psi_arg);
  auto need = [&](std::size_t k) {
    if (psi.size() != k)
      throw sbm::InputError("--psi must carry " + std::to_string(k) + " value(s) for " + design_arg);
  };
  if (design_arg == "random-dyad") { need(1); return sbm::RandomDyadSampling{psi[0]}; }
  if (design_arg == "star") { need(1); return sbm::StarSampling{psi[0]}; }
  if (design_arg == "snowball") {
    need(2);
    return sbm::SnowballSampling{psi[0], static_cast<int>(psi[1])};
  }
  if (design_arg == "double-standard") { need(2); return sbm::DoubleStandardSampling{psi[0], psi[1]}; }
  if (design_arg == "star-degree") { need(2); return sbm::StarDegreeSampling{psi[0], psi[1]}; }
  if (design_arg == "class") {
    if (psi.empty()) throw sbm::InputError("--psi must carry the per-block probabilities");
    sbm::ClassSampling cs;
    cs.rho = Eigen::Map<const sbm::Vector>(psi.data(), psi.size());
    return cs;
  }
  throw sbm::InputError("unknown design '" + design_arg + "'");
}

sbm::ObservedNetwork load_network_arg(const std::string& path, const std::string& format,
                                      double gamma) {
  if (gamma > 0.0) return sbm::threshold_weighted(sbm::load_weight_matrix(path), gamma);
  if (format == "ternary-matrix-csv") return sbm::load_network(path, sbm::NetworkFormat::kTernaryMatrixCsv);
  if (format == "edge-list") return sbm::load_network(path, sbm::NetworkFormat::kEdgeList);
  if (format == "edge-list-zeros")
    return sbm::load_network(path, sbm::NetworkFormat::kEdgeList, sbm::EdgeListDefault::kAbsent);
  throw sbm::InputError("unknown format '" + format + "'");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw sbm::InputError("cannot open output file " + path);
  out << text;
}

sbm::SbmParameters model_from_config(const json& cfg) {
  if (cfg.contains("params")) return sbm::params_from_json(cfg.at("params"));
  if (cfg.contains("alpha")) return sbm::params_from_json(cfg);
  return sbm::topology_parameters(sbm::topology_from_name(cfg.at("topology").get<std::string>()),
                                  cfg.at("epsilon").get<double>());
}

int run(int argc, char** argv) {
  CLI::App app{"Stochastic block models from partially observed networks"};
  app.require_subcommand(1);

  std::string network_path, format = "ternary-matrix-csv", out_path, config_path;
  std::string design_arg, psi_arg, method_arg = "mar", q_arg = "1";
  std::string labels_path, labels_out;
  double gamma = 0.0;
  int restarts = 10, n_nodes = 100;
  std::uint64_t seed = 0;

  auto add_network_flags = [&](CLI::App* cmd) {
    cmd->add_option("--network", network_path, "input network file")->required();
    cmd->add_option("--format", format, "ternary-matrix-csv | edge-list | edge-list-zeros");
    cmd->add_option("--gamma", gamma,
                    "confidence threshold: read the input as a weight matrix and map "
                    "w>1-gamma to 1, w<gamma to 0, the band to NA");
  };

  auto* simulate = app.add_subcommand("simulate", "draw a complete network from an SBM");
  simulate->add_option("--config", config_path, "JSON with {alpha,pi} or {topology,epsilon}")
      ->required();
  simulate->add_option("--n", n_nodes, "number of nodes");
  simulate->add_option("--seed", seed, "random seed");
  simulate->add_option("--out", out_path, "output network (ternary matrix CSV)")->required();
  simulate->add_option("--labels-out", labels_out, "optional output for the drawn labels");

  auto* sample = app.add_subcommand("sample", "apply a sampling design to a complete network");
  add_network_flags(sample);
  sample->add_option("--design", design_arg, "design name or inline JSON {type,params}")
      ->required();
  sample->add_option("--psi", psi_arg, "design parameters (comma list) when --design is a name");
  sample->add_option("--labels", labels_path, "true labels (required for class sampling)");
  sample->add_option("--seed", seed, "random seed");
  sample->add_option("--out", out_path, "output network")->required();

  auto* fit = app.add_subcommand("fit", "fit one model");
  add_network_flags(fit);
  fit->add_option("--q", q_arg, "block count")->required();
  fit->add_option("--method", method_arg, "mar | double-standard | class | star-degree");
  fit->add_option("--restarts", restarts, "number of restarts");
  fit->add_option("--seed", seed, "random seed");
  fit->add_option("--out", out_path, "output JSON record ('-' for stdout)");

  auto* select = app.add_subcommand("select", "scan q and sampling designs by ICL");
  add_network_flags(select);
  select->add_option("--q", q_arg, "q grid: '3', '1,2,3' or '1-6'")->required();
  select->add_option("--method", method_arg, "comma list of methods");
  select->add_option("--restarts", restarts, "restarts per cell");
  select->add_option("--seed", seed, "random seed");
  select->add_option("--out", out_path, "output CSV table ('-' for stdout)");

  auto* oracle = app.add_subcommand("oracle", "moment-based parameter recovery check");
  oracle->add_option("--config", config_path,
                     "JSON with the model ({alpha,pi} or {topology,epsilon}) and a design")
      ->required();
  oracle->add_option("--out", out_path, "output JSON ('-' for stdout)");

  auto* experiment = app.add_subcommand("experiment", "replicated simulation sweep");
  experiment->add_option("--config", config_path, "experiment configuration JSON")->required();
  experiment->add_option("--seed", seed, "override the config seed");
  experiment->add_option("--out", out_path, "output CSV ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (simulate->parsed()) {
    const sbm::SbmParameters params = model_from_config(read_json_file(config_path));
    sbm::Rng rng = sbm::make_rng(seed);
    auto [net, z] = sbm::sample_sbm_network(params, n_nodes, rng);
    std::ostringstream os;
    sbm::save_network(net, os, sbm::NetworkFormat::kTernaryMatrixCsv);
    write_text(out_path, os.str());
    if (!labels_out.empty()) {
      std::ofstream lo(labels_out);
      if (!lo) throw sbm::InputError("cannot open " + labels_out);
      sbm::save_labels(z, lo);
    }
    return 0;
  }

  if (sample->parsed()) {
    const sbm::ObservedNetwork full = load_network_arg(network_path, format, gamma);
    const sbm::SamplingDesign design = design_from_cli(design_arg, psi_arg);
    sbm::BlockAssignment z;
    if (!labels_path.empty()) {
      z = sbm::load_labels(labels_path);
    } else {
      if (std::holds_alternative<sbm::ClassSampling>(design))
        throw sbm::InputError("class sampling requires --labels");
      z = sbm::BlockAssignment(std::vector<int>(full.node_count(), 0), 1);
    }
    sbm::Rng rng = sbm::make_rng(seed);
    const sbm::ObservedNetwork net = sbm::apply_design(full, z, design, rng);
    std::ostringstream os;
    sbm::save_network(net, os, sbm::NetworkFormat::kTernaryMatrixCsv);
    write_text(out_path, os.str());
    return 0;
  }

  if (fit->parsed()) {
    const sbm::ObservedNetwork net = load_network_arg(network_path, format, gamma);
    const auto qs = parse_q_list(q_arg);
    if (qs.size() != 1) throw sbm::InputError("fit expects a single --q");
    sbm::FitOptions opts;
    opts.restarts = restarts;
    opts.seed = seed;
    const sbm::FitResult result =
        sbm::fit_command(net, qs[0], sbm::method_from_name(method_arg), opts);
    json record = sbm::fit_to_json(result);
    record["q"] = qs[0];
    record["method"] = method_arg;
    record["seed"] = seed;
    write_text(out_path, record.dump(2) + "\n");
    return 0;
  }

  if (select->parsed()) {
    const sbm::ObservedNetwork net = load_network_arg(network_path, format, gamma);
    std::vector<sbm::FitMethod> methods;
    std::stringstream ss(method_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) methods.push_back(sbm::method_from_name(tok));
    sbm::FitOptions opts;
    opts.restarts = restarts;
    opts.seed = seed;
    const sbm::SelectionTable table = sbm::select_command(net, parse_q_list(q_arg), methods, opts);
    std::ostringstream os;
    os << "q,method,icl,bound\n";
    for (const auto& row : table.rows)
      os << row.q << ',' << sbm::method_name(row.method) << ','
         << sbm::detail::format_double(row.icl) << ',' << sbm::detail::format_double(row.bound)
         << '\n';
    write_text(out_path, os.str());
    std::cerr << "selected q=" << table.best_q
              << " method=" << sbm::method_name(table.best_method) << "\n";
    return 0;
  }

  if (oracle->parsed()) {
    const json cfg = read_json_file(config_path);
    const sbm::SbmParameters params = model_from_config(cfg);
    const sbm::SamplingDesign design = sbm::design_from_json(cfg.at("design"));
    const sbm::MomentSequence moments = sbm::exact_moments(params, design);
    json record;
    record["design"] = sbm::design_to_json(design);
    double err = 0.0;
    if (moments.kind == sbm::MomentKind::kClass) {
      const auto [theta, rho] = sbm::recover_class(moments, params.block_count());
      record["recovered"] = sbm::params_to_json(theta);
      record["recovered"]["rho"] = std::vector<double>(rho.data(), rho.data() + rho.size());
      err = sbm::frobenius_rel_error(theta.pi, params.pi);
    } else {
      const sbm::SbmParameters theta =
          sbm::recover_mar(moments, moments.rho, params.block_count());
      record["recovered"] = sbm::params_to_json(theta);
      err = sbm::frobenius_rel_error(theta.pi, params.pi);
    }
    record["pi_rel_error"] = err;
    write_text(out_path, record.dump(2) + "\n");
    return 0;
  }

  if (experiment->parsed()) {
    json cfg_json = read_json_file(config_path);
    if (seed != 0) cfg_json["seed"] = seed;
    const sbm::ExperimentConfig cfg = sbm::experiment_config_from_json(cfg_json);
    std::ostringstream os;
    sbm::run_experiment(cfg, os);
    write_text(out_path, os.str());
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sbm::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const sbm::NumericalError& e) {
    std::cerr << "numerical degeneracy: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
