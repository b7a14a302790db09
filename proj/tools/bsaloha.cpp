// Command-line front end: analytic | simulate | sweep | figure <id>.
// Exit codes: 0 ok, 1 I/O or internal error, 2 config error,
// 3 solver error in a single-point (non-sweep) run.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "bsaloha/bsaloha.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw bsaloha::ConfigError(0, "cannot read config '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch-service slotted ALOHA: analytic model and simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::string figure_id;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "key = value experiment file");
    if (config_required) opt->required();
    sub->add_option("--out", out_path, "CSV output path (default: stdout, or 'out' key)");
    sub->add_option("--seed", seed, "override the config seed");
  };

  auto* analytic = app.add_subcommand("analytic", "closed-form values at each grid point");
  add_common(analytic, true);
  auto* simulate = app.add_subcommand("simulate", "simulate each grid point");
  add_common(simulate, true);
  auto* sweep = app.add_subcommand("sweep", "analytic and simulated series over a grid");
  add_common(sweep, true);
  auto* figure = app.add_subcommand("figure", "reproduce a figure's data series");
  figure->add_option("id", figure_id, "fig3 | fig9 | fig11 | fig12 | fig13")->required();
  add_common(figure, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  bsaloha::ExperimentSpec spec;
  bool single_point = false;
  try {
    if (*figure) {
      auto id = bsaloha::parse_figure_id(figure_id);
      if (!id) throw bsaloha::ConfigError(0, "unknown figure id '" + figure_id + "'");
      std::string text = "kind = figure\nfigure = " + figure_id + "\n";
      if (!config_path.empty()) {
        // Preset first; config keys then override it.
        std::string user = slurp(config_path);
        for (const char* k : {"kind", "figure"}) {
          std::istringstream lines(user);
          std::string line;
          while (std::getline(lines, line)) {
            auto t = line.substr(0, line.find('#'));
            auto eq = t.find('=');
            if (eq != std::string::npos) {
              std::string key = t.substr(0, eq);
              key.erase(0, key.find_first_not_of(" \t"));
              key.erase(key.find_last_not_of(" \t") + 1);
              if (key == k) throw bsaloha::ConfigError(0, std::string("'") + k +
                                                              "' is set by the figure verb");
            }
          }
        }
        text += user;
      }
      spec = bsaloha::parse_config(text);
    } else {
      spec = bsaloha::parse_config(slurp(config_path));
      if (*analytic) {
        spec.kind = bsaloha::ExperimentKind::analytic_point;
        spec.simulate = false;
        single_point = true;
      } else if (*simulate) {
        spec.kind = bsaloha::ExperimentKind::sim_point;
        spec.simulate = true;
        single_point = true;
      } else {
        spec.kind = bsaloha::ExperimentKind::sweep;
      }
    }
    if (seed) spec.seed = *seed;
    if (!out_path.empty()) spec.out = out_path;
  } catch (const bsaloha::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    const auto result = bsaloha::run_experiment(spec);
    if (spec.out.empty()) {
      std::cout << bsaloha::render_csv(result.rows);
    } else {
      bsaloha::emit_csv(result.rows, spec.out);
    }
    for (const auto& msg : result.solver_errors) std::cerr << "solver: " << msg << '\n';
    if (single_point && !result.solver_errors.empty()) return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
