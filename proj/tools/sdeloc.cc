// tools/sdeloc.cc

// Copyright 2026  The sdeloc Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// sdeloc: command-line driver for the SDE localization workflow.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdeloc/pipeline.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdeloc;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> sets;
  std::optional<int> n_experts;
  std::optional<double> u;
  std::optional<int> z;
  std::optional<double> z_fraction;
  std::optional<std::string> strategy;
  std::optional<std::string> source_manifest;
  std::optional<std::string> target_manifest;
  std::vector<double> u_grid;
  std::vector<double> z_grid;
  std::optional<int> repeats;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON run config (defaults are used when omitted)");
  cmd->add_option("--seed", a.seed, "global seed");
  cmd->add_option("--out", a.out, "output directory (overrides SDELOC_OUT and output_dir)");
  cmd->add_option("--set", a.sets, "override a config key: path.to.key=<json>")->take_all();
  cmd->add_option("--n-experts", a.n_experts, "ensemble size");
  cmd->add_option("--u", a.u, "cosine margin of the distillation hinge");
  cmd->add_option("--z", a.z, "number of target clips to select");
  cmd->add_option("--z-fraction", a.z_fraction, "selection size as a fraction of the pool");
  cmd->add_option("--strategy", a.strategy,
                  "sde | random | negative | multicluster | undersample | oversample");
  cmd->add_option("--source-manifest", a.source_manifest, "labeled source corpus manifest");
  cmd->add_option("--target-manifest", a.target_manifest, "labeled target corpus manifest");
}

// "a.b.c=1" -> {"a": {"b": {"c": 1}}}; values that are not valid JSON are
// taken as strings.
json parse_set(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
  json value;
  try {
    value = json::parse(s.substr(eq + 1));
  } catch (const json::parse_error&) {
    value = s.substr(eq + 1);
  }
  std::string ptr = "/" + s.substr(0, eq);
  for (char& c : ptr)
    if (c == '.') c = '/';
  json patch;
  patch[json::json_pointer(ptr)] = value;
  return patch;
}

RunConfig resolve_config(const CommonArgs& a) {
  json j = a.config.empty() ? RunConfig{}.to_json() : load_run_config(a.config).to_json();
  for (const auto& s : a.sets) j.merge_patch(parse_set(s));
  if (a.seed) j["seed"] = *a.seed;
  if (a.n_experts) j["n_experts"] = *a.n_experts;
  if (a.u) j["u"] = *a.u;
  if (a.z) j["z"] = *a.z;
  if (a.z_fraction) {
    j["z_fraction"] = *a.z_fraction;
    if (!a.z) j["z"] = -1;
  }
  if (a.strategy) j["strategy"] = *a.strategy;
  if (a.source_manifest) j["source_manifest"] = *a.source_manifest;
  if (a.target_manifest) j["target_manifest"] = *a.target_manifest;
  if (!a.u_grid.empty()) j["sweep_u"] = a.u_grid;
  if (!a.z_grid.empty()) j["sweep_z"] = a.z_grid;
  if (a.repeats) j["repeats"] = *a.repeats;
  RunConfig cfg = RunConfig::from_json(j);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-level localization of manipulated audio with sample-diverse experts"};
  app.require_subcommand(1);

  CommonArgs args;
  bool print_config = false;
  struct Sub {
    const char* name;
    const char* help;
    fs::path (*run)(const RunConfig&, const fs::path&);
  };
  const std::vector<Sub> subs = {
      {"synth", "render the synthetic source and target corpora",
       [](const RunConfig& c, const fs::path& o) { return cmd_synth(c, o).source_manifest.parent_path().parent_path(); }},
      {"train-experts", "train (or resume) the expert ensemble", cmd_train_experts},
      {"mine", "score target clips and select z of them", cmd_mine},
      {"pseudo-label", "segment-swap the selected clips into a training manifest", cmd_pseudo_label},
      {"retrain-eval", "retrain the detector and score the target test split", cmd_retrain_eval},
      {"sweep", "grid over u or z with repeats", cmd_sweep},
  };
  std::vector<CLI::App*> cmds;
  for (const auto& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, args);
    cmd->add_flag("--print-config", print_config, "print the resolved config and exit");
    if (std::string(s.name) == "sweep") {
      cmd->add_option("--u-grid", args.u_grid, "u values")->delimiter(',');
      cmd->add_option("--z-grid", args.z_grid, "z fractions")->delimiter(',');
      cmd->add_option("--repeats", args.repeats, "runs per grid cell (seed, seed + 1, ...)");
    }
    cmds.push_back(cmd);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = resolve_config(args);
    if (print_config) {
      std::cout << cfg.to_json().dump(2) << '\n';
      return 0;
    }
    const fs::path out = resolve_output_dir(cfg, args.out);
    fs::create_directories(out);
    OutputLock lock(out);
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (cmds[i]->parsed()) std::cout << subs[i].run(cfg, out).string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "sdeloc: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
