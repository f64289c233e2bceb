// softctl: command-line front end for the tabular max-ent control library.
//
//   softctl <task> --config FILE
//   softctl <task> --mdp FILE --out FILE [--seed N] [task flags]
//
// Flags given alongside --config override the values in the file.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "softctl/runner.hpp"

namespace {

using softctl::ConfigError;
using softctl::json;
using softctl::ParamKind;

std::string flag_name(const char* param) {
  std::string out = "--";
  for (const char* p = param; *p; ++p) out += *p == '_' ? '-' : *p;
  return out;
}

json convert(const softctl::ParamSpec& spec, const std::string& text) {
  const std::string where = std::string("flag ") + flag_name(spec.name);
  try {
    std::size_t used = 0;
    switch (spec.kind) {
      case ParamKind::positive_number:
      case ParamKind::discount:
      case ParamKind::nonneg_number: {
        const double x = std::stod(text, &used);
        if (used != text.size()) break;
        return x;
      }
      case ParamKind::positive_int:
      case ParamKind::nonneg_int: {
        if (!text.empty() && text[0] == '-') break;
        const unsigned long long x = std::stoull(text, &used);
        if (used != text.size()) break;
        return static_cast<std::uint64_t>(x);
      }
      case ParamKind::boolean:
      case ParamKind::path:
      case ParamKind::action_prior:
        return text;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(where + ": cannot parse '" + text + "'");
}

struct TaskFlags {
  std::string config;
  std::string mdp;
  std::string out;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular maximum-entropy control and inference"};
  app.require_subcommand(1);
  app.set_version_flag("--version", softctl::kVersion);

  std::map<std::string, TaskFlags> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& task : softctl::task_specs()) {
    auto& f = flags[task.name];
    CLI::App* sub = app.add_subcommand(task.name, task.help);
    subs[task.name] = sub;
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--mdp", f.mdp, "MDP JSON file");
    sub->add_option("--out", f.out, "output file");
    sub->add_option("--seed", f.seed, "RNG seed");
    for (const auto& p : task.params) {
      if (p.kind == ParamKind::boolean)
        sub->add_flag(flag_name(p.name), f.switches[p.name], p.help);
      else
        sub->add_option(flag_name(p.name), f.values[p.name], p.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : softctl::exit_code::usage;
  }

  for (const auto& task : softctl::task_specs()) {
    CLI::App* sub = subs[task.name];
    if (!sub->parsed()) continue;
    const TaskFlags& f = flags[task.name];
    softctl::ExperimentConfig cfg;
    try {
      json doc = json::object();
      if (!f.config.empty()) doc = softctl::read_json_file(f.config);
      if (!doc.is_object()) throw ConfigError("config must be a JSON object");
      if (sub->count("--mdp")) doc["mdp"] = f.mdp;
      if (sub->count("--out")) doc["out"] = f.out;
      if (sub->count("--seed")) doc["seed"] = f.seed;
      for (const auto& p : task.params) {
        if (!sub->count(flag_name(p.name))) continue;
        if (!doc.contains("params")) doc["params"] = json::object();
        doc["params"][p.name] = p.kind == ParamKind::boolean ? json(f.switches.at(p.name))
                                                             : convert(p, f.values.at(p.name));
      }
      cfg = softctl::parse_config(doc, task.name);
    } catch (const softctl::IoError& e) {
      std::cerr << "softctl: I/O error: " << e.what() << "\n";
      return softctl::exit_code::io;
    } catch (const std::exception& e) {
      std::cerr << "softctl: " << e.what() << "\n";
      return softctl::exit_code::usage;
    }
    return softctl::run(cfg);
  }
  return softctl::exit_code::usage;
}
