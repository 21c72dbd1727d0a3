// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "fatlens/fatlens.h"

namespace {

int exit_code(fl_status s) {
  switch (s) {
    case FL_OK: return 0;
    case FL_E_MISSING_ARTIFACT: return 2;
    case FL_E_CONFIG: return 3;
    case FL_E_DATA: return 4;
    default: return 1;
  }
}

int report(fl_status s) {
  if (s != FL_OK) std::fprintf(stderr, "fatlens: error: %s\n", fl_last_error());
  return exit_code(s);
}

// Named per-stage flags that map onto configuration keys.
const std::map<std::string, std::vector<std::pair<std::string, std::string>>>& stage_flags() {
  static const std::map<std::string, std::vector<std::pair<std::string, std::string>>> m{
      {"simulate", {{"--notes", "sim.n_notes"}, {"--gap", "sim.gap"}, {"--rho", "sim.rho"}}},
      {"ingest", {{"--input", "input"}, {"--format", "input_format"}}},
      {"segment", {{"--gap-hours", "gap_hours"}}},
      {"extract-features", {{"--perplexity-file", "perplexity.file"}}},
      {"evaluate", {{"--replicates", "bootstrap.replicates"}}},
      {"shrinkage", {{"--corpora", "shrinkage.corpora"}}},
      {"attenuation", {{"--replicates", "attenuation.replicates"}, {"--n", "attenuation.n"}}},
      {"generate-compare", {{"--max-notes", "generate.max_notes"}}},
      {"llm-baseline", {{"--url", "llm.url"}, {"--model", "llm.model"}, {"--pairs", "llm.pairs"}}},
  };
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstructs shifts from note corpora, scores note-based fatigue, and runs the "
               "regression suite and the synthetic laboratory."};
  app.set_version_flag("--version", fl_version());
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, seed;
  std::vector<std::string> sets;
  bool quiet = false;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out-dir", out_dir, "artifact directory");
  app.add_option("--set", sets, "override a configuration key (key=value); repeatable");
  app.add_flag("-q,--quiet", quiet, "print nothing on success");

  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::vector<std::string> stages;
  for (size_t i = 0; i < fl_stage_count(); ++i) stages.emplace_back(fl_stage_name(i));
  std::map<std::string, CLI::App*> stage_cmds;
  std::map<std::string, std::vector<std::string>> stage_sets;
  for (const auto& st : stages) {
    auto* sub = app.add_subcommand(st, "run the " + st + " stage");
    sub->add_option("--set", stage_sets[st], "override a configuration key (key=value)");
    auto it = stage_flags().find(st);
    if (it != stage_flags().end())
      for (const auto& [flag, key] : it->second)
        sub->add_option(flag, flag_values[st][key], "sets " + key);
    stage_cmds[st] = sub;
  }

  auto* replay = app.add_subcommand("replay", "re-run a stage from its manifest and compare digests");
  std::string manifest, scratch;
  replay->add_option("manifest", manifest, "manifests/<stage>.json")->required();
  replay->add_option("--scratch", scratch, "directory for the re-run")->required();

  auto* keys = app.add_subcommand("keys", "list configuration keys with defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (keys->parsed()) {
    for (size_t i = 0; i < fl_config_key_count(); ++i)
      std::printf("%-28s %-34s %s\n", fl_config_key_name(i), fl_config_key_default(i),
                  fl_config_key_help(i));
    return 0;
  }

  if (replay->parsed()) {
    size_t mismatches = 0;
    char* text = nullptr;
    const fl_status s = fl_replay(manifest.c_str(), scratch.c_str(), &mismatches, &text);
    if (s != FL_OK) return report(s);
    if (mismatches == 0) {
      if (!quiet) std::printf("replay identical\n");
    } else {
      std::fprintf(stderr, "replay differs in %zu artifacts:\n%s", mismatches, text);
    }
    fl_string_free(text);
    return mismatches == 0 ? 0 : 1;
  }

  std::string stage;
  for (const auto& [name, sub] : stage_cmds)
    if (sub->parsed()) stage = name;

  fl_config* cfg = nullptr;
  fl_status s = fl_config_new(&cfg);
  if (s != FL_OK) return report(s);
  auto set = [&](const std::string& key, const std::string& value) {
    return fl_config_set(cfg, key.c_str(), value.c_str());
  };
  auto set_pair = [&](const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "fatlens: error: --set expects key=value, got '%s'\n", kv.c_str());
      return FL_E_CONFIG;
    }
    return set(kv.substr(0, eq), kv.substr(eq + 1));
  };

  if (!config_path.empty()) s = fl_config_load_file(cfg, config_path.c_str());
  if (s == FL_OK) s = fl_config_apply_env(cfg);
  for (const auto& kv : sets)
    if (s == FL_OK) s = set_pair(kv);
  if (s == FL_OK && !seed.empty()) s = set("seed", seed);
  if (s == FL_OK && !out_dir.empty()) s = set("out_dir", out_dir);
  for (const auto& [key, value] : flag_values[stage])
    if (s == FL_OK && !value.empty()) s = set(key, value);
  for (const auto& kv : stage_sets[stage])
    if (s == FL_OK) s = set_pair(kv);
  if (s != FL_OK) {
    const int code = s == FL_E_CONFIG || *fl_last_error() == '\0' ? 3 : exit_code(s);
    if (*fl_last_error()) std::fprintf(stderr, "fatlens: error: %s\n", fl_last_error());
    fl_config_free(cfg);
    return code;
  }

  std::string command;
  for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);
  fl_result* res = nullptr;
  s = fl_run_stage(cfg, stage.c_str(), command.c_str(), &res);
  fl_config_free(cfg);
  if (s != FL_OK) return report(s);
  if (!quiet) {
    std::printf("%s\n", fl_result_summary(res));
    for (size_t i = 0; i < fl_result_artifact_count(res); ++i)
      std::printf("  wrote %s\n", fl_result_artifact_path(res, i));
  }
  fl_result_free(res);
  return 0;
}
