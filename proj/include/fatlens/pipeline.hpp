#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fatlens/config.hpp"

namespace fatlens::pipeline {

struct ArtifactDigest {
  std::string path;  // relative to the output directory, or absolute for external inputs
  std::string sha256;
};

struct RunManifest {
  std::string stage;
  std::string command;
  std::string version;
  std::string config_json;
  std::vector<std::string> upstream;
  std::vector<ArtifactDigest> inputs;
  std::vector<ArtifactDigest> artifacts;
  double wall_seconds = 0.0;

  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
};

struct StageResult {
  RunManifest manifest;
  std::string summary;  // one or more human-readable lines
};

// In dependency order.
const std::vector<std::string>& stage_names();
bool is_stage(const std::string& name);

// Stages whose artifacts `stage` reads under this configuration.
std::vector<std::string> upstream_of(const std::string& stage, const RunConfig& config);

std::filesystem::path manifest_path(const std::filesystem::path& out_dir, const std::string& stage);

// Verifies upstream manifests and digests, runs the stage, and writes its
// artifacts and manifest atomically. Missing or changed upstream artifacts
// raise Error(missing_artifact) naming the upstream stage.
StageResult run_stage(const std::string& stage, const RunConfig& config,
                      const std::string& command = {});

struct ReplayResult {
  std::string stage;
  std::filesystem::path scratch_dir;
  std::vector<std::string> mismatched;  // artifact paths whose digest differs
  bool identical() const { return mismatched.empty(); }
};

// Re-runs a stage from its manifest alone inside `scratch_dir`, copying the
// recorded upstream artifacts, and compares the new artifact digests.
ReplayResult replay(const std::filesystem::path& manifest, const std::filesystem::path& scratch_dir);

}  // namespace fatlens::pipeline
