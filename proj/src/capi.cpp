#include "fatlens/fatlens.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "fatlens/common.hpp"
#include "fatlens/config.hpp"
#include "fatlens/fileio.hpp"
#include "fatlens/mlcore.hpp"
#include "fatlens/pipeline.hpp"
#include "fatlens/textfeat.hpp"

struct fl_config {
  fatlens::RunConfig config;
};

struct fl_result {
  fatlens::pipeline::StageResult result;
  std::string manifest_json;
};

namespace {

thread_local std::string last_error;

fl_status status_of(fatlens::ErrorKind k) {
  using fatlens::ErrorKind;
  switch (k) {
    case ErrorKind::invalid_argument: return FL_E_INVALID_ARGUMENT;
    case ErrorKind::missing_artifact: return FL_E_MISSING_ARTIFACT;
    case ErrorKind::config: return FL_E_CONFIG;
    case ErrorKind::data: return FL_E_DATA;
    case ErrorKind::io: return FL_E_IO;
    case ErrorKind::network: return FL_E_NETWORK;
  }
  return FL_E_INTERNAL;
}

template <typename F>
fl_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return FL_OK;
  } catch (const fatlens::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return FL_E_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return FL_E_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return FL_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fatlens::fail(fatlens::ErrorKind::invalid_argument, std::string(what) + " is null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* fl_version(void) { return fatlens::kVersion; }
const char* fl_last_error(void) { return last_error.c_str(); }
void fl_string_free(char* s) { std::free(s); }

fl_status fl_config_new(fl_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new fl_config();
  });
}

void fl_config_free(fl_config* config) { delete config; }

fl_status fl_config_set(fl_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->config.set(key, value);
  });
}

fl_status fl_config_get(const fl_config* config, const char* key, const char** value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    *value = config->config.get(key).c_str();
  });
}

fl_status fl_config_load_file(fl_config* config, const char* path) {
  return guard([&] {
    require(config, "config");
    require(path, "path");
    config->config.load_file(path);
  });
}

fl_status fl_config_load_string(fl_config* config, const char* text) {
  return guard([&] {
    require(config, "config");
    require(text, "text");
    config->config.load_string(text);
  });
}

fl_status fl_config_apply_env(fl_config* config) {
  return guard([&] {
    require(config, "config");
    config->config.apply_environment();
  });
}

fl_status fl_config_to_json(const fl_config* config, char** json) {
  return guard([&] {
    require(config, "config");
    require(json, "json");
    *json = dup(config->config.to_json());
  });
}

size_t fl_config_key_count(void) { return fatlens::RunConfig::keys().size(); }

const char* fl_config_key_name(size_t i) {
  const auto& k = fatlens::RunConfig::keys();
  return i < k.size() ? k[i].name.c_str() : nullptr;
}

const char* fl_config_key_default(size_t i) {
  const auto& k = fatlens::RunConfig::keys();
  return i < k.size() ? k[i].default_value.c_str() : nullptr;
}

const char* fl_config_key_help(size_t i) {
  const auto& k = fatlens::RunConfig::keys();
  return i < k.size() ? k[i].help.c_str() : nullptr;
}

size_t fl_stage_count(void) { return fatlens::pipeline::stage_names().size(); }

const char* fl_stage_name(size_t i) {
  const auto& s = fatlens::pipeline::stage_names();
  return i < s.size() ? s[i].c_str() : nullptr;
}

fl_status fl_run_stage(const fl_config* config, const char* stage, const char* command,
                       fl_result** out) {
  if (out) *out = nullptr;
  return guard([&] {
    require(config, "config");
    require(stage, "stage");
    auto r = std::make_unique<fl_result>();
    r->result = fatlens::pipeline::run_stage(stage, config->config, command ? command : "");
    r->manifest_json = r->result.manifest.to_json();
    if (out) *out = r.release();
  });
}

void fl_result_free(fl_result* result) { delete result; }

const char* fl_result_summary(const fl_result* r) { return r ? r->result.summary.c_str() : ""; }

const char* fl_result_manifest_json(const fl_result* r) { return r ? r->manifest_json.c_str() : ""; }

size_t fl_result_artifact_count(const fl_result* r) {
  return r ? r->result.manifest.artifacts.size() : 0;
}

const char* fl_result_artifact_path(const fl_result* r, size_t i) {
  if (!r || i >= r->result.manifest.artifacts.size()) return nullptr;
  return r->result.manifest.artifacts[i].path.c_str();
}

const char* fl_result_artifact_sha256(const fl_result* r, size_t i) {
  if (!r || i >= r->result.manifest.artifacts.size()) return nullptr;
  return r->result.manifest.artifacts[i].sha256.c_str();
}

fl_status fl_replay(const char* manifest, const char* scratch_dir, size_t* mismatches, char** report) {
  if (report) *report = nullptr;
  return guard([&] {
    require(manifest, "manifest");
    require(scratch_dir, "scratch_dir");
    require(mismatches, "mismatches");
    const auto r = fatlens::pipeline::replay(manifest, scratch_dir);
    *mismatches = r.mismatched.size();
    if (report) {
      std::string text;
      for (const auto& m : r.mismatched) text += m + "\n";
      *report = dup(text);
    }
  });
}

fl_status fl_auc_roc(const double* scores, const int* labels, size_t n, double* out) {
  return guard([&] {
    require(out, "out");
    if (n > 0) {
      require(scores, "scores");
      require(labels, "labels");
    }
    *out = fatlens::ml::auc_roc(std::vector<double>(scores, scores + n),
                                std::vector<int>(labels, labels + n));
  });
}

fl_status fl_fk_grade(const char* text, double* out) {
  return guard([&] {
    require(text, "text");
    require(out, "out");
    const auto t = fatlens::textfeat::tokenize(text);
    *out = fatlens::textfeat::fk_grade(t.tokens, t.sentence_count).grade;
  });
}

fl_status fl_sha256_file(const char* path, char** hex) {
  return guard([&] {
    require(path, "path");
    require(hex, "hex");
    *hex = dup(fatlens::sha256_file(path));
  });
}

}  // extern "C"
