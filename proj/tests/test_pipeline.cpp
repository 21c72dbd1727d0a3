#include <cstdlib>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "fatlens/common.hpp"
#include "fatlens/config.hpp"
#include "fatlens/fileio.hpp"
#include "fatlens/mlcore.hpp"
#include "fatlens/pipeline.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace fatlens;
using namespace fatlens::pipeline;
namespace fs = std::filesystem;

namespace {

RunConfig small_config(const fs::path& out) {
  RunConfig c;
  c.set("out_dir", out.string());
  c.set("seed", "17");
  c.set("lexicon_dir", FATLENS_TEST_DATA_DIR "/lexicons");
  c.set("sim.n_notes", "2500");
  c.set("bootstrap.replicates", "60");
  c.set("shrinkage.corpora", "20");
  c.set("attenuation.replicates", "10");
  c.set("attenuation.n", "200");
  c.set("generate.max_notes", "15");
  c.set("yield.min_category_count", "5");
  return c;
}

using Digests = std::map<std::string, std::string>;

Digests digest_tree(const fs::path& dir) {
  Digests d;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().parent_path().filename() != "manifests")
      d[fs::relative(e.path(), dir).string()] = sha256_file(e.path());
  return d;
}

struct Run {
  fs::path dir;
  std::map<std::string, Digests> after_stage;  // tree digests right after each stage
};

Run run_all(const std::string& name) {
  Run r;
  r.dir = testutil::scratch(name);
  const auto cfg = small_config(r.dir);
  for (const auto& st : stage_names()) {
    if (st == "llm-baseline") continue;
    run_stage(st, cfg);
    r.after_stage[st] = digest_tree(r.dir);
  }
  return r;
}

const Run& first_run() {
  static const Run r = run_all("pipeline_a");
  return r;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("config: defaults, typed setters and unknown keys") {
  RunConfig c;
  CHECK(c.get_int("seed") == 42);
  CHECK(c.get_double("train_fraction") == 0.74);
  CHECK(c.get_list("lambda_grid").size() == 7);
  CHECK(kind_of([&] { c.set("no.such.key", "1"); }) == ErrorKind::config);
  CHECK(kind_of([&] { c.set("seed", "abc"); }) == ErrorKind::config);
  CHECK(kind_of([&] { c.set("sim.text", "maybe"); }) == ErrorKind::config);
  c.set("sim.text", "false");
  CHECK_FALSE(c.get_bool("sim.text"));
}

TEST_CASE("config: file parsing reports the line and environment overrides apply") {
  RunConfig c;
  c.load_string("# comment\nseed = 7\n\nlm.order = 4  # trailing\n", "cfg");
  CHECK(c.get_int("seed") == 7);
  CHECK(c.get_int("lm.order") == 4);
  try {
    c.load_string("seed = 1\nbogus line\n", "bad.conf");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("bad.conf:2") != std::string::npos);
  }
  CHECK(RunConfig::env_name("bootstrap.replicates") == "FATLENS_BOOTSTRAP_REPLICATES");
  ::setenv("FATLENS_BOOTSTRAP_REPLICATES", "33", 1);
  c.apply_environment();
  ::unsetenv("FATLENS_BOOTSTRAP_REPLICATES");
  CHECK(c.get_int("bootstrap.replicates") == 33);
}

TEST_CASE("config: JSON snapshot round trips and hides the API key") {
  RunConfig c;
  c.set("llm.api_key", "secret-token");
  c.set("seed", "99");
  const auto j = c.to_json();
  CHECK(j.find("secret-token") == std::string::npos);
  CHECK(RunConfig::from_json(j).get_int("seed") == 99);
}

TEST_CASE("stage graph") {
  RunConfig c;
  CHECK(stage_names().size() == 19);
  CHECK(is_stage("report"));
  CHECK_FALSE(is_stage("reprot"));
  const auto fe = upstream_of("extract-features", c);
  CHECK(std::find(fe.begin(), fe.end(), "train-lm") != fe.end());
  c.set("perplexity.source", "file");
  const auto fe2 = upstream_of("extract-features", c);
  CHECK(std::find(fe2.begin(), fe2.end(), "train-lm") == fe2.end());
  CHECK(upstream_of("simulate", c).empty());
  CHECK(kind_of([&] { run_stage("nope", c); }) == ErrorKind::invalid_argument);
}

TEST_CASE("every stage writes its artifacts and a manifest with digests") {
  const auto& r = first_run();
  for (const auto& st : stage_names()) {
    if (st == "llm-baseline") continue;
    const auto mp = manifest_path(r.dir, st);
    REQUIRE(fs::exists(mp));
    const auto m = RunManifest::from_json(read_file(mp));
    CHECK(m.stage == st);
    CHECK(!m.artifacts.empty());
    for (const auto& a : m.artifacts) CHECK(sha256_file(r.dir / a.path) == a.sha256);
    for (const auto& in : m.inputs) CHECK(in.sha256.size() == 64);
    CHECK(RunConfig::from_json(m.config_json).get_int("seed") == 17);
  }
  const auto report = read_file(r.dir / "report.md");
  CHECK(report.find("AUC-ROC") != std::string::npos);
  CHECK(fs::exists(r.dir / "figure1.svg"));
}

TEST_CASE("models and the language model are fit on the training split only") {
  const auto& r = first_run();
  const auto m = ml::LogitModel::from_json(read_file(r.dir / "model.json"));
  CHECK(m.provenance.at("fit_split") == "train");
  const auto split = nlohmann::json::parse(read_file(r.dir / "split.json"));
  const std::size_t train_rows = split.at("train").size();
  CHECK(std::stoul(m.provenance.at("training_rows")) == train_rows);
  const auto lm = nlohmann::json::parse(read_file(r.dir / "lm_summary.json"));
  CHECK(lm.at("fit_split") == "train");
  CHECK(lm.at("training_notes").get<std::size_t>() == train_rows);
}

TEST_CASE("stages never modify files written by earlier stages") {
  const auto& r = first_run();
  const auto& final_tree = r.after_stage.at("report");
  for (const auto& [stage, tree] : r.after_stage)
    for (const auto& [path, digest] : tree) CHECK_MESSAGE(final_tree.at(path) == digest, path << " after " << stage);
}

TEST_CASE("same seed and configuration give identical artifacts") {
  const auto& a = first_run();
  const auto b = run_all("pipeline_b");
  const auto ta = a.after_stage.at("report"), tb = b.after_stage.at("report");
  CHECK(ta.size() == tb.size());
  for (const auto& [path, digest] : ta) CHECK_MESSAGE(tb.at(path) == digest, path);
}

TEST_CASE("replay reproduces artifacts from the manifest alone") {
  const auto& r = first_run();
  for (const char* st : {"train", "score", "validate"}) {
    const auto rep = replay(manifest_path(r.dir, st), testutil::scratch(std::string("replay_") + st));
    CHECK_MESSAGE(rep.identical(), st);
  }
}

TEST_CASE("missing or altered upstream artifacts name the stage") {
  const auto& r = first_run();
  const auto dir = testutil::scratch("pipeline_missing");
  fs::copy(r.dir, dir, fs::copy_options::recursive);
  auto cfg = small_config(dir);
  fs::remove(dir / "correlations.csv");
  try {
    run_stage("report", cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::missing_artifact);
    CHECK(std::string(e.what()).find("correlations") != std::string::npos);
  }
  write_file_atomic(dir / "scores.csv", "note_id,probability,fatigue,in_training\n");
  try {
    run_stage("validate", cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::missing_artifact);
    CHECK(std::string(e.what()).find("score") != std::string::npos);
  }
  const auto empty = testutil::scratch("pipeline_empty");
  CHECK(kind_of([&] { run_stage("segment", small_config(empty)); }) == ErrorKind::missing_artifact);
}

TEST_CASE("llm-baseline needs an endpoint") {
  const auto& r = first_run();
  const auto dir = testutil::scratch("pipeline_llm");
  fs::copy(r.dir, dir, fs::copy_options::recursive);
  CHECK(kind_of([&] { run_stage("llm-baseline", small_config(dir)); }) == ErrorKind::config);
}

TEST_CASE("ingest of an external file records its absolute digest") {
  const auto dir = testutil::scratch("pipeline_external");
  const auto input = dir / "in.jsonl";
  fs::copy_file(first_run().dir / "corpus.jsonl", input);
  const auto before = sha256_file(input);
  auto cfg = small_config(dir / "out");
  cfg.set("input", input.string());
  const auto res = run_stage("ingest", cfg);
  CHECK(sha256_file(input) == before);
  bool found = false;
  for (const auto& in : res.manifest.inputs)
    found = found || (in.path == fs::absolute(input).string() && in.sha256 == before);
  CHECK(found);
  write_file_atomic(input, "garbage\n");
  CHECK(kind_of([&] { replay(manifest_path(dir / "out", "ingest"), dir / "replay"); }) == ErrorKind::data);
}
