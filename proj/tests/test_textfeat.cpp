#include <cmath>
#include <set>

#include "doctest.h"
#include "fatlens/common.hpp"
#include "fatlens/rng.hpp"
#include "fatlens/textfeat.hpp"

using namespace fatlens;
using namespace fatlens::textfeat;

namespace {

const LexiconSet& bundled() {
  static const LexiconSet s = LexiconSet::load_directory(FATLENS_TEST_DATA_DIR "/lexicons");
  return s;
}

class FixedPerplexity final : public PerplexityProvider {
 public:
  double log2_perplexity(const std::string&, std::string_view) const override { return 3.25; }
};

std::size_t index_of(const std::string& name) {
  const auto& n = feature_names();
  for (std::size_t i = 0; i < n.size(); ++i)
    if (name == n[i]) return i;
  FAIL("no feature " << name);
  return 0;
}

}  // namespace

TEST_CASE("tokenize: simple sentence") {
  const auto t = tokenize("The cat sat.");
  CHECK(t.tokens == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(t.sentence_count == 1);
}

TEST_CASE("tokenize: abbreviation does not end a sentence") {
  TokenizerOptions opt;
  opt.abbreviations = {"dr"};
  CHECK(tokenize("Pt c/o pain. Dr. Smith notified.", opt).sentence_count == 2);
  opt.abbreviations.clear();
  CHECK(tokenize("Pt c/o pain. Dr. Smith notified.", opt).sentence_count == 3);
}

TEST_CASE("tokenize: empty text has no tokens and one sentence") {
  const auto t = tokenize("");
  CHECK(t.tokens.empty());
  CHECK(t.sentence_count == 1);
}

TEST_CASE("tokenize: apostrophes stay inside words and numbers are set aside") {
  const auto t = tokenize("Don't give 20 mg.");
  CHECK(t.tokens == std::vector<std::string>{"don't", "give", "mg"});
  CHECK(t.number_count == 1);
}

TEST_CASE("lexicon fraction: exact entries, wildcards, and empty input") {
  const Lexicon insight("insight", {"believe", "think*"});
  CHECK(lexicon_fraction({"i", "believe", "him"}, insight) == doctest::Approx(1.0 / 3.0));
  CHECK(lexicon_fraction({}, insight) == 0.0);
  const Lexicon certain("certainty", {"certain*"});
  CHECK(lexicon_fraction({"certainly"}, certain) == 1.0);
  CHECK(insight.matches("thinking"));
  CHECK_FALSE(insight.matches("believer"));
}

TEST_CASE("lexicon: file header and wildcard placement are validated") {
  CHECK_THROWS_AS(Lexicon("x", {"ab*c"}), Error);
  CHECK(bundled().get("insight").name() == "insight");
  CHECK_THROWS_AS(bundled().get("no_such_category"), Error);
  CHECK_NOTHROW(bundled().require_all());
}

TEST_CASE("syllables: hand-counted words") {
  CHECK(count_syllables("cat") == 1);
  CHECK(count_syllables("believe") == 2);
  CHECK(count_syllables("a") == 1);
  CHECK(count_syllables("hmm") == 1);
}

TEST_CASE("fk grade: 'The cat sat.' is -2.62") {
  const auto t = tokenize("The cat sat.");
  CHECK(fk_grade(t.tokens, t.sentence_count).grade == doctest::Approx(0.39 * 3 + 11.8 * 1 - 15.59).epsilon(1e-12));
  CHECK(fk_grade(t.tokens, t.sentence_count).grade == doctest::Approx(-2.62));
  CHECK(fk_grade({}, 1).degenerate);
}

TEST_CASE("fk grade: doubling each sentence with monosyllables adds 0.39 W/S") {
  const auto a = fk_grade(6, 2, 6);
  const auto b = fk_grade(12, 2, 12);
  CHECK(b.grade - a.grade == doctest::Approx(0.39 * 6.0 / 2.0));
}

TEST_CASE("fk grade: appending a monosyllable matches the closed form") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const std::size_t w = 1 + rng.index(40), syl = w + rng.index(30);
    const double before = fk_grade(w, 1, syl).grade;
    const double after = fk_grade(w + 1, 1, syl + 1).grade;
    const double oracle = 0.39 + 11.8 * ((syl + 1.0) / (w + 1.0) - static_cast<double>(syl) / w);
    CHECK(after - before == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("features: fixed names, length, ranges, determinism") {
  FixedPerplexity ppl;
  FeatureContext ctx;
  ctx.lexicons = &bundled();
  ctx.perplexity = &ppl;
  ctx.complaint_vocabulary = {"chest pain", "fall"};
  const std::string text = "I believe the patient is angry. She denies chest pain! We will observe.";
  const auto a = extract_features("n1", text, {"fall"}, ctx);
  const auto b = extract_features("n2", text, {"fall"}, ctx);
  REQUIRE(a.values.size() == kNoteFeatureCount + 2);
  CHECK(a.values == b.values);
  CHECK(std::string(feature_names()[0]) == "note_length");
  CHECK(std::string(feature_names()[26]) == "fk_grade");
  CHECK(a.values[index_of("note_length")] == 13);
  CHECK(a.values[index_of("log_perplexity")] == 3.25);
  CHECK(a.values[kNoteFeatureCount] == 0.0);
  CHECK(a.values[kNoteFeatureCount + 1] == 1.0);
  for (std::size_t j = 2; j < 26; ++j) {
    CHECK(a.values[j] >= 0.0);
    CHECK(a.values[j] <= 1.0);
  }
  CHECK(a.values[index_of("frac_insight")] > 0.0);
  CHECK(full_feature_names(ctx.complaint_vocabulary).back() == "cc_fall");
}

TEST_CASE("features: a note without lexicon hits has zero fractions") {
  FixedPerplexity ppl;
  FeatureContext ctx;
  ctx.lexicons = &bundled();
  ctx.perplexity = &ppl;
  const auto v = extract_features("n", "Zzqx blorf.", {}, ctx);
  for (std::size_t j = 2; j < 26; ++j) CHECK(v.values[j] == 0.0);
  CHECK(v.values[index_of("log_perplexity")] == 3.25);
  CHECK(std::isfinite(v.values[index_of("fk_grade")]));
}

TEST_CASE("features: pronoun sub-categories never exceed the pronoun fraction (fuzz)") {
  FixedPerplexity ppl;
  FeatureContext ctx;
  ctx.lexicons = &bundled();
  ctx.perplexity = &ppl;
  std::vector<std::string> words;
  for (const char* c : {"pronoun", "fps", "fpp", "sp", "tps", "tpp", "impersonal", "anger", "insight"})
    for (const auto& e : bundled().get(c).entries())
      if (e.back() != '*') words.push_back(e);
  words.insert(words.end(), {"the", "patient", "xyz", "pain", "12", "don't", "."});
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const std::size_t n = rng.index(60);
    for (std::size_t i = 0; i < n; ++i) text += words[rng.index(words.size())] + (rng.bernoulli(0.1) ? ". " : " ");
    if (tokenize(text).tokens.empty()) {
      CHECK_THROWS_AS(extract_features("f", text, {}, ctx), Error);
      continue;
    }
    const auto v = extract_features("f", text, {}, ctx).values;
    double sub = 0.0;
    for (const char* f : {"frac_fps", "frac_fpp", "frac_sp", "frac_tps", "frac_tpp", "frac_impersonal"})
      sub += v[index_of(f)];
    CHECK(sub <= v[index_of("frac_pronoun")] + 1e-12);
    for (std::size_t j = 2; j < 26; ++j) {
      CHECK(v[j] >= 0.0);
      CHECK(v[j] <= 1.0);
    }
    CHECK(v[index_of("note_length")] >= 1.0);
  }
}

TEST_CASE("standardizer: hand z-scores with sample SD") {
  const auto s = Standardizer::fit({{1.0}, {3.0}}, 1);
  CHECK(s.apply({1.0})[0] == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(s.apply({3.0})[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("standardizer: constant feature maps to zero and dummies pass through") {
  const auto s = Standardizer::fit({{5.0, 1.0}, {5.0, 0.0}, {5.0, 1.0}}, 1);
  for (double x : {5.0, 7.0}) CHECK(s.apply({x, 1.0})[0] == 0.0);
  CHECK(s.apply({5.0, 1.0})[1] == 1.0);
}

TEST_CASE("standardizer: held-out rows use the training statistics") {
  const auto s = Standardizer::fit({{0.0}, {2.0}, {4.0}}, 1);
  CHECK(s.apply({100.0})[0] == doctest::Approx((100.0 - 2.0) / 2.0));
}

TEST_CASE("standardizer: unit variance on its fit set and exact round trip") {
  Rng rng(12);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 200; ++i) rows.push_back({rng.normal(3, 2), rng.uniform(-5, 9), rng.bernoulli(0.3) ? 1.0 : 0.0});
  const auto s = Standardizer::fit(rows, 2);
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0, v = 0;
    for (const auto& r : rows) m += s.apply(r)[j];
    m /= rows.size();
    for (const auto& r : rows) v += std::pow(s.apply(r)[j] - m, 2);
    v /= rows.size() - 1;
    CHECK(std::fabs(m) < 1e-9);
    CHECK(std::fabs(v - 1.0) < 1e-9);
  }
  for (const auto& r : rows) {
    const auto back = s.invert(s.apply(r));
    for (std::size_t j = 0; j < r.size(); ++j) CHECK(std::fabs(back[j] - r[j]) < 1e-10);
  }
}

TEST_CASE("features CSV round trip and external perplexity file") {
  std::vector<FeatureVector> v{{"a", {1.5, 0.25}}, {"b", {-2.0, 1e-17}}};
  std::vector<std::string> names;
  const auto back = features_from_csv(features_to_csv(v, {"x", "y"}), &names);
  CHECK(names == std::vector<std::string>{"x", "y"});
  REQUIRE(back.size() == 2);
  CHECK(back[1].values == v[1].values);
  const ExternalPerplexity ext({{"a", 1.5}});
  CHECK(ext.log2_perplexity("a", "") == 1.5);
  CHECK_THROWS_AS(ext.log2_perplexity("missing", ""), Error);
}
