#include <cmath>
#include <map>

#include "doctest.h"
#include "fatlens/common.hpp"
#include "fatlens/generation.hpp"
#include "fatlens/ngram.hpp"
#include "fatlens/rng.hpp"
#include "test_util.hpp"

using namespace fatlens;
using namespace fatlens::lm;

namespace {

using Sentences = std::vector<std::vector<std::string>>;

// Known first-order Markov source over w0..w{V-1}; index V is the end marker.
struct BigramSource {
  std::size_t V;
  std::vector<double> start;
  std::vector<std::vector<double>> next;

  BigramSource(std::size_t v, std::uint64_t seed) : V(v), start(v), next(v, std::vector<double>(v + 1)) {
    Rng rng(seed);
    auto fill = [&](std::vector<double>& p) {
      double s = 0;
      for (auto& x : p) s += (x = std::pow(rng.uniform(), 3.0) + 1e-3);
      for (auto& x : p) x /= s;
    };
    fill(start);
    for (auto& row : next) {
      fill(row);
      // keep sentences reasonably short
      row[v] += 0.08;
      double s = 0;
      for (double x : row) s += x;
      for (auto& x : row) x /= s;
    }
  }

  static std::size_t draw(const std::vector<double>& p, Rng& rng) {
    double u = rng.uniform(), c = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (u < (c += p[i])) return i;
    return p.size() - 1;
  }

  Sentences sample(std::size_t tokens, Rng& rng) const {
    Sentences out;
    std::size_t n = 0;
    while (n < tokens) {
      std::vector<std::string> s;
      std::size_t w = draw(start, rng);
      while (true) {
        s.push_back("w" + std::to_string(w));
        w = draw(next[w], rng);
        if (w == V) break;
      }
      n += s.size() + 1;
      out.push_back(std::move(s));
    }
    return out;
  }

  double cross_entropy(const Sentences& data) const {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& s : data) {
      std::size_t prev = V;
      for (const auto& w : s) {
        const std::size_t id = std::stoul(w.substr(1));
        sum += std::log2(prev == V ? start[id] : next[prev][id]);
        prev = id;
        ++n;
      }
      sum += std::log2(next[prev][V]);
      ++n;
    }
    return -sum / static_cast<double>(n);
  }
};

LmOptions opts(int order, double discount, int min_count, bool markers = true) {
  LmOptions o;
  o.order = order;
  o.discount = discount;
  o.min_count = min_count;
  o.sentence_markers = markers;
  return o;
}

}  // namespace

TEST_CASE("train: unigram MLE on 'a b a b'") {
  const auto lm = NgramLM::train({{"a", "b", "a", "b"}}, opts(1, 0.0, 1, false));
  CHECK(lm.probability({}, "a") == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(lm.probability({}, "b") == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(lm.probability({}, "zzz") == 0.0);
}

TEST_CASE("train: rare words map to <unk>") {
  const auto lm = NgramLM::train({{"a", "a", "rare"}}, opts(1, 0.0, 2, false));
  CHECK(lm.id_of("rare") == NgramLM::kUnk);
  CHECK(lm.probability({}, "rare") == doctest::Approx(1.0 / 3.0));
  CHECK(lm.probability({}, "never_seen") == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("train: empty corpus and bad options are errors") {
  CHECK_THROWS_AS(NgramLM::train({}), Error);
  CHECK_THROWS_AS(NgramLM::train({{}, {}}), Error);
  CHECK_THROWS_AS(NgramLM::train({{"a"}}, opts(0, 0.5, 1)), Error);
  CHECK_THROWS_AS(NgramLM::train({{"a"}}, opts(3, 1.0, 1)), Error);
}

TEST_CASE("conditional distributions sum to one over 100 random contexts") {
  Rng rng(21);
  const BigramSource src(12, 4);
  const auto data = src.sample(5000, rng);
  for (int order : {1, 2, 3, 4}) {
    const auto lm = NgramLM::train(data, opts(order, 0.75, 2));
    const auto ids = lm.predictable_ids();
    for (int c = 0; c < 100; ++c) {
      std::vector<NgramLM::Id> hist;
      const std::size_t len = rng.index(4);
      for (std::size_t k = 0; k < len; ++k) hist.push_back(static_cast<NgramLM::Id>(3 + rng.index(12)));
      if (rng.bernoulli(0.2)) hist.push_back(NgramLM::kUnk);
      double sum = 0;
      for (auto w : ids) sum += lm.probability_ids(hist, w);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("higher order does not hurt on a bigram source (held-out)") {
  Rng rng(33);
  const BigramSource src(20, 9);
  const auto train = src.sample(40000, rng);
  const auto held = src.sample(20000, rng);
  const double p1 = NgramLM::train(train, opts(1, 0.75, 1)).log2_perplexity(held);
  const double p3 = NgramLM::train(train, opts(3, 0.75, 1)).log2_perplexity(held);
  CHECK(p3 <= p1);
}

TEST_CASE("log perplexity: certain model gives 0") {
  const auto lm = NgramLM::train({{"a", "a", "a", "a"}}, opts(1, 0.0, 1, false));
  CHECK(lm.log2_perplexity({{"a", "a"}}) == 0.0);
}

TEST_CASE("log perplexity: uniform model over V words gives log2 V") {
  std::vector<std::string> words;
  for (int i = 0; i < 8; ++i) words.push_back("v" + std::to_string(i));
  const auto lm = NgramLM::train({words}, opts(1, 0.0, 1, false));
  CHECK(lm.log2_perplexity({{"v3", "v0", "v7"}}) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("log perplexity: zero scoreable tokens is an error") {
  const auto lm = NgramLM::train({{"a"}}, opts(1, 0.0, 1, false));
  CHECK_THROWS_AS(lm.log2_perplexity({}), Error);
  CHECK_THROWS_AS(lm.log2_perplexity_text("12 . 7"), Error);
}

TEST_CASE("training perplexity under MLE unigram equals the empirical entropy") {
  Rng rng(5);
  const BigramSource src(25, 2);
  const auto data = src.sample(3000, rng);
  std::map<std::string, double> counts;
  double n = 0;
  for (const auto& s : data) {
    for (const auto& w : s) counts[w] += 1;
    counts["</s>"] += 1;
    n += s.size() + 1;
  }
  double H = 0;
  for (const auto& [w, c] : counts) H -= c / n * std::log2(c / n);
  const auto lm = NgramLM::train(data, opts(1, 0.0, 1));
  CHECK(std::fabs(lm.log2_perplexity(data) - H) < 1e-9);
}

TEST_CASE("estimated log perplexity approaches the source cross-entropy at 1e5 tokens") {
  Rng rng(77);
  const BigramSource src(15, 13);
  const auto train = src.sample(100000, rng);
  const auto held = src.sample(100000, rng);
  const double truth = src.cross_entropy(held);
  const double est = NgramLM::train(train, opts(2, 0.75, 1)).log2_perplexity(held);
  CHECK(std::fabs(est - truth) / truth < 0.02);
}

TEST_CASE("generate: greedy trace on a counted corpus") {
  const Sentences data(20, {"a", "b", "c"});
  const auto lm = NgramLM::train(data, opts(3, 0.5, 1));
  CHECK(lm.generate({"a"}, Decoding::greedy, 10, 0) == std::vector<std::string>{"b", "c"});
  CHECK(lm.generate({"a"}, Decoding::greedy, 1, 0) == std::vector<std::string>{"b"});
}

TEST_CASE("generate: greedy ties resolve to the lexicographically first word") {
  const auto lm = NgramLM::train({{"x", "m"}, {"x", "k"}}, opts(2, 0.0, 1));
  CHECK(lm.generate({"x"}, Decoding::greedy, 1, 0) == std::vector<std::string>{"k"});
}

TEST_CASE("generate: sampled output is reproducible for a seed") {
  Rng rng(3);
  const BigramSource src(10, 1);
  const auto lm = NgramLM::train(src.sample(5000, rng), opts(3, 0.75, 1));
  const auto a = lm.generate({"w1"}, Decoding::sampled, 40, 99);
  CHECK(a == lm.generate({"w1"}, Decoding::sampled, 40, 99));
  bool differs = false;
  for (std::uint64_t s = 100; s < 110 && !differs; ++s)
    differs = lm.generate({"w1"}, Decoding::sampled, 40, s) != a;
  CHECK(differs);
  for (const auto& w : a) CHECK(w != "<unk>");
}

TEST_CASE("generate: greedy continuations are more predictable than sampled ones") {
  Rng rng(8);
  const BigramSource src(30, 6);
  const auto lm = NgramLM::train(src.sample(30000, rng), opts(3, 0.75, 2));
  double g = 0, s = 0;
  int ng = 0, ns = 0;
  for (int i = 0; i < 100; ++i) {
    const std::vector<std::string> prompt{"w" + std::to_string(rng.index(30))};
    const auto gen_g = lm.generate(prompt, Decoding::greedy, 30, 0);
    const auto gen_s = lm.generate(prompt, Decoding::sampled, 30, 1000 + i);
    if (!gen_g.empty()) g += lm.log2_perplexity({gen_g}), ++ng;
    if (!gen_s.empty()) s += lm.log2_perplexity({gen_s}), ++ns;
  }
  REQUIRE(ng > 0);
  REQUIRE(ns > 0);
  CHECK(g / ng <= s / ns);
}

TEST_CASE("model JSON round trip preserves probabilities") {
  Rng rng(4);
  const BigramSource src(10, 3);
  const auto data = src.sample(3000, rng);
  const auto lm = NgramLM::train(data, opts(3, 0.6, 2));
  const auto back = NgramLM::from_json(lm.to_json());
  CHECK(back.log2_perplexity(data) == lm.log2_perplexity(data));
  CHECK(back.generate({"w2"}, Decoding::sampled, 20, 5) == lm.generate({"w2"}, Decoding::sampled, 20, 5));
  CHECK_THROWS_AS(NgramLM::from_json("{not json"), Error);
}

TEST_CASE("generated-vs-original: notes without the section are skipped and empty generations flagged") {
  // The heading is always followed by the end of the sentence, so greedy emits nothing.
  Sentences data(30, {"history", "of", "present", "illness"});
  data.push_back({"pain", "since", "morning"});
  data.push_back({"pain", "since", "morning"});
  const auto lm = NgramLM::train(data, opts(3, 0.1, 1));

  auto n1 = testutil::note("n1", "d1", "2012-03-05T08:00:00Z");
  n1.sections = {{"History of Present Illness", "Pain since morning."}};
  auto n2 = testutil::note("n2", "d1", "2012-03-05T09:00:00Z");
  n2.sections = {{"Assessment", "Stable."}};
  const std::vector<corpus::NoteRecord> notes{n1, n2};
  const std::vector<corpus::Encounter> enc{testutil::encounter(n1, {}), testutil::encounter(n2, {})};

  const auto cmp = compare_generated_vs_original(
      lm, notes, enc, [](const std::string&, const std::string&, const std::vector<std::string>&) { return 0.5; },
      nullptr);
  CHECK(cmp.skipped_no_section == 1);
  bool greedy_flagged = false;
  for (const auto& r : cmp.rows)
    if (r.mode == "greedy") greedy_flagged = r.flagged;
  CHECK(greedy_flagged);
  CHECK(cmp.aggregate("greedy").n == 0);
  CHECK(cmp.aggregate("original").n == 1);
  CHECK(cmp.aggregate("original").mean_fatigue == 0.5);
  CHECK(cmp.summary_table().find("flagged empty generations: ") != std::string::npos);
}
