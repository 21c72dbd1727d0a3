#include "fatlens/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "json.hpp"

#include "fatlens/common.hpp"

namespace fatlens::lm {

namespace {

constexpr int kFormatVersion = 1;
const char* const kUnkWord = "<unk>";
const char* const kEndWord = "</s>";
const char* const kBeginWord = "<s>";

void validate(const LmOptions& o) {
  if (o.order < 1 || o.order > kMaxOrder)
    fail(ErrorKind::invalid_argument, "n-gram order must be in [1, " + std::to_string(kMaxOrder) + "]");
  if (!(o.discount >= 0.0 && o.discount < 1.0))
    fail(ErrorKind::invalid_argument, "discount must be in [0, 1)");
  if (o.min_count < 1) fail(ErrorKind::invalid_argument, "min_count must be >= 1");
}

}  // namespace

std::size_t NgramLM::vocabulary_size() const {
  return words_.size() - 1 - (options_.sentence_markers ? 0 : 1);
}

NgramLM::Id NgramLM::id_of(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& NgramLM::word_of(Id id) const {
  if (id >= words_.size()) fail(ErrorKind::invalid_argument, "token id out of range");
  return words_[id];
}

std::vector<NgramLM::Id> NgramLM::predictable_ids() const {
  std::vector<Id> out;
  out.reserve(words_.size());
  for (Id i = 0; i < words_.size(); ++i) {
    if (i == kBegin) continue;
    if (i == kEnd && !options_.sentence_markers) continue;
    out.push_back(i);
  }
  return out;
}

NgramLM NgramLM::train(const std::vector<std::vector<std::string>>& sentences,
                       const LmOptions& options) {
  validate(options);
  NgramLM lm;
  lm.options_ = options;

  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& s : sentences)
    for (const auto& w : s) ++freq[w];
  if (freq.empty()) fail(ErrorKind::data, "empty training corpus");
  std::vector<std::string> kept;
  for (const auto& [w, c] : freq)
    if (c >= static_cast<std::uint64_t>(options.min_count)) kept.push_back(w);
  std::sort(kept.begin(), kept.end());

  lm.words_ = {kUnkWord, kEndWord, kBeginWord};
  for (auto& w : kept) lm.words_.push_back(std::move(w));
  for (Id i = 0; i < lm.words_.size(); ++i) lm.ids_.emplace(lm.words_[i], i);

  const std::size_t n = static_cast<std::size_t>(options.order);
  std::vector<std::unordered_map<Gram, std::uint32_t, GramHash>> grams(n);
  std::vector<Id> stream;
  for (const auto& s : sentences) {
    stream.assign(n - 1, kBegin);
    for (const auto& w : s) stream.push_back(lm.id_of(w));
    if (options.sentence_markers) stream.push_back(kEnd);
    for (std::size_t i = n - 1; i < stream.size(); ++i) {
      for (std::size_t L = 0; L < n; ++L) {
        Gram g;
        g.len = static_cast<std::uint8_t>(L + 1);
        for (std::size_t j = 0; j <= L; ++j) g.ids[j] = stream[i - L + j];
        ++grams[L][g];
      }
    }
  }

  lm.contexts_.assign(n, {});
  for (std::size_t L = 0; L < n; ++L) {
    for (const auto& [g, c] : grams[L]) {
      Gram ctx;
      ctx.len = static_cast<std::uint8_t>(L);
      for (std::size_t j = 0; j < L; ++j) ctx.ids[j] = g.ids[j];
      Context& slot = lm.contexts_[L][ctx];
      slot.total += c;
      slot.followers.emplace_back(g.ids[L], c);
    }
    grams[L].clear();
  }
  lm.finalize();
  return lm;
}

NgramLM NgramLM::train_texts(const std::vector<std::string>& texts, const LmOptions& options,
                             const textfeat::TokenizerOptions& tokenizer) {
  std::vector<std::vector<std::string>> units;
  for (const auto& t : texts) {
    auto sents = textfeat::tokenize_sentences(t, tokenizer);
    if (options.sentence_markers) {
      for (auto& s : sents) units.push_back(std::move(s));
    } else {
      std::vector<std::string> flat;
      for (auto& s : sents) flat.insert(flat.end(), s.begin(), s.end());
      if (!flat.empty()) units.push_back(std::move(flat));
    }
  }
  return train(units, options);
}

void NgramLM::finalize() {
  for (auto& level : contexts_)
    for (auto& [g, ctx] : level) std::sort(ctx.followers.begin(), ctx.followers.end());
  unigram_rank_.clear();
  if (contexts_.empty()) return;
  auto it = contexts_[0].find(Gram{});
  if (it == contexts_[0].end()) return;
  std::vector<std::pair<std::uint32_t, Id>> ranked;
  for (const auto& [w, c] : it->second.followers) ranked.emplace_back(c, w);
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return words_[a.second] < words_[b.second];
  });
  for (const auto& r : ranked) unigram_rank_.push_back(r.second);
}

std::vector<NgramLM::Id> NgramLM::map_history(std::span<const Id> history) const {
  const std::size_t need = static_cast<std::size_t>(options_.order) - 1;
  std::vector<Id> h(need, kBegin);
  const std::size_t take = std::min(need, history.size());
  for (std::size_t i = 0; i < take; ++i) h[need - take + i] = history[history.size() - take + i];
  return h;
}

const NgramLM::Context* NgramLM::find_context(const std::vector<Id>& hist,
                                               std::size_t length) const {
  Gram g;
  g.len = static_cast<std::uint8_t>(length);
  for (std::size_t j = 0; j < length; ++j) g.ids[j] = hist[hist.size() - length + j];
  auto it = contexts_[length].find(g);
  return it == contexts_[length].end() ? nullptr : &it->second;
}

namespace {

std::uint32_t follower_count(const std::vector<std::pair<NgramLM::Id, std::uint32_t>>& f,
                             NgramLM::Id w) {
  auto it = std::lower_bound(f.begin(), f.end(), std::make_pair(w, std::uint32_t{0}));
  return (it != f.end() && it->first == w) ? it->second : 0;
}

}  // namespace

double NgramLM::probability_ids(std::span<const Id> history, Id word) const {
  if (word >= words_.size() || word == kBegin) return 0.0;
  if (word == kEnd && !options_.sentence_markers) return 0.0;
  const auto h = map_history(history);
  const double d = options_.discount;
  double p = 1.0 / static_cast<double>(vocabulary_size());
  for (std::size_t L = 0; L < contexts_.size(); ++L) {
    const Context* ctx = find_context(h, L);
    if (!ctx) break;
    const double T = static_cast<double>(ctx->total);
    const double c = follower_count(ctx->followers, word);
    const double D = static_cast<double>(ctx->followers.size());
    p = (std::max(c - d, 0.0) + d * D * p) / T;
  }
  return p;
}

double NgramLM::probability(std::span<const std::string> history, std::string_view word) const {
  std::vector<Id> ids;
  ids.reserve(history.size());
  for (const auto& w : history) ids.push_back(id_of(w));
  return probability_ids(ids, id_of(word));
}

double NgramLM::log2_perplexity(const std::vector<std::vector<std::string>>& sentences) const {
  double sum = 0.0;
  std::size_t n_scored = 0;
  std::vector<Id> stream;
  for (const auto& s : sentences) {
    stream.clear();
    for (const auto& w : s) stream.push_back(id_of(w));
    if (options_.sentence_markers) stream.push_back(kEnd);
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const double p = probability_ids(std::span<const Id>(stream.data(), i), stream[i]);
      sum += std::log2(p);
      ++n_scored;
    }
  }
  if (n_scored == 0) fail(ErrorKind::data, "zero scoreable tokens");
  return -sum / static_cast<double>(n_scored);
}

double NgramLM::log2_perplexity_text(std::string_view text,
                                     const textfeat::TokenizerOptions& tokenizer) const {
  auto sents = textfeat::tokenize_sentences(text, tokenizer);
  if (!options_.sentence_markers) {
    std::vector<std::string> flat;
    for (auto& s : sents) flat.insert(flat.end(), s.begin(), s.end());
    sents.clear();
    if (!flat.empty()) sents.push_back(std::move(flat));
  }
  return log2_perplexity(sents);
}

// The best word outside every higher-order follower set is the most frequent
// unigram outside them, so only those candidates need scoring.
NgramLM::Id NgramLM::greedy_next(const std::vector<Id>& hist) const {
  std::vector<Id> cand;
  for (std::size_t L = 1; L < contexts_.size(); ++L) {
    const Context* ctx = find_context(hist, L);
    if (!ctx) break;
    for (const auto& f : ctx->followers) cand.push_back(f.first);
  }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  for (Id w : unigram_rank_) {
    if (w == kUnk) continue;
    if (!std::binary_search(cand.begin(), cand.end(), w)) {
      cand.push_back(w);
      break;
    }
  }
  if (cand.empty()) cand = predictable_ids();

  Id best = kUnk;
  double best_p = -1.0;
  for (Id w : cand) {
    if (w == kUnk) continue;
    const double p = probability_ids(hist, w);
    if (p > best_p || (p == best_p && words_[w] < words_[best])) {
      best = w;
      best_p = p;
    }
  }
  return best;
}

NgramLM::Id NgramLM::sample_next(const std::vector<Id>& hist, Rng& rng) const {
  std::size_t top = 0;
  bool any = false;
  for (std::size_t L = 0; L < contexts_.size(); ++L) {
    if (!find_context(hist, L)) break;
    top = L;
    any = true;
  }
  const double d = options_.discount;
  const auto uniform_ids = predictable_ids();
  for (;;) {
    Id pick = kUnk;
    bool from_counts = false;
    if (any) {
      for (std::size_t L = top + 1; L-- > 0;) {
        const Context* ctx = find_context(hist, L);
        const double T = static_cast<double>(ctx->total);
        const double kept = T - d * static_cast<double>(ctx->followers.size());
        double u = rng.uniform() * T;
        if (u >= kept) continue;
        for (const auto& [w, c] : ctx->followers) {
          u -= static_cast<double>(c) - d;
          pick = w;
          if (u < 0.0) break;
        }
        from_counts = true;
        break;
      }
    }
    if (!from_counts) pick = uniform_ids[rng.index(uniform_ids.size())];
    // <unk> is never emitted; redrawing conditions the draw on a real symbol.
    if (pick != kUnk || uniform_ids.size() == 1) return pick;
  }
}

std::vector<std::string> NgramLM::generate(const std::vector<std::string>& prompt, Decoding mode,
                                           std::size_t max_tokens, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<Id> history;
  for (const auto& w : prompt) history.push_back(id_of(w));
  std::vector<std::string> out;
  while (out.size() < max_tokens) {
    const auto h = map_history(history);
    const Id next = mode == Decoding::greedy ? greedy_next(h) : sample_next(h, rng);
    if (next == kEnd) break;
    out.push_back(words_[next]);
    history.push_back(next);
  }
  return out;
}

std::string NgramLM::to_json() const {
  nlohmann::json j;
  j["format"] = "fatlens-ngram";
  j["version"] = kFormatVersion;
  j["order"] = options_.order;
  j["discount"] = options_.discount;
  j["min_count"] = options_.min_count;
  j["sentence_markers"] = options_.sentence_markers;
  j["vocabulary"] = std::vector<std::string>(words_.begin() + 3, words_.end());
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& level : contexts_) {
    std::vector<std::pair<std::vector<Id>, const Context*>> sorted;
    for (const auto& [g, ctx] : level)
      sorted.emplace_back(std::vector<Id>(g.ids.begin(), g.ids.begin() + g.len), &ctx);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [ids, ctx] : sorted) {
      std::vector<Id> ws;
      std::vector<std::uint32_t> cs;
      for (const auto& [w, c] : ctx->followers) {
        ws.push_back(w);
        cs.push_back(c);
      }
      arr.push_back(nlohmann::json::array({ids, ws, cs}));
    }
    levels.push_back(std::move(arr));
  }
  j["levels"] = std::move(levels);
  return j.dump();
}

NgramLM NgramLM::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("language model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "fatlens-ngram")
      fail(ErrorKind::data, "not a language model file");
    if (j.at("version").get<int>() != kFormatVersion)
      fail(ErrorKind::data, "unsupported language model version " + j.at("version").dump());
    NgramLM lm;
    lm.options_.order = j.at("order").get<int>();
    lm.options_.discount = j.at("discount").get<double>();
    lm.options_.min_count = j.at("min_count").get<int>();
    lm.options_.sentence_markers = j.at("sentence_markers").get<bool>();
    validate(lm.options_);
    lm.words_ = {kUnkWord, kEndWord, kBeginWord};
    for (const auto& w : j.at("vocabulary")) lm.words_.push_back(w.get<std::string>());
    for (Id i = 0; i < lm.words_.size(); ++i) lm.ids_.emplace(lm.words_[i], i);
    const auto& levels = j.at("levels");
    if (levels.size() != static_cast<std::size_t>(lm.options_.order))
      fail(ErrorKind::data, "language model level count does not match its order");
    lm.contexts_.assign(levels.size(), {});
    for (std::size_t L = 0; L < levels.size(); ++L) {
      for (const auto& entry : levels[L]) {
        const auto ids = entry.at(0).get<std::vector<Id>>();
        const auto ws = entry.at(1).get<std::vector<Id>>();
        const auto cs = entry.at(2).get<std::vector<std::uint32_t>>();
        if (ids.size() != L || ws.size() != cs.size())
          fail(ErrorKind::data, "malformed language model context");
        Gram g;
        g.len = static_cast<std::uint8_t>(L);
        std::copy(ids.begin(), ids.end(), g.ids.begin());
        Context& ctx = lm.contexts_[L][g];
        for (std::size_t i = 0; i < ws.size(); ++i) {
          if (ws[i] >= lm.words_.size()) fail(ErrorKind::data, "language model id out of range");
          ctx.followers.emplace_back(ws[i], cs[i]);
          ctx.total += cs[i];
        }
      }
    }
    lm.finalize();
    return lm;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("malformed language model file: ") + e.what());
  }
}

}  // namespace fatlens::lm
