#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fatlens/rng.hpp"
#include "fatlens/textfeat.hpp"

namespace fatlens::lm {

inline constexpr int kMaxOrder = 6;

struct LmOptions {
  int order = 3;
  double discount = 0.75;  // 0 gives maximum likelihood
  int min_count = 2;       // rarer training words map to <unk>
  // Wrap each sentence in <s> ... </s>. Without markers a note is one stream
  // and no end token is predicted.
  bool sentence_markers = true;
};

enum class Decoding { greedy, sampled };

// Word-level n-gram model with interpolated absolute discounting, bottoming
// out in a uniform distribution over the predictable vocabulary.
class NgramLM {
 public:
  using Id = std::uint32_t;
  static constexpr Id kUnk = 0;
  static constexpr Id kEnd = 1;
  static constexpr Id kBegin = 2;

  static NgramLM train(const std::vector<std::vector<std::string>>& sentences,
                       const LmOptions& options = {});
  static NgramLM train_texts(const std::vector<std::string>& texts, const LmOptions& options = {},
                             const textfeat::TokenizerOptions& tokenizer = {});

  const LmOptions& options() const { return options_; }
  std::size_t vocabulary_size() const;  // predictable symbols, incl. <unk> (and </s>)
  Id id_of(std::string_view word) const;
  const std::string& word_of(Id id) const;
  // Predictable symbols in id order.
  std::vector<Id> predictable_ids() const;

  // p(word | history); history is the preceding tokens (shorter than order-1
  // means the start of a sentence and is padded with <s>).
  double probability(std::span<const std::string> history, std::string_view word) const;
  double probability_ids(std::span<const Id> history, Id word) const;

  // -(1/N) sum log2 p over scored tokens; N includes end markers.
  double log2_perplexity(const std::vector<std::vector<std::string>>& sentences) const;
  double log2_perplexity_text(std::string_view text,
                              const textfeat::TokenizerOptions& tokenizer = {}) const;

  // Continues the prompt until </s> or max_tokens. Greedy ties resolve to the
  // lexicographically smallest word; sampling draws from the full conditional.
  std::vector<std::string> generate(const std::vector<std::string>& prompt, Decoding mode,
                                    std::size_t max_tokens, std::uint64_t seed) const;

  std::string to_json() const;
  static NgramLM from_json(std::string_view text);

 private:
  struct Gram {
    std::array<Id, kMaxOrder> ids{};
    std::uint8_t len = 0;
    bool operator==(const Gram& o) const {
      if (len != o.len) return false;
      for (std::uint8_t i = 0; i < len; ++i)
        if (ids[i] != o.ids[i]) return false;
      return true;
    }
  };
  struct GramHash {
    std::size_t operator()(const Gram& g) const noexcept {
      std::uint64_t h = 1469598103934665603ULL ^ g.len;
      for (std::uint8_t i = 0; i < g.len; ++i) h = (h ^ g.ids[i]) * 1099511628211ULL;
      return static_cast<std::size_t>(h);
    }
  };
  struct Context {
    std::uint64_t total = 0;
    std::vector<std::pair<Id, std::uint32_t>> followers;  // sorted by id
  };
  using ContextMap = std::unordered_map<Gram, Context, GramHash>;

  std::vector<Id> map_history(std::span<const Id> history) const;
  const Context* find_context(const std::vector<Id>& hist, std::size_t length) const;
  Id greedy_next(const std::vector<Id>& hist) const;
  Id sample_next(const std::vector<Id>& hist, Rng& rng) const;
  void finalize();

  LmOptions options_;
  std::vector<std::string> words_;  // index = id
  std::unordered_map<std::string, Id> ids_;
  std::vector<ContextMap> contexts_;  // [k] = contexts of length k
  std::vector<Id> unigram_rank_;      // seen symbols by descending count, then word
};

class LmPerplexity final : public textfeat::PerplexityProvider {
 public:
  LmPerplexity(const NgramLM& lm, textfeat::TokenizerOptions tokenizer = {})
      : lm_(lm), tokenizer_(std::move(tokenizer)) {}
  double log2_perplexity(const std::string&, std::string_view text) const override {
    return lm_.log2_perplexity_text(text, tokenizer_);
  }

 private:
  const NgramLM& lm_;
  textfeat::TokenizerOptions tokenizer_;
};

}  // namespace fatlens::lm
