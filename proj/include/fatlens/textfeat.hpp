#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace fatlens::textfeat {

struct TokenizerOptions {
  // Lowercase words (without the trailing '.') that do not end a sentence.
  std::set<std::string> abbreviations = default_abbreviations();
  static std::set<std::string> default_abbreviations();
};

struct Tokenized {
  std::vector<std::string> tokens;
  std::size_t sentence_count = 1;
  std::size_t number_count = 0;  // digit runs, excluded from tokens
};

Tokenized tokenize(std::string_view text, const TokenizerOptions& options = {});

// Same token stream grouped by sentence; sentences without words are dropped.
std::vector<std::vector<std::string>> tokenize_sentences(std::string_view text,
                                                         const TokenizerOptions& options = {});

int count_syllables(std::string_view word);

struct FkResult {
  double grade = 0.0;
  bool degenerate = false;  // no tokens: grade defined as 0
};

FkResult fk_grade(const std::vector<std::string>& tokens, std::size_t sentence_count);
FkResult fk_grade(std::size_t words, std::size_t sentences, std::size_t syllables);

class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::string name, const std::vector<std::string>& entries);

  // File format: first line "#category <name>", then one entry per line;
  // '*' is allowed as the final character.
  static Lexicon load(const std::filesystem::path& path);

  const std::string& name() const { return name_; }
  bool matches(std::string_view token) const;
  std::size_t size() const { return exact_.size() + prefixes_.size(); }
  // Every entry, wildcards with their trailing '*'.
  std::vector<std::string> entries() const;

 private:
  std::string name_;
  std::unordered_set<std::string> exact_;
  std::vector<std::string> prefixes_;
};

double lexicon_fraction(const std::vector<std::string>& tokens, const Lexicon& lexicon);

inline constexpr std::size_t kNoteFeatureCount = 27;

// Fixed output order of the note features.
const std::array<const char*, kNoteFeatureCount>& feature_names();

// Lexicon category feeding each frac_* feature (feature name without "frac_").
const std::vector<std::string>& required_categories();

class LexiconSet {
 public:
  void add(Lexicon lexicon);
  // Loads every *.txt in the directory.
  static LexiconSet load_directory(const std::filesystem::path& dir);
  const Lexicon& get(const std::string& category) const;  // throws naming the category
  bool contains(const std::string& category) const { return by_name_.count(category) > 0; }
  void require_all() const;

 private:
  std::map<std::string, Lexicon> by_name_;
};

// Supplies log2 perplexity for a note; implemented by the language model or by
// an imported scores file.
class PerplexityProvider {
 public:
  virtual ~PerplexityProvider() = default;
  virtual double log2_perplexity(const std::string& note_id, std::string_view text) const = 0;
};

class ExternalPerplexity final : public PerplexityProvider {
 public:
  // CSV with header note_id,log2_perplexity.
  static ExternalPerplexity load(const std::filesystem::path& path);
  explicit ExternalPerplexity(std::map<std::string, double> scores);
  double log2_perplexity(const std::string& note_id, std::string_view text) const override;

 private:
  std::map<std::string, double> scores_;
};

struct FeatureVector {
  std::string note_id;
  std::vector<double> values;  // 27 note features then complaint dummies
};

struct FeatureContext {
  const LexiconSet* lexicons = nullptr;
  const PerplexityProvider* perplexity = nullptr;
  std::vector<std::string> complaint_vocabulary;  // sorted; one dummy each
  TokenizerOptions tokenizer;
};

FeatureVector extract_features(const std::string& note_id, std::string_view text,
                               const std::vector<std::string>& complaints,
                               const FeatureContext& context);

std::vector<std::string> full_feature_names(const std::vector<std::string>& complaint_vocabulary);

class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> means, std::vector<double> sds, std::size_t standardized_count);

  // Z-scores the first `standardized_count` columns with sample SDs; the rest
  // (complaint dummies) pass through unchanged.
  static Standardizer fit(const std::vector<std::vector<double>>& rows,
                          std::size_t standardized_count = kNoteFeatureCount);

  std::vector<double> apply(const std::vector<double>& row) const;
  std::vector<double> invert(const std::vector<double>& row) const;

  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& sds() const { return sds_; }
  std::size_t standardized_count() const { return count_; }

 private:
  std::vector<double> means_;
  std::vector<double> sds_;  // 0 marks a constant feature (maps to 0)
  std::size_t count_ = 0;
};

std::string features_to_csv(const std::vector<FeatureVector>& vectors,
                            const std::vector<std::string>& names);
std::vector<FeatureVector> features_from_csv(std::string_view text, std::vector<std::string>* names);

}  // namespace fatlens::textfeat
