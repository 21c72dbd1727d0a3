#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fatlens/corpus.hpp"
#include "fatlens/ngram.hpp"
#include "fatlens/textfeat.hpp"

namespace fatlens::lm {

// Fatigue probability of a text written for the given encounter complaints.
using FatigueScorer =
    std::function<double(const std::string& note_id, const std::string& text,
                         const std::vector<std::string>& complaints)>;

struct GenerationRow {
  std::string note_id;
  std::string mode;  // original, greedy, sampled
  std::size_t tokens = 0;
  std::size_t sentences = 0;
  double fatigue = NAN;  // scorer probability
  double log_perplexity = NAN;
  double frac_anger = NAN;
  bool flagged = false;  // nothing generated; left out of the aggregates
  std::string text;
};

struct GenerationAggregate {
  std::string mode;
  std::size_t n = 0;
  double mean_fatigue = NAN;
  double deviation_pct = NAN;  // relative to the mean over every aggregated row
  double mean_log_perplexity = NAN;
  double mean_frac_anger = NAN;
};

struct GenerationComparison {
  std::vector<GenerationRow> rows;
  std::vector<GenerationAggregate> aggregates;  // original, greedy, sampled
  std::size_t skipped_no_section = 0;
  std::size_t flagged = 0;

  const GenerationAggregate& aggregate(const std::string& mode) const;
  std::string to_csv() const;
  std::string summary_table() const;
};

struct GenerationOptions {
  std::string section = "History of Present Illness";
  std::size_t max_tokens_per_sentence = 60;
  std::uint64_t seed = 0;
  std::size_t max_notes = 0;  // 0 = every note with the section
  textfeat::TokenizerOptions tokenizer;
};

// For each note with the section: truncate at the section heading, regenerate
// the section body with greedy and with sampled decoding (as many sentences as
// the original has), and score original and generated bodies.
GenerationComparison compare_generated_vs_original(const NgramLM& lm,
                                                   const std::vector<corpus::NoteRecord>& notes,
                                                   const std::vector<corpus::Encounter>& encounters,
                                                   const FatigueScorer& scorer,
                                                   const textfeat::Lexicon* anger,
                                                   const GenerationOptions& options = {});

}  // namespace fatlens::lm
