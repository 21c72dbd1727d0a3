#include "fatlens/generation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "fatlens/common.hpp"
#include "fatlens/fileio.hpp"
#include "fatlens/rng.hpp"

namespace fatlens::lm {

namespace {

bool same_heading(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

std::string join_sentences(const std::vector<std::vector<std::string>>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    if (!out.empty()) out += ' ';
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (k) out += ' ';
      out += s[k];
    }
    out += '.';
  }
  return out;
}

}  // namespace

const GenerationAggregate& GenerationComparison::aggregate(const std::string& mode) const {
  for (const auto& a : aggregates)
    if (a.mode == mode) return a;
  fail(ErrorKind::invalid_argument, "no aggregate for mode '" + mode + "'");
}

GenerationComparison compare_generated_vs_original(const NgramLM& lm,
                                                   const std::vector<corpus::NoteRecord>& notes,
                                                   const std::vector<corpus::Encounter>& encounters,
                                                   const FatigueScorer& scorer,
                                                   const textfeat::Lexicon* anger,
                                                   const GenerationOptions& opt) {
  if (notes.size() != encounters.size())
    fail(ErrorKind::invalid_argument, "notes and encounters must be aligned");
  GenerationComparison out;
  const auto heading = textfeat::tokenize(opt.section, opt.tokenizer).tokens;
  std::size_t used = 0;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    if (opt.max_notes && used >= opt.max_notes) break;
    const auto& note = notes[i];
    const std::string* body = nullptr;
    for (const auto& [name, text] : note.sections)
      if (same_heading(name, opt.section)) body = &text;
    const auto original = body ? textfeat::tokenize_sentences(*body, opt.tokenizer)
                               : std::vector<std::vector<std::string>>{};
    if (original.empty()) {
      ++out.skipped_no_section;
      continue;
    }
    ++used;
    const auto& complaints = encounters[i].chief_complaints;

    auto finish = [&](GenerationRow row, const std::vector<std::vector<std::string>>& sents) {
      for (const auto& s : sents) row.tokens += s.size();
      row.sentences = sents.size();
      if (row.tokens == 0) {
        row.flagged = true;
        ++out.flagged;
      } else {
        row.log_perplexity = lm.log2_perplexity(sents);
        if (scorer) row.fatigue = scorer(note.note_id, row.text, complaints);
        if (anger) {
          std::vector<std::string> all;
          for (const auto& s : sents) all.insert(all.end(), s.begin(), s.end());
          row.frac_anger = textfeat::lexicon_fraction(all, *anger);
        }
      }
      out.rows.push_back(std::move(row));
    };

    GenerationRow orig;
    orig.note_id = note.note_id;
    orig.mode = "original";
    orig.text = *body;
    finish(std::move(orig), original);

    const std::uint64_t note_seed = Rng::derive(opt.seed, i);
    for (Decoding mode : {Decoding::greedy, Decoding::sampled}) {
      std::vector<std::vector<std::string>> gen;
      for (std::size_t k = 0; k < original.size(); ++k) {
        // The heading opens the first sentence of the section in training text.
        const std::vector<std::string> prompt = k == 0 ? heading : std::vector<std::string>{};
        gen.push_back(lm.generate(prompt, mode, opt.max_tokens_per_sentence,
                                  Rng::derive(note_seed, k * 2 + (mode == Decoding::sampled))));
      }
      gen.erase(std::remove_if(gen.begin(), gen.end(), [](const auto& s) { return s.empty(); }),
                gen.end());
      GenerationRow row;
      row.note_id = note.note_id;
      row.mode = mode == Decoding::greedy ? "greedy" : "sampled";
      row.text = join_sentences(gen);
      finish(std::move(row), gen);
    }
  }

  double pooled = 0.0;
  std::size_t pooled_n = 0;
  for (const char* mode : {"original", "greedy", "sampled"}) {
    GenerationAggregate a;
    a.mode = mode;
    double f = 0, lp = 0, an = 0;
    std::size_t nf = 0, nan_ = 0;
    for (const auto& r : out.rows) {
      if (r.mode != mode || r.flagged) continue;
      ++a.n;
      lp += r.log_perplexity;
      if (!std::isnan(r.fatigue)) {
        f += r.fatigue;
        ++nf;
      }
      if (!std::isnan(r.frac_anger)) {
        an += r.frac_anger;
        ++nan_;
      }
    }
    if (a.n) a.mean_log_perplexity = lp / static_cast<double>(a.n);
    if (nf) a.mean_fatigue = f / static_cast<double>(nf);
    if (nan_) a.mean_frac_anger = an / static_cast<double>(nan_);
    pooled += f;
    pooled_n += nf;
    out.aggregates.push_back(a);
  }
  if (pooled_n) {
    pooled /= static_cast<double>(pooled_n);
    for (auto& a : out.aggregates)
      if (!std::isnan(a.mean_fatigue) && pooled != 0.0)
        a.deviation_pct = 100.0 * (a.mean_fatigue - pooled) / pooled;
  }
  return out;
}

std::string GenerationComparison::to_csv() const {
  CsvWriter w({"note_id", "mode", "tokens", "sentences", "fatigue", "log_perplexity",
               "frac_anger", "flagged"});
  for (const auto& r : rows)
    w.add_row({r.note_id, r.mode, std::to_string(r.tokens), std::to_string(r.sentences),
               format_double(r.fatigue), format_double(r.log_perplexity),
               format_double(r.frac_anger), r.flagged ? "1" : "0"});
  return w.str();
}

std::string GenerationComparison::summary_table() const {
  std::string out =
      "mode       n      fatigue deviation   log perplexity   fraction anger\n";
  for (const char* mode : {"greedy", "sampled", "original"}) {
    const auto& a = aggregate(mode);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-9s %6zu   %+14.0f%%   %14.4f   %14.4f\n", a.mode.c_str(), a.n,
                  a.deviation_pct, a.mean_log_perplexity, a.mean_frac_anger);
    out += buf;
  }
  char tail[128];
  std::snprintf(tail, sizeof tail, "skipped without section: %zu; flagged empty generations: %zu\n",
                skipped_no_section, flagged);
  return out + tail;
}

}  // namespace fatlens::lm
