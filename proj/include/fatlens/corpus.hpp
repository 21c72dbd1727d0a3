#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fatlens/timeutil.hpp"

namespace fatlens::corpus {

enum class Sex { female, male };
enum class Race { white, black, hispanic, other };
enum class Language { english, spanish, other };

const char* to_string(Sex s);
const char* to_string(Race r);
const char* to_string(Language l);
std::optional<Sex> parse_sex(std::string_view s);
std::optional<Race> parse_race(std::string_view s);
std::optional<Language> parse_language(std::string_view s);

struct NoteRecord {
  std::string note_id;
  std::string physician_id;
  std::string patient_id;
  EpochSeconds timestamp = 0;
  std::string text;  // boilerplate already stripped
  // Ordered section name -> body; empty when the note has no recognised headings.
  std::vector<std::pair<std::string, std::string>> sections;
};

struct Encounter {
  std::string note_id;
  int age = 0;
  Sex sex = Sex::female;
  Race race = Race::white;
  std::optional<Language> language;
  std::vector<std::string> chief_complaints;  // sorted, unique, non-empty
  EpochSeconds arrival_time = 0;
  bool tested = false;
  bool test_positive = false;
};

struct Shift {
  std::string shift_id;
  std::string physician_id;
  EpochSeconds start = 0;
  EpochSeconds end = 0;
  std::vector<std::string> note_ids;  // time-sorted
  double start_hour_adjusted = 0.0;   // (local hour - 6) mod 24, with minutes
};

enum class WorkloadClass { low, mid, high };
const char* to_string(WorkloadClass c);
std::optional<WorkloadClass> parse_workload_class(std::string_view s);

struct WorkloadLabel {
  std::string shift_id;
  std::int64_t day = 0;  // local calendar day number of the shift start
  int prior_days_worked = 0;
  int total_days_in_window = 1;
  WorkloadClass cls = WorkloadClass::low;
};

struct WorkloadThresholds {
  int high_min_prior = 4;  // prior >= this -> high
  int low_max_prior = 0;   // prior <= this -> low
};

struct DatasetSplit {
  std::uint64_t seed = 0;
  std::vector<std::string> train_note_ids;    // sorted
  std::vector<std::string> heldout_note_ids;  // sorted
  static constexpr const char* split_level = "patient";
};

// ---- ingest ---------------------------------------------------------------

enum class InputFormat { jsonl, csv };

struct Reject {
  std::size_t line = 0;  // 1-based physical line of the record start
  std::string reason;    // machine-readable tag, e.g. "empty_text"
  std::string detail;
};

struct IngestOptions {
  // Leading/trailing lines matching any of these (case-insensitive ECMAScript
  // regexes) are dropped from the note body.
  std::vector<std::string> boilerplate_patterns = default_boilerplate_patterns();
  // Closed complaint vocabulary; empty means "accept whatever appears".
  std::set<std::string> complaint_vocabulary;
  // Heading lines ("<name>:") that open a note section.
  std::vector<std::string> section_headings = default_section_headings();

  static std::vector<std::string> default_boilerplate_patterns();
  static std::vector<std::string> default_section_headings();
};

struct IngestResult {
  std::vector<NoteRecord> notes;
  std::vector<Encounter> encounters;  // aligned with notes
  std::vector<Reject> rejects;
};

IngestResult ingest(const std::filesystem::path& path, InputFormat format,
                    const IngestOptions& options = {});
IngestResult ingest_text(std::string_view content, InputFormat format,
                         const IngestOptions& options = {});

std::string strip_boilerplate(const std::string& text, const std::vector<std::string>& patterns);
std::vector<std::pair<std::string, std::string>> split_sections(
    const std::string& text, const std::vector<std::string>& headings);

// Normalized JSONL round trip used between pipeline stages.
std::string to_jsonl(const std::vector<NoteRecord>& notes, const std::vector<Encounter>& enc);

// ---- shifts & workload ----------------------------------------------------

struct SegmentOptions {
  double gap_hours = 3.0;  // a gap exactly equal to this stays in the shift
  TimeZone timezone = TimeZone::utc();
};

std::vector<Shift> segment_shifts(const std::vector<NoteRecord>& notes,
                                  const SegmentOptions& options = {});

struct RestViolation {
  std::string physician_id;
  std::string previous_shift;
  std::string next_shift;
  double gap_hours = 0.0;
};

// Pairs of consecutive shifts closer than `min_rest_hours`; reported, not enforced.
std::vector<RestViolation> rest_violations(const std::vector<Shift>& shifts,
                                           double min_rest_hours = 15.0);

std::vector<WorkloadLabel> compute_workload(const std::vector<Shift>& shifts,
                                            const TimeZone& tz = TimeZone::utc(),
                                            const WorkloadThresholds& thresholds = {});

// note_id -> (shift index, label index) lookups.
struct NoteIndex {
  std::unordered_map<std::string, std::size_t> shift_of_note;
  std::unordered_map<std::string, std::size_t> position_in_shift;
};
NoteIndex index_notes(const std::vector<Shift>& shifts);

// ---- balanced dataset -----------------------------------------------------

struct ComplaintBalance {
  std::string complaint;
  std::size_t available_high = 0;
  std::size_t available_low = 0;
  std::size_t retained_per_class = 0;
  bool excluded = false;
};

struct BalancedDataset {
  DatasetSplit split;
  std::vector<ComplaintBalance> per_complaint;
  std::map<std::string, WorkloadClass> note_class;  // every retained note
};

struct BalanceOptions {
  double train_fraction = 0.74;
};

// Requires labels aligned with shifts (as produced by compute_workload).
BalancedDataset build_balanced_dataset(const std::vector<NoteRecord>& notes,
                                       const std::vector<Encounter>& encounters,
                                       const std::vector<Shift>& shifts,
                                       const std::vector<WorkloadLabel>& labels,
                                       std::uint64_t seed,
                                       const BalanceOptions& options = {});

}  // namespace fatlens::corpus
