#include "fatlens/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "fatlens/common.hpp"
#include "fatlens/fileio.hpp"
#include "fatlens/rng.hpp"
#include "json.hpp"

namespace fatlens::corpus {

using json = nlohmann::ordered_json;

const char* to_string(Sex s) { return s == Sex::female ? "female" : "male"; }

const char* to_string(Race r) {
  switch (r) {
    case Race::white: return "white";
    case Race::black: return "black";
    case Race::hispanic: return "hispanic";
    case Race::other: return "other";
  }
  return "other";
}

const char* to_string(Language l) {
  switch (l) {
    case Language::english: return "english";
    case Language::spanish: return "spanish";
    case Language::other: return "other";
  }
  return "other";
}

const char* to_string(WorkloadClass c) {
  switch (c) {
    case WorkloadClass::low: return "low";
    case WorkloadClass::mid: return "mid";
    case WorkloadClass::high: return "high";
  }
  return "mid";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::optional<Sex> parse_sex(std::string_view s) {
  const std::string v = lower(trim(s));
  if (v == "female" || v == "f") return Sex::female;
  if (v == "male" || v == "m") return Sex::male;
  return std::nullopt;
}

std::optional<Race> parse_race(std::string_view s) {
  const std::string v = lower(trim(s));
  if (v == "white") return Race::white;
  if (v == "black") return Race::black;
  if (v == "hispanic") return Race::hispanic;
  if (v == "other") return Race::other;
  return std::nullopt;
}

std::optional<Language> parse_language(std::string_view s) {
  const std::string v = lower(trim(s));
  if (v == "english") return Language::english;
  if (v == "spanish") return Language::spanish;
  if (v == "other") return Language::other;
  return std::nullopt;
}

std::optional<WorkloadClass> parse_workload_class(std::string_view s) {
  if (s == "low") return WorkloadClass::low;
  if (s == "mid") return WorkloadClass::mid;
  if (s == "high") return WorkloadClass::high;
  return std::nullopt;
}

std::vector<std::string> IngestOptions::default_boilerplate_patterns() {
  return {
      R"(^\s*$)",
      R"(^\s*electronically signed\b.*)",
      R"(^\s*(generated|printed|exported) (by|from|on)\b.*)",
      R"(^\s*\*{2,}.*\*{2,}\s*$)",
      R"(^\s*page \d+( of \d+)?\s*$)",
      R"(^\s*(confidential|this document contains)\b.*)",
  };
}

std::vector<std::string> IngestOptions::default_section_headings() {
  return {"Chief Complaint", "History of Present Illness", "Past Medical History",
          "Review of Systems", "Physical Examination", "Assessment and Plan",
          "Medical Decision Making"};
}

namespace {

std::vector<std::regex> compile_patterns(const std::vector<std::string>& patterns) {
  std::vector<std::regex> compiled;
  compiled.reserve(patterns.size());
  for (const auto& p : patterns) {
    try {
      compiled.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      fail(ErrorKind::config, "bad boilerplate pattern '" + p + "': " + e.what());
    }
  }
  return compiled;
}

std::string strip_compiled(const std::string& text, const std::vector<std::regex>& compiled) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  auto is_boiler = [&](const std::string& l) {
    return std::any_of(compiled.begin(), compiled.end(),
                       [&](const std::regex& r) { return std::regex_match(l, r); });
  };
  std::size_t b = 0, e = lines.size();
  while (b < e && is_boiler(lines[b])) ++b;
  while (e > b && is_boiler(lines[e - 1])) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (i > b) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

}  // namespace

std::string strip_boilerplate(const std::string& text, const std::vector<std::string>& patterns) {
  return strip_compiled(text, compile_patterns(patterns));
}

std::vector<std::pair<std::string, std::string>> split_sections(
    const std::string& text, const std::vector<std::string>& headings) {
  std::vector<std::pair<std::string, std::string>> sections;
  std::istringstream in(text);
  std::string line;
  bool open = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    bool heading = false;
    if (!t.empty() && t.back() == ':') {
      const std::string name = lower(trim(std::string_view(t).substr(0, t.size() - 1)));
      for (const auto& h : headings) {
        if (lower(h) == name) {
          sections.emplace_back(h, std::string());
          open = true;
          heading = true;
          break;
        }
      }
    }
    if (heading || !open) continue;
    auto& body = sections.back().second;
    if (!body.empty()) body.push_back('\n');
    body += line;
  }
  return sections;
}

namespace {

struct RawRecord {
  std::size_t line = 0;
  std::map<std::string, std::string> scalars;
  std::vector<std::string> complaints;
  bool has_complaints = false;
  std::vector<std::pair<std::string, std::string>> sections;
};

std::optional<bool> parse_bool(const std::string& v) {
  const std::string s = lower(trim(v));
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  return std::nullopt;
}

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return format_double(v.get<double>());
  if (v.is_null()) return "";
  return v.dump();
}

void convert(const RawRecord& raw, const IngestOptions& opt, const std::vector<std::regex>& boiler,
             std::unordered_set<std::string>& seen_ids, IngestResult& out) {
  auto reject = [&](std::string reason, std::string detail) {
    out.rejects.push_back({raw.line, std::move(reason), std::move(detail)});
  };
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = raw.scalars.find(key);
    if (it == raw.scalars.end() || trim(it->second).empty()) return std::nullopt;
    return it->second;
  };
  for (const char* key : {"note_id", "physician_id", "timestamp", "patient_id"}) {
    if (!get(key)) return reject("missing_field", key);
  }
  NoteRecord note;
  Encounter enc;
  note.note_id = trim(*get("note_id"));
  note.physician_id = trim(*get("physician_id"));
  note.patient_id = trim(*get("patient_id"));
  try {
    note.timestamp = parse_timestamp(*get("timestamp"));
    enc.arrival_time = get("arrival_time") ? parse_timestamp(*get("arrival_time")) : note.timestamp;
  } catch (const Error& e) {
    return reject("bad_timestamp", e.what());
  }
  if (seen_ids.count(note.note_id)) return reject("duplicate_note_id", note.note_id);

  const auto text_it = raw.scalars.find("text");
  if (text_it == raw.scalars.end()) return reject("missing_field", "text");
  note.text = strip_compiled(text_it->second, boiler);
  if (trim(note.text).empty()) return reject("empty_text", note.note_id);
  note.sections = raw.sections.empty() ? split_sections(note.text, opt.section_headings)
                                       : raw.sections;

  enc.note_id = note.note_id;
  const auto age = get("age");
  const auto sex = get("sex");
  const auto race = get("race");
  if (!age) return reject("missing_field", "age");
  if (!sex) return reject("missing_field", "sex");
  if (!race) return reject("missing_field", "race");
  try {
    std::size_t used = 0;
    const double a = std::stod(*age, &used);
    if (a < 0 || a != std::floor(a) || trim(age->substr(used)) != "") throw std::invalid_argument("");
    enc.age = static_cast<int>(a);
  } catch (const std::exception&) {
    return reject("bad_value", "age '" + *age + "'");
  }
  const auto s = parse_sex(*sex);
  if (!s) return reject("bad_value", "sex '" + *sex + "'");
  enc.sex = *s;
  const auto r = parse_race(*race);
  if (!r) return reject("bad_value", "race '" + *race + "'");
  enc.race = *r;
  if (const auto lang = get("language")) {
    const auto l = parse_language(*lang);
    if (!l) return reject("bad_value", "language '" + *lang + "'");
    enc.language = *l;
  }
  if (!raw.has_complaints) return reject("missing_field", "chief_complaints");
  for (const auto& c : raw.complaints) {
    const std::string cc = lower(trim(c));
    if (cc.empty()) continue;
    if (!opt.complaint_vocabulary.empty() && !opt.complaint_vocabulary.count(cc))
      return reject("unknown_complaint", cc);
    enc.chief_complaints.push_back(cc);
  }
  std::sort(enc.chief_complaints.begin(), enc.chief_complaints.end());
  enc.chief_complaints.erase(std::unique(enc.chief_complaints.begin(), enc.chief_complaints.end()),
                             enc.chief_complaints.end());
  if (enc.chief_complaints.empty()) return reject("missing_field", "chief_complaints");

  const auto tested = get("tested");
  const auto positive = get("test_positive");
  if (!tested) return reject("missing_field", "tested");
  if (!positive) return reject("missing_field", "test_positive");
  const auto tb = parse_bool(*tested);
  const auto pb = parse_bool(*positive);
  if (!tb || !pb) return reject("bad_value", "tested/test_positive");
  enc.tested = *tb;
  enc.test_positive = *pb;
  if (enc.test_positive && !enc.tested) return reject("outcome_inconsistent", note.note_id);

  seen_ids.insert(note.note_id);
  out.notes.push_back(std::move(note));
  out.encounters.push_back(std::move(enc));
}

}  // namespace

IngestResult ingest_text(std::string_view content, InputFormat format, const IngestOptions& opt) {
  IngestResult out;
  std::unordered_set<std::string> seen;
  const auto boiler = compile_patterns(opt.boilerplate_patterns);
  if (format == InputFormat::jsonl) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
      std::size_t nl = content.find('\n', pos);
      if (nl == std::string_view::npos) nl = content.size();
      const std::string_view line = content.substr(pos, nl - pos);
      ++line_no;
      pos = nl + 1;
      if (trim(line).empty()) {
        if (nl == content.size()) break;
        continue;
      }
      RawRecord raw;
      raw.line = line_no;
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::exception& e) {
        out.rejects.push_back({line_no, "malformed_json", e.what()});
        continue;
      }
      if (!obj.is_object()) {
        out.rejects.push_back({line_no, "malformed_json", "record is not an object"});
        continue;
      }
      for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (it.key() == "chief_complaints") {
          raw.has_complaints = true;
          if (it->is_array()) {
            for (const auto& c : *it) raw.complaints.push_back(json_scalar(c));
          } else {
            raw.complaints.push_back(json_scalar(*it));
          }
        } else if (it.key() == "sections" && it->is_object()) {
          for (auto s = it->begin(); s != it->end(); ++s)
            raw.sections.emplace_back(s.key(), json_scalar(*s));
        } else {
          raw.scalars[it.key()] = json_scalar(*it);
        }
      }
      convert(raw, opt, boiler, seen, out);
      if (nl == content.size()) break;
    }
    return out;
  }

  std::vector<std::size_t> lines;
  const auto rows = parse_csv(content, ',', &lines);
  if (rows.empty()) return out;
  const auto& header = rows.front();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    RawRecord raw;
    raw.line = lines[r];
    if (rows[r].size() != header.size()) {
      out.rejects.push_back({raw.line, "malformed_row", "column count mismatch"});
      continue;
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string key = trim(header[c]);
      if (key == "chief_complaints") {
        raw.has_complaints = true;
        std::stringstream ss(rows[r][c]);
        std::string part;
        while (std::getline(ss, part, '|')) raw.complaints.push_back(part);
      } else {
        raw.scalars[key] = rows[r][c];
      }
    }
    convert(raw, opt, boiler, seen, out);
  }
  return out;
}

IngestResult ingest(const std::filesystem::path& path, InputFormat format,
                    const IngestOptions& options) {
  return ingest_text(read_file(path), format, options);
}

std::string to_jsonl(const std::vector<NoteRecord>& notes, const std::vector<Encounter>& enc) {
  if (notes.size() != enc.size()) fail(ErrorKind::invalid_argument, "notes/encounters misaligned");
  std::string out;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    const auto& n = notes[i];
    const auto& e = enc[i];
    json j = json::object();
    j["note_id"] = n.note_id;
    j["physician_id"] = n.physician_id;
    j["patient_id"] = n.patient_id;
    j["timestamp"] = format_timestamp(n.timestamp);
    j["arrival_time"] = format_timestamp(e.arrival_time);
    j["text"] = n.text;
    j["age"] = e.age;
    j["sex"] = to_string(e.sex);
    j["race"] = to_string(e.race);
    if (e.language) j["language"] = to_string(*e.language);
    j["chief_complaints"] = e.chief_complaints;
    j["tested"] = e.tested;
    j["test_positive"] = e.test_positive;
    if (!n.sections.empty()) {
      json s = json::object();
      for (const auto& [name, body] : n.sections) s[name] = body;
      j["sections"] = std::move(s);
    }
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

// ---- shifts ---------------------------------------------------------------

std::vector<Shift> segment_shifts(const std::vector<NoteRecord>& notes,
                                  const SegmentOptions& options) {
  std::unordered_set<std::string> ids;
  std::map<std::string, std::vector<const NoteRecord*>> by_physician;
  for (const auto& n : notes) {
    if (!ids.insert(n.note_id).second)
      fail(ErrorKind::data, "duplicate note_id '" + n.note_id + "'");
    by_physician[n.physician_id].push_back(&n);
  }
  const std::int64_t max_gap = static_cast<std::int64_t>(std::llround(options.gap_hours * 3600.0));
  std::vector<Shift> shifts;
  for (auto& [physician, list] : by_physician) {
    std::sort(list.begin(), list.end(), [](const NoteRecord* a, const NoteRecord* b) {
      return a->timestamp != b->timestamp ? a->timestamp < b->timestamp : a->note_id < b->note_id;
    });
    std::size_t k = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i == 0 || list[i]->timestamp - list[i - 1]->timestamp > max_gap) {
        Shift s;
        s.physician_id = physician;
        s.shift_id = physician + "#" + std::to_string(++k);
        s.start = list[i]->timestamp;
        const LocalTime lt = options.timezone.to_local(s.start);
        s.start_hour_adjusted = std::fmod(lt.fractional_hour() - 6.0 + 24.0, 24.0);
        shifts.push_back(std::move(s));
      }
      shifts.back().note_ids.push_back(list[i]->note_id);
      shifts.back().end = list[i]->timestamp;
    }
  }
  return shifts;
}

std::vector<RestViolation> rest_violations(const std::vector<Shift>& shifts, double min_rest_hours) {
  std::map<std::string, std::vector<const Shift*>> by_physician;
  for (const auto& s : shifts) by_physician[s.physician_id].push_back(&s);
  std::vector<RestViolation> out;
  for (auto& [p, list] : by_physician) {
    std::sort(list.begin(), list.end(),
              [](const Shift* a, const Shift* b) { return a->start < b->start; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      const double gap = static_cast<double>(list[i]->start - list[i - 1]->end) / 3600.0;
      if (gap < min_rest_hours)
        out.push_back({p, list[i - 1]->shift_id, list[i]->shift_id, gap});
    }
  }
  return out;
}

std::vector<WorkloadLabel> compute_workload(const std::vector<Shift>& shifts, const TimeZone& tz,
                                            const WorkloadThresholds& th) {
  std::map<std::string, std::set<std::int64_t>> days_worked;
  std::vector<std::int64_t> day_of(shifts.size());
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    day_of[i] = tz.to_local(shifts[i].start).day_number;
    days_worked[shifts[i].physician_id].insert(day_of[i]);
  }
  std::vector<WorkloadLabel> labels;
  labels.reserve(shifts.size());
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    const auto& days = days_worked[shifts[i].physician_id];
    const std::int64_t d = day_of[i];
    const auto lo = days.lower_bound(d - 6);
    const auto hi = days.lower_bound(d);
    WorkloadLabel l;
    l.shift_id = shifts[i].shift_id;
    l.day = d;
    l.prior_days_worked = static_cast<int>(std::distance(lo, hi));
    l.total_days_in_window = l.prior_days_worked + 1;
    if (l.prior_days_worked >= th.high_min_prior) l.cls = WorkloadClass::high;
    else if (l.prior_days_worked <= th.low_max_prior) l.cls = WorkloadClass::low;
    else l.cls = WorkloadClass::mid;
    labels.push_back(std::move(l));
  }
  return labels;
}

NoteIndex index_notes(const std::vector<Shift>& shifts) {
  NoteIndex idx;
  for (std::size_t s = 0; s < shifts.size(); ++s) {
    for (std::size_t k = 0; k < shifts[s].note_ids.size(); ++k) {
      idx.shift_of_note[shifts[s].note_ids[k]] = s;
      idx.position_in_shift[shifts[s].note_ids[k]] = k;
    }
  }
  return idx;
}

// ---- balanced dataset -----------------------------------------------------

BalancedDataset build_balanced_dataset(const std::vector<NoteRecord>& notes,
                                       const std::vector<Encounter>& encounters,
                                       const std::vector<Shift>& shifts,
                                       const std::vector<WorkloadLabel>& labels,
                                       std::uint64_t seed, const BalanceOptions& options) {
  if (notes.size() != encounters.size())
    fail(ErrorKind::invalid_argument, "notes/encounters misaligned");
  if (shifts.size() != labels.size())
    fail(ErrorKind::invalid_argument, "shifts/labels misaligned");
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0))
    fail(ErrorKind::config, "train_fraction must lie in (0,1)");
  const NoteIndex idx = index_notes(shifts);

  struct Pools {
    std::vector<std::size_t> high, low;
  };
  std::map<std::string, Pools> pools;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    const auto it = idx.shift_of_note.find(notes[i].note_id);
    if (it == idx.shift_of_note.end()) continue;
    const WorkloadClass c = labels[it->second].cls;
    if (c == WorkloadClass::mid) continue;
    const std::string& cc = encounters[i].chief_complaints.front();
    (c == WorkloadClass::high ? pools[cc].high : pools[cc].low).push_back(i);
  }

  BalancedDataset out;
  out.split.seed = seed;
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& [cc, pool] : pools) {
    ComplaintBalance cb;
    cb.complaint = cc;
    cb.available_high = pool.high.size();
    cb.available_low = pool.low.size();
    const std::size_t m = std::min(pool.high.size(), pool.low.size());
    cb.retained_per_class = m;
    cb.excluded = m == 0;
    out.per_complaint.push_back(cb);
    if (m == 0) continue;
    for (auto* v : {&pool.high, &pool.low}) {
      std::sort(v->begin(), v->end(),
                [&](std::size_t a, std::size_t b) { return notes[a].note_id < notes[b].note_id; });
      rng.shuffle(*v);
      chosen.insert(chosen.end(), v->begin(), v->begin() + static_cast<std::ptrdiff_t>(m));
    }
    for (std::size_t k = 0; k < m; ++k) {
      out.note_class[notes[pool.high[k]].note_id] = WorkloadClass::high;
      out.note_class[notes[pool.low[k]].note_id] = WorkloadClass::low;
    }
  }

  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (std::size_t i : chosen) by_patient[notes[i].patient_id].push_back(i);
  std::vector<std::string> patients;
  patients.reserve(by_patient.size());
  for (const auto& [p, _] : by_patient) patients.push_back(p);
  rng.shuffle(patients);
  const auto target = static_cast<std::size_t>(std::llround(options.train_fraction *
                                                            static_cast<double>(chosen.size())));
  std::size_t in_train = 0;
  for (const auto& p : patients) {
    auto& dest = in_train < target ? out.split.train_note_ids : out.split.heldout_note_ids;
    const bool to_train = in_train < target;
    for (std::size_t i : by_patient[p]) {
      dest.push_back(notes[i].note_id);
      if (to_train) ++in_train;
    }
  }
  std::sort(out.split.train_note_ids.begin(), out.split.train_note_ids.end());
  std::sort(out.split.heldout_note_ids.begin(), out.split.heldout_note_ids.end());
  return out;
}

}  // namespace fatlens::corpus
