#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace fatlens {

// Seconds since the Unix epoch, UTC.
using EpochSeconds = std::int64_t;

// Parses RFC 3339 ("2011-03-04T08:15:00Z", "...-05:00", fractional seconds
// allowed) plus the space-separated variant. Seconds are truncated to the
// minute. Throws Error(data) on malformed input.
EpochSeconds parse_timestamp(std::string_view text);

// Always emits UTC with a trailing 'Z'.
std::string format_timestamp(EpochSeconds t);

struct LocalTime {
  std::int64_t day_number = 0;  // days since 1970-01-01 in local time
  int year = 1970;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int weekday = 0;       // 0 = Monday
  int week_of_year = 1;  // 1..53, day_of_year / 7 + 1
  double fractional_hour() const { return hour + minute / 60.0; }
};

// Calendar conversion for a declared zone: "UTC", a fixed offset ("+05:30",
// "UTC-04:00"), or an IANA name resolved through the system zoneinfo.
class TimeZone {
 public:
  static TimeZone from_name(const std::string& name);
  static TimeZone utc() { return from_name("UTC"); }

  LocalTime to_local(EpochSeconds t) const;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  bool fixed_ = true;
  std::int64_t offset_seconds_ = 0;
};

LocalTime civil_from_epoch(EpochSeconds local_seconds);

}  // namespace fatlens
