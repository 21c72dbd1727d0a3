#include "fatlens/timeutil.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <mutex>

#include "fatlens/common.hpp"

namespace fatlens {
namespace {

int read_digits(std::string_view s, std::size_t& pos, int count) {
  int value = 0;
  for (int i = 0; i < count; ++i) {
    if (pos >= s.size() || s[pos] < '0' || s[pos] > '9')
      fail(ErrorKind::data, "malformed timestamp '" + std::string(s) + "'");
    value = value * 10 + (s[pos] - '0');
    ++pos;
  }
  return value;
}

void expect_char(std::string_view s, std::size_t& pos, char c) {
  if (pos >= s.size() || s[pos] != c)
    fail(ErrorKind::data, "malformed timestamp '" + std::string(s) + "'");
  ++pos;
}

std::int64_t days_from_civil(int y, int m, int d) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) fail(ErrorKind::data, "invalid calendar date");
  return sys_days{ymd}.time_since_epoch().count();
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool parse_offset(std::string_view s, std::int64_t& seconds) {
  if (s.empty() || (s[0] != '+' && s[0] != '-')) return false;
  const int sign = s[0] == '-' ? -1 : 1;
  std::size_t pos = 1;
  try {
    const int hh = read_digits(s, pos, 2);
    int mm = 0;
    if (pos < s.size()) {
      if (s[pos] == ':') ++pos;
      mm = read_digits(s, pos, 2);
    }
    if (pos != s.size() || hh > 23 || mm > 59) return false;
    seconds = sign * (hh * 3600 + mm * 60);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::mutex& tz_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

EpochSeconds parse_timestamp(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  std::size_t pos = 0;
  const int y = read_digits(s, pos, 4);
  expect_char(s, pos, '-');
  const int mo = read_digits(s, pos, 2);
  expect_char(s, pos, '-');
  const int d = read_digits(s, pos, 2);
  if (pos >= s.size() || (s[pos] != 'T' && s[pos] != 't' && s[pos] != ' '))
    fail(ErrorKind::data, "malformed timestamp '" + std::string(s) + "'");
  ++pos;
  const int hh = read_digits(s, pos, 2);
  expect_char(s, pos, ':');
  const int mi = read_digits(s, pos, 2);
  int ss = 0;
  if (pos < s.size() && s[pos] == ':') {
    ++pos;
    ss = read_digits(s, pos, 2);
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    }
  }
  if (hh > 23 || mi > 59 || ss > 60)
    fail(ErrorKind::data, "timestamp out of range '" + std::string(s) + "'");
  std::int64_t offset = 0;
  const std::string_view rest = s.substr(pos);
  if (rest == "Z" || rest == "z" || rest.empty()) {
    offset = 0;
  } else if (!parse_offset(rest, offset)) {
    fail(ErrorKind::data, "malformed timestamp offset '" + std::string(s) + "'");
  }
  const std::int64_t local = days_from_civil(y, mo, d) * 86400 + hh * 3600 + mi * 60;
  return local - offset;
}

std::string format_timestamp(EpochSeconds t) {
  const LocalTime lt = civil_from_epoch(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:00Z", lt.year, lt.month,
                lt.day, lt.hour, lt.minute);
  return buf;
}

LocalTime civil_from_epoch(EpochSeconds s) {
  using namespace std::chrono;
  LocalTime out;
  out.day_number = floor_div(s, 86400);
  const std::int64_t secs = s - out.day_number * 86400;
  const sys_days sd{days{out.day_number}};
  const year_month_day ymd{sd};
  out.year = static_cast<int>(ymd.year());
  out.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
  out.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
  out.hour = static_cast<int>(secs / 3600);
  out.minute = static_cast<int>((secs % 3600) / 60);
  out.weekday = static_cast<int>(weekday{sd}.iso_encoding()) - 1;
  const auto jan1 = sys_days{ymd.year() / January / 1};
  out.week_of_year = static_cast<int>((sd - jan1).count() / 7) + 1;
  return out;
}

TimeZone TimeZone::from_name(const std::string& name) {
  TimeZone tz;
  tz.name_ = name;
  if (name.empty() || name == "UTC" || name == "Z" || name == "GMT") return tz;
  std::string_view v = name;
  if (v.rfind("UTC", 0) == 0) v.remove_prefix(3);
  std::int64_t off = 0;
  if (parse_offset(v, off)) {
    tz.offset_seconds_ = off;
    return tz;
  }
  const std::filesystem::path zi = std::filesystem::path("/usr/share/zoneinfo") / name;
  if (name.find("..") != std::string::npos || !std::filesystem::is_regular_file(zi))
    fail(ErrorKind::config, "unknown timezone '" + name + "'");
  tz.fixed_ = false;
  return tz;
}

LocalTime TimeZone::to_local(EpochSeconds t) const {
  if (fixed_) return civil_from_epoch(t + offset_seconds_);
  std::lock_guard<std::mutex> lock(tz_mutex());
  const char* old = std::getenv("TZ");
  const std::string saved = old ? old : "";
  ::setenv("TZ", name_.c_str(), 1);
  ::tzset();
  std::tm tm{};
  const std::time_t tt = static_cast<std::time_t>(t);
  ::localtime_r(&tt, &tm);
  const std::int64_t off = tm.tm_gmtoff;
  if (old) ::setenv("TZ", saved.c_str(), 1); else ::unsetenv("TZ");
  ::tzset();
  return civil_from_epoch(t + off);
}

}  // namespace fatlens
