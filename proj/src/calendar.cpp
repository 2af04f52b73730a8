#include "daywatch/calendar.hpp"

#include <cstdio>

namespace daywatch {

namespace {

bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                  std::chrono::day{day}};
  if (!ymd.ok()) {
    throw std::invalid_argument("invalid calendar day: " + std::to_string(year) + "-" +
                                std::to_string(month) + "-" + std::to_string(day));
  }
  return Date{std::chrono::sys_days{ymd}};
}

Date Date::parse(std::string_view text) {
  int y = 0, m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
      !parse_fixed_uint(text, 0, 4, y) || !parse_fixed_uint(text, 5, 2, m) ||
      !parse_fixed_uint(text, 8, 2, d)) {
    throw std::invalid_argument("expected YYYY-MM-DD date, got \"" + std::string(text) + "\"");
  }
  return from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

std::string Date::to_string() const {
  std::chrono::year_month_day ymd{days_};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

bool Date::is_weekday() const {
  auto wd = weekday();
  return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

DateTime::DateTime(Date date, int second_of_day) : date_(date), sec_(second_of_day) {
  if (sec_ < 0 || sec_ >= 86400) {
    throw std::invalid_argument("second of day out of range: " + std::to_string(second_of_day));
  }
}

DateTime DateTime::parse(std::string_view text) {
  // MM/DD/YYYY HH:MM:SS
  int mo = 0, dy = 0, yr = 0, h = 0, mi = 0, se = 0;
  bool shape = text.size() == 19 && text[2] == '/' && text[5] == '/' && text[10] == ' ' &&
               text[13] == ':' && text[16] == ':';
  if (!shape || !parse_fixed_uint(text, 0, 2, mo) || !parse_fixed_uint(text, 3, 2, dy) ||
      !parse_fixed_uint(text, 6, 4, yr) || !parse_fixed_uint(text, 11, 2, h) ||
      !parse_fixed_uint(text, 14, 2, mi) || !parse_fixed_uint(text, 17, 2, se)) {
    throw std::invalid_argument("expected MM/DD/YYYY HH:MM:SS timestamp, got \"" +
                                std::string(text) + "\"");
  }
  if (h > 23 || mi > 59 || se > 59) {
    throw std::invalid_argument("time of day out of range in \"" + std::string(text) + "\"");
  }
  Date date = Date::from_ymd(yr, static_cast<unsigned>(mo), static_cast<unsigned>(dy));
  return DateTime{date, h * 3600 + mi * 60 + se};
}

std::string DateTime::to_string() const {
  std::chrono::year_month_day ymd{date_.sys()};
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%02u/%02u/%04d %02d:%02d:%02d",
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(ymd.year()), sec_ / 3600, (sec_ / 60) % 60, sec_ % 60);
  return buf;
}

DateTime DateTime::plus_seconds(int n) const {
  long long total = static_cast<long long>(sec_) + n;
  long long day_shift = total >= 0 ? total / 86400 : (total - 86399) / 86400;
  int sec = static_cast<int>(total - day_shift * 86400);
  return DateTime{date_.plus_days(static_cast<int>(day_shift)), sec};
}

}  // namespace daywatch
