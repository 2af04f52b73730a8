// Calendar dates and second-precision timestamps for audit logs.
//
// Dates are plain calendar days (no timezone arithmetic); timestamps are
// "MM/DD/YYYY HH:MM:SS" in the log's own clock.

#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace daywatch {

class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days d) : days_(d) {}

  // Throws std::invalid_argument on a non-existent calendar day.
  static Date from_ymd(int year, unsigned month, unsigned day);

  // Parses "YYYY-MM-DD".
  static Date parse(std::string_view text);

  std::string to_string() const;  // "YYYY-MM-DD"

  std::chrono::sys_days sys() const { return days_; }
  std::chrono::weekday weekday() const { return std::chrono::weekday{days_}; }
  bool is_weekday() const;

  Date plus_days(int n) const { return Date{days_ + std::chrono::days{n}}; }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

// A calendar timestamp with one-second resolution.
class DateTime {
 public:
  DateTime() = default;
  DateTime(Date date, int second_of_day);

  // Parses "MM/DD/YYYY HH:MM:SS"; throws std::invalid_argument with a
  // description of what failed.
  static DateTime parse(std::string_view text);

  std::string to_string() const;  // "MM/DD/YYYY HH:MM:SS"

  Date date() const { return date_; }
  int second_of_day() const { return sec_; }

  DateTime plus_seconds(int n) const;

  auto operator<=>(const DateTime&) const = default;

 private:
  Date date_{};
  int sec_ = 0;
};

}  // namespace daywatch
