// Minimal CSV reading/writing: comma separated, double-quote quoting,
// quoted fields may contain commas, newlines and doubled quotes.

#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace daywatch::csv {

// Streaming row reader. Tracks the 1-based line number a row started on.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Reads the next record into `fields`. Returns false at end of input.
  bool next(std::vector<std::string>& fields);

  std::size_t line() const { return row_start_line_; }

 private:
  std::istream& in_;
  std::size_t current_line_ = 1;
  std::size_t row_start_line_ = 1;
};

std::string escape_field(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Case-sensitive position of `name` in a header row, if present.
std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                       std::string_view name);

}  // namespace daywatch::csv
