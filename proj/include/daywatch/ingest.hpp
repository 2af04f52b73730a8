// Parsing of multi-domain audit CSVs and aggregation into per-user,
// per-day ordered activity sequences.

#pragma once

#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "daywatch/calendar.hpp"
#include "daywatch/tokens.hpp"

namespace daywatch::ingest {

enum class Domain { Logon, Device, Http, Email, File };

std::string_view domain_name(Domain d);
std::optional<Domain> try_domain_from_string(std::string_view name);

// A required header column is missing.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A data row could not be parsed; carries the 1-based line number.
struct RowError : std::runtime_error {
  RowError(const std::string& what, std::size_t line_number)
      : std::runtime_error(what), line(line_number) {}
  std::size_t line;
};

struct AuditEvent {
  std::string event_id;
  DateTime timestamp;
  std::string user_id;
  EventToken token = EventToken::Logon;
};

struct UserDaySequence {
  std::string user_id;
  Date day;
  std::vector<EventToken> tokens;       // ordered by (timestamp, event_id)
  std::optional<bool> label;            // true: day contains >=1 malicious event
};

// (user_id, day) pairs marked malicious in the evaluation sidecar.
using LabelSet = std::set<std::pair<std::string, Date>>;

// Reads one domain CSV. Column positions come from the header row: every
// domain needs id/date/user, logon and device additionally need activity.
// http/email/file rows map to their fixed token.
std::vector<AuditEvent> parse_domain_csv(const std::string& path, Domain domain);

// Groups events into per-user calendar-day sequences, tokens ordered by
// timestamp with event_id as tie break, output sorted by (user, day).
// With a label set, label is true iff (user, day) is listed; without one,
// labels stay unset.
std::vector<UserDaySequence> aggregate_user_days(std::span<const AuditEvent> events,
                                                 const LabelSet* labels = nullptr);

// Label sidecar: header "user,day", day formatted YYYY-MM-DD.
LabelSet read_label_sidecar(const std::string& path);
void write_label_sidecar(const std::string& path, const LabelSet& labels);

// Canonical sequence file: header "user,day,tokens", tokens space separated.
void write_sequences_csv(const std::string& path, std::span<const UserDaySequence> sequences);
std::vector<UserDaySequence> read_sequences_csv(const std::string& path);

// Re-applies an evaluation label set to already-built sequences.
void apply_labels(std::vector<UserDaySequence>& sequences, const LabelSet& labels);

}  // namespace daywatch::ingest
