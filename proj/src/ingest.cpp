#include "daywatch/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "daywatch/csv.hpp"

namespace daywatch::ingest {

std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::Logon: return "logon";
    case Domain::Device: return "device";
    case Domain::Http: return "http";
    case Domain::Email: return "email";
    case Domain::File: return "file";
  }
  throw std::logic_error("corrupt Domain value");
}

std::optional<Domain> try_domain_from_string(std::string_view name) {
  for (Domain d : {Domain::Logon, Domain::Device, Domain::Http, Domain::Email, Domain::File}) {
    if (name == domain_name(d)) return d;
  }
  return std::nullopt;
}

namespace {

std::size_t require_column(const std::vector<std::string>& header, std::string_view name,
                           const std::string& path) {
  if (auto pos = csv::find_column(header, name)) return *pos;
  throw SchemaError("missing required column \"" + std::string(name) + "\" in header of " + path);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

}  // namespace

std::vector<AuditEvent> parse_domain_csv(const std::string& path, Domain domain) {
  std::ifstream in = open_or_throw(path);
  csv::Reader reader(in);

  std::vector<std::string> header;
  if (!reader.next(header)) throw SchemaError("empty file, expected a header row: " + path);

  const std::size_t id_col = require_column(header, "id", path);
  const std::size_t date_col = require_column(header, "date", path);
  const std::size_t user_col = require_column(header, "user", path);
  const bool has_activity = domain == Domain::Logon || domain == Domain::Device;
  const std::size_t activity_col = has_activity ? require_column(header, "activity", path) : 0;
  const std::size_t min_cols =
      std::max({id_col, date_col, user_col, has_activity ? activity_col : 0}) + 1;

  EventToken fixed_token = EventToken::Http;
  if (domain == Domain::Email) fixed_token = EventToken::Email;
  if (domain == Domain::File) fixed_token = EventToken::File;

  std::vector<AuditEvent> events;
  std::vector<std::string> row;
  while (reader.next(row)) {
    const std::size_t line = reader.line();
    if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
    if (row.size() < min_cols) {
      throw RowError("row has " + std::to_string(row.size()) + " fields, expected at least " +
                         std::to_string(min_cols) + " (" + path + ":" + std::to_string(line) + ")",
                     line);
    }

    AuditEvent ev;
    ev.event_id = row[id_col];
    ev.user_id = row[user_col];
    if (ev.user_id.empty()) {
      throw RowError("empty user id (" + path + ":" + std::to_string(line) + ")", line);
    }
    try {
      ev.timestamp = DateTime::parse(row[date_col]);
    } catch (const std::invalid_argument& e) {
      throw RowError(std::string(e.what()) + " (" + path + ":" + std::to_string(line) + ")", line);
    }
    if (has_activity) {
      ev.token = token_from_string(row[activity_col]);
      if (domain == Domain::Logon && ev.token != EventToken::Logon &&
          ev.token != EventToken::Logoff) {
        throw VocabularyError("activity \"" + row[activity_col] + "\" is not a logon-domain token");
      }
      if (domain == Domain::Device && ev.token != EventToken::Connect &&
          ev.token != EventToken::Disconnect) {
        throw VocabularyError("activity \"" + row[activity_col] +
                              "\" is not a device-domain token");
      }
    } else {
      ev.token = fixed_token;
    }
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<UserDaySequence> aggregate_user_days(std::span<const AuditEvent> events,
                                                 const LabelSet* labels) {
  struct DayEvent {
    DateTime timestamp;
    const std::string* event_id;
    EventToken token;
  };
  std::map<std::pair<std::string, Date>, std::vector<DayEvent>> groups;
  for (const AuditEvent& ev : events) {
    groups[{ev.user_id, ev.timestamp.date()}].push_back(
        DayEvent{ev.timestamp, &ev.event_id, ev.token});
  }

  std::vector<UserDaySequence> out;
  out.reserve(groups.size());
  for (auto& [key, day_events] : groups) {
    std::stable_sort(day_events.begin(), day_events.end(),
                     [](const DayEvent& a, const DayEvent& b) {
                       if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                       return *a.event_id < *b.event_id;
                     });
    UserDaySequence seq;
    seq.user_id = key.first;
    seq.day = key.second;
    seq.tokens.reserve(day_events.size());
    for (const DayEvent& de : day_events) seq.tokens.push_back(de.token);
    if (labels) seq.label = labels->contains(key);
    out.push_back(std::move(seq));
  }
  // std::map already yields (user, day) order.
  return out;
}

LabelSet read_label_sidecar(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw SchemaError("empty label sidecar: " + path);
  const std::size_t user_col = require_column(header, "user", path);
  const std::size_t day_col = require_column(header, "day", path);

  LabelSet labels;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() <= std::max(user_col, day_col)) {
      throw RowError("short row in label sidecar (" + path + ":" +
                         std::to_string(reader.line()) + ")",
                     reader.line());
    }
    try {
      labels.emplace(row[user_col], Date::parse(row[day_col]));
    } catch (const std::invalid_argument& e) {
      throw RowError(std::string(e.what()) + " (" + path + ":" + std::to_string(reader.line()) +
                         ")",
                     reader.line());
    }
  }
  return labels;
}

void write_label_sidecar(const std::string& path, const LabelSet& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "user,day\n";
  for (const auto& [user, day] : labels) {
    csv::write_row(out, {user, day.to_string()});
  }
}

void write_sequences_csv(const std::string& path, std::span<const UserDaySequence> sequences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "user,day,tokens\n";
  std::string joined;
  for (const UserDaySequence& seq : sequences) {
    joined.clear();
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      if (i > 0) joined.push_back(' ');
      joined += to_string(seq.tokens[i]);
    }
    csv::write_row(out, {seq.user_id, seq.day.to_string(), joined});
  }
}

std::vector<UserDaySequence> read_sequences_csv(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw SchemaError("empty sequence file: " + path);
  const std::size_t user_col = require_column(header, "user", path);
  const std::size_t day_col = require_column(header, "day", path);
  const std::size_t tokens_col = require_column(header, "tokens", path);

  std::vector<UserDaySequence> out;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() <= std::max({user_col, day_col, tokens_col})) {
      throw RowError("short row in sequence file (" + path + ":" +
                         std::to_string(reader.line()) + ")",
                     reader.line());
    }
    UserDaySequence seq;
    seq.user_id = row[user_col];
    seq.day = Date::parse(row[day_col]);
    std::istringstream toks(row[tokens_col]);
    std::string tok;
    while (toks >> tok) seq.tokens.push_back(token_from_string(tok));
    if (seq.tokens.empty()) {
      throw RowError("empty token list (" + path + ":" + std::to_string(reader.line()) + ")",
                     reader.line());
    }
    out.push_back(std::move(seq));
  }
  return out;
}

void apply_labels(std::vector<UserDaySequence>& sequences, const LabelSet& labels) {
  for (UserDaySequence& seq : sequences) {
    seq.label = labels.contains({seq.user_id, seq.day});
  }
}

}  // namespace daywatch::ingest
