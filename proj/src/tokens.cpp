#include "daywatch/tokens.hpp"

namespace daywatch {

std::string_view to_string(EventToken token) {
  switch (token) {
    case EventToken::Logon: return "Logon";
    case EventToken::Logoff: return "Logoff";
    case EventToken::Http: return "Http";
    case EventToken::Email: return "Email";
    case EventToken::File: return "File";
    case EventToken::Connect: return "Connect";
    case EventToken::Disconnect: return "Disconnect";
  }
  throw std::logic_error("corrupt EventToken value");
}

std::optional<EventToken> try_token_from_string(std::string_view text) {
  for (EventToken t : kAllTokens) {
    if (text == to_string(t)) return t;
  }
  return std::nullopt;
}

EventToken token_from_string(std::string_view text) {
  if (auto t = try_token_from_string(text)) return *t;
  throw VocabularyError("activity \"" + std::string(text) +
                        "\" is not in the 7-token vocabulary");
}

}  // namespace daywatch
