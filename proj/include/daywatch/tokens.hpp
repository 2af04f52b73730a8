// The closed activity vocabulary observed across the five audit domains.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace daywatch {

enum class EventToken : std::uint8_t {
  Logon = 0,
  Logoff,
  Http,
  Email,
  File,
  Connect,
  Disconnect,
};

inline constexpr std::size_t kVocabularySize = 7;

inline constexpr std::array<EventToken, kVocabularySize> kAllTokens = {
    EventToken::Logon, EventToken::Logoff,  EventToken::Http,      EventToken::Email,
    EventToken::File,  EventToken::Connect, EventToken::Disconnect};

// Raised when an activity string falls outside the 7-token vocabulary.
struct VocabularyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string_view to_string(EventToken token);
std::optional<EventToken> try_token_from_string(std::string_view text);

// Throws VocabularyError naming the offending string.
EventToken token_from_string(std::string_view text);

}  // namespace daywatch
