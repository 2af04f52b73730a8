#include "daywatch/hash.hpp"

namespace daywatch {

std::string user_file_tag(std::string_view user_id) {
  std::string safe;
  safe.reserve(user_id.size());
  for (char c : user_id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_';
    safe.push_back(ok ? c : '_');
    if (safe.size() >= 40) break;
  }
  if (safe.empty()) safe = "user";

  char hex[17];
  std::uint64_t h = fnv1a64(user_id);
  static constexpr char digits[] = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    hex[i] = digits[h & 0xF];
    h >>= 4;
  }
  hex[16] = '\0';
  return safe + "-" + hex;
}

}  // namespace daywatch
