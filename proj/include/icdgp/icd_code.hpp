#pragma once

#include <cctype>
#include <compare>
#include <string>
#include <string_view>

#include "icdgp/errors.hpp"

namespace icdgp {

/// Default maximum code length: ICD-10 codes run three to seven characters.
inline constexpr int kDefaultMaxCodeLength = 7;

/// A validated diagnosis code: a letter followed by letters or digits,
/// canonicalized to upper case, at most `max_length` characters.
class IcdCode {
 public:
  static IcdCode parse(std::string_view raw, int max_length = kDefaultMaxCodeLength) {
    if (raw.empty()) throw EmptyCodeError();
    if (static_cast<int>(raw.size()) > max_length)
      throw CodeTooLongError(std::string(raw), max_length);
    std::string text;
    text.reserve(raw.size());
    for (char ch : raw) {
      const unsigned char u = static_cast<unsigned char>(ch);
      if (!std::isalnum(u)) throw InvalidCharacterError(std::string(raw));
      text.push_back(static_cast<char>(std::toupper(u)));
    }
    if (!std::isalpha(static_cast<unsigned char>(text.front())))
      throw InvalidFirstCharacterError(std::string(raw));
    return IcdCode(std::move(text));
  }

  const std::string& text() const { return text_; }
  int length() const { return static_cast<int>(text_.size()); }

  /// Length-`position` prefix, saturating to the whole code past its end.
  std::string_view saturated_prefix(int position) const {
    const int len = position < length() ? position : length();
    return std::string_view(text_).substr(0, static_cast<std::size_t>(len));
  }

  auto operator<=>(const IcdCode&) const = default;

 private:
  explicit IcdCode(std::string text) : text_(std::move(text)) {}
  std::string text_;
};

inline IcdCode parse_code(std::string_view raw, int max_length = kDefaultMaxCodeLength) {
  return IcdCode::parse(raw, max_length);
}

/// One entry of the prefix feature map: the code, a position within
/// 1..max_length, and the saturated prefix value at that position.
struct SaturatedPrefix {
  IcdCode code;
  int position;
  std::string value;
};

inline SaturatedPrefix saturated_prefix(const IcdCode& code, int position) {
  return SaturatedPrefix{code, position, std::string(code.saturated_prefix(position))};
}

}  // namespace icdgp
