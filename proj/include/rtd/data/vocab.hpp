#pragma once

#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rtd/core/tensor.hpp"

namespace rtd::data {

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr std::size_t kNumSpecial = 5;

// Lowercases and splits on whitespace; every ASCII punctuation character is
// its own token. Bytes >= 0x80 are treated as word characters.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  Vocab();

  // Frequency-ranked (ties broken lexicographically) after the fixed specials.
  // `max_size` counts the specials. Throws DataError on an empty corpus.
  static Vocab build(std::istream& corpus, std::size_t max_size, std::size_t min_freq = 1);
  static Vocab build(std::span<const std::string> documents, std::size_t max_size, std::size_t min_freq = 1);
  // Regular tokens in id order (specials are implicit).
  static Vocab from_tokens(std::vector<std::string> tokens);

  // Vocab file: "# special <TOKEN> <id>" header lines, then one token per line;
  // the i-th token line (0-based) has id kNumSpecial + i.
  static Vocab parse(std::string_view text);
  std::string serialize() const;
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  static bool is_special(TokenId id) { return id >= 0 && static_cast<std::size_t>(id) < kNumSpecial; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace rtd::data
