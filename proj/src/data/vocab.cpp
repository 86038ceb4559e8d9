#include "rtd/data/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "rtd/core/errors.hpp"

namespace rtd::data {

namespace {

constexpr const char* kSpecialNames[kNumSpecial] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
constexpr std::string_view kHeaderPrefix = "# special ";

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
bool is_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

Vocab::Vocab() {
  for (std::size_t i = 0; i < kNumSpecial; ++i) {
    tokens_.emplace_back(kSpecialNames[i]);
    index_.emplace(kSpecialNames[i], static_cast<TokenId>(i));
  }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  for (auto& t : tokens) {
    if (t.empty()) throw DataError("vocab: empty token");
    if (!v.index_.emplace(t, static_cast<TokenId>(v.tokens_.size())).second) {
      throw DataError("vocab: duplicate token '" + t + "'");
    }
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocab Vocab::build(std::span<const std::string> documents, std::size_t max_size, std::size_t min_freq) {
  if (max_size < kNumSpecial) throw ConfigError("vocab max_size must be at least " + std::to_string(kNumSpecial));
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& doc : documents) {
    for (auto& t : tokenize(doc)) {
      ++counts[std::move(t)];
      ++total;
    }
  }
  if (total == 0) throw DataError("cannot build vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) ranked.emplace_back(tok, n);
  }
  // std::map iteration is lexicographic, so a stable sort on count keeps the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - kNumSpecial);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(std::move(ranked[i].first));
  return from_tokens(std::move(tokens));
}

Vocab Vocab::build(std::istream& corpus, std::size_t max_size, std::size_t min_freq) {
  std::vector<std::string> docs;
  for (std::string line; std::getline(corpus, line);) docs.push_back(std::move(line));
  return build(docs, max_size, min_freq);
}

Vocab Vocab::parse(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  bool in_header = true;
  std::size_t specials_seen = 0;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (in_header && line.starts_with(kHeaderPrefix)) {
      std::istringstream hs(line.substr(kHeaderPrefix.size()));
      std::string name;
      std::size_t id = 0;
      if (!(hs >> name >> id) || id >= kNumSpecial || name != kSpecialNames[id]) {
        throw DataError("vocab file: bad special header '" + line + "'");
      }
      ++specials_seen;
      continue;
    }
    in_header = false;
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  if (specials_seen != kNumSpecial) throw DataError("vocab file: expected " + std::to_string(kNumSpecial) + " special headers");
  return from_tokens(std::move(tokens));
}

std::string Vocab::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < kNumSpecial; ++i) {
    out += std::string(kHeaderPrefix) + kSpecialNames[i] + " " + std::to_string(i) + "\n";
  }
  for (std::size_t i = kNumSpecial; i < tokens_.size(); ++i) out += tokens_[i] + "\n";
  return out;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open vocab file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write vocab file '" + path + "'");
  f << serialize();
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  RTD_REQUIRE(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), "token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

}  // namespace rtd::data
