#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace hpgkit {

/// String <-> id table. Specials come first in the order given.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens);

  /// Specials, then every counted token with count >= min_count, ordered by
  /// descending count and then lexicographically.
  static Vocab build(const std::map<std::string, std::size_t>& counts, std::size_t min_count,
                     const std::vector<std::string>& specials);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<int> find(const std::string& token) const;
  /// Id of `token`, or of the unknown-token special when absent.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return find(token).has_value(); }

  nlohmann::json to_json() const { return tokens_; }
  static Vocab from_json(const nlohmann::json& j);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

inline constexpr const char* kUnk = "<UNK>";
inline constexpr const char* kBos = "<BOS>";
inline constexpr const char* kEos = "<EOS>";

}  // namespace hpgkit
