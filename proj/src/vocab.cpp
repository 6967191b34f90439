#include "hpgkit/vocab.hpp"

#include <algorithm>

#include "hpgkit/error.hpp"

namespace hpgkit {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw Error("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

Vocab Vocab::build(const std::map<std::string, std::size_t>& counts, std::size_t min_count,
                   const std::vector<std::string>& specials) {
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count && std::find(specials.begin(), specials.end(), tok) == specials.end()) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = specials;
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocab(std::move(tokens));
}

std::optional<int> Vocab::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocab::id(const std::string& token) const {
  if (auto f = find(token)) return *f;
  if (auto u = find(kUnk)) return *u;
  throw Error("token '" + token + "' not in vocabulary and no " + std::string(kUnk) + " entry");
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("vocabulary must be a JSON array");
  return Vocab(j.get<std::vector<std::string>>());
}

}  // namespace hpgkit
