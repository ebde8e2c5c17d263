#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ssfo {

using TokenId = std::int32_t;

// Token inventory with four reserved specials: BOS, EOS, a context/query
// separator, and a refusal token. Ids are positions in the token list.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, TokenId bos, TokenId eos, TokenId sep,
             TokenId idk);

  TokenId size() const { return static_cast<TokenId>(tokens_.size()); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> id_of(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  TokenId sep() const { return sep_; }
  TokenId idk() const { return idk_; }

  bool contains(TokenId id) const { return id >= 0 && id < size(); }
  bool is_special(TokenId id) const {
    return id == bos_ || id == eos_ || id == sep_ || id == idk_;
  }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && bos_ == other.bos_ && eos_ == other.eos_ &&
           sep_ == other.sep_ && idk_ == other.idk_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId bos_, eos_, sep_, idk_;
};

}  // namespace ssfo
