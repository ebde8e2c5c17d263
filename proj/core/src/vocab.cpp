#include "ssfo/vocab.hpp"

#include "ssfo/errors.hpp"

namespace ssfo {

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenId bos, TokenId eos,
                       TokenId sep, TokenId idk)
    : tokens_(std::move(tokens)), bos_(bos), eos_(eos), sep_(sep), idk_(idk) {
  if (tokens_.size() < 4) {
    throw vocab_error("vocabulary needs at least the four special tokens");
  }
  for (TokenId id = 0; id < size(); ++id) {
    auto [it, inserted] = index_.emplace(tokens_[static_cast<std::size_t>(id)], id);
    if (!inserted) {
      throw vocab_error("duplicate token string: " + tokens_[static_cast<std::size_t>(id)]);
    }
  }
  const TokenId specials[4] = {bos_, eos_, sep_, idk_};
  for (TokenId s : specials) {
    if (!contains(s)) {
      throw vocab_error("special token id out of range");
    }
  }
  if (bos_ == eos_ || bos_ == sep_ || bos_ == idk_ || eos_ == sep_ || eos_ == idk_ ||
      sep_ == idk_) {
    throw vocab_error("special token ids must be distinct");
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) {
    throw vocab_error("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

}  // namespace ssfo
