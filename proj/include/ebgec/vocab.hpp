#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ebgec {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kNumReserved = 4;

std::vector<std::string> split_whitespace(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

// Closed word vocabulary. Ids 0..3 are PAD, BOS, EOS, UNK; surface text never
// maps onto them except UNK for out-of-vocabulary words.
class Vocab {
 public:
  Vocab();

  // Adds a surface token if absent; returns its id.
  TokenId add(const std::string& token);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size(); }

  TokenSeq encode(std::span<const std::string> tokens) const;
  TokenSeq tokenize(std::string_view text) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace ebgec
