#include "ebgec/vocab.hpp"

#include <fstream>

#include "ebgec/error.hpp"

namespace ebgec {

namespace {
const char* const kReserved[] = {"<pad>", "<s>", "</s>", "<unk>"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
}  // namespace

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocab::Vocab() {
  for (const char* t : kReserved) {
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

TokenId Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  // Reserved spellings typed by a user are still ordinary unknown words.
  if (it == index_.end() || it->second < kNumReserved) return kUnk;
  return it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) return tokens_[kUnk];
  return tokens_[id];
}

bool Vocab::contains(std::string_view token) const { return id(token) != kUnk; }

TokenSeq Vocab::encode(std::span<const std::string> tokens) const {
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

TokenSeq Vocab::tokenize(std::string_view text) const {
  const auto tokens = split_whitespace(text);
  return encode(tokens);
}

std::vector<std::string> Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(token(id));
  return out;
}

std::string Vocab::detokenize(std::span<const TokenId> ids) const {
  const auto tokens = decode(ids);
  return join_tokens(tokens);
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) fail(ErrorCode::io_error, "write failed for " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot read vocabulary " + path.string());
  Vocab vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no < kNumReserved) {
      if (line != kReserved[line_no]) {
        fail(ErrorCode::invalid_input, "vocabulary " + path.string() + ": line " +
                                           std::to_string(line_no + 1) + " must be " +
                                           kReserved[line_no]);
      }
    } else {
      if (line.empty() || vocab.index_.count(line)) {
        fail(ErrorCode::invalid_input, "vocabulary " + path.string() + ": bad or duplicate token on line " +
                                           std::to_string(line_no + 1));
      }
      vocab.add(line);
    }
    ++line_no;
  }
  if (line_no < kNumReserved) fail(ErrorCode::invalid_input, "vocabulary " + path.string() + " is truncated");
  return vocab;
}

}  // namespace ebgec
