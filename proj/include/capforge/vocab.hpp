#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace capforge {

using TokenId = std::int32_t;
using TokenList = std::vector<std::string>;
using IdSequence = std::vector<TokenId>;

inline constexpr std::string_view kEndToken = "<end>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr int kDefaultMaxCaptionLen = 50;
inline constexpr int kDefaultMinCount = 5;

struct CaptionRecord {
  std::string image_id;
  TokenList tokens;
};

// Lowercases, drops the characters .,!?;:"() and splits on whitespace.
TokenList tokenize(std::string_view text);

// Immutable token <-> id map. Ids are dense: the two specials come first,
// then corpus tokens by descending count, ties in lexicographic order.
class Vocabulary {
 public:
  struct Entry {
    std::string token;
    std::int64_t count = 0;
  };

  // Entries in id order. The first two must be <end> and <unk>.
  explicit Vocabulary(std::vector<Entry> entries);

  std::size_t size() const { return entries_.size(); }
  TokenId end_id() const { return end_id_; }
  TokenId unk_id() const { return unk_id_; }

  // unk_id() for tokens not in the vocabulary.
  TokenId id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::int64_t count(TokenId id) const;
  const std::vector<Entry>& entries() const { return entries_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  TokenId end_id_ = 0;
  TokenId unk_id_ = 1;
};

inline bool operator==(const Vocabulary::Entry& a, const Vocabulary::Entry& b) {
  return a.token == b.token && a.count == b.count;
}

// The begin-of-sequence input w_0 reuses the <end> entry, so the output
// vocabulary needs no extra never-predicted row.
inline TokenId start_id(const Vocabulary& vocab) { return vocab.end_id(); }

Vocabulary build_vocab(const std::vector<CaptionRecord>& corpus, int min_count);

// Truncates to max_len tokens and appends <end>.
IdSequence encode(const TokenList& tokens, const Vocabulary& vocab, int max_len);

// Tokens before the first <end>. Throws CorruptInputError on ids out of range.
TokenList decode_ids(const IdSequence& ids, const Vocabulary& vocab);

std::string join_tokens(const TokenList& tokens);

// `image_id<TAB>caption text` per line. Blank lines and lines starting
// with '#' are skipped. Empty captions are a ParseError unless allow_empty.
std::vector<CaptionRecord> parse_corpus(std::string_view text, bool allow_empty = false);
std::vector<CaptionRecord> read_corpus(const std::filesystem::path& path, bool allow_empty = false);

std::string format_vocab(const Vocabulary& vocab);
Vocabulary parse_vocab(std::string_view text);
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path);

}  // namespace capforge
