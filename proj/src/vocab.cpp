#include "capforge/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <string_view>

#include "capforge/error.hpp"
#include "capforge/text_io.hpp"

namespace capforge {

namespace {

constexpr std::string_view kStripChars = ".,!?;:\"()";
constexpr std::string_view kVocabHeader = "# capforge vocab v";

}  // namespace

TokenList tokenize(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    if (kStripChars.find(ch) != std::string_view::npos) continue;
    cleaned.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return split_ws(cleaned);
}

Vocabulary::Vocabulary(std::vector<Entry> entries) : entries_(std::move(entries)) {
  if (entries_.size() < 2 || entries_[0].token != kEndToken || entries_[1].token != kUnkToken) {
    throw InvalidArgument("vocabulary must start with <end> and <unk>");
  }
  token_to_id_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto [it, inserted] = token_to_id_.emplace(entries_[i].token, static_cast<TokenId>(i));
    if (!inserted) throw InvalidArgument("duplicate vocabulary token '" + entries_[i].token + "'");
  }
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? unk_id_ : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entries_.size()) {
    throw CorruptInputError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                            std::to_string(entries_.size()));
  }
  return entries_[static_cast<std::size_t>(id)].token;
}

std::int64_t Vocabulary::count(TokenId id) const {
  token(id);
  return entries_[static_cast<std::size_t>(id)].count;
}

bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.entries_ == b.entries_; }

Vocabulary build_vocab(const std::vector<CaptionRecord>& corpus, int min_count) {
  if (min_count < 1) throw InvalidArgument("min_count must be >= 1");
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& record : corpus) {
    for (const auto& tok : record.tokens) ++counts[tok];
  }
  std::vector<Vocabulary::Entry> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && tok != kEndToken && tok != kUnkToken) kept.push_back({tok, n});
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.count != b.count ? a.count > b.count : a.token < b.token;
  });
  std::vector<Vocabulary::Entry> entries;
  entries.reserve(kept.size() + 2);
  entries.push_back({std::string(kEndToken), 0});
  entries.push_back({std::string(kUnkToken), 0});
  entries.insert(entries.end(), kept.begin(), kept.end());
  return Vocabulary(std::move(entries));
}

IdSequence encode(const TokenList& tokens, const Vocabulary& vocab, int max_len) {
  if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
  const std::size_t n = std::min(tokens.size(), static_cast<std::size_t>(max_len));
  IdSequence ids;
  ids.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(vocab.id_of(tokens[i]));
  ids.push_back(vocab.end_id());
  return ids;
}

TokenList decode_ids(const IdSequence& ids, const Vocabulary& vocab) {
  TokenList out;
  for (TokenId id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == vocab.end_id()) break;
    out.push_back(tok);
  }
  return out;
}

std::string join_tokens(const TokenList& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<CaptionRecord> parse_corpus(std::string_view text, bool allow_empty) {
  std::vector<CaptionRecord> records;
  std::size_t lineno = 0;
  for (const auto& line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError("caption line " + std::to_string(lineno) + ": missing TAB after image id");
    }
    CaptionRecord rec{std::string(trim(std::string_view(line).substr(0, tab))), tokenize(line.substr(tab + 1))};
    if (rec.image_id.empty()) throw ParseError("caption line " + std::to_string(lineno) + ": empty image id");
    if (rec.tokens.empty() && !allow_empty) {
      throw ParseError("caption line " + std::to_string(lineno) + ": empty caption for image " + rec.image_id);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CaptionRecord> read_corpus(const std::filesystem::path& path, bool allow_empty) {
  return parse_corpus(read_file(path), allow_empty);
}

std::string format_vocab(const Vocabulary& vocab) {
  std::string out(kVocabHeader);
  out += kVersion;
  out += '\n';
  const auto& entries = vocab.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out += std::to_string(i) + '\t' + entries[i].token + '\t' + std::to_string(entries[i].count) + '\n';
  }
  return out;
}

Vocabulary parse_vocab(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || !lines[0].starts_with(kVocabHeader)) throw ParseError("vocabulary file: missing header");
  if (std::string_view(lines[0]).substr(kVocabHeader.size()) != kVersion) {
    throw VersionError("vocabulary file: unsupported version line '" + lines[0] + "'");
  }
  std::vector<Vocabulary::Entry> entries;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto t1 = lines[i].find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : lines[i].find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ParseError("vocabulary line " + std::to_string(i + 1) + ": expected 3 fields");
    const auto id = parse_int(std::string_view(lines[i]).substr(0, t1), "vocabulary id");
    if (id != static_cast<std::int64_t>(entries.size())) {
      throw ParseError("vocabulary line " + std::to_string(i + 1) + ": ids must be contiguous from 0");
    }
    entries.push_back({lines[i].substr(t1 + 1, t2 - t1 - 1),
                       parse_int(std::string_view(lines[i]).substr(t2 + 1), "vocabulary count")});
  }
  try {
    return Vocabulary(std::move(entries));
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("vocabulary file: ") + e.what());
  }
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  write_file_atomic(path, format_vocab(vocab));
}

Vocabulary load_vocab(const std::filesystem::path& path) { return parse_vocab(read_file(path)); }

}  // namespace capforge
