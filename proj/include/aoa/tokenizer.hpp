#pragma once

// WordPiece tokenization shared by every reader.
//
// Text is split on whitespace into words. Inside a word, "@entityN" markers
// are cut out as atomic tokens; every remaining piece is tokenized greedily
// longest-match-first, with non-initial pieces carrying the "##" prefix. The
// cloze placeholder ("XXXX", or a literal "[MASK]") maps to the [MASK] token.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aoa {

enum class Segment : unsigned char { Context, Question, Special };

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kMask = "[MASK]";
inline constexpr std::string_view kPlaceholder = "XXXX";
inline constexpr std::string_view kContinuation = "##";
inline constexpr std::size_t kMaxWordChars = 100;

class VocabError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Vocab {
 public:
  Vocab() : Vocab(std::vector<std::string>{}) {}

  // Specials are prepended when absent; ids are line positions.
  explicit Vocab(std::vector<std::string> tokens) {
    std::vector<std::string> all;
    for (auto s : {kPad, kUnk, kCls, kSep, kMask}) {
      if (std::find(tokens.begin(), tokens.end(), s) == tokens.end()) all.emplace_back(s);
    }
    all.insert(all.end(), std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end()));
    tokens_ = std::move(all);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw VocabError("vocab: empty token at id " + std::to_string(i));
      if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
        throw VocabError("vocab: duplicate token '" + tokens_[i] + "'");
      }
    }
    pad_ = ids_.at(std::string(kPad));
    unk_ = ids_.at(std::string(kUnk));
    cls_ = ids_.at(std::string(kCls));
    sep_ = ids_.at(std::string(kSep));
    mask_ = ids_.at(std::string(kMask));
  }

  std::optional<int> find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view token) const { return find(token).has_value(); }
  int id_or_unk(std::string_view token) const { return find(token).value_or(unk_); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int pad() const { return pad_; }
  int unk() const { return unk_; }
  int cls() const { return cls_; }
  int sep() const { return sep_; }
  int mask() const { return mask_; }

  // One token per line, line number = id.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocab(std::move(tokens));
  }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int pad_ = 0, unk_ = 0, cls_ = 0, sep_ = 0, mask_ = 0;
};

struct TokenSeq {
  std::vector<int> ids;
  std::vector<Segment> segments;
  std::vector<Span> spans;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

struct EntityMention {
  std::string id;
  Span span;
  bool operator==(const EntityMention&) const = default;
};

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Byte length of the UTF-8 sequence starting with lead byte c (1 for invalid
// leads so iteration always advances).
inline std::size_t utf8_len(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;
}

// Byte offsets of code point starts, plus a terminal offset at s.size().
inline std::vector<std::size_t> char_offsets(std::string_view s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size();) {
    out.push_back(i);
    i += std::min(utf8_len(static_cast<unsigned char>(s[i])), s.size() - i);
  }
  out.push_back(s.size());
  return out;
}

inline std::vector<Span> whitespace_words(std::string_view text) {
  std::vector<Span> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    const std::size_t b = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    words.push_back({b, i});
  }
  return words;
}

inline constexpr std::string_view kEntityPrefix = "@entity";

// Length of an entity marker starting at pos, or 0.
inline std::size_t marker_length(std::string_view text, std::size_t pos) {
  if (text.substr(pos, kEntityPrefix.size()) != kEntityPrefix) return 0;
  std::size_t end = pos + kEntityPrefix.size();
  while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
  return end == pos + kEntityPrefix.size() ? 0 : end - pos;
}

struct Piece {
  Span span;
  bool marker;
};

// Splits a whitespace word into entity markers and the text between them.
inline std::vector<Piece> split_markers(std::string_view text, Span word) {
  std::vector<Piece> out;
  std::size_t start = word.begin;
  std::size_t i = word.begin;
  while (i < word.end) {
    const std::size_t len = marker_length(text.substr(0, word.end), i);
    if (len) {
      if (i > start) out.push_back({{start, i}, false});
      out.push_back({{i, i + len}, true});
      i += len;
      start = i;
    } else {
      ++i;
    }
  }
  if (start < word.end) out.push_back({{start, word.end}, false});
  return out;
}

inline bool is_placeholder(std::string_view s) { return s == kPlaceholder || s == kMask; }

}  // namespace detail

// Every maximal "@entity<digits>" occurrence, in order.
inline std::vector<EntityMention> detect_entities(std::string_view text) {
  std::vector<EntityMention> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t len = detail::marker_length(text, i);
    if (len) {
      out.push_back({std::string(text.substr(i, len)), {i, i + len}});
      i += len;
    } else {
      ++i;
    }
  }
  return out;
}

// Greedy longest-match WordPiece over one word-initial piece of text.
inline void wordpiece_piece(std::string_view text, Span span, const Vocab& vocab, Segment seg, TokenSeq& out) {
  const std::string_view word = text.substr(span.begin, span.end - span.begin);
  auto emit = [&](int id, Span s) {
    out.ids.push_back(id);
    out.segments.push_back(seg);
    out.spans.push_back(s);
  };
  if (detail::is_placeholder(word)) {
    emit(vocab.mask(), span);
    return;
  }
  const auto offs = detail::char_offsets(word);
  const std::size_t nchars = offs.size() - 1;
  if (nchars > kMaxWordChars) {
    emit(vocab.unk(), span);
    return;
  }
  std::vector<std::pair<int, Span>> pieces;
  std::size_t start = 0;
  std::string candidate;
  while (start < nchars) {
    std::size_t end = nchars;
    std::optional<int> found;
    while (start < end) {
      candidate.clear();
      if (start > 0) candidate += kContinuation;
      candidate.append(word.substr(offs[start], offs[end] - offs[start]));
      found = vocab.find(candidate);
      if (found) break;
      --end;
    }
    if (!found) {
      emit(vocab.unk(), span);
      return;
    }
    pieces.push_back({*found, {span.begin + offs[start], span.begin + offs[end]}});
    start = end;
  }
  for (const auto& [id, s] : pieces) emit(id, s);
}

inline TokenSeq wordpiece_tokenize(std::string_view text, const Vocab& vocab, Segment seg = Segment::Context) {
  TokenSeq out;
  for (const Span& word : detail::whitespace_words(text)) {
    for (const auto& piece : detail::split_markers(text, word)) {
      if (piece.marker) {
        const auto id = vocab.find(text.substr(piece.span.begin, piece.span.end - piece.span.begin));
        out.ids.push_back(id.value_or(vocab.unk()));
        out.segments.push_back(seg);
        out.spans.push_back(piece.span);
      } else {
        wordpiece_piece(text, piece.span, vocab, seg, out);
      }
    }
  }
  return out;
}

// Builds a vocabulary from raw documents. Always present: specials and every
// character seen (word-initial form). Then, in order and while room remains:
// entity markers, "##" forms of characters seen in non-initial position, and
// whole words / "##" suffixes with count >= min_freq ranked by count
// (descending) then lexicographically.
inline Vocab build_vocab(std::span<const std::string> corpus, std::size_t max_size, std::size_t min_freq) {
  if (corpus.empty()) throw VocabError("build_vocab: empty corpus");
  std::set<std::string> chars, cont_chars, markers;
  std::map<std::string, std::size_t> counts;
  for (const std::string& doc : corpus) {
    const std::string_view text = doc;
    for (const Span& word : detail::whitespace_words(text)) {
      for (const auto& piece : detail::split_markers(text, word)) {
        const std::string_view s = text.substr(piece.span.begin, piece.span.end - piece.span.begin);
        if (piece.marker) {
          markers.emplace(s);
          continue;
        }
        if (detail::is_placeholder(s)) continue;
        const auto offs = detail::char_offsets(s);
        const std::size_t n = offs.size() - 1;
        for (std::size_t c = 0; c < n; ++c) {
          const std::string ch(s.substr(offs[c], offs[c + 1] - offs[c]));
          chars.insert(ch);
          if (c > 0) cont_chars.insert(std::string(kContinuation) + ch);
        }
        if (n > kMaxWordChars) continue;
        if (n > 1) ++counts[std::string(s)];
        for (std::size_t c = 1; c + 1 < n; ++c) ++counts[std::string(kContinuation) + std::string(s.substr(offs[c]))];
      }
    }
  }
  if (chars.empty() && markers.empty()) throw VocabError("build_vocab: corpus has no tokens");

  constexpr std::size_t kSpecials = 5;
  if (max_size < chars.size() + kSpecials) {
    throw VocabError("build_vocab: max_size " + std::to_string(max_size) + " cannot hold " +
                     std::to_string(chars.size()) + " characters plus " + std::to_string(kSpecials) + " specials");
  }
  std::vector<std::string> tokens(chars.begin(), chars.end());
  std::set<std::string> taken(chars.begin(), chars.end());
  auto push = [&](const std::string& t) {
    if (tokens.size() + kSpecials >= max_size) return false;
    if (taken.insert(t).second) tokens.push_back(t);
    return true;
  };
  for (const auto& m : markers) push(m);
  for (const auto& c : cont_chars) push(c);

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [tok, n] : counts) {
    if (n >= min_freq && !taken.count(tok)) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [tok, n] : ranked) {
    if (!push(tok)) break;
  }
  return Vocab(std::move(tokens));
}

}  // namespace aoa
