#pragma once

// Sentence-scoring reader: each context sentence is paired with the question
// as [CLS] sentence [SEP] question [SEP] and encoded; every entity occurrence
// is scored by an MLP over [entity embedding ; placeholder embedding], and a
// candidate's score is its maximum over all occurrences in all sentences.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aoa/aoa_reader.hpp"
#include "aoa/autodiff.hpp"
#include "aoa/checkpoint.hpp"
#include "aoa/corpus.hpp"
#include "aoa/encoder.hpp"
#include "aoa/nn.hpp"
#include "aoa/scores.hpp"
#include "aoa/tokenizer.hpp"

namespace aoa {

namespace detail {

inline constexpr std::array<std::string_view, 20> kAbbreviations = {
    "e.g.", "i.e.", "al.", "fig.", "figs.", "dr.",  "vs.",   "approx.", "no.", "ref.",
    "eq.",  "mr.",  "mrs.", "ms.", "prof.", "st.", "cf.", "resp.",   "ca.", "etc."};

inline bool is_abbreviation(std::string_view text, std::size_t word_begin, std::size_t end) {
  std::string word(text.substr(word_begin, end - word_begin));
  for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

inline bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

}  // namespace detail

// Splits after a run of . ! ? that is followed by whitespace and then an
// uppercase letter or an entity marker, unless the word ending there is a
// known abbreviation. Spans exclude the separating whitespace.
inline std::vector<Span> split_sentence_spans(std::string_view text) {
  std::vector<Span> out;
  std::size_t start = 0;
  while (start < text.size() && detail::is_space(text[start])) ++start;
  std::size_t i = start;
  while (i < text.size()) {
    if (!detail::is_terminator(text[i])) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < text.size() && detail::is_terminator(text[end])) ++end;
    if (end >= text.size() || !detail::is_space(text[end])) {
      i = end;
      continue;
    }
    std::size_t next = end;
    while (next < text.size() && detail::is_space(text[next])) ++next;
    if (next >= text.size()) break;
    const bool opens = std::isupper(static_cast<unsigned char>(text[next])) || detail::marker_length(text, next) > 0;
    std::size_t word_begin = i;
    while (word_begin > start && !detail::is_space(text[word_begin - 1])) --word_begin;
    if (opens && !detail::is_abbreviation(text, word_begin, end)) {
      out.push_back({start, end});
      start = next;
    }
    i = next;
  }
  std::size_t last = text.size();
  while (last > start && detail::is_space(text[last - 1])) --last;
  if (last > start) out.push_back({start, last});
  return out;
}

inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  for (const Span& s : split_sentence_spans(text)) out.emplace_back(text.substr(s.begin, s.end - s.begin));
  return out;
}

struct SentencePair {
  JointInput input;
  // entity id -> occurrences, each the joint positions of its tokens
  std::map<std::string, std::vector<std::vector<std::size_t>>> occurrences;
  std::size_t placeholder = 0;  // joint position of the question's [MASK]
};

class PlaceholderError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline SentencePair make_sentence_pair(std::string_view sentence, const TokenSeq& question, const Vocab& vocab,
                                       std::size_t limit = kDefaultLengthLimit, std::string key = {}) {
  SentencePair pair;
  const TokenSeq sent = wordpiece_tokenize(sentence, vocab, Segment::Context);
  pair.input = assemble_input(sent, question, vocab, limit, std::move(key));
  for (const auto& mention : detect_entities(sentence)) {
    std::vector<std::size_t> positions;
    for (std::size_t t = 0; t < pair.input.context_len; ++t) {
      if (sent.spans[t].begin >= mention.span.begin && sent.spans[t].end <= mention.span.end) {
        positions.push_back(pair.input.context_begin() + t);
      }
    }
    if (!positions.empty()) pair.occurrences[mention.id].push_back(std::move(positions));
  }
  const auto q0 = pair.input.question_begin();
  for (std::size_t j = 0; j < pair.input.question_len; ++j) {
    if (pair.input.ids[q0 + j] == vocab.mask()) {
      pair.placeholder = q0 + j;
      return pair;
    }
  }
  throw PlaceholderError("sentence pair: question has no placeholder");
}

// Max over occurrences of MLP([mean entity rows ; placeholder row]), per
// entity present in the sentence.
inline std::map<std::string, Var> score_entities_in_sentence(Tape& tape, const SentencePair& pair,
                                                             const EmbedBackend& backend, const MlpParams& scorer) {
  if (pair.placeholder >= pair.input.size() || pair.input.ids.empty() ||
      pair.input.segments[pair.placeholder] != Segment::Question) {
    throw PlaceholderError("score_entities_in_sentence: placeholder missing");
  }
  Var e = contextual_embed(tape, pair.input, backend);
  Var ph = row(e, pair.placeholder);
  std::map<std::string, Var> out;
  for (const auto& [entity, occs] : pair.occurrences) {
    std::vector<Var> scores;
    for (const auto& positions : occs) {
      Var ent = mean_rows(gather_rows(e, positions));
      scores.push_back(mlp_forward(tape, concat({ent, ph}), scorer));
    }
    out.emplace(entity, max(concat(scores)));
  }
  return out;
}

inline std::map<std::string, double> score_entities_in_sentence(const SentencePair& pair, const EmbedBackend& backend,
                                                                const MlpParams& scorer) {
  Tape tape(false);
  std::map<std::string, double> out;
  for (const auto& [k, v] : score_entities_in_sentence(tape, pair, backend, scorer)) out.emplace(k, v.item());
  return out;
}

// Per candidate, the max over every sentence's score; candidates never seen
// get (minimum seen score - 1), or -1 when nothing was seen.
inline Var score_document(Tape& tape, const std::vector<SentencePair>& pairs, const std::vector<std::string>& candidates,
                          const EmbedBackend& backend, const MlpParams& scorer) {
  std::map<std::string, std::vector<Var>> seen;
  for (const auto& pair : pairs) {
    if (pair.occurrences.empty()) continue;
    for (auto& [entity, v] : score_entities_in_sentence(tape, pair, backend, scorer)) seen[entity].push_back(v);
  }
  std::vector<std::optional<Var>> per(candidates.size());
  std::vector<Var> negated;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    auto it = seen.find(candidates[c]);
    if (it == seen.end()) continue;
    per[c] = it->second.size() == 1 ? it->second.front() : max(concat(it->second));
    negated.push_back(scale(*per[c], -1.0));
  }
  // The fallback stays a function of the seen scores so gradients see it.
  const Var fallback = negated.empty() ? tape.constant(Tensor::scalar(-1.0))
                                       : add_scalar(scale(max(concat(negated)), -1.0), -1.0);
  std::vector<Var> parts;
  for (auto& p : per) parts.push_back(p ? *p : fallback);
  return concat(parts);
}

struct SentConfig {
  std::size_t embed_dim = 64;
  std::size_t scorer_hidden = 32;
  std::size_t max_len = kDefaultLengthLimit;
  std::string backend = "toy";
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"embed_dim", embed_dim}, {"scorer_hidden", scorer_hidden}, {"max_len", max_len},
            {"backend", backend},     {"seed", seed}};
  }
  static SentConfig from_json(const nlohmann::json& j) {
    SentConfig c;
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.scorer_hidden = j.value("scorer_hidden", c.scorer_hidden);
    c.max_len = j.value("max_len", c.max_len);
    c.backend = j.value("backend", c.backend);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

class SentReader {
 public:
  static constexpr std::string_view kKind = "sent_reader";
  // Parameter prefix of the encoder's top layer, frozen by the fine-tuning preset.
  static constexpr std::string_view kTopLayer = "embed.attn";

  struct Example {
    std::string id;
    std::vector<SentencePair> pairs;
    std::vector<std::string> candidates;
    std::size_t gold = 0;
  };

  SentReader(Vocab vocab, SentConfig cfg) : vocab_(std::move(vocab)), cfg_(std::move(cfg)) {
    Rng rng(cfg_.seed);
    backend_ = make_backend(cfg_.backend, store_, vocab_.size(), cfg_.embed_dim, rng);
    scorer_ = MlpParams::create(store_, "scorer", 2 * cfg_.embed_dim, cfg_.scorer_hidden, 1, "main", rng);
  }

  static SentReader from_checkpoint(const nlohmann::json& j) {
    check_checkpoint(j, kKind);
    SentReader r(Vocab(j.at("vocab").get<std::vector<std::string>>()), SentConfig::from_json(j.at("config")));
    r.store_.restore(snapshot_from_json(j.at("params")));
    return r;
  }

  nlohmann::json checkpoint(const ArtifactMeta& meta) const {
    nlohmann::json j = make_checkpoint(kKind, meta, cfg_.to_json(), store_);
    j["vocab"] = vocab_.tokens();
    return j;
  }

  const SentConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const EmbedBackend& backend() const { return backend_; }
  const MlpParams& scorer() const { return scorer_; }

  Example prepare(const ClozeSample& sample) const {
    Example ex;
    ex.id = sample.id;
    ex.candidates = sample.candidate_ids();
    ex.gold = sample.gold_index().value_or(0);
    const TokenSeq question = wordpiece_tokenize(sample.question, vocab_, Segment::Question);
    const auto sentences = split_sentences(sample.context);
    for (std::size_t k = 0; k < sentences.size(); ++k) {
      ex.pairs.push_back(
          make_sentence_pair(sentences[k], question, vocab_, cfg_.max_len, sample.id + ".s" + std::to_string(k)));
    }
    return ex;
  }

  Var scores(Tape& tape, const Example& ex) const {
    return score_document(tape, ex.pairs, ex.candidates, backend_, scorer_);
  }

  Var loss(Tape& tape, const Example& ex) const { return softmax_nll(scores(tape, ex), ex.gold); }

  ScoreVector score(const Example& ex) const {
    Tape tape(false);
    return {ex.candidates, scores(tape, ex).value().values()};
  }

  Prediction predict(const ClozeSample& sample) const {
    const Example ex = prepare(sample);
    Prediction p{sample.id, score(ex), 0, sample.gold};
    p.answer = p.scores.argmax();
    return p;
  }

 private:
  Vocab vocab_;
  SentConfig cfg_;
  ParamStore store_;
  EmbedBackend backend_;
  MlpParams scorer_;
};

}  // namespace aoa
