#pragma once

// Attention-over-attention reader.
//
//   M(i, j) = h_context(i) . h_question(j)     context rows i, question rows j
//   alpha   = softmax down each column of M    (context-level attention)
//   beta    = mean over rows of softmax along each row of M
//   s       = alpha * beta                     (attended context attention)
//   P(a)    = F1_{t in T(a)} F2_{i in I(t, C)} s_i,   F1, F2 in {max, sum}

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aoa/autodiff.hpp"
#include "aoa/checkpoint.hpp"
#include "aoa/corpus.hpp"
#include "aoa/encoder.hpp"
#include "aoa/nn.hpp"
#include "aoa/scores.hpp"
#include "aoa/tokenizer.hpp"

namespace aoa {

enum class Agg { Max, Sum };

inline std::string_view to_string(Agg a) { return a == Agg::Max ? "max" : "sum"; }

inline Agg parse_agg(std::string_view s) {
  if (s == "max") return Agg::Max;
  if (s == "sum") return Agg::Sum;
  throw std::invalid_argument("aggregation must be 'max' or 'sum', got '" + std::string(s) + "'");
}

struct AggregationConfig {
  Agg token = Agg::Sum;       // F1, over a candidate's pieces
  Agg occurrence = Agg::Sum;  // F2, over one piece's context positions

  // "<occurrence>/<token>", the column order of the comparison tables.
  std::string label() const { return std::string(to_string(occurrence)) + "/" + std::string(to_string(token)); }
  bool operator==(const AggregationConfig&) const = default;
};

// T(a) per candidate and I(t, C) per token.
struct CandidateIndex {
  std::vector<std::vector<int>> tokens;
  std::map<int, std::vector<std::size_t>> positions;

  const std::vector<std::size_t>& occurrences(int token) const {
    static const std::vector<std::size_t> kNone;
    auto it = positions.find(token);
    return it == positions.end() ? kNone : it->second;
  }
};

// Candidates are segmented by their marker (atomic) or, when by_surface is
// set, by their first surface form. Positions index the kept context tokens.
inline CandidateIndex build_candidate_index(const ClozeSample& sample, const Vocab& vocab, const TokenSeq& context,
                                            std::size_t kept, bool by_surface = false) {
  CandidateIndex index;
  for (const auto& c : sample.candidates) {
    const std::string& text = by_surface && !c.surfaces.empty() ? c.surfaces.front() : c.id;
    TokenSeq pieces = wordpiece_tokenize(text, vocab);
    if (pieces.empty()) pieces.ids.push_back(vocab.unk());
    index.tokens.push_back(pieces.ids);
    for (int t : pieces.ids) index.positions.emplace(t, std::vector<std::size_t>{});
  }
  for (std::size_t i = 0; i < kept && i < context.size(); ++i) {
    auto it = index.positions.find(context.ids[i]);
    if (it != index.positions.end()) it->second.push_back(i);
  }
  return index;
}

class AttentionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::vector<std::size_t> segment_rows(const std::vector<Segment>& labels, Segment which) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == which) rows.push_back(i);
  }
  return rows;
}

// |C| x |Q| over true context and question positions only.
inline Var matching_matrix(const EncodedPair& pair, const std::vector<Segment>& labels) {
  auto ctx = segment_rows(labels, Segment::Context);
  auto qst = segment_rows(labels, Segment::Question);
  if (ctx.empty()) throw AttentionError("matching_matrix: empty context segment");
  if (qst.empty()) throw AttentionError("matching_matrix: empty question segment");
  return matmul_nt(gather_rows(pair.h_context, std::move(ctx)), gather_rows(pair.h_question, std::move(qst)));
}

inline Var context_attention(Var m) { return softmax_cols(m); }

inline Var question_attention(Var m) { return mean_rows(softmax_rows(m)); }

inline Var attended_attention(Var alpha, Var beta) {
  if (alpha.value().rank() != 2 || beta.value().rank() != 1 || alpha.cols() != beta.size()) {
    throw ShapeError("attended_attention: alpha " + shape_str(alpha.shape()) + " vs beta " + shape_str(beta.shape()));
  }
  return matvec(alpha, beta);
}

struct AttentionState {
  Tensor m;
  Tensor alpha;
  Tensor beta;
  Tensor s;
};

inline AttentionState attention_from_matching(const Tensor& m) {
  Tape tape(false);
  Var mv = tape.constant(m);
  Var alpha = context_attention(mv);
  Var beta = question_attention(mv);
  Var s = attended_attention(alpha, beta);
  return {m, alpha.value(), beta.value(), s.value()};
}

namespace detail {

inline Var reduce(Var v, Agg agg) { return agg == Agg::Sum ? sum(v) : max(v); }

}  // namespace detail

// One score per candidate. A token with no context occurrence contributes 0
// under either F2.
inline Var aggregate_candidates(Var s, const CandidateIndex& index, const AggregationConfig& cfg) {
  Tape& tape = *s.tape();
  std::vector<Var> per_candidate;
  per_candidate.reserve(index.tokens.size());
  for (const auto& pieces : index.tokens) {
    std::vector<Var> per_token;
    for (int t : pieces) {
      const auto& occ = index.occurrences(t);
      for (std::size_t i : occ) {
        if (i >= s.size()) throw std::out_of_range("aggregate_candidates: position outside s");
      }
      if (occ.empty()) {
        per_token.push_back(tape.constant(Tensor::scalar(0.0)));
      } else {
        per_token.push_back(detail::reduce(gather(s, occ), cfg.occurrence));
      }
    }
    if (per_token.empty()) per_token.push_back(tape.constant(Tensor::scalar(0.0)));
    per_candidate.push_back(detail::reduce(concat(per_token), cfg.token));
  }
  return concat(per_candidate);
}

inline std::vector<double> aggregate_candidates(const std::vector<double>& s, const CandidateIndex& index,
                                                const AggregationConfig& cfg) {
  Tape tape(false);
  return aggregate_candidates(tape.constant(Tensor::vector(s)), index, cfg).value().values();
}

struct AoaConfig {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  AggregationConfig agg;
  std::size_t max_len = kDefaultLengthLimit;
  std::string backend = "toy";       // "toy" or "precomputed:<dir>"
  bool index_by_surface = false;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"embed_dim", embed_dim},         {"hidden_dim", hidden_dim},
            {"agg_token", to_string(agg.token)}, {"agg_occ", to_string(agg.occurrence)},
            {"max_len", max_len},             {"backend", backend},
            {"index_by_surface", index_by_surface}, {"seed", seed}};
  }
  static AoaConfig from_json(const nlohmann::json& j) {
    AoaConfig c;
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.agg.token = parse_agg(j.value("agg_token", std::string("sum")));
    c.agg.occurrence = parse_agg(j.value("agg_occ", std::string("sum")));
    c.max_len = j.value("max_len", c.max_len);
    c.backend = j.value("backend", c.backend);
    c.index_by_surface = j.value("index_by_surface", false);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

inline EmbedBackend make_backend(const std::string& spec, ParamStore& store, std::size_t vocab_size,
                                 std::size_t dim, Rng& rng, const std::string& prefix = "embed") {
  if (spec == "toy") return EmbedBackend(ToyEmbedder::create(store, vocab_size, dim, rng, prefix));
  constexpr std::string_view kPre = "precomputed:";
  if (spec.rfind(kPre, 0) == 0) return EmbedBackend(PrecomputedEmbedder{spec.substr(kPre.size()), dim});
  throw std::invalid_argument("embed backend must be 'toy' or 'precomputed:<dir>', got '" + spec + "'");
}

class AoaReader {
 public:
  static constexpr std::string_view kKind = "aoa_reader";

  struct Example {
    std::string id;
    JointInput input;
    CandidateIndex index;
    std::vector<std::string> candidates;
    std::size_t gold = 0;
  };

  AoaReader(Vocab vocab, AoaConfig cfg) : vocab_(std::move(vocab)), cfg_(std::move(cfg)) {
    Rng rng(cfg_.seed);
    encoder_.backend = make_backend(cfg_.backend, store_, vocab_.size(), cfg_.embed_dim, rng);
    encoder_.fwd = GruParams::create(store_, "gru.fwd", cfg_.embed_dim, cfg_.hidden_dim, "main", rng);
    encoder_.bwd = GruParams::create(store_, "gru.bwd", cfg_.embed_dim, cfg_.hidden_dim, "main", rng);
  }

  static AoaReader from_checkpoint(const nlohmann::json& j) {
    check_checkpoint(j, kKind);
    AoaReader r(Vocab(j.at("vocab").get<std::vector<std::string>>()), AoaConfig::from_json(j.at("config")));
    r.store_.restore(snapshot_from_json(j.at("params")));
    return r;
  }

  nlohmann::json checkpoint(const ArtifactMeta& meta) const {
    nlohmann::json j = make_checkpoint(kKind, meta, cfg_.to_json(), store_);
    j["vocab"] = vocab_.tokens();
    return j;
  }

  const AoaConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  void set_aggregation(const AggregationConfig& agg) { cfg_.agg = agg; }

  Example prepare(const ClozeSample& sample) const {
    Example ex;
    ex.id = sample.id;
    const TokenSeq context = wordpiece_tokenize(sample.context, vocab_, Segment::Context);
    const TokenSeq question = wordpiece_tokenize(sample.question, vocab_, Segment::Question);
    ex.input = assemble_input(context, question, vocab_, cfg_.max_len, sample.id);
    ex.index = build_candidate_index(sample, vocab_, context, ex.input.context_len, cfg_.index_by_surface);
    ex.candidates = sample.candidate_ids();
    const auto gold = sample.gold_index();
    ex.gold = gold.value_or(0);
    return ex;
  }

  // Attended attention s over the kept context tokens.
  Var attention(Tape& tape, const Example& ex) const {
    EncodedPair pair = encoder_.encode(tape, ex.input);
    Var m = matching_matrix(pair, ex.input.segments);
    return attended_attention(context_attention(m), question_attention(m));
  }

  AttentionState attention_state(const Example& ex) const {
    Tape tape(false);
    EncodedPair pair = encoder_.encode(tape, ex.input);
    return attention_from_matching(matching_matrix(pair, ex.input.segments).value());
  }

  Var scores(Tape& tape, const Example& ex) const {
    return aggregate_candidates(attention(tape, ex), ex.index, cfg_.agg);
  }

  Var loss(Tape& tape, const Example& ex) const { return candidate_nll(scores(tape, ex), ex.gold); }

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
  AoaConfig cfg_;
  ParamStore store_;
  PairEncoder encoder_;
};

}  // namespace aoa
