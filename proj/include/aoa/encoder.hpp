#pragma once

// Joint contextual encoding of a (context, question) pair:
//
//   [CLS] C' [SEP] Q [SEP]  ->  E  ->  (E_C, E_Q)  ->  bi-GRU  ->  (h_context, h_question)
//
// C' is the context with its tail trimmed so the whole input fits the length
// limit; the question is never trimmed. E comes from a pluggable backend.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "aoa/autodiff.hpp"
#include "aoa/nn.hpp"
#include "aoa/tokenizer.hpp"

namespace aoa {

inline constexpr std::size_t kDefaultLengthLimit = 512;

struct JointInput {
  std::vector<int> ids;
  std::vector<Segment> segments;
  std::size_t context_len = 0;   // tokens of C kept
  std::size_t question_len = 0;
  std::size_t truncated = 0;     // tokens dropped from the context tail
  std::string key;               // names the row file for precomputed embeddings

  std::size_t size() const { return ids.size(); }
  std::size_t context_begin() const { return 1; }
  std::size_t question_begin() const { return context_len + 2; }
};

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline JointInput assemble_input(const TokenSeq& context, const TokenSeq& question, const Vocab& vocab,
                                 std::size_t limit = kDefaultLengthLimit, std::string key = {}) {
  const std::size_t placeholders =
      static_cast<std::size_t>(std::count(question.ids.begin(), question.ids.end(), vocab.mask()));
  if (placeholders == 0) throw InputError("assemble_input: question has no placeholder token");
  if (question.size() + 3 > limit) throw InputError("question too long");

  JointInput in;
  in.key = std::move(key);
  in.question_len = question.size();
  in.context_len = std::min(context.size(), limit - question.size() - 3);
  in.truncated = context.size() - in.context_len;
  in.ids.reserve(in.context_len + in.question_len + 3);

  in.ids.push_back(vocab.cls());
  in.segments.push_back(Segment::Special);
  in.ids.insert(in.ids.end(), context.ids.begin(), context.ids.begin() + static_cast<std::ptrdiff_t>(in.context_len));
  in.segments.insert(in.segments.end(), in.context_len, Segment::Context);
  in.ids.push_back(vocab.sep());
  in.segments.push_back(Segment::Special);
  in.ids.insert(in.ids.end(), question.ids.begin(), question.ids.end());
  in.segments.insert(in.segments.end(), in.question_len, Segment::Question);
  in.ids.push_back(vocab.sep());
  in.segments.push_back(Segment::Special);
  return in;
}

inline std::vector<double> segment_keep(const std::vector<Segment>& labels, Segment which) {
  std::vector<double> keep(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) keep[i] = labels[i] == which ? 1.0 : 0.0;
  return keep;
}

// Trainable lookup table + sinusoidal position signal + one residual
// self-attention mixing layer over the whole joint sequence.
struct ToyEmbedder {
  static constexpr double kPositionScale = 0.1;
  static constexpr std::size_t kMaxPositions = 4096;

  Param* table = nullptr;  // vocab x dim
  Param* w_q = nullptr;
  Param* w_k = nullptr;
  Param* w_v = nullptr;
  std::size_t dim = 0;

  static ToyEmbedder create(ParamStore& store, std::size_t vocab_size, std::size_t dim, Rng& rng,
                            const std::string& prefix = "embed") {
    ToyEmbedder t;
    t.dim = dim;
    t.table = &store.add(prefix + ".table", {vocab_size, dim}, "encoder");
    init_uniform(*t.table, dim, rng);
    for (auto [slot, name] : {std::pair{&t.w_q, "w_q"}, {&t.w_k, "w_k"}, {&t.w_v, "w_v"}}) {
      *slot = &store.add(prefix + ".attn." + name, {dim, dim}, "encoder");
      init_uniform(**slot, dim, rng);
    }
    return t;
  }

  static ToyEmbedder bind(ParamStore& store, const std::string& prefix = "embed") {
    ToyEmbedder t;
    t.table = &store.at(prefix + ".table");
    t.w_q = &store.at(prefix + ".attn.w_q");
    t.w_k = &store.at(prefix + ".attn.w_k");
    t.w_v = &store.at(prefix + ".attn.w_v");
    t.dim = t.table->value.cols();
    return t;
  }

  std::size_t vocab_size() const { return table->value.rows(); }

  static Tensor positions(std::size_t len, std::size_t dim) {
    if (len > kMaxPositions) throw InputError("toy embedder: sequence longer than " + std::to_string(kMaxPositions));
    Tensor out(Shape{len, dim});
    for (std::size_t p = 0; p < len; ++p) {
      for (std::size_t i = 0; i < dim; ++i) {
        const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
        const double angle = static_cast<double>(p) * rate;
        out.at(p, i) = kPositionScale * (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
    }
    return out;
  }

  Var embed(Tape& tape, const JointInput& in) const {
    std::vector<std::size_t> rows;
    rows.reserve(in.size());
    for (int id : in.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
        throw InputError("toy embedder: token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(vocab_size()));
      }
      rows.push_back(static_cast<std::size_t>(id));
    }
    Var base = add(gather_rows(tape.input(*table), std::move(rows)), tape.constant(positions(in.size(), dim)));
    Var q = matmul(base, tape.input(*w_q));
    Var k = matmul(base, tape.input(*w_k));
    Var v = matmul(base, tape.input(*w_v));
    Var attn = softmax_rows(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dim))));
    return add(base, matmul(attn, v));
  }
};

// Frozen rows read from <dir>/<key>.emb. File layout (little-endian):
//   8 bytes  magic "AOAEMB01"
//   u64      L (rows)
//   u64      e (columns)
//   u64      n, then n bytes of sample id
//   L*e      float64 values, row-major
struct PrecomputedEmbedder {
  std::filesystem::path dir;
  std::size_t dim = 0;

  static constexpr char kMagic[8] = {'A', 'O', 'A', 'E', 'M', 'B', '0', '1'};

  struct File {
    std::string id;
    Tensor rows;
  };

  static void write(const std::filesystem::path& path, const std::string& id, const Tensor& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    auto put = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    out.write(kMagic, sizeof kMagic);
    put(rows.rows());
    put(rows.cols());
    put(id.size());
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    out.write(reinterpret_cast<const char*>(rows.values().data()),
              static_cast<std::streamsize>(rows.size() * sizeof(double)));
  }

  static File read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open embedding file " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw InputError(path.string() + ": bad magic");
    auto get = [&] {
      std::uint64_t v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      if (!in) throw InputError(path.string() + ": truncated header");
      return v;
    };
    const std::uint64_t len = get(), width = get(), idlen = get();
    if (idlen > 4096 || len > (1u << 20) || width > (1u << 16)) throw InputError(path.string() + ": implausible header");
    File f;
    f.id.resize(idlen);
    in.read(f.id.data(), static_cast<std::streamsize>(idlen));
    std::vector<double> values(len * width);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw InputError(path.string() + ": truncated rows");
    f.rows = Tensor(Shape{len, width}, std::move(values));
    return f;
  }

  Var embed(Tape& tape, const JointInput& in) const {
    File f = read(dir / (in.key + ".emb"));
    if (f.rows.rows() != in.size()) {
      throw InputError("precomputed embedding " + in.key + " has " + std::to_string(f.rows.rows()) +
                       " rows, input has " + std::to_string(in.size()));
    }
    if (dim && f.rows.cols() != dim) {
      throw InputError("precomputed embedding " + in.key + " has width " + std::to_string(f.rows.cols()) +
                       ", expected " + std::to_string(dim));
    }
    return tape.constant(std::move(f.rows));
  }
};

class EmbedBackend {
 public:
  EmbedBackend() = default;
  explicit EmbedBackend(ToyEmbedder toy) : impl_(toy) {}
  explicit EmbedBackend(PrecomputedEmbedder pre) : impl_(std::move(pre)) {}

  bool is_toy() const { return std::holds_alternative<ToyEmbedder>(impl_); }
  std::size_t dim() const {
    return std::visit([](const auto& b) { return b.dim; }, impl_);
  }
  Var embed(Tape& tape, const JointInput& in) const {
    return std::visit([&](const auto& b) { return b.embed(tape, in); }, impl_);
  }

 private:
  std::variant<ToyEmbedder, PrecomputedEmbedder> impl_;
};

inline Var contextual_embed(Tape& tape, const JointInput& in, const EmbedBackend& backend) {
  return backend.embed(tape, in);
}

inline Tensor contextual_embed(const JointInput& in, const EmbedBackend& backend) {
  Tape tape(false);
  return contextual_embed(tape, in, backend).value();
}

// E_C keeps context rows, E_Q keeps question rows; special rows are zero in
// both.
inline std::pair<Var, Var> segment_mask(Var embedded, const std::vector<Segment>& labels) {
  if (embedded.rows() != labels.size()) throw ShapeError("segment_mask: label count does not match rows");
  return {mask_rows(embedded, segment_keep(labels, Segment::Context)),
          mask_rows(embedded, segment_keep(labels, Segment::Question))};
}

inline std::pair<Tensor, Tensor> segment_mask(const Tensor& embedded, const std::vector<Segment>& labels) {
  Tape tape(false);
  auto [c, q] = segment_mask(tape.constant(embedded), labels);
  return {c.value(), q.value()};
}

// Row-wise [forward state ; backward state], L x 2d.
inline Var bigru_encode(Tape& tape, Var embedded, const GruParams& fwd, const GruParams& bwd) {
  if (fwd.hidden_dim != bwd.hidden_dim || fwd.input_dim != bwd.input_dim) {
    throw ShapeError("bigru_encode: forward and backward GRUs differ in shape");
  }
  return hcat(gru_sequence(tape, embedded, fwd, false), gru_sequence(tape, embedded, bwd, true));
}

inline Tensor bigru_encode(const Tensor& embedded, const GruParams& fwd, const GruParams& bwd) {
  Tape tape(false);
  return bigru_encode(tape, tape.constant(embedded), fwd, bwd).value();
}

struct EncodedPair {
  Var h_context;   // L x 2d, zero outside context rows
  Var h_question;  // L x 2d, zero outside question rows
};

// Backend + shared bi-GRU applied to each masked segment.
struct PairEncoder {
  EmbedBackend backend;
  GruParams fwd;
  GruParams bwd;

  EncodedPair encode(Tape& tape, const JointInput& in) const {
    Var e = contextual_embed(tape, in, backend);
    auto [e_c, e_q] = segment_mask(e, in.segments);
    Var h_c = bigru_encode(tape, e_c, fwd, bwd);
    Var h_q = bigru_encode(tape, e_q, fwd, bwd);
    return {mask_rows(h_c, segment_keep(in.segments, Segment::Context)),
            mask_rows(h_q, segment_keep(in.segments, Segment::Question))};
  }
};

}  // namespace aoa
