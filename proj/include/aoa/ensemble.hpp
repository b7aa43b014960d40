#pragma once

// Model weighting: each reader's scores are softmax-normalized, then one MLP
// shared across candidates maps every (a_i, b_i) pair to a final score.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aoa/autodiff.hpp"
#include "aoa/checkpoint.hpp"
#include "aoa/corpus.hpp"
#include "aoa/nn.hpp"
#include "aoa/scores.hpp"
#include "aoa/trainer.hpp"

namespace aoa {

struct EnsembleSample {
  std::string id;
  std::vector<std::string> candidates;
  std::vector<double> score_a;
  std::vector<double> score_b;
  std::size_t gold = 0;

  void validate() const {
    if (score_a.size() != score_b.size()) {
      throw ShapeError("ensemble sample " + id + ": score lengths " + std::to_string(score_a.size()) + " and " +
                       std::to_string(score_b.size()) + " differ");
    }
    if (score_a.empty()) throw ShapeError("ensemble sample " + id + ": no candidates");
    if (!candidates.empty() && candidates.size() != score_a.size()) {
      throw ShapeError("ensemble sample " + id + ": candidate count does not match scores");
    }
    if (gold >= score_a.size()) throw std::out_of_range("ensemble sample " + id + ": gold index out of range");
    auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(score_a) || !finite(score_b)) throw std::domain_error("ensemble sample " + id + ": non-finite score");
  }

  bool operator==(const EnsembleSample&) const = default;
};

// |A| x 2 matrix of per-model softmax probabilities.
inline Tensor normalized_pairs(const EnsembleSample& s) {
  s.validate();
  const Tensor a = softmax(Tensor::vector(s.score_a));
  const Tensor b = softmax(Tensor::vector(s.score_b));
  Tensor out(Shape{a.size(), 2});
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.at(i, 0) = a[i];
    out.at(i, 1) = b[i];
  }
  return out;
}

inline Var weighting_forward(Tape& tape, const EnsembleSample& s, const MlpParams& p) {
  if (p.input_dim != 2 || p.output_dim != 1) {
    throw ShapeError("weighting_forward: MLP must map 2 inputs to 1 output, got " + std::to_string(p.input_dim) +
                     " -> " + std::to_string(p.output_dim));
  }
  return flatten(mlp_forward_rows(tape, tape.constant(normalized_pairs(s)), p));
}

inline ScoreVector weighting_forward(const EnsembleSample& s, const MlpParams& p) {
  Tape tape(false);
  return {s.candidates, weighting_forward(tape, s, p).value().values()};
}

struct WeightingConfig {
  std::size_t hidden = 8;
  std::size_t epochs = 60;
  std::size_t batch_size = 30;
  double lr = 0.01;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"hidden", hidden}, {"epochs", epochs}, {"batch_size", batch_size}, {"lr", lr}, {"seed", seed}};
  }
  static WeightingConfig from_json(const nlohmann::json& j) {
    WeightingConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

class WeightingModel {
 public:
  static constexpr std::string_view kKind = "ensemble";

  explicit WeightingModel(WeightingConfig cfg = {}) : cfg_(cfg) {
    Rng rng(cfg_.seed);
    mlp_ = MlpParams::create(store_, "weighting", 2, cfg_.hidden, 1, "main", rng);
  }

  static WeightingModel from_checkpoint(const nlohmann::json& j) {
    check_checkpoint(j, kKind);
    WeightingModel m(WeightingConfig::from_json(j.at("config")));
    m.store_.restore(snapshot_from_json(j.at("params")));
    return m;
  }

  nlohmann::json checkpoint(const ArtifactMeta& meta) const { return make_checkpoint(kKind, meta, cfg_.to_json(), store_); }

  const WeightingConfig& config() const { return cfg_; }
  const MlpParams& mlp() const { return mlp_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  ScoreVector score(const EnsembleSample& s) const { return weighting_forward(s, mlp_); }
  std::size_t predict(const EnsembleSample& s) const { return score(s).argmax(); }

  double accuracy(const std::vector<EnsembleSample>& samples) const {
    if (samples.empty()) throw std::invalid_argument("ensemble accuracy: no samples");
    std::size_t hits = 0;
    for (const auto& s : samples) hits += predict(s) == s.gold;
    return static_cast<double>(hits) / static_cast<double>(samples.size());
  }

 private:
  WeightingConfig cfg_;
  ParamStore store_;
  MlpParams mlp_;
};

struct WeightingResult {
  WeightingModel model;
  TrainReport report;
};

// Adam on softmax NLL over the MLP outputs; keeps the epoch with the best dev
// accuracy (first on ties).
inline WeightingResult train_weighting(const std::vector<EnsembleSample>& train, const std::vector<EnsembleSample>& dev,
                                       const WeightingConfig& cfg = {}) {
  if (train.empty()) throw std::invalid_argument("train_weighting: empty training set");
  if (dev.empty()) throw std::invalid_argument("train_weighting: empty dev set");
  for (const auto& s : train) s.validate();
  for (const auto& s : dev) s.validate();

  WeightingResult out{WeightingModel(cfg), {}};
  ParamStore& store = out.model.params();
  Adam adam;
  const GroupRates lr{cfg.lr, cfg.lr};
  EarlyStopping best(std::max<std::size_t>(cfg.epochs, 1));
  Snapshot kept = store.snapshot();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_total = 0;
    for (const auto& batch : make_batches(train.size(), cfg.batch_size, cfg.seed + epoch)) {
      store.zero_grad();
      for (std::size_t i : batch) {
        Tape tape;
        Var loss = softmax_nll(weighting_forward(tape, train[i], out.model.mlp()), train[i].gold);
        loss_total += loss.item();
        tape.backward(scale(loss, 1.0 / static_cast<double>(batch.size())));
      }
      adam.step(store, lr);
    }
    double dev_loss = 0;
    std::size_t hits = 0;
    for (const auto& s : dev) {
      Tape tape(false);
      Var scores = weighting_forward(tape, s, out.model.mlp());
      hits += argmax_first(scores.value().values()) == s.gold;
      dev_loss += softmax_nll(scores, s.gold).item();
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(dev.size());
    out.report.epochs.push_back(
        {epoch, loss_total / static_cast<double>(train.size()), dev_loss / static_cast<double>(dev.size()), acc, 0.0});
    best.update(acc);
    if (best.improved()) kept = store.snapshot();
  }
  out.report.best_epoch = best.best_epoch();
  store.restore(kept);
  return out;
}

class CandidateMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline EnsembleSample pair_predictions(const Prediction& a, const Prediction& b) {
  if (a.id != b.id) throw CandidateMismatch("sample ids differ: " + a.id + " vs " + b.id);
  if (a.scores.candidates != b.scores.candidates) {
    throw CandidateMismatch("sample " + a.id + ": readers disagree on the candidate set");
  }
  if (a.gold != b.gold) throw CandidateMismatch("sample " + a.id + ": readers disagree on the gold answer");
  const auto& c = a.scores.candidates;
  const auto it = std::find(c.begin(), c.end(), a.gold);
  if (it == c.end()) throw CandidateMismatch("sample " + a.id + ": gold is not a candidate");
  EnsembleSample s{a.id, c, a.scores.scores, b.scores.scores, static_cast<std::size_t>(it - c.begin())};
  s.validate();
  return s;
}

// Aligns two prediction lists by sample id, in the order of `a`.
inline std::vector<EnsembleSample> pair_predictions(const std::vector<Prediction>& a, const std::vector<Prediction>& b) {
  if (a.size() != b.size()) {
    throw CandidateMismatch("prediction lists have " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                            " samples");
  }
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : b) by_id[p.id] = &p;
  std::vector<EnsembleSample> out;
  for (const auto& p : a) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) throw CandidateMismatch("sample " + p.id + " missing from the second reader");
    out.push_back(pair_predictions(p, *it->second));
  }
  return out;
}

template <class ReaderA, class ReaderB>
std::vector<EnsembleSample> collect_scores(const ReaderA& a, const ReaderB& b, const DatasetSplit& split) {
  std::vector<EnsembleSample> out;
  out.reserve(split.size());
  for (const auto& s : split.samples) out.push_back(pair_predictions(a.predict(s), b.predict(s)));
  return out;
}

// Score-exchange layout:
//   {"schema": "aoa-scores", "version": 1, "meta": {...},
//    "samples": [{"id", "candidates", "gold", "scores_a", "scores_b"}]}
inline nlohmann::json ensemble_samples_to_json(const std::vector<EnsembleSample>& samples, const ArtifactMeta& meta) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : samples) {
    arr.push_back({{"id", s.id},
                   {"candidates", s.candidates},
                   {"gold", s.candidates.empty() ? nlohmann::json(s.gold) : nlohmann::json(s.candidates[s.gold])},
                   {"scores_a", s.score_a},
                   {"scores_b", s.score_b}});
  }
  return {{"schema", "aoa-scores"}, {"version", 1}, {"meta", meta.to_json()}, {"samples", arr}};
}

inline std::vector<EnsembleSample> ensemble_samples_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() ? j.at("samples") : j;
  if (!arr.is_array()) throw FormatError("score file: 'samples' must be an array");
  std::vector<EnsembleSample> out;
  try {
    for (const auto& r : arr) {
      EnsembleSample s;
      s.id = r.at("id").get<std::string>();
      s.candidates = r.value("candidates", std::vector<std::string>{});
      s.score_a = r.at("scores_a").get<std::vector<double>>();
      s.score_b = r.at("scores_b").get<std::vector<double>>();
      const auto& gold = r.at("gold");
      if (gold.is_string()) {
        auto it = std::find(s.candidates.begin(), s.candidates.end(), gold.get<std::string>());
        if (it == s.candidates.end()) throw FormatError("score file: sample " + s.id + " gold is not a candidate");
        s.gold = static_cast<std::size_t>(it - s.candidates.begin());
      } else {
        s.gold = gold.get<std::size_t>();
      }
      s.validate();
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed score record: ") + e.what());
  }
  return out;
}

}  // namespace aoa
