#pragma once

// Per-candidate scores and predictions shared by both readers, plus the
// prediction JSON schema both `predict` commands emit:
//
//   {"schema": "aoa-predictions", "version": 1, "reader": "...", "meta": {...},
//    "predictions": [{"id", "candidates": [...], "scores": [...], "predicted", "gold"}]}

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aoa/autodiff.hpp"
#include "aoa/checkpoint.hpp"

namespace aoa {

struct ScoreVector {
  std::vector<std::string> candidates;
  std::vector<double> scores;

  // First maximum wins.
  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i] > scores[best]) best = i;
    }
    return best;
  }
};

inline std::size_t argmax_first(const std::vector<double>& v) {
  return ScoreVector{{}, v}.argmax();
}

struct Prediction {
  std::string id;
  ScoreVector scores;
  std::size_t answer = 0;
  std::string gold;

  const std::string& predicted() const { return scores.candidates.at(answer); }
  bool correct() const { return predicted() == gold; }
};

inline constexpr double kLossEpsilon = 1e-12;

// -log(P(gold) / sum_a P(a)) over non-negative scores. When every score is
// exactly zero the scores go through a softmax first.
inline Var candidate_nll(Var scores, std::size_t gold) {
  const auto& v = scores.value().values();
  if (gold >= v.size()) throw std::out_of_range("candidate_nll: gold index out of range");
  const bool all_zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  Var p = all_zero ? softmax(scores) : scores;
  const double n = static_cast<double>(v.size());
  Var total = add_scalar(sum(p), n * kLossEpsilon);
  Var picked = add_scalar(pick(p, gold), kLossEpsilon);
  return sub(log(total), log(picked));
}

// -log softmax(scores)[gold], for real-valued scores.
inline Var softmax_nll(Var scores, std::size_t gold) {
  if (gold >= scores.size()) throw std::out_of_range("softmax_nll: gold index out of range");
  return scale(log(pick(softmax(scores), gold)), -1.0);
}

inline nlohmann::json predictions_to_json(const std::vector<Prediction>& preds, std::string_view reader,
                                          const ArtifactMeta& meta) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : preds) {
    arr.push_back({{"id", p.id},
                   {"candidates", p.scores.candidates},
                   {"scores", p.scores.scores},
                   {"predicted", p.predicted()},
                   {"gold", p.gold}});
  }
  return {{"schema", "aoa-predictions"}, {"version", 1}, {"reader", reader}, {"meta", meta.to_json()},
          {"predictions", arr}};
}

inline std::vector<Prediction> predictions_from_json(const nlohmann::json& j) {
  const nlohmann::json* arr = &j;
  if (j.is_object()) {
    if (j.contains("predictions")) arr = &j["predictions"];
    else if (j.contains("samples")) arr = &j["samples"];
    else throw FormatError("prediction file has no 'predictions' array");
  }
  if (!arr->is_array()) throw FormatError("predictions must be an array");
  std::vector<Prediction> out;
  try {
    for (const auto& r : *arr) {
      Prediction p;
      p.id = r.at("id").is_string() ? r.at("id").get<std::string>() : r.at("id").dump();
      p.gold = r.at("gold").get<std::string>();
      const std::string predicted = r.at("predicted").get<std::string>();
      if (r.contains("candidates")) {
        p.scores.candidates = r["candidates"].get<std::vector<std::string>>();
        if (r.contains("scores")) p.scores.scores = r["scores"].get<std::vector<double>>();
      }
      auto it = std::find(p.scores.candidates.begin(), p.scores.candidates.end(), predicted);
      if (it == p.scores.candidates.end()) {
        p.scores.candidates.push_back(predicted);
        it = p.scores.candidates.end() - 1;
      }
      p.answer = static_cast<std::size_t>(it - p.scores.candidates.begin());
      if (p.scores.scores.size() != p.scores.candidates.size()) p.scores.scores.assign(p.scores.candidates.size(), 0.0);
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed prediction record: ") + e.what());
  }
  return out;
}

}  // namespace aoa
