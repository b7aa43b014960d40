#pragma once

// Minibatch training with per-group learning rates, dev evaluation after
// every epoch, and early stopping on dev accuracy.

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aoa/aoa_reader.hpp"
#include "aoa/autodiff.hpp"
#include "aoa/corpus.hpp"
#include "aoa/scores.hpp"
#include "aoa/util.hpp"

namespace aoa {

enum class Optimizer { Sgd, Adam };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

inline Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "adam") return Optimizer::Adam;
  throw std::invalid_argument("optimizer must be 'sgd' or 'adam', got '" + std::string(s) + "'");
}

struct TrainConfig {
  std::size_t max_epochs = 40;
  std::size_t patience = 3;
  std::size_t batch_size = 30;
  double lr_main = 1e-3;
  double lr_encoder = 1e-5;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Sgd;
  AggregationConfig aggregation;
  std::vector<std::string> freeze;  // parameter-name prefixes

  void validate() const {
    if (patience < 1) throw std::invalid_argument("patience must be at least 1");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (!(lr_main > 0) || !(lr_encoder > 0)) throw std::invalid_argument("learning rates must be positive");
  }

  nlohmann::json to_json() const {
    return {{"max_epochs", max_epochs},
            {"patience", patience},
            {"batch_size", batch_size},
            {"lr_main", lr_main},
            {"lr_encoder", lr_encoder},
            {"seed", seed},
            {"optimizer", to_string(optimizer)},
            {"agg_token", to_string(aggregation.token)},
            {"agg_occ", to_string(aggregation.occurrence)},
            {"freeze", freeze}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_main = j.value("lr_main", c.lr_main);
    c.lr_encoder = j.value("lr_encoder", c.lr_encoder);
    c.seed = j.value("seed", c.seed);
    c.optimizer = parse_optimizer(j.value("optimizer", std::string("sgd")));
    c.aggregation.token = parse_agg(j.value("agg_token", std::string("sum")));
    c.aggregation.occurrence = parse_agg(j.value("agg_occ", std::string("sum")));
    c.freeze = j.value("freeze", c.freeze);
    c.validate();
    return c;
  }

  // Fine-tuning preset for the sentence reader: one sample per step and a
  // frozen top encoder layer.
  static TrainConfig sent_reader_preset() {
    TrainConfig c;
    c.batch_size = 1;
    c.freeze = {"embed.attn"};
    return c;
  }
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double dev_loss = 0;
  double dev_acc = 0;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based, 0 before any epoch
  bool stopped_early = false;

  double best_dev_acc() const { return best_epoch ? epochs.at(best_epoch - 1).dev_acc : 0.0; }

  // Timing is left out unless asked for, so equal runs give equal documents.
  nlohmann::json to_json(bool with_timing = true) const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : epochs) {
      nlohmann::json r{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}, {"dev_acc", e.dev_acc}};
      if (with_timing) r["seconds"] = e.seconds;
      rows.push_back(std::move(r));
    }
    return {{"epochs", rows}, {"best_epoch", best_epoch}, {"best_dev_acc", best_dev_acc()},
            {"stopped_early", stopped_early}};
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,dev_acc,dev_loss,train_loss,seconds\n";
    for (const auto& e : epochs) {
      out << e.epoch << ',' << e.dev_acc << ',' << e.dev_loss << ',' << e.train_loss << ',' << e.seconds << '\n';
    }
    return out.str();
  }
};

// Tracks the best dev accuracy (first occurrence on ties) and how many epochs
// have passed without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {
    if (patience < 1) throw std::invalid_argument("patience must be at least 1");
  }

  // Returns true when training should stop after this epoch.
  bool update(double dev_acc) {
    ++epoch_;
    if (epoch_ == 1 || dev_acc > best_) {
      best_ = dev_acc;
      best_epoch_ = epoch_;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return stale_ >= patience_;
  }

  bool improved() const { return best_epoch_ == epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GroupRates {
  double main = 1e-3;
  double encoder = 1e-5;
  double of(const Param& p) const { return p.group == "encoder" ? encoder : main; }
};

// p <- p - lr * g, skipping frozen parameters.
inline void sgd_step(ParamStore& store, const GroupRates& lr) {
  store.for_each([&](Param& p) {
    if (p.frozen) return;
    if (p.grad.shape() != p.value.shape()) {
      throw ShapeError("sgd_step: gradient shape " + shape_str(p.grad.shape()) + " does not match " + p.name + " " +
                       shape_str(p.value.shape()));
    }
    const double rate = lr.of(p);
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= rate * p.grad[i];
  });
}

class Adam {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void step(ParamStore& store, const GroupRates& lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    store.for_each([&](Param& p) {
      if (p.frozen) return;
      if (p.grad.shape() != p.value.shape()) throw ShapeError("adam: gradient shape mismatch for " + p.name);
      auto& [m, v] = state_[p.name];
      if (m.size() != p.value.size()) {
        m.assign(p.value.size(), 0.0);
        v.assign(p.value.size(), 0.0);
      }
      const double rate = lr.of(p);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = beta1 * m[i] + (1 - beta1) * g;
        v[i] = beta2 * v[i] + (1 - beta2) * g * g;
        p.value[i] -= rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    });
  }

 private:
  std::size_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state_;
};

struct DevResult {
  double accuracy = 0;
  double loss = 0;
};

template <class Model>
DevResult evaluate(const Model& model, const std::vector<typename Model::Example>& examples) {
  if (examples.empty()) throw std::invalid_argument("evaluate: empty split");
  DevResult r;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    Tape tape(false);
    Var s = model.scores(tape, ex);
    if (argmax_first(s.value().values()) == ex.gold) ++correct;
    r.loss += model.loss(tape, ex).item();
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  r.loss /= static_cast<double>(examples.size());
  return r;
}

template <class Model>
std::vector<typename Model::Example> prepare_all(const Model& model, const DatasetSplit& split) {
  std::vector<typename Model::Example> out;
  out.reserve(split.size());
  for (const auto& s : split.samples) out.push_back(model.prepare(s));
  return out;
}

// Called after every epoch with the stats so far; `improved` marks a new best.
using EpochCallback = std::function<void(const EpochStats&, bool improved)>;

// Trains in place and leaves the model holding its best-dev-epoch weights.
template <class Model>
TrainReport train(Model& model, const DatasetSplit& train_split, const DatasetSplit& dev_split,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_split.samples.empty()) throw std::invalid_argument("train: empty training split");
  if (dev_split.samples.empty()) throw std::invalid_argument("train: empty dev split");
  ParamStore& store = model.params();
  store.freeze(cfg.freeze);
  const auto train_ex = prepare_all(model, train_split);
  const auto dev_ex = prepare_all(model, dev_split);

  const GroupRates lr{cfg.lr_main, cfg.lr_encoder};
  Adam adam;
  EarlyStopping stopper(cfg.patience);
  TrainReport report;
  Snapshot best = store.snapshot();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_total = 0;
    for (const auto& batch : make_batches(train_ex.size(), cfg.batch_size, cfg.seed + epoch)) {
      store.zero_grad();
      for (std::size_t i : batch) {
        Tape tape;
        Var loss = model.loss(tape, train_ex[i]);
        if (!std::isfinite(loss.item())) {
          throw TrainingError("non-finite loss " + std::to_string(loss.item()) + " at epoch " + std::to_string(epoch) +
                              " on sample " + train_ex[i].id);
        }
        loss_total += loss.item();
        tape.backward(scale(loss, 1.0 / static_cast<double>(batch.size())));
      }
      if (cfg.optimizer == Optimizer::Adam) {
        adam.step(store, lr);
      } else {
        sgd_step(store, lr);
      }
    }

    const DevResult dev = evaluate(model, dev_ex);
    EpochStats stats{epoch, loss_total / static_cast<double>(train_ex.size()), dev.loss, dev.accuracy,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    report.epochs.push_back(stats);
    const bool stop = stopper.update(dev.accuracy);
    if (stopper.improved()) best = store.snapshot();
    if (on_epoch) on_epoch(stats, stopper.improved());
    if (stop && epoch < cfg.max_epochs) {
      report.stopped_early = true;
      break;
    }
  }
  report.best_epoch = stopper.best_epoch();
  store.restore(best);
  return report;
}

}  // namespace aoa
