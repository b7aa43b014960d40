#pragma once

// The `aoa` command-line tool. Exit codes: 0 success, 1 validation or input
// error, 2 usage error. Logs go to stderr; results go to files or stdout.

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aoa/aoa.hpp"

namespace aoa::cli {

using nlohmann::json;

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw InputError(std::string("missing ") + what + " path");
  if (!std::filesystem::is_regular_file(path)) throw InputError(std::string(what) + " not found: " + path);
}

inline void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  ensure_parent(path);
  write_text_file(path, text);
}

// Everything that determines a training run. Paths are kept out of the
// config hash so the same run written elsewhere yields the same bytes.
struct RunConfig {
  std::string reader = "aoa";  // "aoa" or "sent"
  std::string train_path, dev_path, test_path, out_path;
  std::string vocab_path, report_json, report_csv, epoch_dir;
  std::size_t keep_epochs = 0;  // 0 keeps every epoch checkpoint
  std::size_t vocab_size = 30000;
  TrainConfig train;
  AoaConfig aoa;
  SentConfig sent;

  json hashed() const {
    json j{{"reader", reader}, {"vocab_size", vocab_size}, {"train", train.to_json()}};
    j["model"] = reader == "aoa" ? aoa.to_json() : sent.to_json();
    return j;
  }

  // {"reader", "vocab_size", "train": {...}, "model": {...}}
  void apply_file(const json& j) {
    reader = j.value("reader", reader);
    vocab_size = j.value("vocab_size", vocab_size);
    if (j.contains("train")) train = TrainConfig::from_json(j["train"]);
    if (j.contains("model")) {
      aoa = AoaConfig::from_json(j["model"]);
      sent = SentConfig::from_json(j["model"]);
    }
    for (const char* key : {"train_path", "dev_path", "test_path"}) {
      if (j.contains(key)) {
        const std::string v = j[key].get<std::string>();
        if (std::string(key) == "train_path") train_path = v;
        else if (std::string(key) == "dev_path") dev_path = v;
        else test_path = v;
      }
    }
  }
};

namespace detail {

// Flag values that win over the config file when given.
struct TrainFlags {
  std::string config;
  std::string reader, agg_token, agg_occ, backend, optimizer;
  std::size_t epochs = 0, patience = 0, batch = 0, embed_dim = 0, hidden_dim = 0, vocab_size = 0, scorer_hidden = 0;
  double lr_main = 0, lr_encoder = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> freeze;
  bool by_surface = false;
  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

inline void add_train_options(CLI::App& cmd, RunConfig& run, TrainFlags& f, bool with_reader, bool with_agg) {
  cmd.add_option("--train", run.train_path, "Training split (BIOMRC JSON)");
  cmd.add_option("--dev", run.dev_path, "Dev split used for early stopping");
  cmd.add_option("--test", run.test_path, "Optional test split, scored with the best weights");
  cmd.add_option("--vocab", run.vocab_path, "Vocabulary file; built from the training split when omitted");
  cmd.add_option("--report-json", run.report_json, "Write the per-epoch report as JSON");
  cmd.add_option("--report-csv", run.report_csv, "Write the per-epoch report as CSV");
  cmd.add_option("--epoch-dir", run.epoch_dir, "Save a checkpoint after every epoch into this directory");
  cmd.add_option("--keep-epochs", run.keep_epochs, "Epoch checkpoints to retain (0 = all)");
  f.opts["config"] = cmd.add_option("--config", f.config, "JSON run config; flags override it");
  if (with_reader) f.opts["reader"] = cmd.add_option("--reader", f.reader, "aoa or sent")->check(CLI::IsMember({"aoa", "sent"}));
  if (with_agg) {
    f.opts["agg-token"] = cmd.add_option("--agg-token", f.agg_token, "F1 over candidate pieces: max or sum")
                              ->check(CLI::IsMember({"max", "sum"}));
    f.opts["agg-occ"] = cmd.add_option("--agg-occ", f.agg_occ, "F2 over context occurrences: max or sum")
                            ->check(CLI::IsMember({"max", "sum"}));
    f.opts["index-by-surface"] = cmd.add_flag("--index-by-surface", f.by_surface, "Segment candidates by surface form");
  }
  f.opts["embed-backend"] = cmd.add_option("--embed-backend", f.backend, "toy or precomputed:<dir>");
  f.opts["optimizer"] = cmd.add_option("--optimizer", f.optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
  f.opts["epochs"] = cmd.add_option("--epochs", f.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  f.opts["patience"] = cmd.add_option("--patience", f.patience, "Early-stopping patience")->check(CLI::PositiveNumber);
  f.opts["batch-size"] = cmd.add_option("--batch-size", f.batch, "Samples per update")->check(CLI::PositiveNumber);
  f.opts["lr-main"] = cmd.add_option("--lr-main", f.lr_main, "Learning rate outside the encoder")->check(CLI::PositiveNumber);
  f.opts["lr-encoder"] = cmd.add_option("--lr-encoder", f.lr_encoder, "Encoder learning rate")->check(CLI::PositiveNumber);
  f.opts["seed"] = cmd.add_option("--seed", f.seed, "Seed for initialization and batch order");
  f.opts["freeze"] = cmd.add_option("--freeze", f.freeze, "Parameter-name prefixes to freeze (none = train everything)");
  f.opts["embed-dim"] = cmd.add_option("--embed-dim", f.embed_dim, "Embedding width e")->check(CLI::PositiveNumber);
  f.opts["hidden-dim"] = cmd.add_option("--hidden-dim", f.hidden_dim, "GRU hidden size d")->check(CLI::PositiveNumber);
  f.opts["scorer-hidden"] =
      cmd.add_option("--scorer-hidden", f.scorer_hidden, "Sentence scorer hidden width")->check(CLI::PositiveNumber);
  f.opts["vocab-size"] = cmd.add_option("--vocab-size", f.vocab_size, "Vocabulary cap")->check(CLI::PositiveNumber);
}

inline void finish_run_config(RunConfig& run, const TrainFlags& f) {
  if (f.given("config")) {
    require_file(f.config, "config");
    run.apply_file(read_json_file(f.config));
  }
  if (f.given("reader")) run.reader = f.reader;
  if (f.given("agg-token")) run.train.aggregation.token = parse_agg(f.agg_token);
  if (f.given("agg-occ")) run.train.aggregation.occurrence = parse_agg(f.agg_occ);
  if (f.given("index-by-surface")) run.aoa.index_by_surface = f.by_surface;
  if (f.given("embed-backend")) run.aoa.backend = run.sent.backend = f.backend;
  if (f.given("optimizer")) run.train.optimizer = parse_optimizer(f.optimizer);
  if (f.given("epochs")) run.train.max_epochs = f.epochs;
  if (f.given("patience")) run.train.patience = f.patience;
  if (f.given("batch-size")) run.train.batch_size = f.batch;
  if (f.given("lr-main")) run.train.lr_main = f.lr_main;
  if (f.given("lr-encoder")) run.train.lr_encoder = f.lr_encoder;
  if (f.given("seed")) run.train.seed = f.seed;
  if (f.given("freeze")) {
    run.train.freeze.clear();
    for (const auto& prefix : f.freeze) {
      if (!prefix.empty() && prefix != "none") run.train.freeze.push_back(prefix);
    }
  }
  if (f.given("embed-dim")) run.aoa.embed_dim = run.sent.embed_dim = f.embed_dim;
  if (f.given("hidden-dim")) run.aoa.hidden_dim = f.hidden_dim;
  if (f.given("scorer-hidden")) run.sent.scorer_hidden = f.scorer_hidden;
  if (f.given("vocab-size")) run.vocab_size = f.vocab_size;
  run.aoa.seed = run.sent.seed = run.train.seed;
  run.aoa.agg = run.train.aggregation;
  run.train.validate();
  if (run.reader != "aoa" && run.reader != "sent") throw CLI::ValidationError("reader must be aoa or sent");
}

inline void log_epoch(const EpochStats& e, bool improved) {
  std::cerr << "epoch " << e.epoch << "  train_loss " << e.train_loss << "  dev_loss " << e.dev_loss << "  dev_acc "
            << e.dev_acc << (improved ? "  *" : "") << "  (" << e.seconds << " s)\n";
}

inline double split_accuracy(const std::vector<Prediction>& preds) {
  std::size_t hits = 0;
  for (const auto& p : preds) hits += p.correct();
  return preds.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(preds.size());
}

template <class Reader>
std::vector<Prediction> predict_split(const Reader& r, const DatasetSplit& split) {
  std::vector<Prediction> out;
  out.reserve(split.size());
  for (const auto& s : split.samples) out.push_back(r.predict(s));
  return out;
}

struct TrainOutcome {
  json checkpoint;
  TrainReport report;
  std::optional<double> test_acc;
};

template <class Reader>
TrainOutcome train_reader(Reader& reader, const RunConfig& run, const DatasetSplit& train_split,
                          const DatasetSplit& dev_split, const std::optional<DatasetSplit>& test_split) {
  const ArtifactMeta meta = ArtifactMeta::for_config(run.train.seed, run.hashed());
  std::vector<std::string> saved;
  auto on_epoch = [&](const EpochStats& e, bool improved) {
    log_epoch(e, improved);
    if (run.epoch_dir.empty()) return;
    std::filesystem::create_directories(run.epoch_dir);
    const std::string path = (std::filesystem::path(run.epoch_dir) / ("epoch-" + std::to_string(e.epoch) + ".json")).string();
    json j = reader.checkpoint(meta);
    j["epoch"] = e.epoch;
    write_json_file(path, j);
    saved.push_back(path);
    if (run.keep_epochs > 0 && saved.size() > run.keep_epochs) {
      std::filesystem::remove(saved.front());
      saved.erase(saved.begin());
    }
  };
  TrainOutcome out;
  out.report = train(reader, train_split, dev_split, run.train, on_epoch);
  if (test_split) out.test_acc = split_accuracy(predict_split(reader, *test_split));
  out.checkpoint = reader.checkpoint(meta);
  out.checkpoint["train_config"] = run.train.to_json();
  out.checkpoint["report"] = out.report.to_json(false);
  if (out.test_acc) out.checkpoint["test_acc"] = *out.test_acc;
  return out;
}

inline DatasetSplit load_split(const std::string& path, const char* what) {
  require_file(path, what);
  return load_biomrc(path, what);
}

struct LoadedData {
  DatasetSplit train, dev;
  std::optional<DatasetSplit> test;
  Vocab vocab;
};

inline LoadedData load_run_data(const RunConfig& run) {
  require_file(run.train_path, "train split");
  require_file(run.dev_path, "dev split");
  if (!run.test_path.empty()) require_file(run.test_path, "test split");
  if (!run.vocab_path.empty()) require_file(run.vocab_path, "vocabulary");
  LoadedData d{load_split(run.train_path, "train"), load_split(run.dev_path, "dev"), std::nullopt, Vocab()};
  if (!run.test_path.empty()) d.test = load_split(run.test_path, "test");
  d.vocab = run.vocab_path.empty() ? build_vocab(d.train, run.vocab_size) : Vocab::load(run.vocab_path);
  std::cerr << "train " << d.train.size() << " / dev " << d.dev.size() << " samples, vocabulary " << d.vocab.size()
            << "\n";
  return d;
}

inline TrainOutcome run_training(const RunConfig& run, const LoadedData& data) {
  if (run.reader == "aoa") {
    AoaReader reader(data.vocab, run.aoa);
    return train_reader(reader, run, data.train, data.dev, data.test);
  }
  SentReader reader(data.vocab, run.sent);
  return train_reader(reader, run, data.train, data.dev, data.test);
}

inline void write_reports(const RunConfig& run, const TrainReport& report, const std::string& label) {
  if (!run.report_json.empty()) {
    json j = report.to_json(true);
    j["reader"] = run.reader;
    j["label"] = label;
    ensure_parent(run.report_json);
    write_json_file(run.report_json, j);
  }
  if (!run.report_csv.empty()) write_output(run.report_csv, report.to_csv());
}

inline std::vector<Prediction> load_predictions(const std::string& path, const char* what) {
  require_file(path, what);
  return predictions_from_json(read_json_file(path));
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Cloze-style reading comprehension: attention-over-attention and sentence readers, ensembling, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::function<void()> action;

  // corpus validate / synth
  auto* corpus = app.add_subcommand("corpus", "Dataset validation and synthetic generation");
  corpus->require_subcommand(1);
  std::string validate_path;
  std::size_t max_context = 2000;
  auto* validate = corpus->add_subcommand("validate", "Check a BIOMRC-style JSON file");
  validate->add_option("--data,data", validate_path, "Dataset file")->required();
  validate->add_option("--max-context", max_context, "Context length limit in words");
  validate->callback([&] {
    action = [&] {
      require_file(validate_path, "dataset");
      ValidationOptions opt;
      opt.max_context_tokens = max_context;
      const DatasetSplit split = load_biomrc(validate_path, "data", opt);
      std::cout << validate_path << ": " << split.size() << " valid samples\n";
    };
  });

  SynthConfig synth;
  std::string synth_out, synth_dir;
  std::vector<std::string> synth_splits;
  auto* synth_cmd = corpus->add_subcommand("synth", "Generate a synthetic cloze dataset");
  synth_cmd->add_option("--n", synth.n_samples, "Samples (single-file mode)")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--vocab", synth.vocab_size, "Distinct words");
  synth_cmd->add_option("--entities", synth.n_entities, "Distinct entities");
  synth_cmd->add_option("--context-len", synth.context_len, "Context length in words");
  synth_cmd->add_option("--out", synth_out, "Output file (single-file mode)");
  synth_cmd->add_option("--split", synth_splits, "name=count, repeatable; writes <out-dir>/<name>.json");
  synth_cmd->add_option("--out-dir", synth_dir, "Directory for --split outputs");
  synth_cmd->callback([&] {
    action = [&] {
      std::vector<std::pair<std::string, std::size_t>> sizes;
      for (const auto& s : synth_splits) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--split expects name=count, got " + s);
        sizes.emplace_back(s.substr(0, eq), std::stoul(s.substr(eq + 1)));
      }
      if (sizes.empty()) {
        if (synth_out.empty()) throw CLI::ValidationError("corpus synth needs --out or --split with --out-dir");
        // Fixed name so the bytes do not depend on where they are written.
        sizes.emplace_back("all", synth.n_samples);
      } else if (synth_dir.empty()) {
        throw CLI::ValidationError("--split needs --out-dir");
      }
      const json cfg{{"vocab", synth.vocab_size}, {"entities", synth.n_entities}, {"context_len", synth.context_len},
                     {"splits", sizes}};
      const ArtifactMeta meta = ArtifactMeta::for_config(synth.seed, cfg);
      const auto splits = generate_synthetic_splits(synth, sizes);
      for (const auto& split : splits) {
        json j = to_biomrc_json(split);
        j["meta"] = meta.to_json();
        j["generator"] = cfg;
        const std::string path =
            synth_splits.empty() ? synth_out : (std::filesystem::path(synth_dir) / (split.name + ".json")).string();
        ensure_parent(path);
        write_json_file(path, j);
        std::cerr << "wrote " << split.size() << " samples to " << path << "\n";
      }
    };
  });

  // train / predict (+ sentreader aliases)
  RunConfig run_cfg;
  detail::TrainFlags flags;
  auto* train_cmd = app.add_subcommand("train", "Train a reader with early stopping on dev accuracy");
  detail::add_train_options(*train_cmd, run_cfg, flags, true, true);
  train_cmd->add_option("--out", run_cfg.out_path, "Best checkpoint output")->required();

  auto* sentreader = app.add_subcommand("sentreader", "Sentence-scoring reader (train / predict)");
  sentreader->require_subcommand(1);
  RunConfig sent_cfg;
  detail::TrainFlags sent_flags;
  auto* sent_train = sentreader->add_subcommand("train", "Train the sentence reader (batch 1, top layer frozen unless overridden)");
  detail::add_train_options(*sent_train, sent_cfg, sent_flags, false, false);
  sent_train->add_option("--out", sent_cfg.out_path, "Best checkpoint output")->required();

  auto train_action = [&](RunConfig& cfg, const detail::TrainFlags& f, bool sent) {
    action = [&cfg, &f, sent] {
      if (sent) {
        const TrainConfig preset = TrainConfig::sent_reader_preset();
        cfg.train.batch_size = preset.batch_size;
        cfg.train.freeze = preset.freeze;
      }
      detail::finish_run_config(cfg, f);
      if (sent) cfg.reader = "sent";
      const auto data = detail::load_run_data(cfg);
      const auto outcome = detail::run_training(cfg, data);
      ensure_parent(cfg.out_path);
      write_json_file(cfg.out_path, outcome.checkpoint);
      detail::write_reports(cfg, outcome.report, std::string(cfg.train.aggregation.label()));
      std::cerr << "best epoch " << outcome.report.best_epoch << ", dev accuracy " << outcome.report.best_dev_acc();
      if (outcome.test_acc) std::cerr << ", test accuracy " << *outcome.test_acc;
      std::cerr << "\nwrote " << cfg.out_path << "\n";
    };
  };
  train_cmd->callback([&] { train_action(run_cfg, flags, false); });
  sent_train->callback([&] { train_action(sent_cfg, sent_flags, true); });

  std::string model_path, data_path, preds_out;
  auto predict_options = [&](CLI::App* cmd) {
    cmd->add_option("--model,--checkpoint", model_path, "Checkpoint from train")->required();
    cmd->add_option("--data,--input", data_path, "Dataset to score")->required();
    cmd->add_option("--out", preds_out, "Prediction JSON (stdout when omitted)");
    cmd->callback([&] {
      action = [&] {
        require_file(model_path, "checkpoint");
        const DatasetSplit split = detail::load_split(data_path, "dataset");
        const json ckpt = read_json_file(model_path);
        const std::string kind = ckpt.value("kind", std::string());
        std::vector<Prediction> preds;
        if (kind == AoaReader::kKind) {
          preds = detail::predict_split(AoaReader::from_checkpoint(ckpt), split);
        } else if (kind == SentReader::kKind) {
          preds = detail::predict_split(SentReader::from_checkpoint(ckpt), split);
        } else {
          throw FormatError(model_path + ": not a reader checkpoint (kind '" + kind + "')");
        }
        ArtifactMeta meta;
        meta.seed = ckpt.at("meta").value("seed", std::uint64_t{0});
        meta.config_hash = ckpt.at("meta").value("config_hash", std::string());
        write_output(preds_out, predictions_to_json(preds, kind, meta).dump(1) + "\n");
        std::cerr << "accuracy " << detail::split_accuracy(preds) << " on " << preds.size() << " samples\n";
      };
    });
  };
  predict_options(app.add_subcommand("predict", "Score a dataset with a trained reader"));
  predict_options(sentreader->add_subcommand("predict", "Score a dataset with a trained sentence reader"));

  // ensemble collect / train / eval
  auto* ensemble = app.add_subcommand("ensemble", "MLP weighting of two readers' scores");
  ensemble->require_subcommand(1);
  std::string preds_a, preds_b, preds_e, scores_path, dev_scores_path, ens_out;
  WeightingConfig wcfg;
  auto* collect = ensemble->add_subcommand("collect", "Pair two prediction files into a score-exchange file");
  collect->add_option("--preds-a", preds_a, "Predictions of reader A")->required();
  collect->add_option("--preds-b", preds_b, "Predictions of reader B")->required();
  collect->add_option("--out", ens_out, "Score-exchange JSON (stdout when omitted)");
  collect->callback([&] {
    action = [&] {
      const auto a = detail::load_predictions(preds_a, "predictions A");
      const auto b = detail::load_predictions(preds_b, "predictions B");
      write_output(ens_out, ensemble_samples_to_json(pair_predictions(a, b), ArtifactMeta::for_config(0, {})).dump(1) + "\n");
    };
  });
  auto* ens_train = ensemble->add_subcommand("train", "Fit the weighting MLP");
  ens_train->add_option("--scores", scores_path, "Training score-exchange file")->required();
  ens_train->add_option("--dev-scores", dev_scores_path, "Dev score-exchange file (defaults to --scores)");
  ens_train->add_option("--out", ens_out, "Checkpoint output")->required();
  ens_train->add_option("--hidden", wcfg.hidden, "Hidden width")->check(CLI::PositiveNumber);
  ens_train->add_option("--epochs", wcfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  ens_train->add_option("--batch-size", wcfg.batch_size, "Samples per update")->check(CLI::PositiveNumber);
  ens_train->add_option("--lr", wcfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  ens_train->add_option("--seed", wcfg.seed, "Seed");
  ens_train->callback([&] {
    action = [&] {
      require_file(scores_path, "scores");
      if (!dev_scores_path.empty()) require_file(dev_scores_path, "dev scores");
      const auto train_s = ensemble_samples_from_json(read_json_file(scores_path));
      const auto dev_s = dev_scores_path.empty() ? train_s : ensemble_samples_from_json(read_json_file(dev_scores_path));
      auto result = train_weighting(train_s, dev_s, wcfg);
      json j = result.model.checkpoint(ArtifactMeta::for_config(wcfg.seed, wcfg.to_json()));
      j["report"] = result.report.to_json(false);
      ensure_parent(ens_out);
      write_json_file(ens_out, j);
      std::cerr << "best epoch " << result.report.best_epoch << ", dev accuracy " << result.report.best_dev_acc()
                << "\nwrote " << ens_out << "\n";
    };
  });
  auto* ens_eval = ensemble->add_subcommand("eval", "Apply a weighting MLP to a score-exchange file");
  ens_eval->add_option("--model", model_path, "Checkpoint from ensemble train")->required();
  ens_eval->add_option("--scores", scores_path, "Score-exchange file")->required();
  ens_eval->add_option("--out", ens_out, "Ensemble predictions JSON");
  ens_eval->callback([&] {
    action = [&] {
      require_file(model_path, "checkpoint");
      require_file(scores_path, "scores");
      const WeightingModel model = WeightingModel::from_checkpoint(read_json_file(model_path));
      const auto samples = ensemble_samples_from_json(read_json_file(scores_path));
      std::vector<Prediction> preds;
      Bitmap a, b, e;
      for (const auto& s : samples) {
        Prediction p{s.id, model.score(s), 0, s.candidates.empty() ? std::to_string(s.gold) : s.candidates[s.gold]};
        if (p.scores.candidates.empty()) {
          for (std::size_t i = 0; i < s.score_a.size(); ++i) p.scores.candidates.push_back(std::to_string(i));
        }
        p.answer = p.scores.argmax();
        a.push_back(argmax_first(s.score_a) == s.gold);
        b.push_back(argmax_first(s.score_b) == s.gold);
        e.push_back(p.answer == s.gold);
        preds.push_back(std::move(p));
      }
      std::cout << "reader A accuracy " << accuracy(a) << "\nreader B accuracy " << accuracy(b)
                << "\nensemble accuracy " << accuracy(e) << "\nunion accuracy " << union_accuracy(a, b) << "\n";
      if (!ens_out.empty()) {
        ensure_parent(ens_out);
        write_json_file(ens_out, predictions_to_json(preds, "ensemble", ArtifactMeta::for_config(model.config().seed, model.config().to_json())));
      }
    };
  });

  // eval compare
  auto* eval = app.add_subcommand("eval", "Compare two readers' predictions");
  eval->require_subcommand(1);
  double alpha = kDefaultAlpha;
  std::string format = "markdown", report_out, name_a = "ModelA", name_b = "ModelB";
  auto* compare = eval->add_subcommand("compare", "Accuracy, union accuracy, contingency counts and McNemar");
  compare->add_option("--preds-a", preds_a, "Predictions of model A")->required();
  compare->add_option("--preds-b", preds_b, "Predictions of model B")->required();
  compare->add_option("--preds-ensemble", preds_e, "Optional ensemble predictions");
  compare->add_option("--name-a", name_a, "Label for model A");
  compare->add_option("--name-b", name_b, "Label for model B");
  compare->add_option("--alpha", alpha, "McNemar significance level")->check(CLI::Range(1e-9, 0.999999));
  compare->add_option("--format", format, "markdown, csv or json")->check(CLI::IsMember({"markdown", "md", "csv", "json"}));
  compare->add_option("--out", report_out, "Report file (stdout when omitted)");
  compare->callback([&] {
    action = [&] {
      const auto a = detail::load_predictions(preds_a, "predictions A");
      const auto b = detail::load_predictions(preds_b, "predictions B");
      EvalRecord rec = compare_predictions(a, b, name_a, name_b);
      if (!preds_e.empty()) {
        const auto e = detail::load_predictions(preds_e, "ensemble predictions");
        rec.ensemble = compare_predictions(a, e).b;
      }
      write_output(report_out, emit_report({{rec}, {}, alpha}, parse_report_format(format)));
    };
  });

  // report: aggregation table from train reports / checkpoints
  std::vector<std::string> run_files;
  auto* report = app.add_subcommand("report", "Render an aggregation comparison from train reports or checkpoints");
  report->add_option("--runs", run_files, "Train report JSON or checkpoint files")->required();
  report->add_option("--preds-a", preds_a, "Optional predictions of model A for a comparison section");
  report->add_option("--preds-b", preds_b, "Optional predictions of model B");
  report->add_option("--alpha", alpha, "McNemar significance level");
  report->add_option("--format", format, "markdown, csv or json")->check(CLI::IsMember({"markdown", "md", "csv", "json"}));
  report->add_option("--out", report_out, "Report file (stdout when omitted)");
  report->callback([&] {
    action = [&] {
      ReportInput in;
      in.alpha = alpha;
      for (const auto& path : run_files) {
        require_file(path, "run");
        const json j = read_json_file(path);
        const json& rep = j.contains("report") ? j["report"] : j;
        if (!rep.is_object() || !rep.contains("best_dev_acc") || !rep.contains("best_epoch")) {
          throw std::runtime_error(path + ": not a train report or checkpoint (no best_dev_acc/best_epoch)");
        }
        AggregationRun r;
        if (j.contains("label")) {
          r.label = j["label"].get<std::string>();
        } else if (j.contains("train_config")) {
          r.label = j["train_config"].value("agg_occ", std::string("sum")) + "/" +
                    j["train_config"].value("agg_token", std::string("sum"));
        } else {
          r.label = std::filesystem::path(path).stem().string();
        }
        r.dev_acc = rep.at("best_dev_acc").get<double>();
        r.best_epoch = rep.at("best_epoch").get<std::size_t>();
        if (j.contains("test_acc")) r.test_acc = j["test_acc"].get<double>();
        in.runs.push_back(r);
      }
      if (!preds_a.empty() || !preds_b.empty()) {
        in.comparisons.push_back(compare_predictions(detail::load_predictions(preds_a, "predictions A"),
                                                     detail::load_predictions(preds_b, "predictions B")));
      }
      write_output(report_out, emit_report(in, parse_report_format(format)));
    };
  });

  // sweep over the four aggregation combinations
  RunConfig sweep_cfg;
  detail::TrainFlags sweep_flags;
  std::string sweep_dir;
  auto* sweep = app.add_subcommand("sweep", "Train the AoA reader under all four F1 x F2 combinations");
  detail::add_train_options(*sweep, sweep_cfg, sweep_flags, false, false);
  sweep->add_option("--out-dir", sweep_dir, "Directory for checkpoints, reports and the table")->required();
  sweep->callback([&] {
    action = [&] {
      detail::finish_run_config(sweep_cfg, sweep_flags);
      sweep_cfg.reader = "aoa";
      const auto data = detail::load_run_data(sweep_cfg);
      std::filesystem::create_directories(sweep_dir);
      ReportInput in;
      for (Agg occ : {Agg::Max, Agg::Sum}) {
        for (Agg tok : {Agg::Max, Agg::Sum}) {
          RunConfig one = sweep_cfg;
          one.train.aggregation = {tok, occ};
          one.aoa.agg = one.train.aggregation;
          const std::string label = one.train.aggregation.label();
          const std::string stem = std::string(to_string(occ)) + "-" + std::string(to_string(tok));
          one.report_json = (std::filesystem::path(sweep_dir) / (stem + ".report.json")).string();
          one.report_csv = (std::filesystem::path(sweep_dir) / (stem + ".report.csv")).string();
          one.epoch_dir.clear();
          std::cerr << "== " << label << "\n";
          const auto outcome = detail::run_training(one, data);
          write_json_file((std::filesystem::path(sweep_dir) / (stem + ".ckpt.json")).string(), outcome.checkpoint);
          detail::write_reports(one, outcome.report, label);
          in.runs.push_back({label, outcome.report.best_dev_acc(), outcome.test_acc, outcome.report.best_epoch});
        }
      }
      const std::string table = emit_report(in, ReportFormat::Markdown);
      write_text_file((std::filesystem::path(sweep_dir) / "aggregation.md").string(), table);
      write_text_file((std::filesystem::path(sweep_dir) / "aggregation.json").string(), emit_report(in, ReportFormat::Json));
      std::cout << table;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace aoa::cli
