// Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "aoa/aoa.hpp"
#include "op_cases.hpp"
#include "oracles.hpp"

using namespace aoa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// 1. Attention distributions on randomized toy samples.
Outcome attention_normalization() {
  SynthConfig sc;
  sc.n_samples = 500;
  sc.context_len = 24;
  sc.seed = 101;
  const DatasetSplit split = generate_synthetic(sc);
  AoaConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 4;
  cfg.seed = 5;
  const AoaReader reader(build_vocab(split), cfg);
  double worst = 0, min_s = 1;
  for (const auto& sample : split.samples) {
    const AttentionState st = reader.attention_state(reader.prepare(sample));
    for (std::size_t j = 0; j < st.alpha.cols(); ++j) {
      double col = 0;
      for (std::size_t i = 0; i < st.alpha.rows(); ++i) col += st.alpha.at(i, j);
      worst = std::max(worst, std::abs(col - 1));
    }
    double beta = 0, s = 0;
    for (double v : st.beta.values()) beta += v;
    for (double v : st.s.values()) {
      s += v;
      min_s = std::min(min_s, v);
    }
    worst = std::max({worst, std::abs(beta - 1), std::abs(s - 1)});
  }
  return {worst <= 1e-9 && min_s >= 0,
          "500 samples, max |sum - 1| = " + fmt(worst) + ", min s = " + fmt(min_s)};
}

// 2. Candidate aggregation against the double-loop oracle.
Outcome aggregation_oracle() {
  std::mt19937 gen(2024);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t mismatches = 0, checks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 16;
    std::vector<double> s(n);
    for (double& x : s) x = u(gen);
    CandidateIndex idx;
    for (int t = 0; t < 8; ++t) idx.positions[t];
    for (std::size_t i = 0; i < n; ++i) {
      if (gen() % 3) idx.positions[static_cast<int>(gen() % 8)].push_back(i);
    }
    idx.tokens.resize(1 + gen() % 5);
    for (auto& pieces : idx.tokens) {
      pieces.resize(1 + gen() % 4);
      for (int& t : pieces) t = static_cast<int>(gen() % 8);
    }
    for (bool tok_sum : {false, true}) {
      for (bool occ_sum : {false, true}) {
        const AggregationConfig cfg{tok_sum ? Agg::Sum : Agg::Max, occ_sum ? Agg::Sum : Agg::Max};
        ++checks;
        if (aggregate_candidates(s, idx, cfg) != oracle::aggregate(s, idx.tokens, idx.positions, tok_sum, occ_sum)) {
          ++mismatches;
        }
      }
    }
  }
  return {mismatches == 0, std::to_string(checks) + " instance/config pairs, " + std::to_string(mismatches) +
                               " mismatches"};
}

ClozeSample toy_sample() {
  ClozeSample s;
  s.id = "toy";
  s.context = "bo @entity1 ka @entity2 bo @entity1";
  s.question = "ka XXXX ne";
  s.candidates = {{"@entity1", {"first"}}, {"@entity2", {"second"}}};
  s.gold = "@entity2";
  return s;
}

// 3. Finite-difference gradient checks.
Outcome gradient_checks() {
  using namespace aoa::testing_ops;
  double worst = 0;
  std::string worst_name;
  auto note = [&](double err, const std::string& name) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };
  for (const OpCase& c : all_op_cases()) {
    Rng rng(fnv1a(c.name));
    for (int trial = 0; trial < 3; ++trial) note(grad_check(c.f, random_tensor(c.shape, rng, c.lo, c.hi)), c.name);
  }
  {
    ParamStore store;
    Rng rng(8);
    const GruParams g = GruParams::create(store, "g", 3, 4, "main", rng);
    const Tensor x = random_tensor({5, 3}, rng);
    for (bool reversed : {false, true}) {
      note(grad_check_params([&](Tape& t) { return probe(t, gru_sequence(t, t.constant(x), g, reversed)); }, store),
           "gru_sequence params");
      note(grad_check([&](Tape& t, Var in) { return probe(t, gru_sequence(t, in, g, reversed)); }, x),
           "gru_sequence inputs");
    }
    const MlpParams m = MlpParams::create(store, "m", 3, 4, 2, "main", rng);
    note(grad_check_params([&](Tape& t) { return probe(t, mlp_forward_rows(t, t.constant(x), m)); }, store), "mlp");
  }
  const ClozeSample sample = toy_sample();
  const DatasetSplit split{"toy", {sample}};
  for (Agg tok : {Agg::Max, Agg::Sum}) {
    for (Agg occ : {Agg::Max, Agg::Sum}) {
      AoaConfig cfg;
      cfg.embed_dim = 4;
      cfg.hidden_dim = 4;
      cfg.agg = {tok, occ};
      cfg.seed = 3;
      AoaReader reader(build_vocab(split), cfg);
      const auto ex = reader.prepare(sample);
      if (ex.input.context_len > 8 || ex.input.size() - ex.input.context_len - 3 > 5) {
        return {false, "toy sample exceeds the |C| <= 8, |Q| <= 5 shape"};
      }
      note(grad_check_params([&](Tape& t) { return reader.loss(t, ex); }, reader.params()),
           "aoa pipeline " + cfg.agg.label());
    }
  }
  return {worst < 1e-4, std::to_string(all_op_cases().size()) + " ops, GRU, MLP and the AoA pipeline under 4 "
                        "aggregations; max relative error " + fmt(worst) + " (" + worst_name + ")"};
}

// 4. Learnability on the synthetic cloze task.
Outcome synthetic_learnability() {
  SynthConfig sc;
  sc.vocab_size = 200;
  sc.n_entities = 6;
  sc.seed = 7;
  const auto splits = generate_synthetic_splits(sc, {{"train", 2000}, {"dev", 500}});
  const DatasetSplit& train_split = splits[0];
  const DatasetSplit& dev_split = splits[1];
  const Vocab vocab = build_vocab(train_split);
  auto progress = [](const char* name) {
    return [name](const EpochStats& e, bool improved) {
      std::cerr << "  " << name << " epoch " << e.epoch << ": dev acc " << fmt(e.dev_acc) << (improved ? " *" : "")
                << " (" << fmt(e.seconds, 3) << " s)\n";
    };
  };

  AoaConfig acfg;
  acfg.seed = 7;
  AoaReader aoa(vocab, acfg);
  TrainConfig tcfg;
  tcfg.seed = 7;
  tcfg.optimizer = Optimizer::Adam;
  const TrainReport ar = train(aoa, train_split, dev_split, tcfg, progress("aoa"));

  SentConfig scfg;
  scfg.seed = 7;
  SentReader sent(vocab, scfg);
  TrainConfig stcfg = tcfg;
  // The toy encoder starts from random weights, so it needs a real learning rate.
  stcfg.lr_encoder = 1e-3;
  const TrainReport sr = train(sent, train_split, dev_split, stcfg, progress("sent"));

  const double a = ar.best_dev_acc(), s = sr.best_dev_acc();
  return {a >= 0.90 && s >= 0.80 && ar.epochs.size() <= 40 && sr.epochs.size() <= 40,
          "AoA dev " + fmt(a) + " (best epoch " + std::to_string(ar.best_epoch) + " of " +
              std::to_string(ar.epochs.size()) + "), sentence reader dev " + fmt(s) + " (best epoch " +
              std::to_string(sr.best_epoch) + " of " + std::to_string(sr.epochs.size()) + ")"};
}

// Two readers over the same questions: 50% both right, 20% only A, 20% only
// B, 10% neither. A reader's top score is higher on average when it is right,
// but the two confidence ranges overlap, as they do for trained readers.
std::vector<EnsembleSample> complementary(std::size_t n, std::mt19937& gen) {
  std::vector<int> kind(n);
  for (std::size_t i = 0; i < n; ++i) kind[i] = i < n / 2 ? 3 : i < n * 7 / 10 ? 1 : i < n * 9 / 10 ? 2 : 0;
  std::shuffle(kind.begin(), kind.end(), gen);
  std::normal_distribution<double> noise(0, 0.5);
  const std::size_t m = 4;
  auto reader = [&](bool right, std::size_t gold) {
    std::vector<double> s(m);
    for (double& x : s) x = noise(gen);
    const std::size_t pick = right ? gold : (gold + 1 + gen() % (m - 1)) % m;
    const double rest = *std::max_element(s.begin(), s.end());
    s[pick] = rest + (right ? 0.2 + 3 * std::abs(noise(gen)) : 0.2 + std::abs(noise(gen)));
    return s;
  };
  std::vector<EnsembleSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gold = gen() % m;
    EnsembleSample e;
    e.id = "q" + std::to_string(i);
    for (std::size_t c = 0; c < m; ++c) e.candidates.push_back("@entity" + std::to_string(c));
    e.score_a = reader(kind[i] & 1, gold);
    e.score_b = reader(kind[i] & 2, gold);
    e.gold = gold;
    out.push_back(std::move(e));
  }
  return out;
}

Bitmap single_correct(const std::vector<EnsembleSample>& samples, bool first) {
  Bitmap b;
  for (const auto& s : samples) {
    const auto& v = first ? s.score_a : s.score_b;
    b.push_back(argmax_first(v) == s.gold);
  }
  return b;
}

// 5. Ensemble accuracy sits between the better single reader and the union.
Outcome ensemble_improvement() {
  std::size_t ok = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937 gen(static_cast<std::mt19937::result_type>(seed));
    const auto train_set = complementary(2000, gen);
    const auto dev_set = complementary(1000, gen);
    WeightingConfig cfg;
    cfg.epochs = 30;
    cfg.seed = seed;
    const WeightingResult r = train_weighting(train_set, dev_set, cfg);
    const Bitmap a = single_correct(dev_set, true), b = single_correct(dev_set, false);
    const double best_single = std::max(accuracy(a), accuracy(b));
    const double uni = union_accuracy(a, b);
    const double ens = r.model.accuracy(dev_set);
    const bool pass = ens >= best_single && ens <= uni;
    ok += pass;
    detail << (seed > 1 ? "; " : "") << "seed " << seed << ": " << fmt(best_single, 3) << " <= " << fmt(ens, 3)
           << " <= " << fmt(uni, 3) << (pass ? "" : " (violated)");
  }
  return {ok == 5, std::to_string(ok) + "/5 seeds; " + detail.str()};
}

// 6. Evaluation arithmetic on the published comparison counts.
Outcome evaluation_fixture() {
  const json j = read_json_file(std::string(AOA_FIXTURE_DIR) + "/fig4_counts.json");
  const EvalRecord r = EvalRecord::from_counts(j.at("total"), j.at("correct_a"), j.at("correct_b"), j.at("both"));
  const Contingency c = r.cells();
  const double a = 100 * r.accuracy_a(), b = 100 * r.accuracy_b(), u = 100 * r.union_acc();
  const bool pass = c.neither == 484 && std::abs(a - 86.74) <= 0.01 && std::abs(b - 80.21) <= 0.01 &&
                    std::abs(u - 92.26) <= 0.01;
  return {pass, "accuracy A " + fmt(a, 6) + "%, B " + fmt(b, 6) + "%, union " + fmt(u, 6) + "%, neither " +
                    std::to_string(c.neither)};
}

// 7. Exact McNemar branch against direct binomial summation.
Outcome mcnemar_oracle() {
  double worst = 0;
  std::size_t asymmetric = 0, tables = 0;
  for (unsigned b = 0; b <= kExactLimit; ++b) {
    for (unsigned c = 0; b + c <= kExactLimit; ++c) {
      ++tables;
      const McNemarResult r = mcnemar({7, b, c, 11});
      worst = std::max(worst, std::abs(r.p_value - oracle::mcnemar_exact(b, c)));
      const McNemarResult s = mcnemar({7, c, b, 11});
      if (s.p_value != r.p_value || s.reject != r.reject) ++asymmetric;
    }
  }
  return {worst <= 1e-12 && asymmetric == 0, std::to_string(tables) + " tables, max |p - oracle| = " + fmt(worst) +
                                                 ", " + std::to_string(asymmetric) + " asymmetric"};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(AOA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 8. Seeded CLI runs repeat bit for bit.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "aoa_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "log.txt";
  std::vector<std::string> differing;
  for (const char* run : {"1", "2"}) {
    const fs::path d = dir / run;
    if (run_cli("corpus synth --seed 7 --split train=300 --split dev=100 --out-dir " + d.string(), log) != 0) {
      return {false, "corpus synth failed: " + slurp(log)};
    }
    for (const char* reader : {"aoa", "sent"}) {
      const std::string args = std::string("train --reader ") + reader + " --train " + (d / "train.json").string() +
                               " --dev " + (d / "dev.json").string() +
                               " --optimizer adam --epochs 3 --embed-dim 16 --hidden-dim 16 --seed 7 --out " +
                               (d / (std::string(reader) + ".ckpt.json")).string();
      if (run_cli(args, log) != 0) return {false, std::string("train ") + reader + " failed: " + slurp(log)};
    }
  }
  std::size_t compared = 0;
  for (const char* name : {"train.json", "dev.json", "aoa.ckpt.json", "sent.ckpt.json"}) {
    const std::string a = slurp(dir / "1" / name), b = slurp(dir / "2" / name);
    ++compared;
    if (a.empty() || a != b) differing.push_back(name);
  }
  fs::remove_all(dir);
  std::string detail = std::to_string(compared) + " artifacts compared across two runs";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

// 9. Tail truncation of an over-long context.
Outcome truncation_contract() {
  std::vector<std::string> words;
  for (int i = 0; i < 20; ++i) words.push_back("w" + std::to_string(i));
  const Vocab vocab(words);
  std::string context, question;
  for (int i = 0; i < 600; ++i) context += (i ? " w" : "w") + std::to_string(i % 20);
  for (int i = 0; i < 20; ++i) question += (i ? " " : "") + (i == 10 ? std::string("XXXX") : "w" + std::to_string(i));
  const TokenSeq c = wordpiece_tokenize(context, vocab, Segment::Context);
  const TokenSeq q = wordpiece_tokenize(question, vocab, Segment::Question);
  const JointInput in = assemble_input(c, q, vocab, kDefaultLengthLimit);
  const std::size_t q_begin = in.question_begin();
  const std::vector<int> kept_q(in.ids.begin() + static_cast<std::ptrdiff_t>(q_begin),
                                in.ids.begin() + static_cast<std::ptrdiff_t>(q_begin + q.size()));
  const std::vector<int> kept_c(in.ids.begin() + 1, in.ids.begin() + 1 + static_cast<std::ptrdiff_t>(in.context_len));
  const bool prefix = std::equal(kept_c.begin(), kept_c.end(), c.ids.begin());
  const bool pass = c.size() == 600 && q.size() == 20 && in.context_len == 489 && kept_q == q.ids && prefix &&
                    in.size() == kDefaultLengthLimit;
  return {pass, "|C| 600, |Q| 20 -> " + std::to_string(in.context_len) + " context tokens kept, question " +
                    (kept_q == q.ids ? "unchanged" : "altered") + ", kept context is " +
                    (prefix ? "the head" : "not the head")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion,-c", selected, "Criterion number (repeatable); all when omitted")
      ->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "attention normalization", 10, attention_normalization},
      {2, "aggregation oracle equivalence", 5, aggregation_oracle},
      {3, "gradient checks", 60, gradient_checks},
      {4, "synthetic learnability", 15 * 60, synthetic_learnability},
      {5, "ensemble improvement", 120, ensemble_improvement},
      {6, "evaluation arithmetic fixture", 1, evaluation_fixture},
      {7, "McNemar oracle equivalence", 5, mcnemar_oracle},
      {8, "determinism", 15 * 60, determinism},
      {9, "truncation contract", 1, truncation_contract},
  };

  bool all_pass = true;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      o.pass = false;
      o.detail += "; over the " + fmt(c.budget_seconds) + " s budget";
    }
    all_pass = all_pass && o.pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  return all_pass ? 0 : 1;
}
