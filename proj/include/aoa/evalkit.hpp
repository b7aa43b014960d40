#pragma once

// Accuracy, two-model comparison (contingency, union accuracy, McNemar) and
// report rendering.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aoa/scores.hpp"

namespace aoa {

using Bitmap = std::vector<bool>;

inline std::size_t count_true(const Bitmap& b) { return static_cast<std::size_t>(std::count(b.begin(), b.end(), true)); }

inline double accuracy(const Bitmap& correct) {
  if (correct.empty()) throw std::invalid_argument("accuracy: empty bitmap");
  return static_cast<double>(count_true(correct)) / static_cast<double>(correct.size());
}

inline void require_same_length(const char* op, const Bitmap& a, const Bitmap& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": bitmap lengths " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + " differ");
  }
}

struct Contingency {
  std::size_t both = 0;
  std::size_t only_a = 0;
  std::size_t only_b = 0;
  std::size_t neither = 0;

  std::size_t total() const { return both + only_a + only_b + neither; }
  std::size_t correct_a() const { return both + only_a; }
  std::size_t correct_b() const { return both + only_b; }
  std::size_t union_correct() const { return total() - neither; }
  std::size_t discordant() const { return only_a + only_b; }
  Contingency swapped() const { return {both, only_b, only_a, neither}; }
  bool operator==(const Contingency&) const = default;
};

inline Contingency contingency(const Bitmap& a, const Bitmap& b) {
  require_same_length("contingency", a, b);
  Contingency c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) ++c.both;
    else if (a[i]) ++c.only_a;
    else if (b[i]) ++c.only_b;
    else ++c.neither;
  }
  return c;
}

inline double union_accuracy(const Bitmap& a, const Bitmap& b) {
  require_same_length("union_accuracy", a, b);
  if (a.empty()) throw std::invalid_argument("union_accuracy: empty bitmaps");
  const Contingency c = contingency(a, b);
  return static_cast<double>(c.union_correct()) / static_cast<double>(c.total());
}

inline constexpr double kDefaultAlpha = 0.025;
inline constexpr std::size_t kExactLimit = 25;  // discordant pairs up to this use the exact test

struct McNemarResult {
  std::string method;     // "exact", "chi-square" or "none"
  double statistic = 0;   // chi-square statistic; min(only_a, only_b) for the exact test
  double p_value = 1;
  double alpha = kDefaultAlpha;
  bool reject = false;
};

// Two-sided. Exact binomial on the discordant pairs when there are at most
// 25 of them, otherwise chi-square with continuity correction (1 dof).
inline McNemarResult mcnemar(const Contingency& c, double alpha = kDefaultAlpha) {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("mcnemar: alpha must lie in (0, 1)");
  McNemarResult r;
  r.alpha = alpha;
  const std::size_t n = c.discordant();
  if (n == 0) {
    r.method = "none";
    return r;
  }
  if (n <= kExactLimit) {
    const std::size_t k = std::min(c.only_a, c.only_b);
    double binom = 1, tail = 0;
    for (std::size_t i = 0; i <= k; ++i) {
      tail += binom;
      binom = binom * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    r.method = "exact";
    r.statistic = static_cast<double>(k);
    r.p_value = std::min(1.0, 2.0 * std::ldexp(tail, -static_cast<int>(n)));
  } else {
    const double diff = std::abs(static_cast<double>(c.only_a) - static_cast<double>(c.only_b));
    const double corrected = std::max(0.0, diff - 1.0);
    r.method = "chi-square";
    r.statistic = corrected * corrected / static_cast<double>(n);
    r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
  }
  r.reject = r.p_value < alpha;
  return r;
}

// Correctness of two models (and optionally their ensemble) on the same
// questions, in the same order.
struct EvalRecord {
  std::string name_a = "ModelA";
  std::string name_b = "ModelB";
  Bitmap a;
  Bitmap b;
  std::optional<Bitmap> ensemble;
  std::string name_ensemble = "Ensemble";

  std::size_t total() const { return a.size(); }
  Contingency cells() const { return contingency(a, b); }
  double accuracy_a() const { return accuracy(a); }
  double accuracy_b() const { return accuracy(b); }
  double union_acc() const { return union_accuracy(a, b); }

  // Ensemble hits on questions neither model answered.
  std::size_t ensemble_outside_union() const {
    if (!ensemble) return 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += (*ensemble)[i] && !a[i] && !b[i];
    return n;
  }

  void validate() const {
    if (a.empty()) throw std::invalid_argument("eval record: no questions");
    require_same_length("eval record", a, b);
    if (ensemble) require_same_length("eval record", a, *ensemble);
  }

  // Bitmaps laid out as both, only_a, only_b, neither. Ensemble hits, when
  // given, cover `ensemble_in_union` union questions and
  // `ensemble_outside` neither-questions.
  static EvalRecord from_counts(std::size_t total, std::size_t correct_a, std::size_t correct_b, std::size_t both,
                                std::optional<std::size_t> ensemble_in_union = {}, std::size_t ensemble_outside = 0) {
    if (both > correct_a || both > correct_b || correct_a + correct_b - both > total) {
      throw std::invalid_argument("eval record: inconsistent counts");
    }
    const std::size_t only_a = correct_a - both, only_b = correct_b - both;
    const std::size_t neither = total - both - only_a - only_b;
    EvalRecord r;
    r.a.assign(total, false);
    r.b.assign(total, false);
    for (std::size_t i = 0; i < both + only_a; ++i) r.a[i] = true;
    for (std::size_t i = 0; i < both; ++i) r.b[i] = true;
    for (std::size_t i = both + only_a; i < both + only_a + only_b; ++i) r.b[i] = true;
    if (ensemble_in_union) {
      const std::size_t uni = total - neither;
      if (*ensemble_in_union > uni || ensemble_outside > neither) {
        throw std::invalid_argument("eval record: inconsistent ensemble counts");
      }
      Bitmap e(total, false);
      for (std::size_t i = 0; i < *ensemble_in_union; ++i) e[i] = true;
      for (std::size_t i = 0; i < ensemble_outside; ++i) e[uni + i] = true;
      r.ensemble = std::move(e);
    }
    return r;
  }
};

inline Bitmap correctness(const std::vector<Prediction>& preds) {
  Bitmap out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.correct());
  return out;
}

// Pairs two prediction lists by id, in the order of `a`. The gold answers
// must agree.
inline EvalRecord compare_predictions(const std::vector<Prediction>& a, const std::vector<Prediction>& b,
                                      std::string name_a = "ModelA", std::string name_b = "ModelB") {
  if (a.size() != b.size()) {
    throw std::invalid_argument("prediction files cover " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + " questions");
  }
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : b) {
    if (!by_id.emplace(p.id, &p).second) throw std::invalid_argument("duplicate prediction id " + p.id);
  }
  EvalRecord r;
  r.name_a = std::move(name_a);
  r.name_b = std::move(name_b);
  for (const auto& p : a) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) throw std::invalid_argument("question " + p.id + " has no prediction from " + r.name_b);
    if (it->second->gold != p.gold) throw std::invalid_argument("question " + p.id + ": gold answers differ");
    r.a.push_back(p.correct());
    r.b.push_back(it->second->correct());
  }
  r.validate();
  return r;
}

// One trained AoA configuration, for the aggregation comparison table.
struct AggregationRun {
  std::string label;  // "<occurrence>/<token>", e.g. "sum/max"
  double dev_acc = 0;
  std::optional<double> test_acc;
  std::size_t best_epoch = 0;
};

struct ReportInput {
  std::vector<EvalRecord> comparisons;
  std::vector<AggregationRun> runs;
  double alpha = kDefaultAlpha;
};

enum class ReportFormat { Markdown, Csv, Json };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw std::invalid_argument("report format must be markdown, csv or json, got '" + std::string(s) + "'");
}

namespace detail {

inline std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline double pct(std::size_t n, std::size_t total) {
  return 100.0 * static_cast<double>(n) / static_cast<double>(total);
}

struct Row {
  std::string label;
  std::size_t count;
  double percent;
};

inline std::vector<Row> comparison_rows(const EvalRecord& r) {
  const Contingency c = r.cells();
  const std::size_t t = c.total();
  std::vector<Row> rows{{"All", t, 100.0},
                        {r.name_a, c.correct_a(), pct(c.correct_a(), t)},
                        {r.name_b, c.correct_b(), pct(c.correct_b(), t)},
                        {"Both", c.both, pct(c.both, t)},
                        {"Neither", c.neither, pct(c.neither, t)},
                        {"Only " + r.name_a, c.only_a, pct(c.only_a, t)},
                        {"Only " + r.name_b, c.only_b, pct(c.only_b, t)},
                        {"Union", c.union_correct(), pct(c.union_correct(), t)}};
  if (r.ensemble) {
    const std::size_t e = count_true(*r.ensemble);
    rows.push_back({r.name_ensemble, e, pct(e, t)});
    rows.push_back({r.name_ensemble + " outside union", r.ensemble_outside_union(), pct(r.ensemble_outside_union(), t)});
  }
  return rows;
}

inline const std::vector<std::string>& aggregation_order() {
  static const std::vector<std::string> kOrder{"max/max", "max/sum", "sum/max", "sum/sum"};
  return kOrder;
}

// Runs in max/max, max/sum, sum/max, sum/sum order, then any others by label.
inline std::vector<AggregationRun> ordered_runs(std::vector<AggregationRun> runs) {
  auto rank = [](const std::string& label) {
    const auto& o = aggregation_order();
    return static_cast<std::size_t>(std::find(o.begin(), o.end(), label) - o.begin());
  };
  std::stable_sort(runs.begin(), runs.end(), [&](const AggregationRun& x, const AggregationRun& y) {
    const auto rx = rank(x.label), ry = rank(y.label);
    return rx != ry ? rx < ry : x.label < y.label;
  });
  return runs;
}

// Labels of rows whose dev accuracy beats sum/sum.
inline std::vector<std::string> inversions(const std::vector<AggregationRun>& runs) {
  auto it = std::find_if(runs.begin(), runs.end(), [](const AggregationRun& r) { return r.label == "sum/sum"; });
  std::vector<std::string> out;
  if (it == runs.end()) return out;
  for (const auto& r : runs) {
    if (r.dev_acc > it->dev_acc) out.push_back(r.label);
  }
  return out;
}

}  // namespace detail

inline std::string emit_report(const ReportInput& in, ReportFormat format) {
  if (in.comparisons.empty() && in.runs.empty()) throw std::invalid_argument("emit_report: nothing to report");
  for (const auto& r : in.comparisons) r.validate();
  const auto runs = detail::ordered_runs(in.runs);
  std::ostringstream out;

  if (format == ReportFormat::Markdown) {
    bool first = true;
    for (const auto& r : in.comparisons) {
      if (!first) out << '\n';
      first = false;
      out << "## " << r.name_a << " vs " << r.name_b << "\n\n";
      out << "| Questions | Count | % |\n|---|---:|---:|\n";
      for (const auto& row : detail::comparison_rows(r)) {
        out << "| " << row.label << " | " << row.count << " | " << detail::fixed2(row.percent) << " |\n";
      }
      const McNemarResult m = mcnemar(r.cells(), in.alpha);
      out << "\nMcNemar (" << m.method << "): statistic " << detail::general(m.statistic) << ", p = "
          << detail::general(m.p_value) << ", alpha " << detail::general(m.alpha) << ", "
          << (m.reject ? "significant" : "not significant") << "\n";
    }
    if (!runs.empty()) {
      if (!first) out << '\n';
      out << "## Aggregation functions (occurrence/token)\n\n";
      out << "| F2/F1 | Dev Acc (%) | Test Acc (%) | Best epoch |\n|---|---:|---:|---:|\n";
      for (const auto& run : runs) {
        out << "| " << run.label << " | " << detail::fixed2(100 * run.dev_acc) << " | "
            << (run.test_acc ? detail::fixed2(100 * *run.test_acc) : "-") << " | " << run.best_epoch << " |\n";
      }
      for (const auto& label : detail::inversions(runs)) out << "\nNote: " << label << " beats sum/sum on dev.\n";
    }
  } else if (format == ReportFormat::Csv) {
    out << "section,label,count,percent,p_value\n";
    for (const auto& r : in.comparisons) {
      const std::string section = r.name_a + " vs " + r.name_b;
      for (const auto& row : detail::comparison_rows(r)) {
        out << section << ',' << row.label << ',' << row.count << ',' << detail::fixed2(row.percent) << ",\n";
      }
      const McNemarResult m = mcnemar(r.cells(), in.alpha);
      out << section << ",mcnemar " << m.method << ',' << detail::general(m.statistic) << ",,"
          << detail::general(m.p_value) << '\n';
    }
    for (const auto& run : runs) {
      out << "aggregation," << run.label << ',' << run.best_epoch << ',' << detail::fixed2(100 * run.dev_acc) << ",\n";
    }
  } else {
    nlohmann::json j{{"schema", "aoa-report"}, {"version", 1}, {"alpha", in.alpha}};
    j["comparisons"] = nlohmann::json::array();
    for (const auto& r : in.comparisons) {
      const Contingency c = r.cells();
      const McNemarResult m = mcnemar(c, in.alpha);
      nlohmann::json cj{{"model_a", r.name_a},
                        {"model_b", r.name_b},
                        {"total", c.total()},
                        {"correct_a", c.correct_a()},
                        {"correct_b", c.correct_b()},
                        {"both", c.both},
                        {"only_a", c.only_a},
                        {"only_b", c.only_b},
                        {"neither", c.neither},
                        {"union_correct", c.union_correct()},
                        {"accuracy_a", r.accuracy_a()},
                        {"accuracy_b", r.accuracy_b()},
                        {"union_accuracy", r.union_acc()},
                        {"mcnemar",
                         {{"method", m.method}, {"statistic", m.statistic}, {"p_value", m.p_value}, {"reject", m.reject}}}};
      if (r.ensemble) {
        cj["ensemble_correct"] = count_true(*r.ensemble);
        cj["ensemble_outside_union"] = r.ensemble_outside_union();
        cj["ensemble_accuracy"] = accuracy(*r.ensemble);
      }
      j["comparisons"].push_back(std::move(cj));
    }
    j["aggregation"] = nlohmann::json::array();
    for (const auto& run : runs) {
      nlohmann::json rj{{"label", run.label}, {"dev_acc", run.dev_acc}, {"best_epoch", run.best_epoch}};
      if (run.test_acc) rj["test_acc"] = *run.test_acc;
      j["aggregation"].push_back(std::move(rj));
    }
    j["inversions"] = detail::inversions(runs);
    out << j.dump(2) << '\n';
  }
  return out.str();
}

}  // namespace aoa
