#include <gtest/gtest.h>

#include <random>

#include "aoa/checkpoint.hpp"
#include "aoa/corpus.hpp"
#include "aoa/evalkit.hpp"
#include "oracles.hpp"

using namespace aoa;

namespace {

const std::string kFixtures = AOA_FIXTURE_DIR;

EvalRecord fig4_record() {
  const auto j = read_json_file(kFixtures + "/fig4_counts.json");
  return EvalRecord::from_counts(j.at("total"), j.at("correct_a"), j.at("correct_b"), j.at("both"),
                                 j.at("ensemble_in_union").get<std::size_t>(), j.at("ensemble_outside_union"));
}

Bitmap random_bitmap(std::mt19937& gen, std::size_t n, double p) {
  std::bernoulli_distribution d(p);
  Bitmap b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = d(gen);
  return b;
}

Bitmap with_true(std::size_t n, std::vector<std::size_t> idx) {
  Bitmap b(n, false);
  for (auto i : idx) b[i] = true;
  return b;
}

}  // namespace

TEST(Accuracy, FigureFourCounts) {
  const EvalRecord r = fig4_record();
  EXPECT_NEAR(100 * r.accuracy_a(), 86.74, 0.005);
  EXPECT_NEAR(100 * r.accuracy_b(), 80.21, 0.005);
  EXPECT_EQ(accuracy(Bitmap(7, true)), 1.0);
  EXPECT_THROW(accuracy({}), std::invalid_argument);
}

TEST(Contingency, FigureFourCells) {
  const EvalRecord r = fig4_record();
  const Contingency c = r.cells();
  EXPECT_EQ(c, (Contingency{4668, 753, 345, 484}));
  EXPECT_EQ(c.total(), 6250u);
  EXPECT_NEAR(100 * r.union_acc(), 92.26, 0.005);
  ASSERT_TRUE(r.ensemble);
  EXPECT_EQ(count_true(*r.ensemble), 5497u);
  EXPECT_EQ(r.ensemble_outside_union(), 26u);
  EXPECT_NEAR(100 * accuracy(*r.ensemble), 87.95, 0.005);
  const auto j = read_json_file(kFixtures + "/fig4_counts.json");
  EXPECT_NEAR(100 * accuracy(*r.ensemble), j.at("published_percent").at("ensemble").get<double>(), 0.06);
}

TEST(UnionAccuracy, SmallCases) {
  const Bitmap a = with_true(10, {0, 1, 2});
  const Bitmap b = with_true(10, {5, 6, 7, 8});
  EXPECT_DOUBLE_EQ(union_accuracy(a, b), 0.7);
  EXPECT_EQ(union_accuracy(a, a), accuracy(a));
  EXPECT_EQ(contingency(b, b).only_a, 0u);
  EXPECT_EQ(contingency(b, b).only_b, 0u);
  EXPECT_THROW(union_accuracy(a, Bitmap(9)), std::invalid_argument);
  EXPECT_THROW(contingency(a, Bitmap(11)), std::invalid_argument);
}

TEST(Contingency, RandomBitmapsMatchCountingOracle) {
  std::mt19937 gen(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 60;
    const Bitmap a = random_bitmap(gen, n, 0.3 + 0.4 * (trial % 3) / 2.0);
    const Bitmap b = random_bitmap(gen, n, 0.5);
    std::size_t cells[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < n; ++i) ++cells[a[i]][b[i]];
    const Contingency c = contingency(a, b);
    EXPECT_EQ(c.both, cells[1][1]);
    EXPECT_EQ(c.only_a, cells[1][0]);
    EXPECT_EQ(c.only_b, cells[0][1]);
    EXPECT_EQ(c.neither, cells[0][0]);
    EXPECT_EQ(c.total(), n);
    EXPECT_EQ(union_accuracy(a, b), static_cast<double>(c.both + c.only_a + c.only_b) / static_cast<double>(n));
    EXPECT_LE(accuracy(a), union_accuracy(a, b));
    EXPECT_LE(accuracy(b), union_accuracy(a, b));
    EXPECT_LE(union_accuracy(a, b), 1.0);
    EXPECT_EQ(contingency(b, a), c.swapped());
  }
}

TEST(McNemar, ExactMatchesBinomialOracle) {
  const McNemarResult r = mcnemar({0, 10, 2, 0});
  EXPECT_EQ(r.method, "exact");
  EXPECT_NEAR(r.p_value, oracle::mcnemar_exact(10, 2), 1e-12);
  EXPECT_NEAR(r.p_value, 2.0 * (1 + 12 + 66) / 4096.0, 1e-12);
  EXPECT_FALSE(r.reject);
  EXPECT_TRUE(mcnemar({0, 10, 2, 0}, 0.05).reject);
}

TEST(McNemar, ExactBranchOverAllSmallTables) {
  for (unsigned b = 0; b <= 25; ++b) {
    for (unsigned c = 0; b + c <= 25; ++c) {
      const McNemarResult r = mcnemar({3, b, c, 4});
      EXPECT_NEAR(r.p_value, oracle::mcnemar_exact(b, c), 1e-12) << b << "," << c;
      EXPECT_EQ(r.p_value, mcnemar({3, c, b, 4}).p_value);
      EXPECT_EQ(r.reject, r.p_value < kDefaultAlpha);
    }
  }
}

TEST(McNemar, EqualCountsAreNotSignificant) {
  for (unsigned k = 1; k <= 12; ++k) {
    const McNemarResult r = mcnemar({0, k, k, 0});
    EXPECT_GE(r.p_value, 0.99);
    EXPECT_NEAR(r.p_value, oracle::mcnemar_exact(k, k), 1e-12);
    EXPECT_FALSE(r.reject);
  }
}

TEST(McNemar, NoDiscordantPairs) {
  const Bitmap a = with_true(8, {1, 4});
  const McNemarResult r = mcnemar(contingency(a, a));
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_FALSE(r.reject);
  EXPECT_EQ(r.method, "none");
}

TEST(McNemar, ChiSquareBranch) {
  const McNemarResult r = mcnemar(fig4_record().cells());
  EXPECT_EQ(r.method, "chi-square");
  const double expected = (753.0 - 345.0 - 1.0) * (753.0 - 345.0 - 1.0) / (753.0 + 345.0);
  EXPECT_NEAR(r.statistic, expected, 1e-9);
  EXPECT_NEAR(r.statistic, 150.864, 5e-4);
  EXPECT_LT(r.p_value, 1e-30);
  EXPECT_TRUE(r.reject);
  EXPECT_EQ(mcnemar(fig4_record().cells().swapped()).p_value, r.p_value);
  EXPECT_EQ(mcnemar({0, 20, 5, 0}).method, "exact");
  const McNemarResult above = mcnemar({0, 20, 6, 0});
  EXPECT_EQ(above.method, "chi-square");
  EXPECT_NEAR(above.p_value, std::erfc(std::sqrt(13.0 * 13.0 / 26.0 / 2.0)), 1e-15);
  EXPECT_THROW(mcnemar({0, 1, 2, 0}, 0.0), std::invalid_argument);
}

TEST(EmitReport, FigureFourGoldenFile) {
  ReportInput in;
  in.comparisons.push_back(fig4_record());
  const std::string md = emit_report(in, ReportFormat::Markdown);
  EXPECT_EQ(md, detail::read_file(kFixtures + "/fig4_report.md"));
  for (const char* row : {"| All | 6250 |", "| ModelA | 5421 |", "| ModelB | 5013 |", "| Both | 4668 |",
                          "| Neither | 484 |", "| Union | 5766 | 92.26 |"}) {
    EXPECT_NE(md.find(row), std::string::npos) << row;
  }
  EXPECT_EQ(emit_report(in, ReportFormat::Markdown), md);
}

TEST(EmitReport, CsvAndJsonCarryTheSameCounts) {
  ReportInput in;
  in.comparisons.push_back(fig4_record());
  const std::string csv = emit_report(in, ReportFormat::Csv);
  EXPECT_EQ(csv.rfind("section,label,count,percent,p_value\n", 0), 0u);
  EXPECT_NE(csv.find("ModelA vs ModelB,Union,5766,92.26,"), std::string::npos);
  const auto j = nlohmann::json::parse(emit_report(in, ReportFormat::Json));
  const auto& c = j.at("comparisons").at(0);
  EXPECT_EQ(c.at("both"), 4668);
  EXPECT_EQ(c.at("only_a"), 753);
  EXPECT_EQ(c.at("only_b"), 345);
  EXPECT_EQ(c.at("neither"), 484);
  EXPECT_EQ(c.at("ensemble_outside_union"), 26);
  EXPECT_EQ(c.at("mcnemar").at("method"), "chi-square");
}

TEST(EmitReport, Errors) {
  EXPECT_THROW(emit_report({}, ReportFormat::Markdown), std::invalid_argument);
  EXPECT_THROW(parse_report_format("html"), std::invalid_argument);
  EXPECT_EQ(parse_report_format("md"), ReportFormat::Markdown);
  ReportInput bad;
  EvalRecord r;
  r.a = Bitmap(3, true);
  r.b = Bitmap(2, true);
  bad.comparisons.push_back(r);
  EXPECT_THROW(emit_report(bad, ReportFormat::Json), std::invalid_argument);
}

TEST(EmitReport, AggregationTableOrderAndNote) {
  ReportInput in;
  in.runs = {{"sum/sum", 0.70, 0.69, 3}, {"max/sum", 0.72, std::nullopt, 2}, {"max/max", 0.60, 0.61, 4},
             {"sum/max", 0.65, 0.64, 1}};
  const std::string md = emit_report(in, ReportFormat::Markdown);
  const auto mm = md.find("| max/max |"), ms = md.find("| max/sum |"), sm = md.find("| sum/max |"),
             ss = md.find("| sum/sum |");
  ASSERT_NE(ss, std::string::npos);
  EXPECT_LT(mm, ms);
  EXPECT_LT(ms, sm);
  EXPECT_LT(sm, ss);
  EXPECT_NE(md.find("| max/sum | 72.00 | - | 2 |"), std::string::npos);
  EXPECT_NE(md.find("Note: max/sum beats sum/sum on dev."), std::string::npos);
  EXPECT_EQ(md.find("Note: sum/max"), std::string::npos);
  const auto j = nlohmann::json::parse(emit_report(in, ReportFormat::Json));
  EXPECT_EQ(j.at("aggregation").at(0).at("label"), "max/max");
  EXPECT_EQ(j.at("inversions"), nlohmann::json::array({"max/sum"}));
}

TEST(ComparePredictions, AlignsByIdAndChecksGold) {
  auto pred = [](std::string id, std::size_t answer, std::string gold) {
    return Prediction{std::move(id), {{"@e1", "@e2"}, {0.0, 0.0}}, answer, std::move(gold)};
  };
  const std::vector<Prediction> a = {pred("p", 0, "@e1"), pred("q", 1, "@e1")};
  const std::vector<Prediction> b = {pred("q", 0, "@e1"), pred("p", 1, "@e1")};
  const EvalRecord r = compare_predictions(a, b);
  EXPECT_EQ(r.a, (Bitmap{true, false}));
  EXPECT_EQ(r.b, (Bitmap{false, true}));
  EXPECT_THROW(compare_predictions(a, {pred("q", 0, "@e2"), pred("p", 1, "@e1")}), std::invalid_argument);
  EXPECT_THROW(compare_predictions(a, {pred("q", 0, "@e1")}), std::invalid_argument);
  EXPECT_THROW(compare_predictions(a, {pred("z", 0, "@e1"), pred("p", 1, "@e1")}), std::invalid_argument);
}

TEST(ComparePredictions, FigureFourPredictionFiles) {
  const auto a = predictions_from_json(read_json_file(kFixtures + "/fig4_model_a.json"));
  const auto b = predictions_from_json(read_json_file(kFixtures + "/fig4_model_b.json"));
  const Contingency c = compare_predictions(a, b).cells();
  EXPECT_EQ(c, (Contingency{4668, 753, 345, 484}));
}
