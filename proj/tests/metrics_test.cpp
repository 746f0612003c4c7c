#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "phishdebate/metrics.hpp"

using namespace phishdebate;

namespace {

constexpr Decision P = Decision::phishing;
constexpr Decision L = Decision::legitimate;
constexpr Label PH = Label::phishing;
constexpr Label HM = Label::ham;

}  // namespace

TEST_CASE("confusion counts on a hand-checked vector", "[metrics]") {
  const std::vector<Decision> preds{P, P, P, L, L};
  const std::vector<Label> labels{PH, PH, HM, PH, HM};
  auto c = confusion_counts(preds, labels);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(c.total() == 5);

  auto r = score_report(c, "ds", "cfg", false);
  CHECK(r.accuracy == Catch::Approx(0.6));
  CHECK(r.precision.value() == Catch::Approx(2.0 / 3.0));
  CHECK(r.recall.value() == Catch::Approx(2.0 / 3.0));
  CHECK(r.f1.value() == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("confusion counts validate their inputs", "[metrics]") {
  REQUIRE_THROWS_AS(confusion_counts({}, {}), MetricsError);
  REQUIRE_THROWS_AS(confusion_counts({P}, {PH, HM}), MetricsError);
}

TEST_CASE("single-class ground truth suppresses f1", "[metrics]") {
  // Every email is phishing and every prediction is right.
  auto c = confusion_counts({P, P, P}, {PH, PH, PH});
  auto r = score_report(c, "phish-only", "cfg", true);
  CHECK(r.accuracy == Catch::Approx(1.0));
  CHECK(r.precision.value() == Catch::Approx(1.0));
  CHECK(r.recall.value() == Catch::Approx(1.0));
  CHECK(!r.f1.has_value());
  CHECK(format_f1(r.f1) == "/");
  CHECK(format_metrics_pair(r) == "100.00% / /");
}

TEST_CASE("undefined ratios are absent rather than zero", "[metrics]") {
  SECTION("no positive predictions: precision undefined") {
    auto c = confusion_counts({L, L}, {PH, HM});
    auto r = score_report(c, "ds", "cfg", false);
    CHECK(!r.precision.has_value());
    CHECK(r.recall.value() == Catch::Approx(0.0));
    CHECK(!r.f1.has_value());
  }
  SECTION("no positive labels: recall undefined") {
    auto c = confusion_counts({P, L}, {HM, HM});
    auto r = score_report(c, "ds", "cfg", true);
    CHECK(r.precision.value() == Catch::Approx(0.0));
    CHECK(!r.recall.has_value());
    CHECK(!r.f1.has_value());
  }
  SECTION("precision and recall both zero: f1 undefined") {
    auto c = confusion_counts({P}, {HM});
    // Force the two-class path with a manual count table.
    ConfusionCounts manual{0, 1, 0, 1};
    auto r = score_report(manual, "ds", "cfg", false);
    CHECK(r.precision.value() == Catch::Approx(0.0));
    CHECK(r.recall.value() == Catch::Approx(0.0));
    CHECK(!r.f1.has_value());
    (void)c;
  }
}

TEST_CASE("ambiguous verdicts count against accuracy unless excluded", "[metrics]") {
  ConfusionCounts c{4, 1, 3, 0};  // 8 definite answers, 7 correct
  auto with = score_report(c, "ds", "cfg", false, 2, false);
  CHECK(with.accuracy == Catch::Approx(7.0 / 10.0));
  CHECK(with.num_ambiguous == 2);

  auto without = score_report(c, "ds", "cfg", false, 2, true);
  CHECK(without.accuracy == Catch::Approx(7.0 / 8.0));

  // Nothing to score at all is an error.
  REQUIRE_THROWS_AS(score_report(ConfusionCounts{}, "ds", "cfg", false, 0, false),
                    MetricsError);
  // Only ambiguous answers: defined accuracy of zero.
  auto only_amb = score_report(ConfusionCounts{}, "ds", "cfg", false, 3, false);
  CHECK(only_amb.accuracy == Catch::Approx(0.0));
}

TEST_CASE("metric rendering uses percent accuracy and fractional f1", "[metrics]") {
  CHECK(format_accuracy(0.98913) == "98.91%");
  CHECK(format_accuracy(1.0) == "100.00%");
  CHECK(format_accuracy(0.0) == "0.00%");
  CHECK(format_f1(0.98) == "0.98");
  CHECK(format_f1(std::nullopt) == "/");

  EvalReport r;
  r.accuracy = 0.9891;
  r.f1 = 0.9813;
  CHECK(format_metrics_pair(r) == "98.91% / 0.98");
}

TEST_CASE("metrics agree with a brute-force tally on random vectors", "[metrics]") {
  std::mt19937_64 rng(20240818);
  std::uniform_int_distribution<std::size_t> size_dist(1, 120);
  std::bernoulli_distribution coin(0.5);

  for (int iter = 0; iter < 300; ++iter) {
    const std::size_t n = size_dist(rng);
    std::vector<Decision> preds(n);
    std::vector<Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = coin(rng) ? P : L;
      labels[i] = coin(rng) ? PH : HM;
    }

    // Oracle: count the four cells one comparison at a time.
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == PH) {
        if (preds[i] == P) ++tp; else ++fn;
      } else {
        if (preds[i] == P) ++fp; else ++tn;
      }
    }

    auto c = confusion_counts(preds, labels);
    REQUIRE(c.tp == tp);
    REQUIRE(c.fp == fp);
    REQUIRE(c.tn == tn);
    REQUIRE(c.fn == fn);

    bool single_class = (tp + fn == 0) || (fp + tn == 0);
    auto r = score_report(c, "ds", "cfg", single_class);
    CHECK(r.accuracy == Catch::Approx(double(tp + tn) / double(n)));
    if (tp + fp > 0) {
      CHECK(r.precision.value() == Catch::Approx(double(tp) / double(tp + fp)));
    } else {
      CHECK(!r.precision.has_value());
    }
    if (tp + fn > 0) {
      CHECK(r.recall.value() == Catch::Approx(double(tp) / double(tp + fn)));
    } else {
      CHECK(!r.recall.has_value());
    }
    if (single_class) CHECK(!r.f1.has_value());
  }
}

TEST_CASE("report table lays out configurations by dataset", "[metrics]") {
  auto cell = [](const std::string& ds, const std::string& cfg, double acc,
                 std::optional<double> f1) {
    EvalReport r;
    r.dataset = ds;
    r.config_label = cfg;
    r.accuracy = acc;
    r.f1 = f1;
    return r;
  };
  std::vector<EvalReport> reports{
      cell("uot", "baseline", 0.9891, 0.9813),
      cell("fraud", "baseline", 0.97, std::nullopt),
      cell("uot", "cot", 0.95, 0.94),
  };
  auto table = render_report_table(reports);
  CHECK(table.find("uot") != std::string::npos);
  CHECK(table.find("fraud") != std::string::npos);
  CHECK(table.find("baseline") != std::string::npos);
  CHECK(table.find("98.91% / 0.98") != std::string::npos);
  CHECK(table.find("97.00% / /") != std::string::npos);
  // The cot row has no fraud cell.
  CHECK(table.find("-") != std::string::npos);
  // Column order follows first appearance: uot before fraud.
  CHECK(table.find("uot") < table.find("fraud"));
}

TEST_CASE("eval reports round-trip through json", "[metrics]") {
  EvalReport r;
  r.dataset = "ds";
  r.config_label = "cfg";
  r.accuracy = 0.75;
  r.precision = 0.8;
  r.recall = std::nullopt;
  r.f1 = std::nullopt;
  r.counts = ConfusionCounts{3, 1, 0, 0};
  r.num_ambiguous = 2;

  nlohmann::json j = r;
  CHECK(j.at("recall").is_null());
  CHECK(j.at("rendered") == "75.00% / /");
  auto back = j.get<EvalReport>();
  CHECK(back == r);
}
