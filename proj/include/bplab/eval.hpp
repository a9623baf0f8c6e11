#pragma once

// Evaluation of probability estimates against profile labels: aggregate
// error metrics, head-to-head closeness, prediction-error CDF, and the
// five-way bias categorization with its confusion breakdown.

#include <array>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bplab/csv.hpp"
#include "bplab/ir_text.hpp"
#include "bplab/model.hpp"

namespace bplab {

struct MetricsReport {
  double rmse = 0.0;
  double mae = 0.0;
  double mean_cross_entropy = 0.0;
  double closeness = 0.0;
  std::size_t n = 0;
  bool operator==(const MetricsReport &) const = default;
};

namespace detail {

inline void check_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) fail(ErrorKind::EmptyInput, "metrics need at least one example");
  if (a.size() != b.size()) fail(ErrorKind::LengthMismatch, "vectors differ in length");
}

inline void check_unit_interval(std::span<const double> v, const char *what) {
  for (double x : v)
    if (!(x >= 0.0 && x <= 1.0)) fail(ErrorKind::InvalidConfig, std::string(what) + " value outside [0, 1]");
}

inline MetricsReport error_metrics(std::span<const double> preds, std::span<const double> labels) {
  MetricsReport r;
  r.n = preds.size();
  double se = 0.0, ae = 0.0, ce = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - labels[i];
    se += d * d;
    ae += std::abs(d);
    ce += loss(LossKind::CrossEntropy, preds[i], labels[i]);
  }
  const double n = static_cast<double>(r.n);
  r.rmse = std::sqrt(se / n);
  r.mae = ae / n;
  r.mean_cross_entropy = ce / n;
  return r;
}

} // namespace detail

/// Metrics of both predictors. Closeness is (wins + ties/2) / n with a win
/// being a strictly smaller absolute error; the heuristic's closeness is the
/// complement of the model's.
inline std::pair<MetricsReport, MetricsReport> compute_metrics(std::span<const double> predictions,
                                                               std::span<const double> heuristic_preds,
                                                               std::span<const double> labels) {
  detail::check_same_length(predictions, labels);
  detail::check_same_length(heuristic_preds, labels);
  detail::check_unit_interval(predictions, "prediction");
  detail::check_unit_interval(heuristic_preds, "heuristic prediction");
  detail::check_unit_interval(labels, "label");

  MetricsReport ml = detail::error_metrics(predictions, labels);
  MetricsReport heur = detail::error_metrics(heuristic_preds, labels);
  std::size_t wins = 0, ties = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double em = std::abs(predictions[i] - labels[i]);
    const double eh = std::abs(heuristic_preds[i] - labels[i]);
    if (em < eh) ++wins;
    else if (em == eh) ++ties;
  }
  ml.closeness = (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) / static_cast<double>(labels.size());
  heur.closeness = 1.0 - ml.closeness;
  return {ml, heur};
}

/// buckets[k] = percentage of examples whose error 100*|p - y| is <= k.
struct ErrorCdf {
  std::array<double, 101> buckets{};
  bool operator==(const ErrorCdf &) const = default;
};

/// Slack for the inclusive bucket comparison, so an error of exactly k
/// percent lands in bucket k despite binary rounding (0.3 - 0.2 != 0.1).
inline constexpr double kCdfBoundarySlack = 1e-9;

inline ErrorCdf error_cdf(std::span<const double> predictions, std::span<const double> labels) {
  detail::check_same_length(predictions, labels);
  std::array<std::size_t, 101> counts{};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double err = 100.0 * std::abs(predictions[i] - labels[i]);
    const double first = std::ceil(err - kCdfBoundarySlack);
    const std::size_t k = first <= 0.0 ? 0 : static_cast<std::size_t>(std::min(first, 100.0));
    ++counts[k];
  }
  ErrorCdf cdf;
  std::size_t running = 0;
  for (std::size_t k = 0; k <= 100; ++k) {
    running += counts[k];
    cdf.buckets[k] = 100.0 * static_cast<double>(running) / static_cast<double>(predictions.size());
  }
  return cdf;
}

enum class BranchCategory : std::uint8_t { SNT, WNT, UB, WT, ST };
inline constexpr int kNumCategories = 5;

inline const char *to_string(BranchCategory c) {
  switch (c) {
  case BranchCategory::SNT: return "SNT";
  case BranchCategory::WNT: return "WNT";
  case BranchCategory::UB: return "UB";
  case BranchCategory::WT: return "WT";
  case BranchCategory::ST: return "ST";
  }
  return "?";
}

/// SNT: p < strong_nt; WNT: [strong_nt, ub_low); UB: [ub_low, ub_high];
/// WT: (ub_high, strong_t]; ST: p > strong_t.
struct CategoryThresholds {
  double strong_nt = 0.1;
  double ub_low = 0.45;
  double ub_high = 0.55;
  double strong_t = 0.9;
};

inline BranchCategory categorize(double p, const CategoryThresholds &t = {}) {
  if (p < t.strong_nt) return BranchCategory::SNT;
  if (p < t.ub_low) return BranchCategory::WNT;
  if (p <= t.ub_high) return BranchCategory::UB;
  if (p <= t.strong_t) return BranchCategory::WT;
  return BranchCategory::ST;
}

/// table[h][l] = percentage of the examples the heuristic puts in category
/// h whose label falls in category l. Rows with no examples are all zero.
struct CategoryBreakdown {
  std::array<std::array<double, kNumCategories>, kNumCategories> table{};
  std::array<std::size_t, kNumCategories> row_counts{};
  bool operator==(const CategoryBreakdown &) const = default;
};

inline CategoryBreakdown category_breakdown(std::span<const double> heuristic_preds, std::span<const double> labels,
                                            const CategoryThresholds &t = {}) {
  detail::check_same_length(heuristic_preds, labels);
  std::array<std::array<std::size_t, kNumCategories>, kNumCategories> counts{};
  CategoryBreakdown b;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto h = static_cast<std::size_t>(categorize(heuristic_preds[i], t));
    const auto l = static_cast<std::size_t>(categorize(labels[i], t));
    ++counts[h][l];
    ++b.row_counts[h];
  }
  for (std::size_t h = 0; h < kNumCategories; ++h)
    for (std::size_t l = 0; l < kNumCategories; ++l)
      if (b.row_counts[h])
        b.table[h][l] = 100.0 * static_cast<double>(counts[h][l]) / static_cast<double>(b.row_counts[h]);
  return b;
}

// ---------------------------------------------------------------------------
// Reports

struct EvalResult {
  MetricsReport ml, heuristic;
  ErrorCdf ml_cdf, heuristic_cdf;
  CategoryBreakdown breakdown;
};

inline EvalResult evaluate(std::span<const double> predictions, std::span<const double> heuristic_preds,
                           std::span<const double> labels, const CategoryThresholds &t = {}) {
  EvalResult r;
  std::tie(r.ml, r.heuristic) = compute_metrics(predictions, heuristic_preds, labels);
  r.ml_cdf = error_cdf(predictions, labels);
  r.heuristic_cdf = error_cdf(heuristic_preds, labels);
  r.breakdown = category_breakdown(heuristic_preds, labels, t);
  return r;
}

/// Closeness pair at 4 decimals. The heuristic's digits are derived from
/// the model's so the printed pair always sums to 1.0000.
inline std::pair<std::string, std::string> format_closeness_pair(double ml_closeness) {
  const auto units = static_cast<long long>(std::llround(ml_closeness * 10000.0));
  auto fmt = [](long long u) {
    std::string frac = std::to_string(u % 10000);
    return std::to_string(u / 10000) + "." + std::string(4 - frac.size(), '0') + frac;
  };
  return {fmt(units), fmt(10000 - units)};
}

inline std::string format_report(const EvalResult &r) {
  auto f4 = [](double v) { return csv::format_fixed(v, 4); };
  const auto [c_ml, c_heur] = format_closeness_pair(r.ml.closeness);
  std::string out = "# Branch probability evaluation\n\n";
  out += "Examples: " + std::to_string(r.ml.n) + "\n\n";
  out += "## Aggregate metrics\n\n";
  out += "| System | RMSE | MAE | Cross Entropy | Closeness |\n";
  out += "|---|---|---|---|---|\n";
  out += "| ML | " + f4(r.ml.rmse) + " | " + f4(r.ml.mae) + " | " + f4(r.ml.mean_cross_entropy) + " | " + c_ml + " |\n";
  out += "| Heuristics | " + f4(r.heuristic.rmse) + " | " + f4(r.heuristic.mae) + " | " +
         f4(r.heuristic.mean_cross_entropy) + " | " + c_heur + " |\n\n";

  out += "## Prediction error CDF (% of branches with error <= k)\n\n";
  out += "| k | ML | Heuristics |\n|---|---|---|\n";
  for (int k : {0, 1, 5, 10, 20, 30, 50, 75, 100})
    out += "| " + std::to_string(k) + " | " + f4(r.ml_cdf.buckets[static_cast<std::size_t>(k)]) + " | " +
           f4(r.heuristic_cdf.buckets[static_cast<std::size_t>(k)]) + " |\n";

  out += "\n## Heuristic category vs. profile category (% of row)\n\n";
  out += "| Heuristic \\ Profile | n |";
  for (int l = 0; l < kNumCategories; ++l) out += std::string(" ") + to_string(static_cast<BranchCategory>(l)) + " |";
  out += "\n|---|---|---|---|---|---|---|\n";
  for (std::size_t h = 0; h < kNumCategories; ++h) {
    out += std::string("| ") + to_string(static_cast<BranchCategory>(h)) + " | " + std::to_string(r.breakdown.row_counts[h]) + " |";
    for (std::size_t l = 0; l < kNumCategories; ++l) out += " " + f4(r.breakdown.table[h][l]) + " |";
    out += "\n";
  }
  return out;
}

inline std::string format_cdf_csv(const ErrorCdf &ml, const ErrorCdf &heur) {
  std::string out = "error,ml_pct,heur_pct\n";
  for (std::size_t k = 0; k <= 100; ++k)
    out += std::to_string(k) + "," + csv::format_fixed(ml.buckets[k], 4) + "," + csv::format_fixed(heur.buckets[k], 4) + "\n";
  return out;
}

/// Writes `report.md` and `cdf.csv` into `dir`, creating it if needed.
inline void render_report(const EvalResult &r, const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create directory '" + dir.string() + "': " + ec.message());
  write_text_file(dir / "report.md", format_report(r));
  write_text_file(dir / "cdf.csv", format_cdf_csv(r.ml_cdf, r.heuristic_cdf));
}

} // namespace bplab
