// Acceptance checks for the toolkit. Prints one PASS/FAIL line per
// criterion and exits nonzero if any fails.
//
//   bplab_acceptance --workdir DIR [--only 1,4,6]

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "bplab/commands.hpp"
#include "support/cfg_oracles.hpp"
#include "support/gradcheck.hpp"
#include "support/random_examples.hpp"

using namespace bplab;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr std::size_t kMinUniqueExamples = 50'000;
constexpr double kMinRelativeReduction = 0.15;
constexpr double kMinCloseness = 0.60;
constexpr int kAblationSeeds = 5;
constexpr int kMinHl1Wins = 4;
constexpr double kHl5Slack = 0.02;
constexpr double kLogisticTolerance = 1e-12;
constexpr double kFiniteDifferenceTolerance = 1e-4;
constexpr std::uint64_t kRandomCfgs = 1000;
constexpr double kLabelRoundTripTolerance = 1e-5;
constexpr double kStandardizationTolerance = 1e-9;
constexpr std::size_t kRandomEncodings = 10'000;
constexpr double kProfileTolerance = 0.01;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

/// Every evaluation the run performs, for the complementarity check.
std::vector<EvalResult> g_evaluations;

struct Pipeline {
  ExtractSummary extract;
  EvalResult eval;
  fs::path model, report, history;
};

Pipeline run_pipeline(const fs::path &dir, const SynthConfig &synth, const ModelSpec &spec) {
  std::ostringstream log;
  Pipeline p;
  cmd_synth({dir / "corpus", synth}, log);
  const fs::path data = dir / "data.csv";
  p.extract = cmd_extract({dir / "corpus", dir / "corpus" / "profile.csv", data, {}}, log);
  p.model = dir / "model" / "model.bin";
  p.history = dir / "model" / "history.csv";
  TrainCommand t;
  t.data = data;
  t.out = p.model;
  t.spec = spec;
  cmd_train(t, log);
  p.report = dir / "report";
  EvalCommand e;
  e.data = split_csv_path(data);
  e.model = p.model;
  e.out = p.report;
  p.eval = cmd_eval(e, log);
  g_evaluations.push_back(p.eval);
  return p;
}

double relative_reduction(double heuristic, double ml) { return (heuristic - ml) / heuristic; }

Outcome relative_improvement(const fs::path &work) {
  SynthConfig c;
  c.n_functions = 3000;
  c.seed = 1;
  const Pipeline p = run_pipeline(work / "c1", c, ModelSpec{});
  const auto &ml = p.eval.ml, &h = p.eval.heuristic;
  const double r_rmse = relative_reduction(h.rmse, ml.rmse);
  const double r_mae = relative_reduction(h.mae, ml.mae);
  const double r_ce = relative_reduction(h.mean_cross_entropy, ml.mean_cross_entropy);
  const bool pass = p.extract.unique >= kMinUniqueExamples && r_rmse >= kMinRelativeReduction &&
                    r_mae >= kMinRelativeReduction && r_ce >= kMinRelativeReduction && ml.closeness >= kMinCloseness;
  return {pass, std::to_string(p.extract.unique) + " unique, " + std::to_string(ml.n) + " held out; rmse " +
                    fmt(ml.rmse) + " vs " + fmt(h.rmse) + " (-" + fmt(100 * r_rmse, 1) + "%), mae " + fmt(ml.mae) +
                    " vs " + fmt(h.mae) + " (-" + fmt(100 * r_mae, 1) + "%), ce " + fmt(ml.mean_cross_entropy) +
                    " vs " + fmt(h.mean_cross_entropy) + " (-" + fmt(100 * r_ce, 1) + "%), closeness " +
                    format_closeness_pair(ml.closeness).first};
}

Outcome complementarity() {
  Rng rng(2024);
  std::vector<EvalResult> all = g_evaluations;
  for (int trial = 0; trial < 10'000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> p(n), h(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.bernoulli(0.5) ? static_cast<double>(rng.below(21)) / 20.0 : rng.uniform();
      h[i] = rng.bernoulli(0.5) ? static_cast<double>(rng.below(21)) / 20.0 : rng.uniform();
      y[i] = static_cast<double>(rng.below(21)) / 20.0;
    }
    all.push_back(evaluate(p, h, y));
  }
  std::size_t bad = 0;
  for (const auto &r : all) {
    const auto [a, b] = format_closeness_pair(r.ml.closeness);
    const bool printed_ok = std::stoi(a.substr(0, 1)) * 10000 + std::stoi(a.substr(2)) + std::stoi(b.substr(0, 1)) * 10000 +
                                std::stoi(b.substr(2)) ==
                            10000;
    bad += !(r.ml.closeness + r.heuristic.closeness == 1.0) || !printed_ok;
  }
  return {bad == 0, std::to_string(all.size()) + " evaluations, " + std::to_string(bad) + " violations"};
}

Outcome ablation() {
  SynthConfig c;
  c.n_functions = 600;
  c.seed = 1;
  const SynthModule sm = generate_module(c);
  const Profile profile = profile_module(sm.module, sm.truth, c.trials_per_function, derive_seed(c.seed, 7));
  const auto examples = dedup(generate_examples(sm.module, profile));

  constexpr int kDepths[] = {0, 1, 2, 5};
  double ce[kAblationSeeds][4];
  for (int s = 0; s < kAblationSeeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s + 1);
    const SplitResult parts = split(examples, 0.10, seed);
    std::vector<RawFeatures> raws;
    std::vector<double> heur, labels;
    for (const auto &e : parts.test) {
      raws.push_back(e.raw);
      heur.push_back(e.heuristic_prob);
      labels.push_back(e.label);
    }
    for (int d = 0; d < 4; ++d) {
      ModelSpec spec;
      spec.hidden_layers = kDepths[d];
      spec.seed = seed;
      const TrainResult r = train(spec, parts.train, parts.test);
      g_evaluations.push_back(evaluate(predict_batch(r.model, raws), heur, labels));
      ce[s][d] = g_evaluations.back().ml.mean_cross_entropy;
    }
  }
  int wins = 0;
  double mean[4] = {0, 0, 0, 0};
  for (int s = 0; s < kAblationSeeds; ++s) {
    wins += ce[s][1] < ce[s][0];
    for (int d = 0; d < 4; ++d) mean[d] += ce[s][d] / kAblationSeeds;
  }
  const bool pass = wins >= kMinHl1Wins && mean[3] <= mean[2] + kHl5Slack;
  return {pass, std::to_string(examples.size()) + " unique; mean held-out ce HL0 " + fmt(mean[0]) + ", HL1 " +
                    fmt(mean[1]) + ", HL2 " + fmt(mean[2]) + ", HL5 " + fmt(mean[3]) + "; HL1<HL0 in " +
                    std::to_string(wins) + "/" + std::to_string(kAblationSeeds)};
}

Outcome logistic_regression() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) worst = std::max(worst, oracle::logistic_gradient_max_diff(seed));
  return {worst <= kLogisticTolerance, "100 cases, max |diff| " + sci(worst)};
}

Outcome gradient_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto t = oracle::tiny_problem(seed);
    for (LossKind k : {LossKind::MAE, LossKind::MSE, LossKind::CrossEntropy})
      worst = std::max(worst, oracle::max_gradient_rel_error(t, k));
  }
  return {worst <= kFiniteDifferenceTolerance, "20 seeds x 3 losses, max relative error " + sci(worst)};
}

Outcome cfg_oracles() {
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < kRandomCfgs; ++seed) {
    const IrFunction f = oracle::random_reducible_function(seed);
    const std::size_t n = f.num_blocks();
    const CfgAnalyses a = analyze(f);

    const auto dom = oracle::dominance(oracle::successors(f), 0);
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t y = 0; y < n; ++y)
        mismatches += a.dom.dominates(static_cast<int>(x), static_cast<int>(y)) != static_cast<bool>(dom[x][y]);

    std::vector<BlockId> synthetic;
    oracle::exit_augmented(f, &synthetic);
    mismatches += a.pdom.synthetic_exits != synthetic;
    const auto pdom = oracle::postdominance(f);
    for (std::size_t x = 0; x <= n; ++x)
      for (std::size_t y = 0; y <= n; ++y)
        mismatches += a.pdom.dominates(static_cast<int>(x), static_cast<int>(y)) != static_cast<bool>(pdom[x][y]);

    const auto loops = oracle::loops(f);
    mismatches += a.loops.loops.size() != loops.size();
    for (const Loop &l : a.loops.loops) {
      const auto it = loops.find(l.header);
      if (it == loops.end()) {
        ++mismatches;
        continue;
      }
      std::set<std::pair<int, int>> be, ee;
      for (auto e : l.back_edges) be.insert({e.from, e.to});
      for (auto e : l.exit_edges) ee.insert({e.from, e.to});
      mismatches += std::set<int>(l.body.begin(), l.body.end()) != it->second.body;
      mismatches += std::set<int>(l.exit_blocks.begin(), l.exit_blocks.end()) != it->second.exit_blocks;
      mismatches += be != it->second.back_edges || ee != it->second.exit_edges || l.depth != it->second.depth;
    }

    for (const auto &b : f.blocks())
      if (const CondBranch *br = b.branch())
        for (BlockId to : {br->taken, br->nottaken}) {
          const auto got = control_dependent_blocks(f, a.pdom, {b.id, to});
          mismatches += std::set<int>(got.begin(), got.end()) != oracle::control_dependent(f, {b.id, to});
        }
  }
  return {mismatches == 0, std::to_string(kRandomCfgs) + " reducible CFGs, " + std::to_string(mismatches) + " mismatches"};
}

Outcome expression_tree() {
  const IrFunction f = parse_module("func f file=a.cc\n"
                                    "block 0:\n"
                                    "  %0 = var\n"
                                    "  %1 = mul %0 3\n"
                                    "  %2 = var\n"
                                    "  %3 = add %2 2\n"
                                    "  %4 = icmp eq %1 %3\n"
                                    "  br %4 %1 %2\n"
                                    "block 1:\n  ret\nblock 2:\n  ret\n")
                           .functions.at(0)
                           .function;
  const std::vector<std::string> want = {"ICmpEq", "Mul", "Add", "Var", "Const(3)", "Var", "Const(2)"};
  std::vector<std::string> got;
  for (const auto &t : extract_dataflow_tree(f, 0).slots) got.push_back(to_string(t));
  std::string shown;
  for (const auto &s : got) shown += (shown.empty() ? "" : ", ") + s;
  return {got == want, "[" + shown + "]"};
}

Outcome label_round_trip() {
  double worst = 0.0;
  for (int i = 0; i < 10'000; ++i) {
    const double p = 0.001 + 0.998 * i / 9999.0;
    const auto [t, nt] = probability_to_branch_weights(p);
    worst = std::max(worst, std::abs(derive_label(t, nt) - p));
  }
  return {worst <= kLabelRoundTripTolerance, "10^4 grid points, max |error| " + sci(worst)};
}

Outcome determinism(const fs::path &work) {
  SynthConfig c;
  c.n_functions = 200;
  c.seed = 3;
  c.trials_per_function = 2000;
  const Pipeline a = run_pipeline(work / "c9" / "a", c, ModelSpec{});
  const Pipeline b = run_pipeline(work / "c9" / "b", c, ModelSpec{});
  std::vector<std::string> differ;
  auto same = [&](const fs::path &x, const fs::path &y, const char *name) {
    if (read_text_file(x) != read_text_file(y)) differ.push_back(name);
  };
  same(a.model, b.model, "model.bin");
  same(a.history, b.history, "history.csv");
  same(a.report / "report.md", b.report / "report.md", "report.md");
  same(a.report / "cdf.csv", b.report / "cdf.csv", "cdf.csv");
  std::string detail = "model, history, report and cdf compared";
  for (const auto &d : differ) detail += "; differs: " + d;
  return {differ.empty(), detail};
}

Outcome encoder_invariants() {
  std::vector<RawFeatures> raws;
  Rng rng(99);
  for (std::size_t i = 0; i < kRandomEncodings; ++i) raws.push_back(oracle::random_example(rng).raw);
  const Encoder enc = fit_encoder(raws);
  const std::size_t k = enc.numeric_stats().size();
  std::vector<double> sum(k, 0.0), sq(k, 0.0);
  std::vector<EncodedExample> encoded;
  for (const auto &r : raws) encoded.push_back(enc.encode(r));
  const double n = static_cast<double>(raws.size());
  for (const auto &e : encoded)
    for (std::size_t i = 0; i < k; ++i) sum[i] += e.value[i];
  for (const auto &e : encoded)
    for (std::size_t i = 0; i < k; ++i) sq[i] += (e.value[i] - sum[i] / n) * (e.value[i] - sum[i] / n);
  double worst_mean = 0.0, worst_std = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    worst_mean = std::max(worst_mean, std::abs(sum[i] / n));
    worst_std = std::max(worst_std, std::abs(std::sqrt(sq[i] / n) - 1.0));
  }
  std::size_t bad_groups = 0;
  for (const auto &e : encoded) {
    const auto d = e.dense();
    for (const auto &g : enc.one_hot_groups()) {
      double s = 0.0;
      for (std::size_t i = g.offset; i < g.offset + g.size; ++i) s += d[i];
      bad_groups += s != 1.0;
    }
  }
  const bool pass = k > 0 && worst_mean <= kStandardizationTolerance && worst_std <= kStandardizationTolerance &&
                    bad_groups == 0;
  return {pass, std::to_string(k) + " numeric features, max |mean| " + sci(worst_mean) + ", max |std-1| " +
                    sci(worst_std) + ", " + std::to_string(bad_groups) + " bad one-hot groups in " +
                    std::to_string(kRandomEncodings) + " encodings"};
}

Outcome profile_concentration() {
  const IrFunction f = parse_module("func f file=a.cc\nblock 0:\n  %0 = icmp eq arg0 0\n  br %0 %1 %2\n"
                                    "block 1:\n  ret\nblock 2:\n  ret\n")
                           .functions.at(0)
                           .function;
  const IrModule m{{f}};
  const GroundTruth truth{{{branch_id(f, 0), 0.8}}};
  const BranchCounts c = profile_module(m, truth, 100'000, 1).at(branch_id(f, 0));
  const double label = derive_label(c.taken, c.nottaken);
  return {std::abs(label - 0.8) <= kProfileTolerance, "label " + fmt(label, 5) + " from 10^5 trials"};
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Acceptance checks"};
  std::string workdir;
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for generated corpora and models")->required();
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path work(workdir);
  fs::create_directories(work);
  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
      {"relative improvement over heuristics", [&] { return relative_improvement(work); }},
      {"closeness complementarity", complementarity},
      {"hidden-layer ablation shape", ablation},
      {"depth-0 model is logistic regression", logistic_regression},
      {"gradients match finite differences", gradient_check},
      {"CFG analyses match oracles", cfg_oracles},
      {"expression-tree layout", expression_tree},
      {"label / weights round trip", label_round_trip},
      {"pipeline determinism", [&] { return determinism(work); }},
      {"encoder invariants", encoder_invariants},
      {"profile concentration", profile_concentration},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail << " ["
              << fmt(secs, 1) << "s]" << std::endl;
  }
  std::cout << (failures ? "FAILED: " + std::to_string(failures) + " criteria" : std::string("ALL PASS")) << std::endl;
  return failures ? 1 : 0;
}
