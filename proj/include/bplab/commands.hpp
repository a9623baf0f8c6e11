#pragma once

// Pipeline stages behind the `bplab` subcommands. Each takes validated
// options, does its work, and writes a short summary to `log`.

#include <algorithm>
#include <filesystem>
#include <ostream>

#include "bplab/eval.hpp"
#include "bplab/model.hpp"
#include "bplab/synth.hpp"

namespace bplab {

namespace fs = std::filesystem;

struct SynthCommand {
  fs::path out;
  SynthConfig config;
};

struct SynthSummary {
  std::size_t functions = 0;
  std::size_t branches = 0;
};

inline SynthSummary cmd_synth(const SynthCommand &o, std::ostream &log) {
  o.config.validate();
  const SynthModule sm = generate_module(o.config);
  const Profile profile =
      profile_module(sm.module, sm.truth, o.config.trials_per_function, derive_seed(o.config.seed, 7));
  write_corpus(o.out, sm.module, profile);
  SynthSummary s{sm.module.functions.size(), count_branches(sm.module)};
  log << "functions: " << s.functions << "\nbranches: " << s.branches << "\n";
  return s;
}

/// All `*.ir` files directly in `dir`, sorted by name.
inline std::vector<fs::path> ir_files(const fs::path &dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(ErrorKind::IoError, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto &e : fs::directory_iterator(dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".ir") files.push_back(e.path());
  if (ec) fail(ErrorKind::IoError, "cannot list '" + dir.string() + "': " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

inline IrModule read_ir_dir(const fs::path &dir) {
  IrModule m;
  for (const auto &p : ir_files(dir)) {
    ParsedModule pm = parse_module_file(p);
    for (auto &pf : pm.functions) m.functions.push_back(std::move(pf.function));
  }
  return m;
}

struct ExtractCommand {
  fs::path ir_dir;
  fs::path profile;
  fs::path out;
  ExtractOptions extract;
};

struct ExtractSummary {
  std::size_t total_branches = 0;
  std::size_t profiled = 0; // branches with at least one sample
  std::size_t unique = 0;   // examples after dedup
};

inline ExtractSummary cmd_extract(const ExtractCommand &o, std::ostream &log) {
  const Profile profile = read_profile(o.profile);
  const IrModule m = read_ir_dir(o.ir_dir);
  const auto examples = generate_examples(m, profile, o.extract);
  const auto unique = dedup(examples);
  write_csv(unique, o.out);
  ExtractSummary s{count_branches(m), examples.size(), unique.size()};
  log << "total branches: " << s.total_branches << "\nprofiled branches: " << s.profiled
      << "\nunique examples: " << s.unique << "\n";
  return s;
}

struct TrainCommand {
  fs::path data;
  fs::path out;
  ModelSpec spec;
  double test_fraction = 0.10;
  EmbedSpec embed;
};

/// Sibling of `data` that carries the train / test marker column:
/// `dir/name.csv` -> `dir/name.split.csv`.
inline fs::path split_csv_path(const fs::path &data) {
  std::string stem = data.stem().string();
  if (stem.ends_with(".split")) stem.resize(stem.size() - 6);
  return data.parent_path() / (stem + ".split.csv");
}

inline std::string format_history(const std::vector<EpochStats> &history) {
  std::string out = "epoch,train_loss,valid_loss\n";
  for (const auto &h : history)
    out += std::to_string(h.epoch) + "," + detail::format_double(h.train_loss) + "," +
           (std::isnan(h.valid_loss) ? std::string() : detail::format_double(h.valid_loss)) + "\n";
  return out;
}

inline TrainResult cmd_train(const TrainCommand &o, std::ostream &log) {
  o.spec.validate();
  const Dataset data = read_dataset(o.data);
  if (data.examples.empty()) fail(ErrorKind::EmptyDataset, "'" + o.data.string() + "' has no examples");
  const SplitResult parts = split(data.examples, o.test_fraction, o.spec.seed);
  TrainResult r = train(o.spec, parts.train, parts.test, o.embed);

  const fs::path dir = o.out.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::IoError, "cannot create directory '" + dir.string() + "': " + ec.message());
  }
  save_model(r.model, o.out);
  write_text_file(dir / "history.csv", format_history(r.history));
  std::vector<SplitMark> marks;
  for (bool t : parts.is_test) marks.push_back(t ? SplitMark::Test : SplitMark::Train);
  write_csv(data.examples, split_csv_path(o.data), &marks);

  log << "train examples: " << parts.train.size() << "\ntest examples: " << parts.test.size() << "\n";
  if (!r.history.empty()) {
    log << "final train loss: " << csv::format_fixed(r.history.back().train_loss, 4) << "\n";
    if (!std::isnan(r.history.back().valid_loss))
      log << "final valid loss: " << csv::format_fixed(r.history.back().valid_loss, 4) << "\n";
  }
  log << "split written to: " << split_csv_path(o.data).string() << "\n";
  return r;
}

struct EvalCommand {
  fs::path data;
  fs::path model;
  fs::path out;
  CategoryThresholds thresholds;
};

inline EvalResult cmd_eval(const EvalCommand &o, std::ostream &log) {
  const Model model = load_model(o.model);
  const Dataset data = read_dataset(o.data);
  std::vector<RawFeatures> raws;
  std::vector<double> heur, labels;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    if (!data.split.empty() && data.split[i] != SplitMark::Test) continue;
    raws.push_back(data.examples[i].raw);
    heur.push_back(data.examples[i].heuristic_prob);
    labels.push_back(data.examples[i].label);
  }
  if (raws.empty()) fail(ErrorKind::EmptyInput, "no evaluation rows in '" + o.data.string() + "'");
  const auto preds = predict_batch(model, raws);
  const EvalResult r = evaluate(preds, heur, labels, o.thresholds);
  render_report(r, o.out);
  const auto [c_ml, c_heur] = format_closeness_pair(r.ml.closeness);
  auto row = [&](const char *name, const MetricsReport &m, const std::string &c) {
    log << name << ": rmse=" << csv::format_fixed(m.rmse, 4) << " mae=" << csv::format_fixed(m.mae, 4)
        << " ce=" << csv::format_fixed(m.mean_cross_entropy, 4) << " closeness=" << c << "\n";
  };
  log << "examples: " << r.ml.n << "\n";
  row("ML", r.ml, c_ml);
  row("Heuristics", r.heuristic, c_heur);
  return r;
}

struct PredictCommand {
  fs::path ir_dir;
  fs::path model;
  fs::path out;
};

/// Replaces or appends the `!weights` annotation on a branch line, keeping
/// any trailing comment and line ending.
inline std::string annotate_branch_line(std::string_view line, std::uint64_t t, std::uint64_t nt) {
  std::string_view cr;
  if (line.ends_with('\r')) {
    cr = "\r";
    line.remove_suffix(1);
  }
  std::string_view comment;
  if (const auto semi = line.find(';'); semi != std::string_view::npos) {
    comment = line.substr(semi);
    line = line.substr(0, semi);
  }
  std::string_view code = strip_weights(line);
  while (!code.empty() && (code.back() == ' ' || code.back() == '\t')) code.remove_suffix(1);
  std::string out(code);
  out += " !weights " + std::to_string(t) + " " + std::to_string(nt);
  if (!comment.empty()) out += " " + std::string(comment);
  out += cr;
  return out;
}

/// Annotates every conditional branch of one IR file; other lines are kept
/// byte for byte.
inline std::string annotate_ir(std::string_view text, const std::string &source, const Model &model) {
  ParsedModule pm = parse_module(text, source);
  std::vector<RawFeatures> raws;
  std::vector<std::size_t> lines;
  for (const auto &pf : pm.functions) {
    std::optional<CfgAnalyses> a;
    for (const auto &b : pf.function.blocks()) {
      if (!b.branch()) continue;
      if (!a) a = analyze(pf.function);
      raws.push_back(extract_features(pf.function, b.id, *a, model.encoder.embed_spec().const_threshold));
      lines.push_back(pf.terminator_line[static_cast<std::size_t>(b.id)]);
    }
  }
  if (raws.empty()) return std::string(text);
  const auto preds = predict_batch(model, raws);
  for (std::size_t i = 0; i < raws.size(); ++i) {
    const auto [t, nt] = probability_to_branch_weights(preds[i]);
    pm.lines[lines[i]] = annotate_branch_line(pm.lines[lines[i]], t, nt);
  }
  std::string out;
  for (std::size_t i = 0; i < pm.lines.size(); ++i) {
    out += pm.lines[i];
    if (i + 1 < pm.lines.size() || text.ends_with('\n')) out += '\n';
  }
  return out;
}

inline std::size_t cmd_predict(const PredictCommand &o, std::ostream &log) {
  const Model model = load_model(o.model);
  const auto files = ir_files(o.ir_dir);
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create directory '" + o.out.string() + "': " + ec.message());
  std::size_t annotated = 0;
  for (const auto &p : files) {
    const std::string text = read_text_file(p);
    const std::string out = annotate_ir(text, p.string(), model);
    write_text_file(o.out / p.filename(), out);
    annotated += count_branches(parse_module(out, p.string()).module());
  }
  log << "files: " << files.size() << "\nannotated branches: " << annotated << "\n";
  return annotated;
}

} // namespace bplab
