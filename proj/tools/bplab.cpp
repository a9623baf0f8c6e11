// bplab: synthesize a profiled corpus, extract labeled branch examples,
// train a branch-probability model, evaluate it against the heuristics,
// and annotate IR with predicted branch weights.

#include <cctype>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "bplab/commands.hpp"

namespace {

using namespace bplab;

/// Every subcommand accepts `--config <file>`; expand_config has already
/// turned the file into flags by the time CLI11 sees it.
void add_config(CLI::App *sub, std::string &path) {
  sub->add_option("--config", path, "Read flag defaults from a key=value file (keys are long flag names)");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Inserts `--key=value` for each line of the `--config` file right after the
/// subcommand name. Keys already given on the command line are skipped, so
/// explicit flags win. Blank lines and lines starting with '#' are ignored.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  std::set<std::string> given;
  for (std::size_t i = 2; i < args.size(); ++i) {
    const std::string &a = args[i];
    if (!a.starts_with("--")) continue;
    const std::string key = a.substr(2, a.find('=') - 2);
    given.insert(key);
    if (key != "config") continue;
    if (a.find('=') != std::string::npos) path = a.substr(a.find('=') + 1);
    else if (i + 1 < args.size()) path = args[i + 1];
  }
  if (!path || args.size() < 2) return args;

  std::vector<std::string> extra;
  const std::string text = read_text_file(*path);
  std::size_t line_no = 0;
  for (std::size_t start = 0; start < text.size();) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string_view line = trim(std::string_view(text).substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty())
      fail(ErrorKind::InvalidConfig, *path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key(trim(line.substr(0, eq)));
    if (key == "config") fail(ErrorKind::InvalidConfig, *path + ":" + std::to_string(line_no) + ": nested config");
    if (!given.count(key)) extra.push_back("--" + key + "=" + std::string(trim(line.substr(eq + 1))));
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

void add_heuristic_flags(CLI::App *sub, HeuristicConfig &h) {
  sub->add_option("--heur-backedge", h.p_backedge, "Probability of staying in a loop")->capture_default_str();
  sub->add_option("--heur-expect", h.p_expect, "Probability assigned to an expect hint")->capture_default_str();
  sub->add_option("--heur-unlikely-cmp", h.p_null_cmp_eq_true, "Probability that an equality-with-zero test holds")
      ->capture_default_str();
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Branch probability estimation toolkit"};
  app.require_subcommand(1);
  std::string config_path;

  SynthCommand synth;
  auto *s = app.add_subcommand("synth", "Generate a synthetic IR corpus and its profile");
  add_config(s, config_path);
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--functions", synth.config.n_functions, "Number of functions")->capture_default_str();
  s->add_option("--seed", synth.config.seed, "Random seed")->capture_default_str();
  s->add_option("--trials", synth.config.trials_per_function, "Profiling runs per function")->capture_default_str();
  s->add_option("--loop-prob", synth.config.loop_prob, "Probability a statement is a loop")->capture_default_str();
  s->add_option("--max-loop-depth", synth.config.max_loop_depth, "Maximum loop nesting (0..3)")->capture_default_str();
  s->add_option("--error-path-prob", synth.config.error_path_prob, "Probability a statement is an error check")
      ->capture_default_str();
  s->add_option("--null-check-prob", synth.config.null_check_prob, "Probability a statement is a null check")
      ->capture_default_str();
  s->add_option("--expect-prob", synth.config.expect_prob, "Fraction of checks carrying an expect hint")
      ->capture_default_str();
  s->add_option("--trip-count-mean", synth.config.trip_count_mean, "Mean loop trip count")->capture_default_str();
  s->add_option("--beta-a", synth.config.beta_a, "Beta shape a for generic compares")->capture_default_str();
  s->add_option("--beta-b", synth.config.beta_b, "Beta shape b for generic compares")->capture_default_str();
  s->add_option("--idioms", synth.config.n_idioms, "Number of compare idioms")->capture_default_str();
  s->add_option("--files", synth.config.n_files, "Number of source file names")->capture_default_str();
  s->add_option("--cold-callees", synth.config.cold_callee_pool, "Cold callee names")->delimiter(',');
  s->add_option("--hot-callees", synth.config.hot_callee_pool, "Hot callee names")->delimiter(',');

  ExtractCommand extract;
  auto *x = app.add_subcommand("extract", "Build the labeled example CSV from IR and a profile");
  add_config(x, config_path);
  x->add_option("--ir", extract.ir_dir, "Directory of .ir files")->required();
  x->add_option("--profile", extract.profile, "profile.csv")->required();
  x->add_option("--out", extract.out, "Output CSV")->required();
  x->add_option("--const-threshold", extract.extract.const_threshold, "Largest |constant| kept as a token")
      ->capture_default_str();
  add_heuristic_flags(x, extract.extract.heuristics);

  TrainCommand train;
  std::string loss_name = "ce";
  auto *t = app.add_subcommand("train", "Train a model on a dataset CSV");
  add_config(t, config_path);
  t->add_option("--data", train.data, "Dataset CSV")->required();
  t->add_option("--out", train.out, "Model file")->required();
  t->add_option("--hidden-layers", train.spec.hidden_layers, "Hidden layers (0..5)")->capture_default_str();
  t->add_option("--hidden-width", train.spec.hidden_width, "Units per hidden layer")->capture_default_str();
  t->add_option("--embed-callee", train.spec.embed_callee, "Callee embedding width")->capture_default_str();
  t->add_option("--embed-file", train.spec.embed_file, "File embedding width")->capture_default_str();
  t->add_option("--epochs", train.spec.epochs, "Training epochs")->capture_default_str();
  t->add_option("--batch", train.spec.batch_size, "Batch size")->capture_default_str();
  t->add_option("--lr", train.spec.learning_rate, "Adagrad learning rate")->capture_default_str();
  t->add_option("--eps", train.spec.adagrad_epsilon, "Adagrad epsilon")->capture_default_str();
  t->add_option("--loss", loss_name, "Loss: mae, mse or ce")
      ->check(CLI::IsMember({"mae", "mse", "ce"}))
      ->capture_default_str();
  t->add_option("--seed", train.spec.seed, "Seed for initialization, shuffling and the split")->capture_default_str();
  t->add_option("--test-fraction", train.test_fraction, "Held-out fraction")->capture_default_str();
  t->add_flag("--count-weighted", train.spec.count_weighted, "Weight each example's loss by its sample count");
  t->add_option("--min-count", train.embed.min_count, "Minimum occurrences for a vocabulary entry")
      ->capture_default_str();
  t->add_option("--const-threshold", train.embed.const_threshold, "Largest |constant| kept as a token")
      ->capture_default_str();

  EvalCommand eval;
  auto *e = app.add_subcommand("eval", "Compare model and heuristic estimates on a dataset");
  add_config(e, config_path);
  e->add_option("--data", eval.data, "Dataset CSV (held-out rows only if it has a split column)")->required();
  e->add_option("--model", eval.model, "Model file")->required();
  e->add_option("--out", eval.out, "Report directory")->required();

  PredictCommand predict;
  auto *p = app.add_subcommand("predict", "Annotate IR branches with predicted weights");
  add_config(p, config_path);
  p->add_option("--ir", predict.ir_dir, "Directory of .ir files")->required();
  p->add_option("--model", predict.model, "Model file")->required();
  p->add_option("--out", predict.out, "Output directory")->required();

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const Error &err) {
    std::cerr << "bplab: " << err.what() << "\n";
    return err.kind() == ErrorKind::IoError ? 1 : 2;
  }
  std::vector<char *> expanded;
  for (auto &a : args) expanded.push_back(a.data());

  try {
    app.parse(static_cast<int>(expanded.size()), expanded.data());
  } catch (const CLI::CallForHelp &err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp &err) {
    return app.exit(err);
  } catch (const CLI::ParseError &err) {
    std::cerr << "bplab: " << err.what() << "\n";
    return 2;
  }

  try {
    if (*s) {
      cmd_synth(synth, std::cout);
    } else if (*x) {
      extract.extract.heuristics.validate();
      cmd_extract(extract, std::cout);
    } else if (*t) {
      train.spec.loss = *parse_loss(loss_name);
      cmd_train(train, std::cout);
    } else if (*e) {
      cmd_eval(eval, std::cout);
    } else if (*p) {
      cmd_predict(predict, std::cout);
    }
  } catch (const std::exception &err) {
    std::cerr << "bplab: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
