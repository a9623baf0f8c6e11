// Runs the whole pipeline in memory: synthesize and profile a corpus,
// extract and split labeled examples, train a small model, and print the
// evaluation table against the heuristics.
//
//   train_in_memory [functions] [seed]

#include <iostream>
#include <string>

#include "bplab/eval.hpp"
#include "bplab/model.hpp"
#include "bplab/synth.hpp"

int main(int argc, char **argv) {
  using namespace bplab;
  try {
    SynthConfig cfg;
    cfg.n_functions = argc > 1 ? std::stoul(argv[1]) : 300;
    cfg.seed = argc > 2 ? std::stoull(argv[2]) : 1;
    cfg.trials_per_function = 2000;

    const SynthModule sm = generate_module(cfg);
    const Profile profile = profile_module(sm.module, sm.truth, cfg.trials_per_function, cfg.seed);
    const auto examples = dedup(generate_examples(sm.module, profile));
    const SplitResult parts = split(examples, 0.10, cfg.seed);
    std::cout << examples.size() << " unique examples, " << parts.test.size() << " held out\n";

    ModelSpec spec;
    spec.hidden_layers = 2;
    spec.epochs = 30;
    spec.seed = cfg.seed;
    const TrainResult r = train(spec, parts.train, parts.test);
    std::cout << "final validation loss " << r.history.back().valid_loss << "\n\n";

    std::vector<RawFeatures> raws;
    std::vector<double> heur, labels;
    for (const auto &e : parts.test) {
      raws.push_back(e.raw);
      heur.push_back(e.heuristic_prob);
      labels.push_back(e.label);
    }
    std::cout << format_report(evaluate(predict_batch(r.model, raws), heur, labels));
  } catch (const std::exception &e) {
    std::cerr << "train_in_memory: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
