// Prints what the static side of the toolkit sees at every conditional
// branch of an IR file: the heuristic estimate and the rule that produced
// it, the CFG shape, the loop relation of both edges, and the
// expression-tree tokens.
//
//   inspect_branches [file.ir]
//
// Without an argument a built-in function is used.

#include <iostream>

#include "bplab/dataset.hpp"
#include "bplab/heuristics.hpp"
#include "bplab/ir_text.hpp"

namespace {

const char *kDemo = R"(func read_all file=src/io.cc
block 0:
  %0 = load arg0
  %1 = icmp eq %0 0
  br %1 %1 %2
block 1:
  %2 = call @log_error arg0 #cold #noinline
  ret
block 2:
  jmp %3
block 3:
  %3 = call @next arg0
  %4 = icmp slt %3 arg1
  br %4 %3 %4
block 4:
  ret
)";

const char *rule_name(bplab::HeuristicRule r) {
  switch (r) {
  case bplab::HeuristicRule::Expect: return "expect";
  case bplab::HeuristicRule::Loop: return "loop";
  case bplab::HeuristicRule::UnlikelyCompare: return "compare";
  case bplab::HeuristicRule::Default: return "default";
  }
  return "?";
}

} // namespace

int main(int argc, char **argv) {
  using namespace bplab;
  try {
    const ParsedModule pm = argc > 1 ? parse_module_file(argv[1]) : parse_module(kDemo, "<demo>");
    for (const auto &pf : pm.functions) {
      const IrFunction &f = pf.function;
      const CfgAnalyses a = analyze(f);
      for (const auto &b : f.blocks()) {
        if (!b.branch()) continue;
        const HeuristicEstimate h = estimate_heuristic_detailed(f, b.id, a, {});
        const RawFeatures r = extract_features(f, b.id, a);
        std::cout << branch_id(f, b.id) << "\n  heuristic " << h.taken << " (" << rule_name(h.rule) << ")\n  shape "
                  << to_string(r.cfg_shape) << ", taken edge " << to_string(r.taken_edge_rel) << ", not-taken edge "
                  << to_string(r.nottaken_edge_rel) << ", loop depth " << r.loop_depth << "\n  tree";
        for (const auto &t : r.expr.slots) std::cout << ' ' << to_string(t);
        if (!r.taken_callee.empty()) std::cout << "\n  taken side calls " << r.taken_callee;
        if (!r.nottaken_callee.empty()) std::cout << "\n  not-taken side calls " << r.nottaken_callee;
        std::cout << "\n";
      }
    }
  } catch (const std::exception &e) {
    std::cerr << "inspect_branches: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
