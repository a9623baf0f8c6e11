#pragma once

// Static branch heuristics in the style of LLVM's BranchProbabilityInfo:
// builtin-expect hints, loop back/exit edges, "unlikely" comparisons, and
// an unbiased default. The first rule that matches decides.

#include <string>

#include "bplab/cfg.hpp"

namespace bplab {

struct HeuristicConfig {
  double p_expect = 0.99;
  double p_backedge = 0.875;
  double p_null_cmp_eq_true = 0.375;
  double p_default = 0.5;

  void validate() const {
    auto open01 = [](double p) { return p > 0.0 && p < 1.0; };
    if (!open01(p_expect) || !open01(p_backedge) || !open01(p_null_cmp_eq_true) || !open01(p_default))
      fail(ErrorKind::InvalidConfig, "heuristic probabilities must lie in (0,1)");
    if (!(p_backedge > 0.5)) fail(ErrorKind::InvalidConfig, "back-edge probability must exceed 0.5");
    if (!(p_null_cmp_eq_true < 0.5)) fail(ErrorKind::InvalidConfig, "unlikely-compare probability must be below 0.5");
  }
};

enum class HeuristicRule { Expect, Loop, UnlikelyCompare, Default };

struct HeuristicEstimate {
  double taken = 0.5;
  HeuristicRule rule = HeuristicRule::Default;
};

namespace detail {

inline bool is_zero_constant(const IrFunction &f, ValueRef v) {
  if (v.is_const()) return v.value == 0;
  if (v.is_inst())
    if (const Instruction *d = f.def(v.inst_id()); d && d->opcode.op() == Op::Const && !d->operands.empty())
      return d->operands[0].is_const() && d->operands[0].value == 0;
  return false;
}

inline bool is_load(const IrFunction &f, ValueRef v) {
  if (!v.is_inst()) return false;
  const Instruction *d = f.def(v.inst_id());
  return d && d->opcode.op() == Op::Load;
}

/// Probability that `cmp` is true under the unlikely-compare rule, if it
/// applies. Pointer-vs-null is approximated as (load == 0).
inline std::optional<double> unlikely_compare(const IrFunction &f, const Instruction &cmp, double p_true) {
  if (cmp.operands.size() != 2) return std::nullopt;
  const Pred pred = cmp.opcode.pred();
  if (cmp.opcode.op() == Op::ICmp && (pred == Pred::Eq || pred == Pred::Ne)) {
    const auto &a = cmp.operands[0];
    const auto &b = cmp.operands[1];
    const bool null_cmp = (is_zero_constant(f, a) && is_load(f, b)) || (is_zero_constant(f, b) && is_load(f, a));
    if (!null_cmp) return std::nullopt;
    return pred == Pred::Eq ? p_true : 1.0 - p_true;
  }
  if (cmp.opcode.op() == Op::FCmp && (pred == Pred::Oeq || pred == Pred::One))
    return pred == Pred::Oeq ? p_true : 1.0 - p_true;
  return std::nullopt;
}

} // namespace detail

inline HeuristicEstimate estimate_heuristic_detailed(const IrFunction &f, BlockId branch_block,
                                                     const CfgAnalyses &analyses, const HeuristicConfig &config) {
  const CondBranch *br = f.block(branch_block).branch();
  if (!br)
    fail(ErrorKind::NotAConditionalBranch,
         "block " + std::to_string(branch_block) + " of '" + f.name() + "' does not end in a conditional branch");

  if (br->expect) return {*br->expect == Expect::Taken ? config.p_expect : 1.0 - config.p_expect, HeuristicRule::Expect};

  const auto rel_taken = classify_edge(f, analyses.loops, {branch_block, br->taken});
  const auto rel_nottaken = classify_edge(f, analyses.loops, {branch_block, br->nottaken});
  if (rel_taken == EdgeLoopRelation::BackEdge) return {config.p_backedge, HeuristicRule::Loop};
  if (rel_taken == EdgeLoopRelation::ExitEdge) return {1.0 - config.p_backedge, HeuristicRule::Loop};
  if (rel_nottaken == EdgeLoopRelation::BackEdge) return {1.0 - config.p_backedge, HeuristicRule::Loop};
  if (rel_nottaken == EdgeLoopRelation::ExitEdge) return {config.p_backedge, HeuristicRule::Loop};

  if (br->cond.is_inst())
    if (const Instruction *cmp = f.def(br->cond.inst_id()); cmp && cmp->opcode.is_compare())
      if (auto p = detail::unlikely_compare(f, *cmp, config.p_null_cmp_eq_true))
        return {*p, HeuristicRule::UnlikelyCompare};

  return {config.p_default, HeuristicRule::Default};
}

/// Taken probability of the conditional branch ending `branch_block`.
inline double estimate_heuristic(const IrFunction &f, BlockId branch_block, const CfgAnalyses &analyses,
                                 const HeuristicConfig &config = {}) {
  return estimate_heuristic_detailed(f, branch_block, analyses, config).taken;
}

} // namespace bplab
