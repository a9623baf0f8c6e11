#include <gtest/gtest.h>

#include "bplab/heuristics.hpp"
#include "bplab/ir_text.hpp"
#include "bplab/synth.hpp"
#include "support/cfg_oracles.hpp"

using namespace bplab;

namespace {

double heuristic_of(std::string_view text, BlockId block = 0, const HeuristicConfig &cfg = {}) {
  const IrFunction f = parse_module(text).functions.at(0).function;
  return estimate_heuristic(f, block, analyze(f), cfg);
}

HeuristicRule rule_of(const IrFunction &f, BlockId b) {
  return estimate_heuristic_detailed(f, b, analyze(f), {}).rule;
}

} // namespace

TEST(Heuristics, TakenBackEdge) {
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\n"
                                "block 0:\n  jmp %1\n"
                                "block 1:\n  %0 = icmp slt arg0 10\n  br %0 %1 %2\n"
                                "block 2:\n  ret\n",
                                1),
                   0.875);
}

TEST(Heuristics, TakenExitEdge) {
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\n"
                                "block 0:\n  jmp %1\n"
                                "block 1:\n  %0 = icmp slt arg0 10\n  br %0 %2 %1\n"
                                "block 2:\n  ret\n",
                                1),
                   0.125);
}

TEST(Heuristics, PlainCompareIsUnbiased) {
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\n"
                                "block 0:\n  %0 = icmp slt arg0 10\n  br %0 %1 %2\n"
                                "block 1:\n  ret\nblock 2:\n  ret\n"),
                   0.5);
}

TEST(Heuristics, ExpectHint) {
  const char *text = "func f file=a.cc\n"
                     "block 0:\n  %0 = icmp slt arg0 10\n  br %0 %1 %2 expect=taken\n"
                     "block 1:\n  ret\nblock 2:\n  ret\n";
  EXPECT_DOUBLE_EQ(heuristic_of(text), 0.99);
  const char *nottaken = "func f file=a.cc\n"
                         "block 0:\n  %0 = icmp slt arg0 10\n  br %0 %1 %2 expect=nottaken\n"
                         "block 1:\n  ret\nblock 2:\n  ret\n";
  EXPECT_NEAR(heuristic_of(nottaken), 0.01, 1e-15);
}

TEST(Heuristics, ExpectBeatsLoop) {
  EXPECT_NEAR(heuristic_of("func f file=a.cc\n"
                           "block 0:\n  jmp %1\n"
                           "block 1:\n  %0 = icmp slt arg0 10\n  br %0 %1 %2 expect=nottaken\n"
                           "block 2:\n  ret\n",
                           1),
              0.01, 1e-15);
}

TEST(Heuristics, NullCompare) {
  const std::string body = "block 1:\n  ret\nblock 2:\n  ret\n";
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\nblock 0:\n  %0 = load arg0\n  %1 = icmp eq %0 0\n  br %1 %1 %2\n" + body),
                   0.375);
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\nblock 0:\n  %0 = load arg0\n  %1 = icmp ne 0 %0\n  br %1 %1 %2\n" + body),
                   0.625);
  // Zero compared with a non-load is not the pattern.
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\nblock 0:\n  %0 = icmp eq arg0 0\n  br %0 %1 %2\n" + body), 0.5);
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\nblock 0:\n  %0 = fcmp oeq arg0 arg1\n  br %0 %1 %2\n" + body), 0.375);
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\nblock 0:\n  %0 = fcmp one arg0 arg1\n  br %0 %1 %2\n" + body), 0.625);
}

TEST(Heuristics, ConfigIsReadBack) {
  HeuristicConfig cfg;
  cfg.p_backedge = 0.9;
  EXPECT_DOUBLE_EQ(heuristic_of("func f file=a.cc\n"
                                "block 0:\n  jmp %1\n"
                                "block 1:\n  %0 = icmp slt arg0 10\n  br %0 %1 %2\n"
                                "block 2:\n  ret\n",
                                1, cfg),
                   0.9);
}

TEST(Heuristics, RejectsNonBranchBlock) {
  try {
    heuristic_of("func f file=a.cc\nblock 0:\n  ret\n");
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotAConditionalBranch);
  }
}

TEST(Heuristics, ConfigValidation) {
  HeuristicConfig cfg;
  cfg.p_expect = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.p_backedge = 0.4;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_NO_THROW(HeuristicConfig{}.validate());
}

// Swapping the targets of every branch and negating its compare maps each
// estimate p to 1-p for the loop, compare and default rules.
TEST(Heuristics, SymmetryUnderTargetSwap) {
  const Pred preds[] = {Pred::Eq, Pred::Ne, Pred::Slt, Pred::Sge, Pred::Ult, Pred::Ugt, Pred::Oeq, Pred::One};
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const IrFunction shape = oracle::random_reducible_function(seed);
    Rng rng(derive_seed(seed, 99));
    std::vector<BasicBlock> orig = shape.blocks(), swapped;
    InstId next = 0;
    for (auto &b : orig) {
      auto *br = std::get_if<CondBranch>(&b.term);
      if (!br) continue;
      const Pred p = preds[rng.below(std::size(preds))];
      const bool fl = is_float_pred(p);
      const bool null_style = !fl && rng.bernoulli(0.5);
      if (null_style) {
        b.insts.push_back({next, Op::Load, {ValueRef::arg(0)}, "", {}});
        b.insts.push_back({next + 1, fl ? Opcode::fcmp(p) : Opcode::icmp(p), {ValueRef::inst(next), ValueRef::constant(0)}, "", {}});
      } else {
        b.insts.push_back({next, Op::Var, {}, "", {}});
        b.insts.push_back({next + 1, fl ? Opcode::fcmp(p) : Opcode::icmp(p), {ValueRef::inst(next), ValueRef::arg(1)}, "", {}});
      }
      br->cond = ValueRef::inst(next + 1);
      next += 2;
    }
    swapped = orig;
    for (auto &b : swapped) {
      auto *br = std::get_if<CondBranch>(&b.term);
      if (!br) continue;
      std::swap(br->taken, br->nottaken);
      auto &cmp = b.insts.back();
      cmp.opcode = Opcode(cmp.opcode.op(), negate(cmp.opcode.pred()));
    }
    std::vector<BlockId> ra, rb;
    const IrFunction fa = build_function("f", "a.cc", orig, &ra);
    const IrFunction fb = build_function("f", "a.cc", swapped, &rb);
    const CfgAnalyses aa = analyze(fa), ab = analyze(fb);
    for (std::size_t i = 0; i < orig.size(); ++i) {
      if (!std::holds_alternative<CondBranch>(orig[i].term)) continue;
      const double pa = estimate_heuristic(fa, ra[i], aa);
      const double pb = estimate_heuristic(fb, rb[i], ab);
      EXPECT_NEAR(pa + pb, 1.0, 1e-15) << "seed " << seed << " block " << i;
    }
  }
}

TEST(Heuristics, OutputsStrictlyInsideUnitIntervalOnSynthCorpus) {
  SynthConfig cfg;
  cfg.n_functions = 60;
  cfg.seed = 11;
  const SynthModule sm = generate_module(cfg);
  std::array<int, 4> rules{};
  for (const auto &f : sm.module.functions) {
    const CfgAnalyses a = analyze(f);
    for (const auto &b : f.blocks()) {
      if (!b.branch()) continue;
      const double p = estimate_heuristic(f, b.id, a);
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
      ++rules[static_cast<std::size_t>(rule_of(f, b.id))];
    }
  }
  for (int r : rules) EXPECT_GT(r, 0) << "every rule should fire somewhere in a synthetic corpus";
}
