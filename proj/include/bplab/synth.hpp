#pragma once

// Synthetic profiled corpus: structured (hence reducible) random functions
// with planted branch behaviour, and a random-walk executor that turns the
// latent probabilities into taken / not-taken counts.
//
// Planted structure, all keyed to features a model can observe:
//   - generic compares come from a pool of expression idioms, each with a
//     latent probability ~ Beta(a, b), perturbed per file, per guarded hot
//     callee and per instance;
//   - error checks guard a cold callee with p(toward the call) ~ U(0.001, 0.05);
//   - null checks (load compared with 0) are null with p ~ U(0.005, 0.15);
//   - loops take their back edge with p = m / (m + 1), m ~ geometric, and a
//     counted loop's bound constant is m when it fits the token range;
//   - early loop exits are rare versions of a generic idiom.

#include <cmath>
#include <filesystem>
#include <set>

#include "bplab/dataset.hpp"

namespace bplab {

inline std::vector<std::string> default_cold_callees() {
  return {"log_error",      "report_fatal",  "abort_with_message", "panic_handler",
          "print_backtrace", "throw_range_error", "fail_check",    "oom_handler"};
}

inline std::vector<std::string> default_hot_callees() {
  return {"memcpy_fast", "hash_combine",  "vector_push_back", "string_append",   "map_find",     "update_stats",
          "checksum",    "encode_varint", "lock_acquire",     "lock_release",    "alloc_object", "visit_node",
          "read_field",  "write_field",   "heap_push",        "bitmap_set",      "queue_pop",    "compare_keys"};
}

struct SynthConfig {
  std::size_t n_functions = 100;
  std::uint64_t seed = 1;
  double loop_prob = 0.2;
  int max_loop_depth = 2;
  double error_path_prob = 0.15;
  double null_check_prob = 0.1;
  double expect_prob = 0.05; // fraction of error / null checks carrying a hint
  std::vector<std::string> cold_callee_pool = default_cold_callees();
  std::vector<std::string> hot_callee_pool = default_hot_callees();
  double trip_count_mean = 8.0;
  std::size_t trials_per_function = 10'000;
  double beta_a = 0.4;
  double beta_b = 0.4;
  std::size_t n_idioms = 400;
  std::size_t n_files = 32;
  int min_statements = 2;
  int max_statements = 7;
  int max_nesting = 3;
  double instance_noise = 1.0;  // std of the per-branch logit jitter
  double file_shift = 0.3;      // std of the per-file logit shift
  double callee_shift = 0.5;    // std of the per-hot-callee logit shift

  void validate() const {
    auto prob = [](double p, const char *name) {
      if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidConfig, std::string(name) + " must be in [0, 1]");
    };
    if (n_functions == 0) fail(ErrorKind::InvalidConfig, "n_functions must be positive");
    prob(loop_prob, "loop_prob");
    prob(error_path_prob, "error_path_prob");
    prob(null_check_prob, "null_check_prob");
    prob(expect_prob, "expect_prob");
    if (error_path_prob + null_check_prob > 1.0)
      fail(ErrorKind::InvalidConfig, "error_path_prob + null_check_prob must not exceed 1");
    if (max_loop_depth < 0 || max_loop_depth > 3) fail(ErrorKind::InvalidConfig, "max_loop_depth must be in 0..3");
    if (cold_callee_pool.empty() || hot_callee_pool.empty()) fail(ErrorKind::InvalidConfig, "callee pools must be non-empty");
    for (const auto *pool : {&cold_callee_pool, &hot_callee_pool})
      for (const auto &c : *pool)
        if (c.empty() || c.find_first_of(" \t\r\n,#@;") != std::string::npos)
          fail(ErrorKind::InvalidConfig, "bad callee name '" + c + "'");
    if (!(trip_count_mean >= 1.0)) fail(ErrorKind::InvalidConfig, "trip_count_mean must be >= 1");
    if (!(beta_a > 0.0 && beta_b > 0.0)) fail(ErrorKind::InvalidConfig, "beta parameters must be positive");
    if (n_idioms == 0 || n_files == 0) fail(ErrorKind::InvalidConfig, "n_idioms and n_files must be positive");
    if (min_statements < 1 || max_statements < min_statements)
      fail(ErrorKind::InvalidConfig, "need 1 <= min_statements <= max_statements");
    if (max_nesting < 0) fail(ErrorKind::InvalidConfig, "max_nesting must be nonnegative");
    if (!(instance_noise >= 0.0 && file_shift >= 0.0 && callee_shift >= 0.0))
      fail(ErrorKind::InvalidConfig, "noise scales must be nonnegative");
  }
};

/// Latent taken-probability of every conditional branch, by branch id.
struct GroundTruth {
  std::map<std::string, double> latent;
};

struct SynthModule {
  IrModule module;
  GroundTruth truth;
};

namespace synth_detail {

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double clamp_latent(double p) { return std::clamp(p, 1e-4, 1.0 - 1e-4); }

struct Leaf {
  bool is_const = false; // otherwise a variable (argument or `var`)
  std::int64_t value = 0;
};

struct Operand {
  std::optional<Op> op; // nullopt: the operand is a leaf
  Leaf leaf;
  std::vector<Leaf> children;
  std::string callee; // Op::Call only
};

struct Idiom {
  Opcode cmp;
  Operand lhs, rhs;
  double p = 0.5;
};

struct HotCallee {
  std::string name;
  AttrSet attrs;
  double shift = 0.0;
};

/// Module-wide random state shared by all functions.
struct Context {
  const SynthConfig *config = nullptr;
  std::vector<Idiom> idioms;
  std::vector<std::string> files;
  std::vector<double> file_shift;
  std::vector<HotCallee> hot;
  std::vector<AttrSet> cold_attrs;
};

inline const std::vector<std::string> &check_callees() {
  static const std::vector<std::string> v = {"validate_header", "check_bounds", "try_lock",
                                             "parse_int",       "read_block",   "status_code"};
  return v;
}

inline const std::vector<std::string> &getter_callees() {
  static const std::vector<std::string> v = {"size", "length", "get_count", "is_empty", "has_next", "peek", "capacity"};
  return v;
}

inline Leaf random_leaf(Rng &rng) {
  if (rng.bernoulli(0.55)) return {};
  static constexpr std::int64_t common[] = {0, 0, 0, 1, 1, 2, 3, 4, 8, 16, 32, 64, -1, 10, 100, 255, 1024, 4096};
  if (rng.bernoulli(0.8)) return {true, rng.pick(common)};
  return {true, rng.range(-64, 64)};
}

inline Operand random_operand(Rng &rng) {
  Operand o;
  const double r = rng.uniform();
  if (r < 0.4) {
    o.leaf = random_leaf(rng);
    return o;
  }
  static constexpr Op binops[] = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::And, Op::Or, Op::Xor, Op::Shl, Op::Shr};
  if (r < 0.75) {
    o.op = rng.pick(binops);
    o.children = {random_leaf(rng), random_leaf(rng)};
    if (o.children[0].is_const && o.children[1].is_const) o.children[0] = {};
  } else if (r < 0.87) {
    o.op = Op::Load;
    o.children = {Leaf{}};
  } else if (r < 0.95) {
    o.op = Op::Call;
    o.callee = rng.pick(getter_callees());
    o.children.resize(rng.below(3));
  } else {
    o.op = Op::Select;
    o.children = {Leaf{}, random_leaf(rng), random_leaf(rng)};
  }
  return o;
}

/// Token signature of an idiom (what the expression-tree feature sees).
inline std::string signature(const Idiom &id, std::int64_t threshold) {
  auto leaf = [&](const Leaf &l) -> std::string {
    if (!l.is_const) return "Var";
    return std::abs(l.value) <= threshold ? "Const(" + std::to_string(l.value) + ")" : "ConstUnknown";
  };
  std::string s = std::string(op_name(id.cmp.op())) + pred_name(id.cmp.pred());
  for (const Operand *o : {&id.lhs, &id.rhs}) {
    if (!o->op) {
      s += " " + leaf(o->leaf);
      continue;
    }
    s += std::string(" ") + op_name(*o->op) + "(";
    for (std::size_t k = 0; k < std::min<std::size_t>(2, o->children.size()); ++k) s += leaf(o->children[k]) + ",";
    s += ")";
  }
  return s;
}

inline Context make_context(const SynthConfig &c) {
  Context ctx;
  ctx.config = &c;
  Rng rng(derive_seed(c.seed, 0));

  static constexpr Pred ipreds[] = {Pred::Eq,  Pred::Ne,  Pred::Slt, Pred::Sle, Pred::Sgt,
                                    Pred::Sge, Pred::Ult, Pred::Ule, Pred::Ugt, Pred::Uge};
  static constexpr Pred fpreds[] = {Pred::Oeq, Pred::One, Pred::Olt, Pred::Ogt};
  std::set<std::string> seen;
  for (std::size_t guard = 0; ctx.idioms.size() < c.n_idioms && guard < 100 * c.n_idioms; ++guard) {
    Idiom id;
    id.cmp = rng.bernoulli(0.85) ? Opcode::icmp(rng.pick(ipreds)) : Opcode::fcmp(rng.pick(fpreds));
    id.lhs = random_operand(rng);
    id.rhs = random_operand(rng);
    if (!id.lhs.op && !id.rhs.op && id.lhs.leaf.is_const && id.rhs.leaf.is_const) id.lhs.leaf = {};
    id.p = clamp_latent(rng.beta(c.beta_a, c.beta_b));
    if (seen.insert(signature(id, kDefaultConstThreshold)).second) ctx.idioms.push_back(std::move(id));
  }

  static const char *dirs[] = {"src/net",   "src/storage", "src/util",  "src/rpc", "src/index",
                               "src/codec", "lib/base",    "lib/math",  "lib/io",  "third_party/zlib"};
  static const char *stems[] = {"socket", "buffer",  "cache",  "parser", "hash",      "table",   "stream",
                                "alloc",  "encoder", "sched",  "logger", "query",     "arena",   "tokenizer",
                                "btree",  "bitset",  "codec",  "server", "scheduler", "channel", "heap"};
  std::set<std::string> names;
  for (std::size_t guard = 0; ctx.files.size() < c.n_files; ++guard) {
    std::string f = std::string(rng.pick(dirs)) + "/" + rng.pick(stems);
    if (guard >= 1000) f += "_" + std::to_string(guard);
    f += ".cc";
    if (names.insert(f).second) {
      ctx.files.push_back(f);
      ctx.file_shift.push_back(rng.normal(0.0, c.file_shift));
    }
  }

  static constexpr std::uint8_t hot_attr_choices[] = {0, 0, AttrSet::Inline, AttrSet::AlwaysInline, AttrSet::NoInline};
  for (const auto &name : c.hot_callee_pool)
    ctx.hot.push_back({name, AttrSet(rng.pick(hot_attr_choices)), rng.normal(0.0, c.callee_shift)});
  for (std::size_t i = 0; i < c.cold_callee_pool.size(); ++i)
    ctx.cold_attrs.push_back(rng.bernoulli(0.7) ? AttrSet(AttrSet::Cold | AttrSet::NoInline) : AttrSet(AttrSet::Cold));
  return ctx;
}

struct LoopCtx {
  int exit_block = 0;
};

/// Builds one function as a list of draft blocks (ids = creation order).
class FunctionGen {
public:
  FunctionGen(const Context &ctx, std::uint64_t seed, std::size_t file)
      : ctx_(ctx), cfg_(*ctx.config), rng_(seed), file_(file), nargs_(static_cast<int>(rng_.range(1, 4))) {}

  std::vector<BasicBlock> run() {
    const int entry = new_block();
    const int count = static_cast<int>(rng_.range(cfg_.min_statements, cfg_.max_statements));
    const int end = seq(entry, 0, 0, nullptr, count);
    if (rng_.bernoulli(0.5)) straight(end);
    blocks_[static_cast<std::size_t>(end)].term = Return{};
    return std::move(blocks_);
  }

  const std::vector<std::pair<int, double>> &latent() const { return latent_; }

private:
  int new_block() {
    BasicBlock b;
    b.id = static_cast<BlockId>(blocks_.size());
    blocks_.push_back(std::move(b));
    return static_cast<int>(blocks_.size() - 1);
  }

  BasicBlock &blk(int b) { return blocks_[static_cast<std::size_t>(b)]; }

  ValueRef emit(int b, Opcode op, std::vector<ValueRef> operands, std::string callee = {}, AttrSet attrs = {}) {
    Instruction inst;
    inst.id = next_inst_++;
    inst.opcode = op;
    inst.operands = std::move(operands);
    inst.callee = std::move(callee);
    inst.callee_attrs = attrs;
    blk(b).insts.push_back(std::move(inst));
    return ValueRef::inst(next_inst_ - 1);
  }

  ValueRef any_var(int b) {
    if (rng_.bernoulli(0.5)) return ValueRef::arg(static_cast<int>(rng_.below(static_cast<std::uint64_t>(nargs_))));
    return emit(b, Op::Var, {});
  }

  ValueRef leaf(int b, const Leaf &l) { return l.is_const ? ValueRef::constant(l.value) : any_var(b); }

  ValueRef operand(int b, const Operand &o) {
    if (!o.op) return leaf(b, o.leaf);
    std::vector<ValueRef> ops;
    for (const auto &c : o.children) ops.push_back(leaf(b, c));
    return emit(b, *o.op, std::move(ops), o.op == Op::Call ? o.callee : std::string());
  }

  void branch(int b, ValueRef cond, int taken, int nottaken, double p_taken, std::optional<Expect> expect = {}) {
    blk(b).term = CondBranch{cond, taken, nottaken, expect};
    latent_.emplace_back(b, clamp_latent(p_taken));
  }

  void jump(int from, int to) { blk(from).term = Jump{to}; }

  /// A few arithmetic instructions, sometimes a hot call. Returns the call
  /// placed, if any.
  const HotCallee *straight(int b, double call_prob = 0.25) {
    static constexpr Op ops[] = {Op::Add, Op::Sub, Op::Mul, Op::And, Op::Or, Op::Xor, Op::Shl, Op::Load};
    const auto n = rng_.range(1, 3);
    for (std::int64_t i = 0; i < n; ++i) {
      const Op op = rng_.pick(ops);
      if (op == Op::Load) emit(b, op, {any_var(b)});
      else emit(b, op, {any_var(b), rng_.bernoulli(0.5) ? ValueRef::constant(rng_.range(0, 16)) : any_var(b)});
    }
    if (!rng_.bernoulli(call_prob)) return nullptr;
    const HotCallee &h = rng_.pick(ctx_.hot);
    emit(b, Op::Call, {any_var(b)}, h.name, h.attrs);
    return &h;
  }

  /// Latent probability for an idiom instance in this function.
  double instance_p(const Idiom &id, double extra_logit) {
    const double z = logit(id.p) + ctx_.file_shift[file_] + extra_logit + rng_.normal(0.0, cfg_.instance_noise);
    return 1.0 / (1.0 + std::exp(-z));
  }

  ValueRef emit_idiom(int b, const Idiom &id) {
    const ValueRef l = operand(b, id.lhs);
    const ValueRef r = operand(b, id.rhs);
    return emit(b, id.cmp, {l, r});
  }

  /// Body of a nested region; returns the block where it falls through.
  int body(int start, int depth, int loop_depth, const LoopCtx *loop, const HotCallee **call) {
    const HotCallee *h = straight(start, 0.6);
    if (call) *call = h;
    if (depth >= cfg_.max_nesting) return start;
    return seq(start, depth, loop_depth, loop, static_cast<int>(rng_.range(0, 2)));
  }

  int seq(int cur, int depth, int loop_depth, const LoopCtx *loop, int count) {
    for (int k = 0; k < count; ++k) {
      if (rng_.bernoulli(0.4)) straight(cur, 0.15);
      cur = statement(cur, depth, loop_depth, loop);
    }
    return cur;
  }

  int statement(int cur, int depth, int loop_depth, const LoopCtx *loop) {
    if (loop_depth < cfg_.max_loop_depth && depth < cfg_.max_nesting && rng_.bernoulli(cfg_.loop_prob))
      return loop_stmt(cur, depth, loop_depth);
    const double r = rng_.uniform();
    if (loop && r < 0.1) return loop_break(cur, *loop);
    const double s = rng_.uniform();
    if (s < cfg_.error_path_prob) return error_check(cur);
    if (s < cfg_.error_path_prob + cfg_.null_check_prob) return null_check(cur, depth, loop_depth, loop);
    if (depth >= cfg_.max_nesting) {
      straight(cur);
      return cur;
    }
    return rng_.bernoulli(0.55) ? if_then(cur, depth, loop_depth, loop) : if_else(cur, depth, loop_depth, loop);
  }

  int if_then(int cur, int depth, int loop_depth, const LoopCtx *loop) {
    const Idiom &id = rng_.pick(ctx_.idioms);
    const ValueRef c = emit_idiom(cur, id);
    const int then_b = new_block();
    const bool then_taken = rng_.bernoulli(0.5);
    const HotCallee *call = nullptr;
    const int then_end = body(then_b, depth + 1, loop_depth, loop, &call);
    const int join = new_block();
    jump(then_end, join);
    // The call's shift pushes toward the side that holds it.
    const double shift = call ? (then_taken ? call->shift : -call->shift) : 0.0;
    branch(cur, c, then_taken ? then_b : join, then_taken ? join : then_b, instance_p(id, shift));
    return join;
  }

  int if_else(int cur, int depth, int loop_depth, const LoopCtx *loop) {
    const Idiom &id = rng_.pick(ctx_.idioms);
    const ValueRef c = emit_idiom(cur, id);
    const int then_b = new_block();
    const HotCallee *call_t = nullptr;
    const HotCallee *call_e = nullptr;
    const int then_end = body(then_b, depth + 1, loop_depth, loop, &call_t);
    const int else_b = new_block();
    const int else_end = body(else_b, depth + 1, loop_depth, loop, &call_e);
    const int join = new_block();
    jump(then_end, join);
    jump(else_end, join);
    const double shift = (call_t ? call_t->shift : 0.0) - (call_e ? call_e->shift : 0.0);
    branch(cur, c, then_b, else_b, instance_p(id, shift));
    return join;
  }

  /// if (failed) { cold_call(); return or continue }
  int error_check(int cur) {
    ValueRef c;
    if (rng_.bernoulli(0.6)) {
      const ValueRef r = emit(cur, Op::Call, {any_var(cur)}, rng_.pick(check_callees()));
      static constexpr Pred preds[] = {Pred::Ne, Pred::Slt, Pred::Eq};
      c = emit(cur, Opcode::icmp(rng_.pick(preds)), {r, ValueRef::constant(0)});
    } else {
      c = emit_idiom(cur, rng_.pick(ctx_.idioms));
    }
    const double q = rng_.uniform(0.001, 0.05);
    const int cold = new_block();
    const std::size_t k = static_cast<std::size_t>(rng_.below(cfg_.cold_callee_pool.size()));
    emit(cold, Op::Call, {any_var(cold)}, cfg_.cold_callee_pool[k], ctx_.cold_attrs[k]);
    const int join = new_block();
    if (rng_.bernoulli(0.5)) blk(cold).term = Return{};
    else jump(cold, join);
    const bool cold_taken = rng_.bernoulli(0.5);
    std::optional<Expect> hint;
    if (rng_.bernoulli(cfg_.expect_prob)) hint = cold_taken ? Expect::NotTaken : Expect::Taken;
    branch(cur, c, cold_taken ? cold : join, cold_taken ? join : cold, cold_taken ? q : 1.0 - q, hint);
    return join;
  }

  /// if (p == null) { ... } with the null side rarely executed.
  int null_check(int cur, int depth, int loop_depth, const LoopCtx *loop) {
    const ValueRef ptr = emit(cur, Op::Load, {any_var(cur)});
    const bool eq = rng_.bernoulli(0.5);
    const ValueRef c = emit(cur, Opcode::icmp(eq ? Pred::Eq : Pred::Ne), {ptr, ValueRef::constant(0)});
    const double p_null = rng_.uniform(0.005, 0.15);
    const int null_b = new_block();
    const int join = new_block();
    if (rng_.bernoulli(0.5)) {
      blk(null_b).term = Return{};
    } else {
      const int end = body(null_b, depth + 1, loop_depth, loop, nullptr);
      jump(end, join);
    }
    std::optional<Expect> hint;
    if (rng_.bernoulli(cfg_.expect_prob)) hint = eq ? Expect::NotTaken : Expect::Taken;
    if (eq) branch(cur, c, null_b, join, p_null, hint);
    else branch(cur, c, join, null_b, 1.0 - p_null, hint);
    return join;
  }

  /// Bound operand of a counted loop running m times.
  ValueRef loop_bound(int b, std::int64_t m) {
    if (rng_.bernoulli(0.7)) return ValueRef::constant(m);
    return rng_.bernoulli(0.5) ? any_var(b) : emit(b, Op::Load, {any_var(b)});
  }

  int loop_stmt(int cur, int depth, int loop_depth) {
    const std::int64_t m = rng_.geometric(cfg_.trip_count_mean);
    const double p_stay = static_cast<double>(m) / static_cast<double>(m + 1);
    const int header = new_block();
    const int exit = new_block();
    jump(cur, header);
    LoopCtx lc{exit};
    const InstId next_id = next_inst_++; // reserved for the increment, used by the phi
    const ValueRef iv = emit(header, Op::Phi, {ValueRef::constant(0), ValueRef::inst(next_id)});

    auto increment = [&](int b) {
      Instruction inc;
      inc.id = next_id;
      inc.opcode = Op::Add;
      inc.operands = {iv, ValueRef::constant(1)};
      blk(b).insts.push_back(std::move(inc));
      return ValueRef::inst(next_id);
    };

    if (rng_.bernoulli(0.6)) {
      // Counted loop, test at the bottom.
      const int last = seq(header, depth + 1, loop_depth + 1, &lc, static_cast<int>(rng_.range(1, 3)));
      const ValueRef next = increment(last);
      const bool stay_taken = rng_.bernoulli(0.7);
      const ValueRef c = emit(last, Opcode::icmp(stay_taken ? Pred::Slt : Pred::Sge), {next, loop_bound(last, m)});
      branch(last, c, stay_taken ? header : exit, stay_taken ? exit : header, stay_taken ? p_stay : 1.0 - p_stay);
    } else {
      // Test at the top.
      ValueRef c;
      if (rng_.bernoulli(0.6)) {
        c = emit(header, Opcode::icmp(Pred::Slt), {iv, loop_bound(header, m)});
      } else {
        const ValueRef h = emit(header, Op::Call, {any_var(header)}, "has_next");
        c = emit(header, Opcode::icmp(Pred::Ne), {h, ValueRef::constant(0)});
      }
      const int body_b = new_block();
      const int last = seq(body_b, depth + 1, loop_depth + 1, &lc, static_cast<int>(rng_.range(1, 3)));
      increment(last);
      jump(last, header);
      branch(header, c, body_b, exit, p_stay);
    }
    return exit;
  }

  int loop_break(int cur, const LoopCtx &loop) {
    const Idiom &id = rng_.pick(ctx_.idioms);
    const ValueRef c = emit_idiom(cur, id);
    const int cont = new_block();
    const double p_exit = instance_p(id, -3.0);
    if (rng_.bernoulli(0.5)) branch(cur, c, loop.exit_block, cont, p_exit);
    else branch(cur, c, cont, loop.exit_block, 1.0 - p_exit);
    return cont;
  }

  const Context &ctx_;
  const SynthConfig &cfg_;
  Rng rng_;
  std::size_t file_;
  int nargs_;
  InstId next_inst_ = 0;
  std::vector<BasicBlock> blocks_;
  std::vector<std::pair<int, double>> latent_;
};

inline const char *function_verb(std::size_t i) {
  static const char *verbs[] = {"parse", "handle", "update", "lookup", "encode", "decode", "flush", "visit",
                                "insert", "erase",  "merge",  "scan",   "build",  "check",  "reset", "resize"};
  return verbs[i % std::size(verbs)];
}

} // namespace synth_detail

/// Generates `config.n_functions` functions. Each function is generated
/// from its own derived seed, so the result does not depend on threading.
inline SynthModule generate_module(const SynthConfig &config) {
  config.validate();
  const synth_detail::Context ctx = synth_detail::make_context(config);
  std::vector<IrFunction> fns(config.n_functions);
  std::vector<std::vector<std::pair<std::string, double>>> latent(config.n_functions);
  parallel_for(config.n_functions, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(config.seed, 1000 + i);
    const std::size_t file = static_cast<std::size_t>(Rng(seed).below(ctx.files.size()));
    synth_detail::FunctionGen gen(ctx, derive_seed(seed, 1), file);
    auto blocks = gen.run();
    std::vector<BlockId> remap;
    std::string name =
        std::string(synth_detail::function_verb(static_cast<std::size_t>(derive_seed(seed, 2)))) + "_" + std::to_string(i);
    fns[i] = build_function(std::move(name), ctx.files[file], std::move(blocks), &remap);
    for (const auto &[b, p] : gen.latent())
      latent[i].emplace_back(branch_id(fns[i], remap[static_cast<std::size_t>(b)]), p);
  });
  SynthModule out;
  out.module.functions = std::move(fns);
  for (auto &v : latent)
    for (auto &[id, p] : v) out.truth.latent.emplace(std::move(id), p);
  return out;
}

/// Maximum blocks executed per trial; trials that reach it stop there and
/// keep their counts.
inline constexpr std::size_t kMaxWalkSteps = 10'000;

/// Random-walk execution: each trial starts at the entry and resolves every
/// conditional branch against its latent probability.
inline Profile profile_module(const IrModule &module, const GroundTruth &truth, std::size_t trials, std::uint64_t seed) {
  std::vector<std::vector<BranchCounts>> counts(module.functions.size());
  std::vector<std::vector<double>> probs(module.functions.size());
  for (std::size_t i = 0; i < module.functions.size(); ++i) {
    const IrFunction &f = module.functions[i];
    probs[i].assign(f.num_blocks(), 0.0);
    counts[i].assign(f.num_blocks(), {});
    for (const auto &b : f.blocks()) {
      if (!b.branch()) continue;
      const auto id = branch_id(f, b.id);
      auto it = truth.latent.find(id);
      if (it == truth.latent.end()) fail(ErrorKind::InvalidConfig, "ground truth lacks branch " + id);
      probs[i][static_cast<std::size_t>(b.id)] = it->second;
    }
  }
  parallel_for(module.functions.size(), [&](std::size_t i) {
    const IrFunction &f = module.functions[i];
    Rng rng(derive_seed(seed, i));
    auto &c = counts[i];
    for (std::size_t t = 0; t < trials; ++t) {
      BlockId b = f.entry();
      for (std::size_t step = 0; step < kMaxWalkSteps; ++step) {
        const auto &term = f.block(b).term;
        if (const auto *br = std::get_if<CondBranch>(&term)) {
          const auto k = static_cast<std::size_t>(b);
          if (rng.uniform() < probs[i][k]) {
            ++c[k].taken;
            b = br->taken;
          } else {
            ++c[k].nottaken;
            b = br->nottaken;
          }
        } else if (const auto *j = std::get_if<Jump>(&term)) {
          b = j->target;
        } else {
          break;
        }
      }
    }
  });
  Profile p;
  for (std::size_t i = 0; i < module.functions.size(); ++i) {
    const IrFunction &f = module.functions[i];
    for (const auto &b : f.blocks())
      if (b.branch()) p[branch_id(f, b.id)] = counts[i][static_cast<std::size_t>(b.id)];
  }
  return p;
}

/// Branch ids in module order (function, then block).
inline std::vector<std::string> branch_order(const IrModule &module) {
  std::vector<std::string> ids;
  for (const auto &f : module.functions)
    for (const auto &b : f.blocks())
      if (b.branch()) ids.push_back(branch_id(f, b.id));
  return ids;
}

/// IR file name for a source file: path separators become '_'.
inline std::string ir_file_name(const std::string &source_file) {
  std::string s = source_file;
  for (char &ch : s)
    if (ch == '/' || ch == '\\') ch = '_';
  return s + ".ir";
}

/// Writes one IR file per source file (functions in module order) and
/// `profile.csv` into `dir`.
inline void write_corpus(const std::filesystem::path &dir, const IrModule &module, const Profile &profile) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create directory '" + dir.string() + "': " + ec.message());
  std::map<std::string, IrModule> by_file;
  for (const auto &f : module.functions) by_file[ir_file_name(f.file_name())].functions.push_back(f);
  for (const auto &[name, m] : by_file) write_text_file(dir / name, print_module(m));
  write_text_file(dir / "profile.csv", format_profile(profile, branch_order(module)));
}

} // namespace bplab
