#pragma once

// A deliberately small SSA-style IR: just enough structure (opcodes,
// constants, calls, a CFG and a debug file name) for branch analyses.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "bplab/error.hpp"

namespace bplab {

using BlockId = int;
using InstId = int;

enum class Op : std::uint8_t {
  ICmp, FCmp, Add, Sub, Mul, Div, And, Or, Xor, Shl, Shr, Load, Phi, Select, Call, Const, Var,
};
inline constexpr int kNumOps = 17;

enum class Pred : std::uint8_t {
  None,
  Eq, Ne, Slt, Sle, Sgt, Sge, Ult, Ule, Ugt, Uge, // integer
  Oeq, One, Olt, Ogt,                             // float
};

constexpr bool is_int_pred(Pred p) { return p >= Pred::Eq && p <= Pred::Uge; }
constexpr bool is_float_pred(Pred p) { return p >= Pred::Oeq && p <= Pred::Ogt; }

/// Logical negation of a comparison predicate. olt/ogt have no negation in
/// the modelled float subset and map to themselves.
constexpr Pred negate(Pred p) {
  switch (p) {
  case Pred::Eq: return Pred::Ne;
  case Pred::Ne: return Pred::Eq;
  case Pred::Slt: return Pred::Sge;
  case Pred::Sge: return Pred::Slt;
  case Pred::Sle: return Pred::Sgt;
  case Pred::Sgt: return Pred::Sle;
  case Pred::Ult: return Pred::Uge;
  case Pred::Uge: return Pred::Ult;
  case Pred::Ule: return Pred::Ugt;
  case Pred::Ugt: return Pred::Ule;
  case Pred::Oeq: return Pred::One;
  case Pred::One: return Pred::Oeq;
  default: return p;
  }
}

/// Opcode plus predicate. Predicates only attach to comparisons.
class Opcode {
public:
  constexpr Opcode() = default;
  constexpr Opcode(Op op) : op_(op) { // NOLINT: implicit for non-comparisons
    if (op == Op::ICmp || op == Op::FCmp) fail(ErrorKind::InvalidIr, "comparison needs a predicate");
  }
  constexpr Opcode(Op op, Pred pred) : op_(op), pred_(pred) {
    const bool ok = (op == Op::ICmp && is_int_pred(pred)) || (op == Op::FCmp && is_float_pred(pred)) ||
                    (op != Op::ICmp && op != Op::FCmp && pred == Pred::None);
    if (!ok) fail(ErrorKind::InvalidIr, "predicate does not match opcode");
  }

  static constexpr Opcode icmp(Pred p) { return Opcode(Op::ICmp, p); }
  static constexpr Opcode fcmp(Pred p) { return Opcode(Op::FCmp, p); }

  constexpr Op op() const { return op_; }
  constexpr Pred pred() const { return pred_; }
  constexpr bool is_compare() const { return op_ == Op::ICmp || op_ == Op::FCmp; }

  constexpr auto operator<=>(const Opcode &) const = default;

private:
  Op op_ = Op::Var;
  Pred pred_ = Pred::None;
};

struct ValueRef {
  enum class Kind : std::uint8_t { Inst, Const, Arg };
  Kind kind = Kind::Const;
  std::int64_t value = 0;

  static ValueRef inst(InstId id) { return {Kind::Inst, id}; }
  static ValueRef constant(std::int64_t c) { return {Kind::Const, c}; }
  static ValueRef arg(int k) { return {Kind::Arg, k}; }

  bool is_inst() const { return kind == Kind::Inst; }
  bool is_const() const { return kind == Kind::Const; }
  bool is_arg() const { return kind == Kind::Arg; }
  InstId inst_id() const { return static_cast<InstId>(value); }

  auto operator<=>(const ValueRef &) const = default;
};

/// Callee attributes, as a small bit set.
class AttrSet {
public:
  enum Attr : std::uint8_t { Inline = 1, NoInline = 2, AlwaysInline = 4, Cold = 8 };
  static constexpr std::uint8_t kAll[] = {Inline, NoInline, AlwaysInline, Cold};

  constexpr AttrSet() = default;
  constexpr explicit AttrSet(std::uint8_t bits) : bits_(bits) {}

  constexpr bool has(Attr a) const { return (bits_ & a) != 0; }
  constexpr AttrSet with(Attr a) const { return AttrSet(static_cast<std::uint8_t>(bits_ | a)); }
  constexpr AttrSet operator|(AttrSet o) const { return AttrSet(static_cast<std::uint8_t>(bits_ | o.bits_)); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  constexpr auto operator<=>(const AttrSet &) const = default;

private:
  std::uint8_t bits_ = 0;
};

inline const char *attr_name(std::uint8_t a) {
  switch (a) {
  case AttrSet::Inline: return "inline";
  case AttrSet::NoInline: return "noinline";
  case AttrSet::AlwaysInline: return "always_inline";
  case AttrSet::Cold: return "cold";
  default: return "?";
  }
}

struct Instruction {
  InstId id = 0;
  Opcode opcode;
  std::vector<ValueRef> operands;
  std::string callee; // Call only
  AttrSet callee_attrs;

  bool operator==(const Instruction &) const = default;
};

enum class Expect : std::uint8_t { Taken, NotTaken };

struct CondBranch {
  ValueRef cond;
  BlockId taken = 0;
  BlockId nottaken = 0;
  std::optional<Expect> expect;
  bool operator==(const CondBranch &) const = default;
};
struct Jump {
  BlockId target = 0;
  bool operator==(const Jump &) const = default;
};
struct Return {
  bool operator==(const Return &) const = default;
};

using Terminator = std::variant<CondBranch, Jump, Return>;

struct BasicBlock {
  BlockId id = 0;
  std::vector<Instruction> insts;
  Terminator term = Return{};

  const CondBranch *branch() const { return std::get_if<CondBranch>(&term); }
  bool operator==(const BasicBlock &) const = default;
};

struct Edge {
  BlockId from = 0;
  BlockId to = 0;
  auto operator<=>(const Edge &) const = default;
};

inline std::vector<BlockId> successors_of(const Terminator &t) {
  if (const auto *br = std::get_if<CondBranch>(&t)) return {br->taken, br->nottaken};
  if (const auto *j = std::get_if<Jump>(&t)) return {j->target};
  return {};
}

/// A validated function. Blocks are numbered 0..n-1 in reverse post-order
/// from the entry (so the entry is block 0), and instructions are numbered
/// densely in that block order.
class IrFunction {
public:
  const std::string &name() const { return name_; }
  const std::string &file_name() const { return file_name_; }
  BlockId entry() const { return 0; }
  const std::vector<BasicBlock> &blocks() const { return blocks_; }
  const BasicBlock &block(BlockId b) const { return blocks_.at(static_cast<std::size_t>(b)); }
  std::size_t num_blocks() const { return blocks_.size(); }

  const std::vector<BlockId> &succs(BlockId b) const { return succs_[static_cast<std::size_t>(b)]; }
  const std::vector<BlockId> &preds(BlockId b) const { return preds_[static_cast<std::size_t>(b)]; }

  /// Defining instruction of `id`, or nullptr.
  const Instruction *def(InstId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= defs_.size()) return nullptr;
    const auto [b, i] = defs_[static_cast<std::size_t>(id)];
    return &blocks_[static_cast<std::size_t>(b)].insts[static_cast<std::size_t>(i)];
  }

  std::size_t num_instructions() const { return defs_.size(); }
  std::size_t num_edges() const {
    std::size_t n = 0;
    for (const auto &s : succs_) n += s.size();
    return n;
  }

  bool operator==(const IrFunction &o) const {
    return name_ == o.name_ && file_name_ == o.file_name_ && blocks_ == o.blocks_;
  }

private:
  friend IrFunction build_function(std::string, std::string, std::vector<BasicBlock>, std::vector<BlockId> *);

  std::string name_;
  std::string file_name_;
  std::vector<BasicBlock> blocks_;
  std::vector<std::vector<BlockId>> succs_;
  std::vector<std::vector<BlockId>> preds_;
  std::vector<std::pair<int, int>> defs_;
};

struct IrModule {
  std::vector<IrFunction> functions;
};

/// Validates `blocks` (the first one is the entry) and renumbers blocks in
/// reverse post-order and instructions densely in that order. If `remap` is
/// given it receives, for each input block position, the new block id.
inline IrFunction build_function(std::string name, std::string file_name, std::vector<BasicBlock> blocks,
                                 std::vector<BlockId> *remap = nullptr) {
  if (blocks.empty()) fail(ErrorKind::InvalidIr, "function '" + name + "' has no blocks");

  std::unordered_map<BlockId, std::size_t> pos_of;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!pos_of.emplace(blocks[i].id, i).second)
      fail(ErrorKind::InvalidIr, "duplicate block id " + std::to_string(blocks[i].id) + " in '" + name + "'");
  }

  const std::size_t n = blocks.size();
  std::vector<std::vector<std::size_t>> succ_pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto &b = blocks[i];
    if (const auto *br = b.branch(); br != nullptr && br->taken == br->nottaken)
      fail(ErrorKind::InvalidIr, "block " + std::to_string(b.id) + " branches twice to the same target");
    for (BlockId t : successors_of(b.term)) {
      auto it = pos_of.find(t);
      if (it == pos_of.end())
        fail(ErrorKind::DanglingTarget,
             "block " + std::to_string(b.id) + " targets missing block " + std::to_string(t) + " in '" + name + "'");
      succ_pos[i].push_back(it->second);
    }
  }

  // Iterative DFS post-order, successors visited in terminator order.
  std::vector<std::size_t> post;
  std::vector<char> seen(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  seen[0] = 1;
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < succ_pos[node].size()) {
      const std::size_t s = succ_pos[node][next++];
      if (!seen[s]) {
        seen[s] = 1;
        stack.emplace_back(s, 0);
      }
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  if (post.size() != n) {
    for (std::size_t i = 0; i < n; ++i)
      if (!seen[i])
        fail(ErrorKind::UnreachableBlock,
             "block " + std::to_string(blocks[i].id) + " is unreachable in '" + name + "'");
  }

  std::vector<BlockId> new_id(n);
  for (std::size_t k = 0; k < n; ++k) new_id[post[n - 1 - k]] = static_cast<BlockId>(k);

  // Instruction renumbering in the new block order.
  std::unordered_map<InstId, InstId> inst_new;
  InstId counter = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto &b = blocks[post[n - 1 - k]];
    for (const auto &inst : b.insts) {
      if (!inst_new.emplace(inst.id, counter++).second)
        fail(ErrorKind::InvalidIr, "duplicate instruction id %" + std::to_string(inst.id) + " in '" + name + "'");
    }
  }

  auto remap_value = [&](ValueRef v, InstId limit, bool any_order) -> ValueRef {
    if (!v.is_inst()) return v;
    auto it = inst_new.find(v.inst_id());
    if (it == inst_new.end())
      fail(ErrorKind::UseBeforeDef, "use of undefined value %" + std::to_string(v.value) + " in '" + name + "'");
    if (!any_order && it->second >= limit)
      fail(ErrorKind::UseBeforeDef, "value %" + std::to_string(v.value) + " used before its definition in '" + name + "'");
    return ValueRef::inst(it->second);
  };

  IrFunction f;
  f.name_ = std::move(name);
  f.file_name_ = std::move(file_name);
  f.blocks_.resize(n);
  counter = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t p = post[n - 1 - k];
    BasicBlock &out = f.blocks_[k];
    BasicBlock &in = blocks[p];
    out.id = static_cast<BlockId>(k);
    for (auto &inst : in.insts) {
      Instruction ni = std::move(inst);
      ni.id = counter;
      if (ni.opcode.op() == Op::Call && ni.callee.empty())
        fail(ErrorKind::InvalidIr, "call without a callee in '" + f.name_ + "'");
      if (ni.opcode.op() != Op::Call && (!ni.callee.empty() || !ni.callee_attrs.empty()))
        fail(ErrorKind::InvalidIr, "callee on a non-call instruction in '" + f.name_ + "'");
      // Phi operands name values flowing in along back edges, so they may
      // refer forward.
      const bool any_order = ni.opcode.op() == Op::Phi;
      for (auto &opnd : ni.operands) opnd = remap_value(opnd, counter, any_order);
      f.defs_.emplace_back(static_cast<int>(k), static_cast<int>(&inst - in.insts.data()));
      out.insts.push_back(std::move(ni));
      ++counter;
    }
    out.term = in.term;
    if (auto *br = std::get_if<CondBranch>(&out.term)) {
      br->cond = remap_value(br->cond, counter, false);
      br->taken = new_id[pos_of.at(br->taken)];
      br->nottaken = new_id[pos_of.at(br->nottaken)];
    } else if (auto *j = std::get_if<Jump>(&out.term)) {
      j->target = new_id[pos_of.at(j->target)];
    }
  }

  f.succs_.resize(n);
  f.preds_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    f.succs_[k] = successors_of(f.blocks_[k].term);
    for (BlockId s : f.succs_[k]) f.preds_[static_cast<std::size_t>(s)].push_back(static_cast<BlockId>(k));
  }

  if (remap) *remap = new_id;
  return f;
}

} // namespace bplab
