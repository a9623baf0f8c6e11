#pragma once

// Per-branch features: the height-2 dataflow tree of the condition, callees
// in control-dependent blocks, local CFG shape, enclosing-loop and function
// size properties, and the debug file name. Plus the encoder that turns
// them into network inputs.

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "bplab/cfg.hpp"
#include "bplab/ir_text.hpp"

namespace bplab {

// ---------------------------------------------------------------------------
// Expression tree tokens

struct Token {
  enum class Kind : std::uint8_t { Opcode, Const, Var, ConstUnknown, Missing };
  Kind kind = Kind::Missing;
  Opcode opcode;          // Kind::Opcode
  std::int64_t value = 0; // Kind::Const

  static Token op(Opcode o) { return {Kind::Opcode, o, 0}; }
  static Token constant(std::int64_t v) { return {Kind::Const, {}, v}; }
  static Token var() { return {Kind::Var, {}, 0}; }
  static Token const_unknown() { return {Kind::ConstUnknown, {}, 0}; }
  static Token missing() { return {Kind::Missing, {}, 0}; }

  bool operator==(const Token &o) const {
    if (kind != o.kind) return false;
    if (kind == Kind::Opcode) return opcode == o.opcode;
    if (kind == Kind::Const) return value == o.value;
    return true;
  }
};

inline std::string capitalized(const char *s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

inline std::string to_string(const Token &t) {
  switch (t.kind) {
  case Token::Kind::Opcode: {
    std::string s = capitalized(op_name(t.opcode.op()));
    if (t.opcode.op() == Op::ICmp) s = "ICmp";
    if (t.opcode.op() == Op::FCmp) s = "FCmp";
    if (t.opcode.is_compare()) s += capitalized(pred_name(t.opcode.pred()));
    return s;
  }
  case Token::Kind::Const: return "Const(" + std::to_string(t.value) + ")";
  case Token::Kind::Var: return "Var";
  case Token::Kind::ConstUnknown: return "ConstUnknown";
  case Token::Kind::Missing: return "Missing";
  }
  return "?";
}

/// Every opcode token the extractor can emit. Const and Var instructions are
/// reported as Const/Var leaves, never as opcode tokens.
inline const std::vector<Opcode> &opcode_token_set() {
  static const std::vector<Opcode> set = [] {
    std::vector<Opcode> v;
    for (int p = static_cast<int>(Pred::Eq); p <= static_cast<int>(Pred::Uge); ++p)
      v.push_back(Opcode::icmp(static_cast<Pred>(p)));
    for (int p = static_cast<int>(Pred::Oeq); p <= static_cast<int>(Pred::Ogt); ++p)
      v.push_back(Opcode::fcmp(static_cast<Pred>(p)));
    for (Op o : {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::And, Op::Or, Op::Xor, Op::Shl, Op::Shr, Op::Load, Op::Phi,
                 Op::Select, Op::Call})
      v.push_back(Opcode(o));
    return v;
  }();
  return set;
}

inline std::optional<Token> parse_token(std::string_view s) {
  if (s == "Var") return Token::var();
  if (s == "ConstUnknown") return Token::const_unknown();
  if (s == "Missing") return Token::missing();
  if (s.starts_with("Const(") && s.ends_with(")")) {
    if (auto v = detail::parse_int<std::int64_t>(s.substr(6, s.size() - 7))) return Token::constant(*v);
    return std::nullopt;
  }
  for (const Opcode &o : opcode_token_set())
    if (to_string(Token::op(o)) == s) return Token::op(o);
  return std::nullopt;
}

/// Complete binary tree of height 2: slot 0 root, 1-2 children, 3-6
/// grandchildren (children of slot k live at 2k+1, 2k+2).
struct ExprTree {
  std::array<Token, 7> slots{};
  bool operator==(const ExprTree &) const = default;
};

inline constexpr std::int64_t kDefaultConstThreshold = 64;

namespace detail {

inline void fill_slot(const IrFunction &f, ExprTree &tree, std::size_t slot, ValueRef v, int depth,
                      std::int64_t threshold) {
  auto leaf_const = [&](std::int64_t c) {
    return (c >= -threshold && c <= threshold) ? Token::constant(c) : Token::const_unknown();
  };
  if (v.is_const()) {
    tree.slots[slot] = leaf_const(v.value);
    return;
  }
  if (v.is_arg()) {
    tree.slots[slot] = Token::var();
    return;
  }
  const Instruction *d = f.def(v.inst_id());
  if (d == nullptr) {
    tree.slots[slot] = Token::var();
    return;
  }
  if (d->opcode.op() == Op::Const) {
    tree.slots[slot] =
        !d->operands.empty() && d->operands[0].is_const() ? leaf_const(d->operands[0].value) : Token::const_unknown();
    return;
  }
  if (d->opcode.op() == Op::Var || depth >= 2) {
    tree.slots[slot] = Token::var();
    return;
  }
  tree.slots[slot] = Token::op(d->opcode);
  for (std::size_t k = 0; k < 2 && k < d->operands.size(); ++k)
    fill_slot(f, tree, 2 * slot + 1 + k, d->operands[k], depth + 1, threshold);
}

} // namespace detail

/// Backward dataflow tree of height 2 feeding the branch condition.
inline ExprTree extract_dataflow_tree(const IrFunction &f, BlockId branch_block,
                                      std::int64_t const_threshold = kDefaultConstThreshold) {
  const CondBranch *br = f.block(branch_block).branch();
  if (!br) fail(ErrorKind::NotAConditionalBranch, "block " + std::to_string(branch_block) + " has no conditional branch");
  ExprTree tree;
  detail::fill_slot(f, tree, 0, br->cond, 0, const_threshold);
  return tree;
}

// ---------------------------------------------------------------------------
// Raw features

enum class CfgShape : std::uint8_t { TriangleTaken, TriangleNotTaken, Diamond, Other };
inline constexpr int kNumCfgShapes = 4;

inline const char *to_string(CfgShape s) {
  switch (s) {
  case CfgShape::TriangleTaken: return "TriangleTaken";
  case CfgShape::TriangleNotTaken: return "TriangleNotTaken";
  case CfgShape::Diamond: return "Diamond";
  case CfgShape::Other: return "Other";
  }
  return "?";
}

struct RawFeatures {
  ExprTree expr;
  std::string taken_callee; // empty = none
  std::string nottaken_callee;
  AttrSet taken_callee_attrs;
  AttrSet nottaken_callee_attrs;
  CfgShape cfg_shape = CfgShape::Other;
  int loop_depth = 0;
  int loop_num_blocks = 0;
  int loop_num_exit_blocks = 0;
  int loop_num_exit_edges = 0;
  EdgeLoopRelation taken_edge_rel = EdgeLoopRelation::SameLoop;
  EdgeLoopRelation nottaken_edge_rel = EdgeLoopRelation::SameLoop;
  int fn_num_instructions = 0;
  int fn_num_blocks = 0;
  int fn_num_edges = 0;
  std::string file_name;

  bool operator==(const RawFeatures &) const = default;
};

/// Numeric features, in layout order.
inline constexpr std::array<const char *, 7> kNumericFeatureNames = {
    "loop_depth", "loop_blocks", "loop_exit_blocks", "loop_exit_edges", "fn_insts", "fn_blocks", "fn_edges"};

inline std::array<double, 7> numeric_values(const RawFeatures &r) {
  return {static_cast<double>(r.loop_depth),          static_cast<double>(r.loop_num_blocks),
          static_cast<double>(r.loop_num_exit_blocks), static_cast<double>(r.loop_num_exit_edges),
          static_cast<double>(r.fn_num_instructions),  static_cast<double>(r.fn_num_blocks),
          static_cast<double>(r.fn_num_edges)};
}

struct DominantCallee {
  std::string name;
  AttrSet attrs;
};

/// Most frequent callee (static call sites) in `blocks`; ties go to the
/// lexicographically smallest name. Attributes are unioned over its sites.
inline DominantCallee dominant_callee(const IrFunction &f, const std::vector<BlockId> &blocks) {
  std::map<std::string, std::pair<int, AttrSet>> counts;
  for (BlockId b : blocks)
    for (const auto &inst : f.block(b).insts)
      if (inst.opcode.op() == Op::Call) {
        auto &c = counts[inst.callee];
        ++c.first;
        c.second = c.second | inst.callee_attrs;
      }
  DominantCallee best;
  int best_count = 0;
  for (const auto &[name, c] : counts) // map order gives the lexicographic tie-break
    if (c.first > best_count) {
      best_count = c.first;
      best = {name, c.second};
    }
  return best;
}

inline CfgShape cfg_shape_of(const IrFunction &f, const CondBranch &br) {
  auto sole_succ = [&](BlockId b) -> std::optional<BlockId> {
    const auto &s = f.succs(b);
    if (s.size() == 1) return s[0];
    return std::nullopt;
  };
  const auto st = sole_succ(br.taken);
  const auto sn = sole_succ(br.nottaken);
  if (st && *st == br.nottaken) return CfgShape::TriangleTaken;
  if (sn && *sn == br.taken) return CfgShape::TriangleNotTaken;
  if (st && sn && *st == *sn) return CfgShape::Diamond;
  return CfgShape::Other;
}

inline RawFeatures extract_features(const IrFunction &f, BlockId branch_block, const CfgAnalyses &a,
                                    std::int64_t const_threshold = kDefaultConstThreshold) {
  const CondBranch *br = f.block(branch_block).branch();
  if (!br) fail(ErrorKind::NotAConditionalBranch, "block " + std::to_string(branch_block) + " has no conditional branch");
  RawFeatures r;
  r.expr = extract_dataflow_tree(f, branch_block, const_threshold);

  const auto taken_cd = control_dependent_blocks(f, a.pdom, {branch_block, br->taken});
  const auto nottaken_cd = control_dependent_blocks(f, a.pdom, {branch_block, br->nottaken});
  auto tc = dominant_callee(f, taken_cd);
  auto nc = dominant_callee(f, nottaken_cd);
  r.taken_callee = std::move(tc.name);
  r.taken_callee_attrs = tc.attrs;
  r.nottaken_callee = std::move(nc.name);
  r.nottaken_callee_attrs = nc.attrs;

  r.cfg_shape = cfg_shape_of(f, *br);

  if (const Loop *l = a.loops.innermost_loop(branch_block)) {
    r.loop_depth = l->depth;
    r.loop_num_blocks = static_cast<int>(l->body.size());
    r.loop_num_exit_blocks = static_cast<int>(l->exit_blocks.size());
    r.loop_num_exit_edges = static_cast<int>(l->exit_edges.size());
  }
  r.taken_edge_rel = classify_edge(f, a.loops, {branch_block, br->taken});
  r.nottaken_edge_rel = classify_edge(f, a.loops, {branch_block, br->nottaken});

  // Terminators count as instructions.
  r.fn_num_instructions = static_cast<int>(f.num_instructions() + f.num_blocks());
  r.fn_num_blocks = static_cast<int>(f.num_blocks());
  r.fn_num_edges = static_cast<int>(f.num_edges());
  r.file_name = f.file_name();
  return r;
}

// ---------------------------------------------------------------------------
// Encoder

struct NumericStat {
  std::string name;
  double mean = 0.0;
  double std = 1.0;
  bool operator==(const NumericStat &) const = default;
};

/// String -> index table. Index 0 is reserved for OOV / none; known
/// strings are numbered densely from 1 in sorted order.
class Vocabulary {
public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<std::uint32_t>(i + 1));
  }

  std::uint32_t lookup(const std::string &s) const {
    auto it = index_.find(s);
    return it == index_.end() ? 0 : it->second;
  }
  std::size_t size() const { return words_.size() + 1; } // including OOV
  const std::vector<std::string> &words() const { return words_; }

  bool operator==(const Vocabulary &o) const { return words_ == o.words_; }

private:
  std::vector<std::string> words_;
  std::map<std::string, std::uint32_t> index_;
};

struct EmbedSpec {
  std::size_t min_count = 2;
  std::int64_t const_threshold = kDefaultConstThreshold;
};

/// Network input for one branch. The dense vector (standardized numerics
/// followed by one-hot groups) is kept sparse: `index`/`value` list every
/// numeric position and every hot bit, ascending.
struct EncodedExample {
  std::size_t dense_size = 0;
  std::vector<std::uint32_t> index;
  std::vector<double> value;
  std::array<std::uint32_t, 3> embed{}; // taken callee, not-taken callee, file

  std::vector<double> dense() const {
    std::vector<double> d(dense_size, 0.0);
    for (std::size_t i = 0; i < index.size(); ++i) d[index[i]] = value[i];
    return d;
  }
  bool operator==(const EncodedExample &) const = default;
};

/// Half-open range of dense positions forming one one-hot group.
struct OneHotGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class Encoder {
public:
  Encoder() = default;

  /// Kept numeric features (zero-variance ones are dropped) and their stats.
  const std::vector<NumericStat> &numeric_stats() const { return numeric_; }
  const std::vector<std::string> &dropped_numeric() const { return dropped_; }
  const Vocabulary &callee_vocab() const { return callee_vocab_; }
  const Vocabulary &file_vocab() const { return file_vocab_; }
  const EmbedSpec &embed_spec() const { return spec_; }

  std::size_t dense_size() const { return dense_size_; }
  const std::vector<OneHotGroup> &one_hot_groups() const { return groups_; }
  std::size_t token_vocab_size() const { return tokens_.size(); }

  std::uint32_t token_index(const Token &t) const {
    switch (t.kind) {
    case Token::Kind::Opcode:
      for (std::size_t i = 0; i < opcodes_.size(); ++i)
        if (opcodes_[i] == t.opcode) return static_cast<std::uint32_t>(i);
      break;
    case Token::Kind::Const:
      if (t.value >= -spec_.const_threshold && t.value <= spec_.const_threshold)
        return static_cast<std::uint32_t>(opcodes_.size() + static_cast<std::size_t>(t.value + spec_.const_threshold));
      return static_cast<std::uint32_t>(tokens_.size() - 2); // ConstUnknown
    case Token::Kind::Var: return static_cast<std::uint32_t>(tokens_.size() - 3);
    case Token::Kind::ConstUnknown: return static_cast<std::uint32_t>(tokens_.size() - 2);
    case Token::Kind::Missing: return static_cast<std::uint32_t>(tokens_.size() - 1);
    }
    return static_cast<std::uint32_t>(tokens_.size() - 3);
  }

  EncodedExample encode(const RawFeatures &raw) const {
    EncodedExample e;
    e.dense_size = dense_size_;
    e.index.reserve(numeric_.size() + 7 + 3 + 8);
    e.value.reserve(numeric_.size() + 7 + 3 + 8);
    const auto nv = numeric_values(raw);
    for (std::size_t i = 0; i < numeric_.size(); ++i) {
      e.index.push_back(static_cast<std::uint32_t>(i));
      e.value.push_back((nv[numeric_source_[i]] - numeric_[i].mean) / numeric_[i].std);
    }
    std::size_t g = 0;
    auto hot = [&](std::size_t within) {
      e.index.push_back(static_cast<std::uint32_t>(groups_[g].offset + within));
      e.value.push_back(1.0);
      ++g;
    };
    for (const Token &t : raw.expr.slots) hot(token_index(t));
    hot(static_cast<std::size_t>(raw.cfg_shape));
    hot(static_cast<std::size_t>(raw.taken_edge_rel));
    hot(static_cast<std::size_t>(raw.nottaken_edge_rel));
    for (AttrSet attrs : {raw.taken_callee_attrs, raw.nottaken_callee_attrs})
      for (std::uint8_t a : AttrSet::kAll) hot(attrs.has(static_cast<AttrSet::Attr>(a)) ? 1 : 0);
    e.embed = {callee_vocab_.lookup(raw.taken_callee), callee_vocab_.lookup(raw.nottaken_callee),
               file_vocab_.lookup(raw.file_name)};
    return e;
  }

  /// Rebuilds an encoder from persisted parts (see the model file format).
  static Encoder from_parts(EmbedSpec spec, std::vector<NumericStat> numeric, std::vector<std::string> dropped,
                            Vocabulary callee, Vocabulary file) {
    Encoder enc;
    enc.spec_ = spec;
    enc.numeric_ = std::move(numeric);
    enc.dropped_ = std::move(dropped);
    enc.callee_vocab_ = std::move(callee);
    enc.file_vocab_ = std::move(file);
    enc.finalize_layout();
    return enc;
  }

  bool operator==(const Encoder &o) const {
    return spec_.min_count == o.spec_.min_count && spec_.const_threshold == o.spec_.const_threshold &&
           numeric_ == o.numeric_ && dropped_ == o.dropped_ && callee_vocab_ == o.callee_vocab_ &&
           file_vocab_ == o.file_vocab_;
  }

private:
  friend Encoder fit_encoder(const std::vector<RawFeatures> &, const EmbedSpec &);

  void finalize_layout() {
    numeric_source_.clear();
    for (const auto &s : numeric_) {
      for (std::size_t k = 0; k < kNumericFeatureNames.size(); ++k)
        if (s.name == kNumericFeatureNames[k]) numeric_source_.push_back(k);
    }
    if (numeric_source_.size() != numeric_.size()) fail(ErrorKind::LayoutMismatch, "unknown numeric feature name");

    opcodes_ = opcode_token_set();
    tokens_.clear();
    for (const auto &o : opcodes_) tokens_.push_back(to_string(Token::op(o)));
    for (std::int64_t c = -spec_.const_threshold; c <= spec_.const_threshold; ++c)
      tokens_.push_back(to_string(Token::constant(c)));
    tokens_.push_back("Var");
    tokens_.push_back("ConstUnknown");
    tokens_.push_back("Missing");

    groups_.clear();
    std::size_t off = numeric_.size();
    auto add = [&](std::string name, std::size_t size) {
      groups_.push_back({std::move(name), off, size});
      off += size;
    };
    for (int s = 0; s < 7; ++s) add("expr_slot_" + std::to_string(s), tokens_.size());
    add("cfg_shape", kNumCfgShapes);
    add("taken_edge_rel", kNumEdgeRelations);
    add("nottaken_edge_rel", kNumEdgeRelations);
    for (const char *side : {"taken", "nottaken"})
      for (std::uint8_t a : AttrSet::kAll) add(std::string(side) + "_" + attr_name(a), 2);
    dense_size_ = off;
  }

  EmbedSpec spec_;
  std::vector<NumericStat> numeric_;
  std::vector<std::size_t> numeric_source_;
  std::vector<std::string> dropped_;
  Vocabulary callee_vocab_;
  Vocabulary file_vocab_;
  std::vector<Opcode> opcodes_;
  std::vector<std::string> tokens_;
  std::vector<OneHotGroup> groups_;
  std::size_t dense_size_ = 0;
};

/// Fits standardization statistics (population std) and the string
/// vocabularies on a training set.
inline Encoder fit_encoder(const std::vector<RawFeatures> &examples, const EmbedSpec &spec = {}) {
  if (examples.empty()) fail(ErrorKind::EmptyDataset, "cannot fit an encoder on zero examples");
  if (spec.const_threshold < 0) fail(ErrorKind::InvalidConfig, "const_threshold must be nonnegative");

  const double n = static_cast<double>(examples.size());
  std::vector<NumericStat> numeric;
  std::vector<std::string> dropped;
  for (std::size_t k = 0; k < kNumericFeatureNames.size(); ++k) {
    double sum = 0.0;
    for (const auto &r : examples) sum += numeric_values(r)[k];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto &r : examples) {
      const double d = numeric_values(r)[k] - mean;
      ss += d * d;
    }
    const double std = std::sqrt(ss / n);
    if (std > 0.0) numeric.push_back({kNumericFeatureNames[k], mean, std});
    else dropped.emplace_back(kNumericFeatureNames[k]);
  }

  auto vocab = [&](auto &&get_strings) {
    std::map<std::string, std::size_t> counts;
    for (const auto &r : examples) get_strings(r, counts);
    std::vector<std::string> words;
    for (const auto &[w, c] : counts)
      if (!w.empty() && c >= spec.min_count) words.push_back(w);
    return Vocabulary(std::move(words));
  };
  Vocabulary callee = vocab([](const RawFeatures &r, auto &counts) {
    ++counts[r.taken_callee];
    ++counts[r.nottaken_callee];
  });
  Vocabulary file = vocab([](const RawFeatures &r, auto &counts) { ++counts[r.file_name]; });

  return Encoder::from_parts(spec, std::move(numeric), std::move(dropped), std::move(callee), std::move(file));
}

inline EncodedExample encode(const Encoder &encoder, const RawFeatures &raw) { return encoder.encode(raw); }

} // namespace bplab
