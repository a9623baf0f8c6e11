#pragma once

// Line-oriented text form of the IR.
//
//   func <name> file=<path>
//   block <id>:
//     %<id> = <opcode> [<pred>] <operand>... [@callee] [#attr]...
//     br <cond> %<taken> %<nottaken> [expect=taken|nottaken] [!weights <t> <nt>]
//     jmp %<target>
//     ret
//
// Operands are `%<inst>`, `arg<k>` or a decimal literal. A call names its
// callee right after the opcode: `%3 = call @log_error arg0 #cold #noinline`.
// ';' starts a comment that runs to the end of the line; blank lines are
// ignored.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bplab/ir.hpp"

namespace bplab {

inline const char *op_name(Op op) {
  switch (op) {
  case Op::ICmp: return "icmp";
  case Op::FCmp: return "fcmp";
  case Op::Add: return "add";
  case Op::Sub: return "sub";
  case Op::Mul: return "mul";
  case Op::Div: return "div";
  case Op::And: return "and";
  case Op::Or: return "or";
  case Op::Xor: return "xor";
  case Op::Shl: return "shl";
  case Op::Shr: return "shr";
  case Op::Load: return "load";
  case Op::Phi: return "phi";
  case Op::Select: return "select";
  case Op::Call: return "call";
  case Op::Const: return "const";
  case Op::Var: return "var";
  }
  return "?";
}

inline const char *pred_name(Pred p) {
  switch (p) {
  case Pred::None: return "";
  case Pred::Eq: return "eq";
  case Pred::Ne: return "ne";
  case Pred::Slt: return "slt";
  case Pred::Sle: return "sle";
  case Pred::Sgt: return "sgt";
  case Pred::Sge: return "sge";
  case Pred::Ult: return "ult";
  case Pred::Ule: return "ule";
  case Pred::Ugt: return "ugt";
  case Pred::Uge: return "uge";
  case Pred::Oeq: return "oeq";
  case Pred::One: return "one";
  case Pred::Olt: return "olt";
  case Pred::Ogt: return "ogt";
  }
  return "?";
}

inline std::optional<Op> parse_op(std::string_view s) {
  for (int i = 0; i < kNumOps; ++i)
    if (s == op_name(static_cast<Op>(i))) return static_cast<Op>(i);
  return std::nullopt;
}

inline std::optional<Pred> parse_pred(std::string_view s) {
  for (int i = static_cast<int>(Pred::Eq); i <= static_cast<int>(Pred::Ogt); ++i)
    if (s == pred_name(static_cast<Pred>(i))) return static_cast<Pred>(i);
  return std::nullopt;
}

inline std::string format_value(ValueRef v) {
  switch (v.kind) {
  case ValueRef::Kind::Inst: return "%" + std::to_string(v.value);
  case ValueRef::Kind::Arg: return "arg" + std::to_string(v.value);
  case ValueRef::Kind::Const: return std::to_string(v.value);
  }
  return "?";
}

inline std::string format_instruction(const Instruction &inst) {
  std::string s = "%" + std::to_string(inst.id) + " = " + op_name(inst.opcode.op());
  if (inst.opcode.is_compare()) s += std::string(" ") + pred_name(inst.opcode.pred());
  if (inst.opcode.op() == Op::Call) s += " @" + inst.callee;
  for (const auto &o : inst.operands) s += " " + format_value(o);
  for (std::uint8_t a : AttrSet::kAll)
    if (inst.callee_attrs.has(static_cast<AttrSet::Attr>(a))) s += std::string(" #") + attr_name(a);
  return s;
}

inline std::string format_terminator(const Terminator &t) {
  if (const auto *br = std::get_if<CondBranch>(&t)) {
    std::string s = "br " + format_value(br->cond) + " %" + std::to_string(br->taken) + " %" +
                    std::to_string(br->nottaken);
    if (br->expect) s += *br->expect == Expect::Taken ? " expect=taken" : " expect=nottaken";
    return s;
  }
  if (const auto *j = std::get_if<Jump>(&t)) return "jmp %" + std::to_string(j->target);
  return "ret";
}

inline void print_function(std::ostream &os, const IrFunction &f) {
  os << "func " << f.name() << " file=" << f.file_name() << "\n";
  for (const auto &b : f.blocks()) {
    os << "block " << b.id << ":\n";
    for (const auto &inst : b.insts) os << "  " << format_instruction(inst) << "\n";
    os << "  " << format_terminator(b.term) << "\n";
  }
}

inline std::string print_module(const IrModule &m) {
  std::ostringstream os;
  for (std::size_t i = 0; i < m.functions.size(); ++i) {
    if (i) os << "\n";
    print_function(os, m.functions[i]);
  }
  return os.str();
}

/// A parsed file keeps, per function, the source line (0-based) of each
/// block's terminator, indexed by the renumbered block id. Rewriters use it
/// to annotate branches in place.
struct ParsedFunction {
  IrFunction function;
  std::vector<std::size_t> terminator_line;
};

struct ParsedModule {
  std::vector<ParsedFunction> functions;
  std::vector<std::string> lines;

  IrModule module() const {
    IrModule m;
    for (const auto &pf : functions) m.functions.push_back(pf.function);
    return m;
  }
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class Int> std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

} // namespace detail

/// Strips a trailing `!weights <t> <nt>` annotation from a branch line.
inline std::string_view strip_weights(std::string_view line) {
  const auto pos = line.find(" !weights");
  return pos == std::string_view::npos ? line : line.substr(0, pos);
}

inline ParsedModule parse_module(std::string_view text, const std::string &source = "<input>") {
  ParsedModule pm;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto nl = text.find('\n', start);
      if (nl == std::string_view::npos) {
        if (start < text.size()) pm.lines.emplace_back(text.substr(start));
        break;
      }
      pm.lines.emplace_back(text.substr(start, nl - start));
      start = nl + 1;
    }
  }

  struct Pending {
    std::string name, file;
    std::vector<BasicBlock> blocks;
    std::vector<std::size_t> term_line;
    bool block_open = false;
    std::size_t line = 0;
  };
  std::optional<Pending> cur;

  auto error = [&](std::size_t line, const std::string &msg) -> Error {
    return Error(ErrorKind::ParseError, source + ":" + std::to_string(line + 1) + ": " + msg);
  };

  auto finish = [&]() {
    if (!cur) return;
    if (cur->block_open) throw error(cur->line, "block without a terminator");
    if (cur->blocks.empty()) throw error(cur->line, "function '" + cur->name + "' has no blocks");
    std::vector<BlockId> remap;
    ParsedFunction pf{build_function(cur->name, cur->file, std::move(cur->blocks), &remap), {}};
    pf.terminator_line.resize(remap.size());
    for (std::size_t i = 0; i < remap.size(); ++i)
      pf.terminator_line[static_cast<std::size_t>(remap[i])] = cur->term_line[i];
    pm.functions.push_back(std::move(pf));
    cur.reset();
  };

  auto parse_value = [&](std::string_view tok, std::size_t line) -> ValueRef {
    if (tok.starts_with('%')) {
      if (auto v = detail::parse_int<int>(tok.substr(1))) return ValueRef::inst(*v);
    } else if (tok.starts_with("arg")) {
      if (auto v = detail::parse_int<int>(tok.substr(3)); v && *v >= 0) return ValueRef::arg(*v);
    } else if (auto v = detail::parse_int<std::int64_t>(tok)) {
      return ValueRef::constant(*v);
    }
    throw error(line, "bad operand '" + std::string(tok) + "'");
  };
  auto parse_block_ref = [&](std::string_view tok, std::size_t line) -> BlockId {
    if (tok.starts_with('%'))
      if (auto v = detail::parse_int<int>(tok.substr(1))) return *v;
    throw error(line, "bad block reference '" + std::string(tok) + "'");
  };

  for (std::size_t ln = 0; ln < pm.lines.size(); ++ln) {
    std::string_view line = pm.lines[ln];
    line = line.substr(0, line.find(';'));
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;

    if (toks[0] == "func") {
      finish();
      if (toks.size() < 2) throw error(ln, "func needs a name");
      Pending p;
      p.name = std::string(toks[1]);
      p.line = ln;
      const auto fpos = line.find("file=");
      if (fpos != std::string_view::npos) {
        std::string_view rest = line.substr(fpos + 5);
        while (!rest.empty() && (rest.back() == '\r' || rest.back() == ' ')) rest.remove_suffix(1);
        p.file = std::string(rest);
      }
      cur = std::move(p);
      continue;
    }
    if (!cur) throw error(ln, "statement outside of a function");

    if (toks[0] == "block") {
      if (cur->block_open) throw error(ln, "previous block has no terminator");
      if (toks.size() != 2 || !toks[1].ends_with(':')) throw error(ln, "expected 'block <id>:'");
      auto id = detail::parse_int<int>(toks[1].substr(0, toks[1].size() - 1));
      if (!id) throw error(ln, "bad block id");
      BasicBlock b;
      b.id = *id;
      cur->blocks.push_back(std::move(b));
      cur->term_line.push_back(ln);
      cur->block_open = true;
      continue;
    }
    if (!cur->block_open) throw error(ln, "instruction outside of a block");
    BasicBlock &b = cur->blocks.back();

    if (toks[0] == "br") {
      auto bt = detail::split_ws(strip_weights(line));
      if (bt.size() < 4 || bt.size() > 5) throw error(ln, "expected 'br <cond> %<taken> %<nottaken>'");
      CondBranch br;
      br.cond = parse_value(bt[1], ln);
      br.taken = parse_block_ref(bt[2], ln);
      br.nottaken = parse_block_ref(bt[3], ln);
      if (bt.size() == 5) {
        if (bt[4] == "expect=taken") br.expect = Expect::Taken;
        else if (bt[4] == "expect=nottaken") br.expect = Expect::NotTaken;
        else throw error(ln, "bad branch suffix '" + std::string(bt[4]) + "'");
      }
      b.term = br;
    } else if (toks[0] == "jmp") {
      if (toks.size() != 2) throw error(ln, "expected 'jmp %<block>'");
      b.term = Jump{parse_block_ref(toks[1], ln)};
    } else if (toks[0] == "ret") {
      if (toks.size() != 1) throw error(ln, "unexpected tokens after ret");
      b.term = Return{};
    } else {
      // %<id> = <opcode> ...
      if (toks.size() < 3 || toks[1] != "=" || !toks[0].starts_with('%')) throw error(ln, "unrecognized line");
      auto id = detail::parse_int<int>(toks[0].substr(1));
      if (!id) throw error(ln, "bad instruction id");
      auto op = parse_op(toks[2]);
      if (!op) throw error(ln, "unknown opcode '" + std::string(toks[2]) + "'");
      Instruction inst;
      inst.id = *id;
      std::size_t k = 3;
      try {
        if (*op == Op::ICmp || *op == Op::FCmp) {
          if (k >= toks.size()) throw error(ln, "missing predicate");
          auto pred = parse_pred(toks[k++]);
          if (!pred) throw error(ln, "unknown predicate '" + std::string(toks[k - 1]) + "'");
          inst.opcode = Opcode(*op, *pred);
        } else {
          inst.opcode = Opcode(*op);
        }
      } catch (const Error &e) {
        if (e.kind() == ErrorKind::ParseError) throw;
        throw error(ln, e.what());
      }
      if (*op == Op::Call) {
        if (k >= toks.size() || !toks[k].starts_with('@') || toks[k].size() < 2)
          throw error(ln, "call needs '@<callee>'");
        inst.callee = std::string(toks[k++].substr(1));
      }
      for (; k < toks.size(); ++k) {
        if (toks[k].starts_with('#')) {
          if (*op != Op::Call) throw error(ln, "attributes only apply to calls");
          const auto a = toks[k].substr(1);
          bool found = false;
          for (std::uint8_t bit : AttrSet::kAll)
            if (a == attr_name(bit)) {
              inst.callee_attrs = inst.callee_attrs.with(static_cast<AttrSet::Attr>(bit));
              found = true;
            }
          if (!found) throw error(ln, "unknown attribute '" + std::string(a) + "'");
        } else {
          inst.operands.push_back(parse_value(toks[k], ln));
        }
      }
      b.insts.push_back(std::move(inst));
      continue;
    }
    cur->term_line.back() = ln;
    cur->block_open = false;
  }
  finish();
  return pm;
}

inline std::string read_text_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path &path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorKind::IoError, "write failed for '" + path.string() + "'");
}

inline ParsedModule parse_module_file(const std::filesystem::path &path) {
  return parse_module(read_text_file(path), path.string());
}

} // namespace bplab
