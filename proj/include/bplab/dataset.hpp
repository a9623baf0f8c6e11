#pragma once

// Labeled examples: labels from branch weights, generation from a profiled
// module, de-duplication, train/test split, CSV persistence, and the
// probability -> branch weights conversion used for annotation.

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <unordered_map>

#include "bplab/csv.hpp"
#include "bplab/features.hpp"
#include "bplab/heuristics.hpp"
#include "bplab/parallel.hpp"
#include "bplab/random.hpp"

namespace bplab {

struct LabeledExample {
  std::string branch_id; // file:function:block
  RawFeatures raw;
  double label = 0.0;
  std::uint64_t sample_count = 0;
  double heuristic_prob = 0.5; // for comparison only; never encoded

  bool operator==(const LabeledExample &) const = default;
};

struct BranchCounts {
  std::uint64_t taken = 0;
  std::uint64_t nottaken = 0;
  bool operator==(const BranchCounts &) const = default;
};

/// Branch id -> (taken, not-taken) sample counts.
using Profile = std::map<std::string, BranchCounts>;

inline std::string branch_id(const IrFunction &f, BlockId b) {
  return f.file_name() + ":" + f.name() + ":" + std::to_string(b);
}

inline double derive_label(std::uint64_t taken, std::uint64_t nottaken) {
  if (taken + nottaken == 0) fail(ErrorKind::ZeroSamples, "branch has no samples");
  return static_cast<double>(taken) / static_cast<double>(taken + nottaken);
}

inline constexpr std::uint64_t kWeightScale = 1'000'000;

inline std::pair<std::uint64_t, std::uint64_t> probability_to_branch_weights(double p) {
  const double scaled = std::round(std::clamp(p, 0.0, 1.0) * static_cast<double>(kWeightScale));
  const auto t = std::clamp<std::uint64_t>(static_cast<std::uint64_t>(scaled), 1, kWeightScale - 1);
  return {t, kWeightScale - t};
}

struct ExtractOptions {
  HeuristicConfig heuristics;
  std::int64_t const_threshold = kDefaultConstThreshold;
};

/// Number of conditional branches in `module`.
inline std::size_t count_branches(const IrModule &module) {
  std::size_t n = 0;
  for (const auto &f : module.functions)
    for (const auto &b : f.blocks()) n += b.branch() ? 1 : 0;
  return n;
}

/// One example per profiled conditional branch with at least one sample.
inline std::vector<LabeledExample> generate_examples(const IrModule &module, const Profile &profile,
                                                     const ExtractOptions &options = {}) {
  std::vector<std::vector<LabeledExample>> per_fn(module.functions.size());
  parallel_for(module.functions.size(), [&](std::size_t i) {
    const IrFunction &f = module.functions[i];
    std::optional<CfgAnalyses> analyses;
    for (const auto &b : f.blocks()) {
      if (!b.branch()) continue;
      std::string id = branch_id(f, b.id);
      auto it = profile.find(id);
      if (it == profile.end() || it->second.taken + it->second.nottaken == 0) continue;
      if (!analyses) analyses = analyze(f);
      LabeledExample ex;
      ex.branch_id = std::move(id);
      ex.raw = extract_features(f, b.id, *analyses, options.const_threshold);
      ex.label = derive_label(it->second.taken, it->second.nottaken);
      ex.sample_count = it->second.taken + it->second.nottaken;
      ex.heuristic_prob = estimate_heuristic(f, b.id, *analyses, options.heuristics);
      per_fn[i].push_back(std::move(ex));
    }
  });
  std::vector<LabeledExample> out;
  for (auto &v : per_fn)
    for (auto &e : v) out.push_back(std::move(e));
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string> &csv_columns() {
  static const std::vector<std::string> cols = {
      "branch_id",     "file_name",       "expr_slot_0",   "expr_slot_1",      "expr_slot_2",     "expr_slot_3",
      "expr_slot_4",   "expr_slot_5",     "expr_slot_6",   "taken_callee",     "nottaken_callee", "taken_attrs",
      "nottaken_attrs", "cfg_shape",      "loop_depth",    "loop_blocks",      "loop_exit_blocks", "loop_exit_edges",
      "taken_edge_rel", "nottaken_edge_rel", "fn_insts",   "fn_blocks",        "fn_edges",        "label",
      "sample_count",  "heuristic_prob"};
  return cols;
}

inline std::string format_attrs(AttrSet a) {
  std::string s;
  for (std::uint8_t bit : AttrSet::kAll)
    if (a.has(static_cast<AttrSet::Attr>(bit))) {
      if (!s.empty()) s += ';';
      s += attr_name(bit);
    }
  return s;
}

inline std::optional<AttrSet> parse_attrs(std::string_view s) {
  AttrSet out;
  while (!s.empty()) {
    const auto semi = s.find(';');
    const auto part = s.substr(0, semi);
    bool found = false;
    for (std::uint8_t bit : AttrSet::kAll)
      if (part == attr_name(bit)) {
        out = out.with(static_cast<AttrSet::Attr>(bit));
        found = true;
      }
    if (!found) return std::nullopt;
    if (semi == std::string_view::npos) break;
    s.remove_prefix(semi + 1);
  }
  return out;
}

/// The feature columns of a row (everything except id, label, counts).
inline std::vector<std::string> feature_fields(const RawFeatures &r) {
  std::vector<std::string> f;
  f.reserve(22);
  f.push_back(r.file_name);
  for (const Token &t : r.expr.slots) f.push_back(to_string(t));
  f.push_back(r.taken_callee);
  f.push_back(r.nottaken_callee);
  f.push_back(format_attrs(r.taken_callee_attrs));
  f.push_back(format_attrs(r.nottaken_callee_attrs));
  f.emplace_back(to_string(r.cfg_shape));
  f.push_back(std::to_string(r.loop_depth));
  f.push_back(std::to_string(r.loop_num_blocks));
  f.push_back(std::to_string(r.loop_num_exit_blocks));
  f.push_back(std::to_string(r.loop_num_exit_edges));
  f.emplace_back(to_string(r.taken_edge_rel));
  f.emplace_back(to_string(r.nottaken_edge_rel));
  f.push_back(std::to_string(r.fn_num_instructions));
  f.push_back(std::to_string(r.fn_num_blocks));
  f.push_back(std::to_string(r.fn_num_edges));
  return f;
}

/// Identical features and identical label to 6 decimals collapse into the
/// first occurrence, summing sample counts.
inline std::vector<LabeledExample> dedup(const std::vector<LabeledExample> &examples) {
  std::vector<LabeledExample> out;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto &e : examples) {
    std::string key = csv::format_row(feature_fields(e.raw));
    key += csv::format_fixed(e.label, 6);
    auto [it, inserted] = seen.emplace(std::move(key), out.size());
    if (inserted) out.push_back(e);
    else out[it->second].sample_count += e.sample_count;
  }
  return out;
}

struct SplitResult {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  std::vector<bool> is_test; // per input row
};

/// Seeded split; |test| = round(test_fraction * n). Both halves keep the
/// input order.
inline SplitResult split(const std::vector<LabeledExample> &examples, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    fail(ErrorKind::InvalidConfig, "test fraction must lie in (0,1)");
  const std::size_t n = examples.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 0x5b1d));
  rng.shuffle(std::span<std::size_t>(perm));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  SplitResult r;
  r.is_test.assign(n, false);
  for (std::size_t k = 0; k < n_test; ++k) r.is_test[perm[k]] = true;
  for (std::size_t i = 0; i < n; ++i) (r.is_test[i] ? r.test : r.train).push_back(examples[i]);
  return r;
}

inline std::vector<std::string> to_csv_fields(const LabeledExample &e) {
  std::vector<std::string> fields;
  fields.reserve(27);
  fields.push_back(e.branch_id);
  for (auto &f : feature_fields(e.raw)) fields.push_back(std::move(f));
  fields.push_back(csv::format_fixed(e.label, 6));
  fields.push_back(std::to_string(e.sample_count));
  fields.push_back(csv::format_fixed(e.heuristic_prob, 6));
  return fields;
}

enum class SplitMark : std::uint8_t { Train, Test };

/// Examples plus the optional held-out marker column written by training.
struct Dataset {
  std::vector<LabeledExample> examples;
  std::vector<SplitMark> split; // empty when the file has no split column
};

inline std::string format_csv(const std::vector<LabeledExample> &examples, const std::vector<SplitMark> *split = nullptr) {
  auto header = csv_columns();
  if (split) header.emplace_back("split");
  std::string out = csv::format_row(header);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto fields = to_csv_fields(examples[i]);
    if (split) fields.emplace_back((*split)[i] == SplitMark::Test ? "test" : "train");
    out += csv::format_row(fields);
  }
  return out;
}

inline void write_csv(const std::vector<LabeledExample> &examples, const std::filesystem::path &path,
                      const std::vector<SplitMark> *split = nullptr) {
  write_text_file(path, format_csv(examples, split));
}

inline Dataset parse_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) fail(ErrorKind::MalformedRow, "line 1: missing header");
  const auto &cols = csv_columns();
  const auto &header = rows[0].fields;
  const bool has_split = header.size() == cols.size() + 1 && header.back() == "split";
  if (!(header.size() == cols.size() || has_split) ||
      !std::equal(cols.begin(), cols.end(), header.begin()))
    fail(ErrorKind::MalformedRow, "line 1: unexpected header");

  Dataset ds;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto &row = rows[r];
    auto bad = [&](const std::string &why) {
      fail(ErrorKind::MalformedRow, "line " + std::to_string(row.line) + ": " + why);
    };
    if (row.fields.size() == 1 && row.fields[0].empty()) continue; // blank line
    if (row.fields.size() != header.size())
      bad("expected " + std::to_string(header.size()) + " columns, found " + std::to_string(row.fields.size()));
    const auto &f = row.fields;
    LabeledExample e;
    e.branch_id = f[0];
    e.raw.file_name = f[1];
    for (std::size_t s = 0; s < 7; ++s) {
      auto t = parse_token(f[2 + s]);
      if (!t) bad("bad token '" + f[2 + s] + "'");
      e.raw.expr.slots[s] = *t;
    }
    e.raw.taken_callee = f[9];
    e.raw.nottaken_callee = f[10];
    auto ta = parse_attrs(f[11]);
    auto na = parse_attrs(f[12]);
    if (!ta || !na) bad("bad attribute list");
    e.raw.taken_callee_attrs = *ta;
    e.raw.nottaken_callee_attrs = *na;
    bool shape_ok = false;
    for (int k = 0; k < kNumCfgShapes; ++k)
      if (f[13] == to_string(static_cast<CfgShape>(k))) {
        e.raw.cfg_shape = static_cast<CfgShape>(k);
        shape_ok = true;
      }
    if (!shape_ok) bad("bad cfg_shape '" + f[13] + "'");
    auto int_field = [&](std::size_t i, int &out) {
      if (!csv::parse_number(f[i], out) || out < 0) bad("bad integer in column " + csv_columns()[i]);
    };
    int_field(14, e.raw.loop_depth);
    int_field(15, e.raw.loop_num_blocks);
    int_field(16, e.raw.loop_num_exit_blocks);
    int_field(17, e.raw.loop_num_exit_edges);
    auto rel_field = [&](std::size_t i, EdgeLoopRelation &out) {
      for (int k = 0; k < kNumEdgeRelations; ++k)
        if (f[i] == to_string(static_cast<EdgeLoopRelation>(k))) {
          out = static_cast<EdgeLoopRelation>(k);
          return;
        }
      bad("bad edge relation '" + f[i] + "'");
    };
    rel_field(18, e.raw.taken_edge_rel);
    rel_field(19, e.raw.nottaken_edge_rel);
    int_field(20, e.raw.fn_num_instructions);
    int_field(21, e.raw.fn_num_blocks);
    int_field(22, e.raw.fn_num_edges);
    if (!csv::parse_number(f[23], e.label) || !(e.label >= 0.0 && e.label <= 1.0)) bad("bad label");
    if (!csv::parse_number(f[24], e.sample_count)) bad("bad sample_count");
    if (!csv::parse_number(f[25], e.heuristic_prob) || !(e.heuristic_prob >= 0.0 && e.heuristic_prob <= 1.0))
      bad("bad heuristic_prob");
    if (has_split) {
      if (f[26] == "test") ds.split.push_back(SplitMark::Test);
      else if (f[26] == "train") ds.split.push_back(SplitMark::Train);
      else bad("bad split marker '" + f[26] + "'");
    }
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

inline Dataset read_dataset(const std::filesystem::path &path) { return parse_csv(read_text_file(path)); }

inline std::vector<LabeledExample> read_csv(const std::filesystem::path &path) { return read_dataset(path).examples; }

// ---------------------------------------------------------------------------
// profile.csv: branch_id,taken,nottaken

inline std::string format_profile(const Profile &profile, const std::vector<std::string> &order) {
  std::string out = csv::format_row({"branch_id", "taken", "nottaken"});
  for (const auto &id : order) {
    const auto &c = profile.at(id);
    out += csv::format_row({id, std::to_string(c.taken), std::to_string(c.nottaken)});
  }
  return out;
}

inline Profile parse_profile(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows[0].fields != std::vector<std::string>{"branch_id", "taken", "nottaken"})
    fail(ErrorKind::MalformedRow, "line 1: expected header branch_id,taken,nottaken");
  Profile p;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto &f = rows[r].fields;
    if (f.size() == 1 && f[0].empty()) continue;
    BranchCounts c;
    if (f.size() != 3 || !csv::parse_number(f[1], c.taken) || !csv::parse_number(f[2], c.nottaken))
      fail(ErrorKind::MalformedRow, "line " + std::to_string(rows[r].line) + ": bad profile row");
    p[f[0]] = c;
  }
  return p;
}

inline Profile read_profile(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::IoError, "profile file '" + path.string() + "' does not exist");
  return parse_profile(read_text_file(path));
}

} // namespace bplab
