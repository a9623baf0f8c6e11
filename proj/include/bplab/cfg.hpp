#pragma once

// Dominators, post-dominators, natural loops, control dependence and the
// loop relation of branch edges.

#include <algorithm>
#include <optional>
#include <vector>

#include "bplab/ir.hpp"

namespace bplab {

/// Immediate-dominator tree over nodes 0..n-1. idom[root] == root.
struct DomTree {
  int root = 0;
  std::vector<int> idom;

  std::size_t size() const { return idom.size(); }
  int ipdom(int b) const { return idom[static_cast<std::size_t>(b)]; }

  /// Reflexive dominance: a dominates b.
  bool dominates(int a, int b) const {
    for (;;) {
      if (a == b) return true;
      if (b == root) return false;
      b = idom[static_cast<std::size_t>(b)];
    }
  }
  bool strictly_dominates(int a, int b) const { return a != b && dominates(a, b); }
};

/// Post-dominator tree. Node `exit()` is the virtual exit joining all
/// returns; blocks that cannot reach a return are tied to it through
/// `synthetic_exits`.
struct PostDomTree : DomTree {
  std::vector<BlockId> synthetic_exits;
  int exit() const { return root; }
};

namespace detail {

/// Cooper-Harvey-Kennedy iterative dominators. `order` is a reverse
/// post-order of the nodes reachable from `root` (root first).
inline std::vector<int> iterative_idom(std::size_t n, int root, const std::vector<int> &order,
                                       const std::vector<std::vector<int>> &preds) {
  std::vector<int> rpo_index(n, -1);
  for (std::size_t i = 0; i < order.size(); ++i) rpo_index[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  std::vector<int> idom(n, -1);
  idom[static_cast<std::size_t>(root)] = root;

  auto intersect = [&](int a, int b) {
    while (a != b) {
      while (rpo_index[static_cast<std::size_t>(a)] > rpo_index[static_cast<std::size_t>(b)])
        a = idom[static_cast<std::size_t>(a)];
      while (rpo_index[static_cast<std::size_t>(b)] > rpo_index[static_cast<std::size_t>(a)])
        b = idom[static_cast<std::size_t>(b)];
    }
    return a;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 1; i < order.size(); ++i) {
      const int b = order[i];
      int new_idom = -1;
      for (int p : preds[static_cast<std::size_t>(b)]) {
        if (idom[static_cast<std::size_t>(p)] == -1) continue;
        new_idom = new_idom == -1 ? p : intersect(p, new_idom);
      }
      if (new_idom != idom[static_cast<std::size_t>(b)]) {
        idom[static_cast<std::size_t>(b)] = new_idom;
        changed = true;
      }
    }
  }
  return idom;
}

inline std::vector<int> reverse_post_order(std::size_t n, int root, const std::vector<std::vector<int>> &succs) {
  std::vector<int> post;
  std::vector<char> seen(n, 0);
  std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
  seen[static_cast<std::size_t>(root)] = 1;
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    const auto &ss = succs[static_cast<std::size_t>(node)];
    if (next < ss.size()) {
      const int s = ss[next++];
      if (!seen[static_cast<std::size_t>(s)]) {
        seen[static_cast<std::size_t>(s)] = 1;
        stack.emplace_back(s, 0);
      }
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(post.begin(), post.end());
  return post;
}

} // namespace detail

inline DomTree compute_dominators(const IrFunction &f) {
  const std::size_t n = f.num_blocks();
  std::vector<std::vector<int>> preds(n);
  std::vector<int> order(n);
  for (std::size_t b = 0; b < n; ++b) {
    preds[b] = f.preds(static_cast<BlockId>(b));
    order[b] = static_cast<int>(b); // block ids already are a reverse post-order
  }
  return DomTree{0, detail::iterative_idom(n, 0, order, preds)};
}

/// Edge set of the reversed CFG used for post-dominance: block successors
/// plus edges to the virtual exit from every return block and from each
/// synthetic exit.
struct ExitAugmentedCfg {
  std::size_t num_nodes = 0; // blocks + virtual exit
  int exit = 0;
  std::vector<std::vector<int>> succs; // forward direction
  std::vector<BlockId> synthetic_exits;
};

/// Returns reach to the virtual exit. When a set of blocks cannot reach a
/// return (an infinite loop), the entry-most loop header among them (or the
/// entry-most such block if none is a header) gets a synthetic edge to the
/// exit, repeated until every block reaches it.
inline ExitAugmentedCfg augment_with_exit(const IrFunction &f) {
  const std::size_t n = f.num_blocks();
  ExitAugmentedCfg g;
  g.num_nodes = n + 1;
  g.exit = static_cast<int>(n);
  g.succs.resize(n + 1);
  for (std::size_t b = 0; b < n; ++b) {
    for (BlockId s : f.succs(static_cast<BlockId>(b))) g.succs[b].push_back(s);
    if (std::holds_alternative<Return>(f.block(static_cast<BlockId>(b)).term)) g.succs[b].push_back(g.exit);
  }

  // Loop headers: targets of edges u->h where h dominates u.
  const DomTree dom = compute_dominators(f);
  std::vector<char> is_header(n, 0);
  for (std::size_t u = 0; u < n; ++u)
    for (BlockId h : f.succs(static_cast<BlockId>(u)))
      if (dom.dominates(h, static_cast<int>(u))) is_header[static_cast<std::size_t>(h)] = 1;

  for (;;) {
    std::vector<std::vector<int>> rev(n + 1);
    for (std::size_t u = 0; u <= n; ++u)
      for (int v : g.succs[u]) rev[static_cast<std::size_t>(v)].push_back(static_cast<int>(u));
    std::vector<char> reach(n + 1, 0);
    std::vector<int> work{g.exit};
    reach[n] = 1;
    while (!work.empty()) {
      const int v = work.back();
      work.pop_back();
      for (int u : rev[static_cast<std::size_t>(v)])
        if (!reach[static_cast<std::size_t>(u)]) {
          reach[static_cast<std::size_t>(u)] = 1;
          work.push_back(u);
        }
    }
    std::optional<std::size_t> pick;
    for (std::size_t b = 0; b < n && !pick; ++b)
      if (!reach[b] && is_header[b]) pick = b;
    for (std::size_t b = 0; b < n && !pick; ++b)
      if (!reach[b]) pick = b;
    if (!pick) break;
    g.succs[*pick].push_back(g.exit);
    g.synthetic_exits.push_back(static_cast<BlockId>(*pick));
  }
  return g;
}

inline PostDomTree compute_postdominators(const IrFunction &f) {
  const ExitAugmentedCfg g = augment_with_exit(f);
  // Reverse graph: predecessors in the reversed graph are forward successors.
  std::vector<std::vector<int>> rsuccs(g.num_nodes);
  for (std::size_t u = 0; u < g.num_nodes; ++u)
    for (int v : g.succs[u]) rsuccs[static_cast<std::size_t>(v)].push_back(static_cast<int>(u));
  const auto order = detail::reverse_post_order(g.num_nodes, g.exit, rsuccs);
  PostDomTree t;
  t.root = g.exit;
  t.idom = detail::iterative_idom(g.num_nodes, g.exit, order, g.succs);
  t.synthetic_exits = g.synthetic_exits;
  return t;
}

struct Loop {
  BlockId header = 0;
  std::vector<BlockId> body; // sorted
  int depth = 1;
  std::vector<Edge> back_edges;
  std::vector<BlockId> exit_blocks; // sorted
  std::vector<Edge> exit_edges;
  std::optional<int> parent;

  bool contains(BlockId b) const { return std::binary_search(body.begin(), body.end(), b); }
};

/// Natural loops, ordered by header id (outer loops before the loops they
/// contain). `innermost[b]` is the innermost loop containing block b.
struct LoopForest {
  std::vector<Loop> loops;
  std::vector<std::optional<int>> innermost;

  const Loop *innermost_loop(BlockId b) const {
    const auto &l = innermost[static_cast<std::size_t>(b)];
    return l ? &loops[static_cast<std::size_t>(*l)] : nullptr;
  }
  int depth_of(BlockId b) const {
    const Loop *l = innermost_loop(b);
    return l ? l->depth : 0;
  }
  std::optional<int> loop_with_header(BlockId h) const {
    for (std::size_t i = 0; i < loops.size(); ++i)
      if (loops[i].header == h) return static_cast<int>(i);
    return std::nullopt;
  }
};

inline LoopForest find_natural_loops(const IrFunction &f, const DomTree &dom) {
  const std::size_t n = f.num_blocks();
  LoopForest forest;
  forest.innermost.assign(n, std::nullopt);

  for (std::size_t h = 0; h < n; ++h) {
    const BlockId header = static_cast<BlockId>(h);
    std::vector<Edge> back;
    for (BlockId u : f.preds(header))
      if (dom.dominates(header, u)) back.push_back({u, header});
    if (back.empty()) continue;
    std::sort(back.begin(), back.end());

    std::vector<char> in(n, 0);
    in[h] = 1;
    std::vector<BlockId> work;
    for (const Edge &e : back)
      if (!in[static_cast<std::size_t>(e.from)]) {
        in[static_cast<std::size_t>(e.from)] = 1;
        work.push_back(e.from);
      }
    while (!work.empty()) {
      const BlockId b = work.back();
      work.pop_back();
      for (BlockId p : f.preds(b))
        if (!in[static_cast<std::size_t>(p)]) {
          in[static_cast<std::size_t>(p)] = 1;
          work.push_back(p);
        }
    }

    Loop loop;
    loop.header = header;
    loop.back_edges = std::move(back);
    for (std::size_t b = 0; b < n; ++b)
      if (in[b]) loop.body.push_back(static_cast<BlockId>(b));
    for (BlockId b : loop.body)
      for (BlockId s : f.succs(b))
        if (!in[static_cast<std::size_t>(s)]) {
          loop.exit_edges.push_back({b, s});
          loop.exit_blocks.push_back(s);
        }
    std::sort(loop.exit_edges.begin(), loop.exit_edges.end());
    std::sort(loop.exit_blocks.begin(), loop.exit_blocks.end());
    loop.exit_blocks.erase(std::unique(loop.exit_blocks.begin(), loop.exit_blocks.end()), loop.exit_blocks.end());
    forest.loops.push_back(std::move(loop));
  }

  // Parent = smallest other loop whose body contains this header.
  for (std::size_t i = 0; i < forest.loops.size(); ++i) {
    std::optional<int> best;
    for (std::size_t j = 0; j < forest.loops.size(); ++j) {
      if (i == j || !forest.loops[j].contains(forest.loops[i].header)) continue;
      if (!best || forest.loops[j].body.size() < forest.loops[static_cast<std::size_t>(*best)].body.size())
        best = static_cast<int>(j);
    }
    forest.loops[i].parent = best;
  }
  // Headers ascend in reverse post-order, so parents come first.
  for (auto &l : forest.loops)
    l.depth = l.parent ? forest.loops[static_cast<std::size_t>(*l.parent)].depth + 1 : 1;

  for (std::size_t i = 0; i < forest.loops.size(); ++i)
    for (BlockId b : forest.loops[i].body) {
      auto &cur = forest.innermost[static_cast<std::size_t>(b)];
      if (!cur || forest.loops[static_cast<std::size_t>(*cur)].depth < forest.loops[i].depth)
        cur = static_cast<int>(i);
    }
  return forest;
}

/// Blocks B that post-dominate edge.to but not edge.from: the blocks that
/// execute only if the edge is taken. Sorted ascending.
inline std::vector<BlockId> control_dependent_blocks(const IrFunction &f, const PostDomTree &pdt, Edge edge) {
  std::vector<BlockId> out;
  int b = edge.to;
  while (b != pdt.exit() && !pdt.dominates(b, edge.from)) {
    out.push_back(b);
    b = pdt.ipdom(b);
  }
  (void)f;
  std::sort(out.begin(), out.end());
  return out;
}

enum class EdgeLoopRelation : std::uint8_t { ExitEdge, BackEdge, EntersInnerLoop, SameLoop };
inline constexpr int kNumEdgeRelations = 4;

inline const char *to_string(EdgeLoopRelation r) {
  switch (r) {
  case EdgeLoopRelation::ExitEdge: return "ExitEdge";
  case EdgeLoopRelation::BackEdge: return "BackEdge";
  case EdgeLoopRelation::EntersInnerLoop: return "EntersInnerLoop";
  case EdgeLoopRelation::SameLoop: return "SameLoop";
  }
  return "?";
}

/// Priority: exit of any loop, then back edge, then entering a loop nested
/// in the source's loop, otherwise same loop (also for branches outside
/// every loop).
inline EdgeLoopRelation classify_edge(const IrFunction &f, const LoopForest &loops, Edge edge) {
  (void)f;
  for (const auto &l : loops.loops)
    if (std::binary_search(l.exit_edges.begin(), l.exit_edges.end(), edge)) return EdgeLoopRelation::ExitEdge;
  for (const auto &l : loops.loops)
    if (std::binary_search(l.back_edges.begin(), l.back_edges.end(), edge)) return EdgeLoopRelation::BackEdge;
  if (auto target = loops.loop_with_header(edge.to)) {
    const auto src = loops.innermost[static_cast<std::size_t>(edge.from)];
    if (!src) return EdgeLoopRelation::EntersInnerLoop;
    for (auto p = loops.loops[static_cast<std::size_t>(*target)].parent; p;
         p = loops.loops[static_cast<std::size_t>(*p)].parent)
      if (*p == *src) return EdgeLoopRelation::EntersInnerLoop;
  }
  return EdgeLoopRelation::SameLoop;
}

/// Everything the heuristics and feature extraction need about a function.
struct CfgAnalyses {
  DomTree dom;
  PostDomTree pdom;
  LoopForest loops;
};

inline CfgAnalyses analyze(const IrFunction &f) {
  CfgAnalyses a;
  a.dom = compute_dominators(f);
  a.pdom = compute_postdominators(f);
  a.loops = find_natural_loops(f, a.dom);
  return a;
}

} // namespace bplab
