#include "bytelm/vct.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace bytelm {

namespace {

constexpr uint32_t kAllHypos = ~0u;

bool split_strictly_inside(const SplitHypo& h, uint64_t s, uint64_t e) {
  for (auto it = h.splits.rbegin(); it != h.splits.rend(); ++it) {
    if (*it <= s) break;
    if (*it < e) return true;
  }
  return false;
}

bool boundary_at(const SplitHypo& h, uint64_t off) {
  for (auto it = h.splits.rbegin(); it != h.splits.rend(); ++it) {
    if (*it == off) return true;
    if (*it < off) break;
  }
  for (const AddedSpan& a : h.added) {
    if (a.start == off || a.end == off) return true;
  }
  if (h.added_active >= 0 && h.added_start == off) return true;
  return false;
}

// Does any committed span or active candidate of h overlap (s, e)?
bool added_overlaps(const SplitHypo& h, uint64_t s, uint64_t e, uint64_t frontier) {
  for (const AddedSpan& a : h.added) {
    if (a.start < e && a.end > s) return true;
  }
  if (h.added_active >= 0) {
    // the candidate tentatively reserves [start, frontier)
    if (h.added_start < e && frontier > s) {
      if (std::max<uint64_t>(h.added_start, s) < std::min<uint64_t>(frontier, e)) return true;
    }
  }
  return false;
}

// Start of the pretoken containing offset `pos` under h, clamped to `floor`.
uint64_t pretoken_start(const SplitHypo& h, uint64_t pos, uint64_t floor) {
  uint64_t best = floor;
  for (auto it = h.splits.rbegin(); it != h.splits.rend(); ++it) {
    if (*it <= pos) {
      best = std::max(best, *it);
      break;
    }
  }
  for (const AddedSpan& a : h.added) {
    if (a.end <= pos) best = std::max(best, a.end);
  }
  return best;
}

}  // namespace

Vct::Vct(const Tokenizer& tok, ValidityCache& validity)
    : tok_(tok),
      validity_(validity),
      splitter_(tok.rules(), tok.added_patterns()),
      root_(std::make_unique<Node>()) {
  root_->hypo_mask = kAllHypos;
}

namespace {
std::unique_ptr<Vct::Node> clone_node(const Vct::Node& n, Vct::Node* parent) {
  auto c = std::make_unique<Vct::Node>();
  c->token = n.token;
  c->parent = parent;
  c->end = n.end;
  c->hypo_mask = n.hypo_mask;
  c->from_added = n.from_added;
  for (const auto& ch : n.children) c->children.push_back(clone_node(*ch, c.get()));
  return c;
}
}  // namespace

Vct::Vct(const Vct& o)
    : tok_(o.tok_),
      validity_(o.validity_),
      splitter_(o.splitter_),
      trunk_(o.trunk_),
      root_(clone_node(*o.root_, nullptr)),
      tail_(o.tail_),
      tail_base_(o.tail_base_),
      finished_(o.finished_) {}

std::string_view Vct::tail_from(uint64_t off) const {
  if (off < tail_base_) throw std::logic_error("vct: offset fell out of the retained window");
  size_t rel = static_cast<size_t>(off - tail_base_);
  if (rel > tail_.size()) return {};
  return std::string_view(tail_).substr(rel);
}

void Vct::collect_nodes(Node* n, std::vector<Node*>& out) const {
  for (auto& c : n->children) {
    out.push_back(c.get());
    collect_nodes(c.get(), out);
  }
}

uint32_t Vct::live_hypo_mask() const {
  size_t n = splitter_.hypotheses().size();
  if (n >= 32) throw std::logic_error("vct: hypothesis count exceeds the supported bound");
  return static_cast<uint32_t>((1u << n) - 1);
}

// Recomputes every node's hypothesis mask from scratch against the current
// splitter state: span, junction, added-span, and pretoken-completion
// conditions. Subtrees with an empty mask, and branches that can neither
// reach the frontier nor extend past it, are pruned.
void Vct::rebuild_alive_masks(bool at_eos) {
  const auto& hypos = splitter_.hypotheses();
  const uint64_t frontier = splitter_.consumed();
  root_->hypo_mask = live_hypo_mask();

  struct Walk {
    Vct& v;
    const std::vector<SplitHypo>& hypos;
    uint64_t frontier;
    bool at_eos;

    void go(Node& n) {
      for (auto& cp : n.children) {
        Node& c = *cp;
        uint64_t s = n.end, e = c.end;
        uint32_t mask = 0;
        for (size_t hi = 0; hi < hypos.size(); ++hi) {
          if (!(n.hypo_mask & (1u << hi))) continue;
          const SplitHypo& h = hypos[hi];
          if (c.from_added) {
            bool found = false;
            for (const AddedSpan& a : h.added) {
              if (a.start == s && a.end == e &&
                  v.tok_.added_pattern_id(a.pattern) == c.token) {
                found = true;
                break;
              }
            }
            if (found) mask |= 1u << hi;
            continue;
          }
          if (added_overlaps(h, s, e, frontier)) continue;
          if (split_strictly_inside(h, s, e)) continue;
          if (v.tok_.is_special(c.token)) continue;
          // Splits inside an incomplete UTF-8 scalar are recorded only when
          // the scalar resolves; junctions in that window are undecided, so
          // either interpretation keeps the child alive until then.
          const bool junction_pending =
              !h.pending_bytes.empty() && s >= frontier - h.pending_bytes.size();
          const bool at_boundary = (n.parent == nullptr && n.token < 0) || n.from_added ||
                                   (n.token >= 0 && v.tok_.is_special(n.token)) ||
                                   boundary_at(h, s);
          const bool boundary_ok =
              v.tok_.is_byte_reachable(c.token) || v.tok_.ignore_merges();
          const bool pair_ok =
              n.token >= 0 && !v.tok_.is_special(n.token) && !n.from_added &&
              v.validity_.bpe_pair_valid(n.token, c.token);
          if (junction_pending) {
            if (!boundary_ok && !pair_ok) continue;
          } else if (at_boundary) {
            if (!boundary_ok) continue;
          } else {
            if (!pair_ok) continue;
          }
          // A completed pretoken under ignore_merges must be the vocabulary
          // hit when one exists (the stream end also closes the pretoken).
          if (v.tok_.ignore_merges() && (boundary_at(h, e) || (at_eos && e == frontier))) {
            uint64_t ps = pretoken_start(h, s, v.tail_base_);
            if (e - ps <= v.tok_.max_token_len() && ps >= v.tail_base_) {
              std::string_view piece = v.tail_from(ps).substr(0, e - ps);
              auto hit = v.tok_.token_of_bytes(piece);
              if (hit && !v.tok_.is_special(*hit) && !(ps == s && c.token == *hit)) continue;
            }
          }
          mask |= 1u << hi;
        }
        c.hypo_mask = mask;
        if (mask) go(c);
      }
      // prune dead subtrees
      std::erase_if(n.children, [](const std::unique_ptr<Node>& c) { return c->hypo_mask == 0; });
    }
  };
  Walk{*this, hypos, frontier, at_eos}.go(*root_);
  prune_nonviable(at_eos);
}

// Drops branches that can no longer participate in any covering: a node
// survives if a descendant reaches the frontier, or some token could still
// extend past the frontier from it (always true at the frontier itself).
void Vct::prune_nonviable(bool at_eos) {
  const uint64_t frontier = splitter_.consumed();
  struct Walk {
    Vct& v;
    uint64_t frontier;
    bool at_eos;
    bool go(Node& n) {
      std::erase_if(n.children, [&](const std::unique_ptr<Node>& c) { return !go(*c); });
      if (!n.children.empty()) return true;
      if (n.end >= frontier) return true;
      if (!at_eos && v.node_has_extension(n)) return true;
      return false;
    }
  };
  Walk{*this, frontier, at_eos}.go(*root_);
}

// Creates nodes for tokens whose bytes end exactly at the frontier, and for
// added-token spans that just completed.
void Vct::materialize_new_nodes() {
  const auto& hypos = splitter_.hypotheses();
  const uint64_t frontier = splitter_.consumed();
  std::vector<Node*> nodes;
  nodes.push_back(root_.get());
  collect_nodes(root_.get(), nodes);

  for (Node* n : nodes) {
    if (n->hypo_mask == 0 || n->end >= frontier) continue;
    std::string_view tail = tail_from(n->end);
    tail = tail.substr(0, frontier - n->end);

    auto have_child = [&](TokenId t, bool added) {
      for (auto& c : n->children) {
        if (c->token == t && c->end == frontier && c->from_added == added) return true;
      }
      return false;
    };

    // Exact-byte token ending at the frontier.
    if (tail.size() <= tok_.max_token_len()) {
      auto t = tok_.token_of_bytes(tail);
      if (t && !tok_.is_special(*t) && !have_child(*t, false)) {
        auto c = std::make_unique<Node>();
        c->token = *t;
        c->parent = n;
        c->end = frontier;
        n->children.push_back(std::move(c));
      }
    }
    // Added spans completing at the frontier that start at this node's end.
    for (const SplitHypo& h : hypos) {
      for (const AddedSpan& a : h.added) {
        if (a.start == n->end && a.end == frontier) {
          TokenId id = tok_.added_pattern_id(a.pattern);
          if (!have_child(id, true)) {
            auto c = std::make_unique<Node>();
            c->token = id;
            c->parent = n;
            c->end = frontier;
            c->from_added = true;
            n->children.push_back(std::move(c));
          }
        }
      }
    }
  }
}

// Any token (or pending added match) that could extend past the frontier
// from node `n` keeps it branching; emission must wait.
bool Vct::node_has_extension(const Node& n) const {
  const auto& hypos = splitter_.hypotheses();
  const uint64_t frontier = splitter_.consumed();
  for (size_t hi = 0; hi < hypos.size(); ++hi) {
    if (!(n.hypo_mask & (1u << hi))) continue;
    const SplitHypo& h = hypos[hi];
    if (h.added_active >= 0 && h.added_start >= n.end) return true;
    if (split_strictly_inside(h, n.end, frontier + 1)) continue;
    std::string_view tail = tail_from(n.end);
    // any token strictly longer than the visible tail with tail as prefix?
    const auto& sorted = tok_.sorted_tokens();
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), tail,
                               [&](TokenId id, std::string_view k) {
                                 return std::string_view(tok_.token_bytes(id)) < k;
                               });
    for (auto it = lo; it != sorted.end(); ++it) {
      const std::string& tb = tok_.token_bytes(*it);
      if (tb.size() < tail.size() || tb.compare(0, tail.size(), tail) != 0) break;
      if (tb.size() > tail.size()) return true;
    }
  }
  return false;
}

void Vct::emit_determined(bool at_eos) {
  for (;;) {
    if (!at_eos && node_has_extension(*root_)) return;
    if (root_->children.size() != 1) return;
    Node* c = root_->children.front().get();
    // The single child must stand under every live hypothesis; otherwise
    // some lineage still expects a different token here.
    if (c->hypo_mask != live_hypo_mask()) return;
    trunk_.push_back(c->token);
    auto keep = std::move(root_->children.front());
    root_ = std::move(keep);
    root_->parent = nullptr;
    gc_tail();
  }
}

void Vct::gc_tail() {
  uint64_t keep_from = root_->end;
  if (keep_from > tok_.max_token_len() + 8) {
    keep_from -= tok_.max_token_len() + 8;
  } else {
    keep_from = 0;
  }
  if (keep_from > tail_base_) {
    tail_.erase(0, static_cast<size_t>(keep_from - tail_base_));
    tail_base_ = keep_from;
    splitter_.gc(keep_from);
  }
}

TokenSequence Vct::feed_byte(uint8_t byte) {
  if (finished_) throw std::logic_error("vct: stream already finished");
  const size_t trunk_before = trunk_.size();
  tail_.push_back(static_cast<char>(byte));
  splitter_.advance(byte);
  // New exact-frontier tokens must exist before viability pruning runs:
  // a node may be alive solely through the token this byte completes.
  materialize_new_nodes();
  rebuild_alive_masks();
  emit_determined(/*at_eos=*/false);
  if (root_->children.empty() && !node_has_extension(*root_)) {
    throw DeadTreeError(splitter_.consumed() - 1);
  }
  return TokenSequence(trunk_.begin() + static_cast<std::ptrdiff_t>(trunk_before), trunk_.end());
}

// Filters one leaf candidate: token `t` from node `n` must survive the
// overhang simulation under some live hypothesis. Returns the accepting
// hypothesis set.
Vct::LeafFilterResult Vct::filter_leaf(const Node& n, TokenId t) const {
  LeafFilterResult res;
  const auto& hypos = splitter_.hypotheses();
  const uint64_t frontier = splitter_.consumed();
  const std::string& tb = tok_.token_bytes(t);
  const uint64_t token_end = n.end + tb.size();
  std::string_view tail = tail_from(n.end);
  if (tb.size() < tail.size()) return res;
  if (tb.compare(0, tail.size(), tail) != 0) return res;
  std::string_view overhang = std::string_view(tb).substr(tail.size());

  for (size_t hi = 0; hi < hypos.size(); ++hi) {
    if (!(n.hypo_mask & (1u << hi))) continue;
    const SplitHypo& h = hypos[hi];
    // Simulate the overhang bytes and end-of-text from this hypothesis.
    StreamSplitter sim(tok_.rules(), tok_.added_patterns(), {h}, frontier,
                       splitter_.added_frontier());
    bool dead = false;
    for (char b : overhang) {
      try {
        sim.advance(static_cast<uint8_t>(b));
      } catch (const std::runtime_error&) {
        dead = true;
        break;
      }
    }
    if (dead) continue;
    auto survivor = sim.peek_resolve_at_end();
    if (!survivor) continue;
    const SplitHypo& sv = *survivor;

    // Added-token leaf: accepted iff the span is exactly the token.
    if (tok_.is_added(t)) {
      bool exact = false;
      for (const AddedSpan& a : sv.added) {
        if (a.start == n.end && a.end == token_end && tok_.added_pattern_id(a.pattern) == t) {
          exact = true;
        }
      }
      if (exact) res.hypo_mask |= 1u << hi;
      continue;
    }

    if (added_overlaps(sv, n.end, token_end, token_end)) continue;
    if (split_strictly_inside(sv, n.end, token_end)) continue;
    const bool at_boundary = (n.parent == nullptr && n.token < 0) || n.from_added ||
                             (n.token >= 0 && tok_.is_special(n.token)) ||
                             boundary_at(sv, n.end);
    if (at_boundary) {
      if (!validity_.standalone_mask().test(t)) continue;
    } else {
      if (n.token < 0 || !validity_.bpe_pair_valid(n.token, t)) continue;
      // Final pretoken completion under ignore_merges: the chain is
      // multi-token, so a whole-pretoken vocabulary hit invalidates it.
      if (tok_.ignore_merges()) {
        uint64_t ps = pretoken_start(sv, n.end, tail_base_);
        if (token_end - ps <= tok_.max_token_len() && ps >= tail_base_) {
          std::string piece(tail_from(ps).substr(0, frontier - ps));
          piece.append(overhang);
          auto hit = tok_.token_of_bytes(piece);
          if (hit && !tok_.is_special(*hit)) continue;
        }
      }
    }
    res.hypo_mask |= 1u << hi;
  }
  res.ok = res.hypo_mask != 0;
  return res;
}

std::vector<Vct::LeafGroup> Vct::leaf_groups() const {
  std::vector<LeafGroup> out;
  const uint64_t frontier = splitter_.consumed();
  if (frontier == 0) {
    // Fresh tree: every standalone token is a single-token covering.
    out.push_back({root_.get(), validity_.standalone_mask()});
    return out;
  }
  std::vector<Node*> nodes;
  nodes.push_back(root_.get());
  collect_nodes(root_.get(), nodes);
  for (Node* n : nodes) {
    if (n->hypo_mask == 0 || n->end >= frontier) continue;
    std::string_view tail = tail_from(n->end);
    Bitset mask(tok_.vocab_size());
    bool any = false;
    // Candidate tokens: every vocabulary entry with the visible tail as a
    // byte prefix (the sorted range), plus nothing else.
    const auto& sorted = tok_.sorted_tokens();
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), tail,
                               [&](TokenId id, std::string_view k) {
                                 return std::string_view(tok_.token_bytes(id)) < k;
                               });
    for (auto it = lo; it != sorted.end(); ++it) {
      const std::string& tb = tok_.token_bytes(*it);
      if (tb.size() < tail.size() || tb.compare(0, tail.size(), tail) != 0) break;
      if (filter_leaf(*n, *it).ok) {
        mask.set(*it);
        any = true;
      }
    }
    if (any) out.push_back({n, std::move(mask)});
  }
  return out;
}

std::vector<const Vct::Node*> Vct::frontier_nodes() const {
  std::vector<const Node*> out;
  const uint64_t frontier = splitter_.consumed();
  if (root_->end == frontier) out.push_back(root_.get());
  std::vector<Node*> nodes;
  collect_nodes(root_.get(), nodes);
  for (Node* n : nodes) {
    if (n->hypo_mask != 0 && n->end == frontier) out.push_back(n);
  }
  return out;
}

Bitset Vct::frontier_successors(const Node* node) const {
  Bitset out(tok_.vocab_size());
  // Cheap pre-filter: a continuation must clear either the boundary-start
  // or the same-pretoken junction test before the byte-level simulation.
  Bitset pre = validity_.standalone_mask();
  if (node->token >= 0 && !tok_.is_special(node->token)) {
    pre |= validity_.bpe_successors(node->token);
  }
  pre.for_each_set([&](size_t t) {
    if (filter_leaf(*node, static_cast<TokenId>(t)).ok) out.set(t);
  });
  return out;
}

TokenSequence Vct::branch_path(const Node* node) const {
  TokenSequence path;
  for (const Node* n = node; n != nullptr && n != root_.get(); n = n->parent) {
    path.push_back(n->token);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

TokenSequence Vct::context_of(const Node* node) const {
  TokenSequence ctx = trunk_;
  TokenSequence branch = branch_path(node);
  ctx.insert(ctx.end(), branch.begin(), branch.end());
  return ctx;
}

void Vct::commit_leaf(const Node* node, TokenId token) {
  LeafFilterResult f = filter_leaf(*node, token);
  if (!f.ok) throw std::invalid_argument("commit: token is not a covering option here");
  TokenSequence path = branch_path(node);
  trunk_.insert(trunk_.end(), path.begin(), path.end());
  trunk_.push_back(token);

  // Hypotheses that admit this leaf survive; the overhang then streams in.
  std::vector<size_t> keep;
  for (size_t hi = 0; hi < splitter_.hypotheses().size(); ++hi) {
    if (f.hypo_mask & (1u << hi)) keep.push_back(hi);
  }
  splitter_.retain(keep);
  const std::string& tb = tok_.token_bytes(token);
  std::string_view tail = tail_from(node->end);
  std::string overhang(std::string_view(tb).substr(tail.size()));

  reset_after(token, tok_.is_added(token));
  for (char b : overhang) {
    tail_.push_back(b);
    splitter_.advance(static_cast<uint8_t>(b));
  }
  root_->end = splitter_.consumed();
  materialize_new_nodes();
  rebuild_alive_masks();
  emit_determined(/*at_eos=*/false);
}

void Vct::commit_token(TokenId token) {
  if (trunk_covers_exactly() && !trunk_.empty() && trunk_.back() == token) {
    return;  // the trunk already is the chosen covering
  }
  auto groups = leaf_groups();
  for (const LeafGroup& g : groups) {
    if (g.mask.test(token)) {
      commit_leaf(g.node, token);
      return;
    }
  }
  throw std::invalid_argument("commit: token is not among the current covering leaves");
}

void Vct::reset_after(TokenId root_token, bool root_is_added) {
  auto fresh = std::make_unique<Node>();
  fresh->token = root_token;
  fresh->end = splitter_.consumed();
  fresh->hypo_mask = kAllHypos;
  fresh->from_added = root_is_added;
  root_ = std::move(fresh);
  gc_tail();
}

// Resolves the stream at its current end: the surviving tokenization of the
// pending bytes is unique; emit it.
TokenSequence Vct::force_resolve_and_emit() {
  const size_t trunk_before = trunk_.size();
  splitter_.resolve_at_end();
  rebuild_alive_masks(/*at_eos=*/true);
  emit_determined(/*at_eos=*/true);
  const uint64_t frontier = splitter_.consumed();
  if (root_->end != frontier) throw DeadTreeError(frontier);
  return TokenSequence(trunk_.begin() + static_cast<std::ptrdiff_t>(trunk_before), trunk_.end());
}

TokenSequence Vct::feed_special(TokenId special) {
  if (finished_) throw std::logic_error("vct: stream already finished");
  if (!tok_.is_special(special)) {
    throw std::invalid_argument("feed_special: token is not a registered special");
  }
  TokenSequence emitted = force_resolve_and_emit();
  trunk_.push_back(special);
  emitted.push_back(special);
  // The tree terminates and restarts after the special token.
  splitter_ = StreamSplitter(tok_.rules(), tok_.added_patterns());
  tail_.clear();
  tail_base_ = 0;
  auto fresh = std::make_unique<Node>();
  fresh->token = special;
  fresh->end = 0;
  fresh->hypo_mask = kAllHypos;
  root_ = std::move(fresh);
  return emitted;
}

TokenSequence Vct::finish() {
  if (finished_) throw std::logic_error("vct: stream already finished");
  TokenSequence emitted = force_resolve_and_emit();
  finished_ = true;
  return emitted;
}

Vct::BranchStats Vct::branch_stats() const {
  BranchStats st;
  st.live_hypotheses = splitter_.hypotheses().size();
  std::vector<Node*> nodes;
  collect_nodes(root_.get(), nodes);
  st.non_trunk_edges = nodes.size();
  for (Node* n : nodes) {
    size_t depth = 0;
    for (const Node* p = n; p != root_.get(); p = p->parent) ++depth;
    st.deepest_branch = std::max(st.deepest_branch, depth);
  }
  return st;
}

namespace {
void escape_bytes(std::ostream& os, std::string_view bytes) {
  for (unsigned char c : bytes) {
    if (c >= 0x20 && c < 0x7F) {
      os << static_cast<char>(c);
    } else if (c == '\n') {
      os << "\\n";
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\x%02X", c);
      os << buf;
    }
  }
}

}  // namespace

void Vct::dump(std::ostream& os) const {
  os << "trunk:";
  for (TokenId t : trunk_) {
    os << " " << t << "[";
    escape_bytes(os, tok_.token_bytes(t));
    os << "]";
  }
  os << "\n";
  struct Walk {
    const Vct& v;
    std::ostream& os;
    void go(const Node& n, int depth) {
      for (auto& c : n.children) {
        os << std::string(static_cast<size_t>(depth) * 2, ' ') << c->token << " [";
        escape_bytes(os, v.tok_.token_bytes(c->token));
        os << "] end=" << c->end << " hypos=" << c->hypo_mask
           << (c->from_added ? " added" : "") << "\n";
        go(*c, depth + 1);
      }
    }
  };
  os << "branches from offset " << root_->end << " (frontier " << splitter_.consumed() << "):\n";
  Walk{*this, os}.go(*root_, 1);
}

}  // namespace bytelm
