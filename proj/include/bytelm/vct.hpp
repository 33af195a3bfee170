#pragma once

#include <iosfwd>
#include <memory>

#include "bytelm/bitset.hpp"
#include "bytelm/pretokenizer.hpp"
#include "bytelm/tokenizer.hpp"
#include "bytelm/validity.hpp"

namespace bytelm {

class DeadTreeError : public std::runtime_error {
 public:
  DeadTreeError(uint64_t offset)
      : std::runtime_error("no valid tokenization covers the byte at offset " +
                           std::to_string(offset)),
        offset(offset) {}
  uint64_t offset;
};

// Valid Covering Tree over a byte stream: the emitted trunk of determined
// tokens plus a bounded branching suffix of candidate coverings of the
// un-tokenized tail, maintained incrementally byte by byte.
class Vct {
 public:
  Vct(const Tokenizer& tok, ValidityCache& validity);
  Vct(const Vct&);
  Vct& operator=(const Vct&) = delete;

  // Consumes the next stream byte; returns tokens newly determined and
  // appended to the trunk (possibly none).
  TokenSequence feed_byte(uint8_t byte);

  // Consumes a special token at the current position (prompt segment API):
  // the tree terminates, the forced tokenization of the remaining bytes is
  // emitted followed by the special id, and a fresh tree starts.
  TokenSequence feed_special(TokenId special);

  // Resolves end-of-stream: emits the unique forced tokenization of any
  // remaining bytes. The tree cannot be fed afterwards.
  TokenSequence finish();

  struct Node {
    TokenId token = -1;
    Node* parent = nullptr;
    uint64_t end = 0;
    uint32_t hypo_mask = 0;  // alive under these splitter hypothesis indices
    bool from_added = false;
    std::vector<std::unique_ptr<Node>> children;
  };

  // A bundle of covering leaves: every token in `mask` minimally covers the
  // stream from `node` (ends at or beyond the frontier). `mask` bits are
  // token ids; per-token overhang is bytes(t) beyond the frontier.
  struct LeafGroup {
    const Node* node;
    Bitset mask;
  };
  // Enumerates the minimal valid coverings of the consumed byte stream,
  // grouped by shared parent node. When the trunk itself ends exactly at
  // the frontier it is the unique minimal covering; that case is reported
  // by trunk_covers_exactly(), not by a group.
  std::vector<LeafGroup> leaf_groups() const;
  bool trunk_covers_exactly() const { return root_->end == splitter_.consumed(); }

  // Alive nodes ending exactly at the frontier (exact-boundary paths), the
  // root included when the trunk covers exactly.
  std::vector<const Node*> frontier_nodes() const;
  // Valid continuation tokens from an exact-boundary node: every token that
  // would be a covering leaf once its first byte arrives.
  Bitset frontier_successors(const Node* node) const;

  // Token path from the trunk root to `node` (excludes emitted trunk).
  TokenSequence branch_path(const Node* node) const;
  // Full LM context for scoring continuations of `node`.
  TokenSequence context_of(const Node* node) const;

  // Collapses the tree onto the covering (node, token): the branch path and
  // token join the trunk, the token's overhang becomes consumed stream
  // bytes, and branching resumes after it.
  void commit_leaf(const Node* node, TokenId token);
  // Spec-level convenience: commits the unique leaf group containing
  // `token`; throws if the token is not a current covering option.
  void commit_token(TokenId token);

  struct BranchStats {
    size_t non_trunk_edges = 0;
    size_t live_hypotheses = 0;
    size_t deepest_branch = 0;
  };
  BranchStats branch_stats() const;

  const TokenSequence& trunk() const { return trunk_; }
  uint64_t bytes_consumed() const { return splitter_.consumed(); }
  const Node* root() const { return root_.get(); }
  const Tokenizer& tokenizer() const { return tok_; }
  ValidityCache& validity() const { return validity_; }

  // Indented debug listing of the live branch structure.
  void dump(std::ostream& os) const;

 private:
  struct LeafFilterResult {
    bool ok = false;
    uint32_t hypo_mask = 0;
  };
  friend class ByteSampler;

  uint32_t live_hypo_mask() const;
  void rebuild_alive_masks(bool at_eos = false);
  void prune_nonviable(bool at_eos);
  void materialize_new_nodes();
  void emit_determined(bool at_eos);
  bool node_has_extension(const Node& n) const;
  std::string_view tail_from(uint64_t off) const;
  LeafFilterResult filter_leaf(const Node& n, TokenId t) const;
  void collect_nodes(Node* n, std::vector<Node*>& out) const;
  void gc_tail();
  TokenSequence force_resolve_and_emit();
  void reset_after(TokenId root_token, bool root_is_added);

  const Tokenizer& tok_;
  ValidityCache& validity_;
  StreamSplitter splitter_;
  TokenSequence trunk_;
  std::unique_ptr<Node> root_;
  std::string tail_;        // retained stream bytes
  uint64_t tail_base_ = 0;  // absolute offset of tail_[0]
  bool finished_ = false;
};

}  // namespace bytelm
