#include "polyfb/eval_tree.hpp"

#include <algorithm>
#include <deque>

namespace polyfb {

std::optional<std::size_t> EvalTree::locate(const MultiIndex& alpha) const {
  auto it = locator_.find(alpha);
  if (it == locator_.end()) return std::nullopt;
  return it->second;
}

std::size_t EvalTree::require(const MultiIndex& alpha) const {
  auto it = locator_.find(alpha);
  if (it == locator_.end()) {
    throw ConnectivityError("multi-index " + to_string(alpha) + " is not a node of the evaluation tree");
  }
  return it->second;
}

EvalTree build_eval_tree(const BasisSet& set) {
  EvalTree tree;
  tree.dim_ = set.dim();
  tree.nodes_ = set.indices();
  const MultiIndex origin = MultiIndex::zero(set.dim());
  if (!set.contains(origin)) tree.nodes_.insert(tree.nodes_.begin(), origin);

  const std::size_t n = tree.nodes_.size();
  tree.locator_.reserve(n);
  for (std::size_t k = 0; k < n; ++k) tree.locator_.emplace(tree.nodes_[k], k);
  tree.root_ = tree.locator_.at(origin);
  tree.parent_.assign(n, EvalTree::kNoParent);
  tree.coord_.assign(n, -1);
  tree.order_.clear();
  tree.order_.reserve(n);

  std::vector<bool> visited(n, false);
  std::deque<std::size_t> queue{tree.root_};
  visited[tree.root_] = true;
  while (!queue.empty()) {
    const std::size_t pos = queue.front();
    queue.pop_front();
    tree.order_.push_back(pos);
    for (int j = 0; j < tree.dim_; ++j) {
      auto child = tree.locate(tree.nodes_[pos].incremented(j));
      if (!child || visited[*child]) continue;
      visited[*child] = true;
      tree.parent_[*child] = pos;
      tree.coord_[*child] = j;
      queue.push_back(*child);
    }
  }

  if (tree.order_.size() != n) {
    // Report the lowest unreachable index in graded order.
    std::optional<std::size_t> worst;
    for (std::size_t k = 0; k < n; ++k) {
      if (visited[k]) continue;
      if (!worst || graded_lex_less(tree.nodes_[k], tree.nodes_[*worst])) worst = k;
    }
    const MultiIndex& bad = tree.nodes_[*worst];
    std::string missing;
    for (int j = 0; j < bad.dim(); ++j) {
      if (auto lower = bad.decremented(j)) {
        if (!missing.empty()) missing += ", ";
        missing += to_string(*lower);
      }
    }
    throw ConnectivityError("multi-index " + to_string(bad) +
                            " is not connected to the origin (no predecessor among " + missing + ")");
  }
  return tree;
}

EvalTree support_subtree(const EvalTree& tree, std::span<const std::size_t> support) {
  const std::size_t n = tree.size();
  std::vector<bool> keep(n, false);

  auto keep_with_ancestors = [&](std::size_t pos) {
    while (pos != EvalTree::kNoParent && !keep[pos]) {
      keep[pos] = true;
      pos = tree.parent(pos);
    }
  };
  if (n > 0) keep_with_ancestors(tree.root());
  for (std::size_t pos : support) {
    if (pos >= n) throw std::out_of_range("support_subtree: node position out of range");
    keep_with_ancestors(pos);
    const MultiIndex& alpha = tree.node(pos);
    for (int i = 0; i < alpha.dim(); ++i) {
      auto lower = alpha.decremented(i);
      if (!lower) continue;
      keep_with_ancestors(tree.require(*lower));
      for (int j = i; j < alpha.dim(); ++j) {
        if (auto lower2 = lower->decremented(j)) keep_with_ancestors(tree.require(*lower2));
      }
    }
  }

  std::vector<std::size_t> remap(n, EvalTree::kNoParent);
  EvalTree sub;
  sub.dim_ = tree.dim_;
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (!keep[pos]) continue;
    remap[pos] = sub.nodes_.size();
    sub.nodes_.push_back(tree.nodes_[pos]);
  }
  const std::size_t m = sub.nodes_.size();
  sub.parent_.assign(m, EvalTree::kNoParent);
  sub.coord_.assign(m, -1);
  sub.locator_.reserve(m);
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (!keep[pos]) continue;
    const std::size_t q = remap[pos];
    sub.locator_.emplace(tree.nodes_[pos], q);
    if (tree.parent_[pos] != EvalTree::kNoParent) {
      sub.parent_[q] = remap[tree.parent_[pos]];
      sub.coord_[q] = tree.coord_[pos];
    }
  }
  sub.root_ = m > 0 ? remap[tree.root_] : 0;
  sub.order_.reserve(m);
  for (std::size_t pos : tree.order_) {
    if (keep[pos]) sub.order_.push_back(remap[pos]);
  }
  return sub;
}

}  // namespace polyfb
