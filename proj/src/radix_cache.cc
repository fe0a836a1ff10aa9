/* Copyright 2026 The dualserve Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "dualserve/radix_cache.h"

#include <algorithm>
#include <set>
#include <string>
#include <tuple>

namespace dualserve {

std::vector<KeyUnit> to_key_units(std::span<const PromptSegment> segments) {
  std::vector<KeyUnit> out;
  out.reserve(count_units(segments));
  for (const auto& seg : segments) {
    if (const auto* t = std::get_if<TextTokens>(&seg)) {
      for (auto id : t->ids) out.push_back(KeyUnit::text(id));
    } else if (const auto* a = std::get_if<AudioFrames>(&seg)) {
      for (const auto& f : a->frames) out.push_back(KeyUnit::frame(f));
    } else if (const auto* s = std::get_if<SpeakerTag>(&seg)) {
      out.push_back(KeyUnit::speaker(s->index));
    } else if (const auto* v = std::get_if<VocalTag>(&seg)) {
      out.push_back(KeyUnit::vocal(v->label));
    }
  }
  return out;
}

std::optional<double> hit_rate(const CacheStats& stats) {
  if (stats.total_prefill_units == 0) return std::nullopt;
  return static_cast<double>(stats.matched_units) / static_cast<double>(stats.total_prefill_units);
}

RadixCache::RadixCache(std::uint32_t page_size, KvPager* pager, RadixCacheConfig cfg)
    : page_size_(page_size), pager_(pager), cfg_(cfg), root_(std::make_unique<Node>()) {
  if (page_size_ == 0) throw InvalidArgument("page_size must be >= 1");
  if (pager_ != nullptr && pager_->page_size() != page_size_) {
    throw InvalidArgument("radix cache page size differs from pager page size");
  }
}

RadixCache::~RadixCache() = default;

namespace {

std::size_t common_prefix(std::span<const KeyUnit> a, std::span<const KeyUnit> b) {
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

}  // namespace

RadixCache::MatchResult RadixCache::match_prefix(std::span<const KeyUnit> key) {
  MatchResult out;
  out.leaf = root_.get();
  const std::uint64_t now = ++clock_;
  root_->last_access = now;

  struct Span {
    const Node* node;
    std::size_t lo, hi;
  };
  std::vector<Span> touched;
  Node* node = root_.get();
  std::size_t pos = 0;
  while (pos < key.size()) {
    auto it = node->children.find(key[pos]);
    if (it == node->children.end()) break;
    Node* child = it->second.get();
    const std::size_t j = common_prefix(child->edge, key.subspan(pos));
    child->last_access = now;
    touched.push_back({child, pos, pos + j});
    pos += j;
    out.leaf = child;
    if (j < child->edge.size()) break;
    node = child;
  }
  out.matched_len = pos;
  out.blocks.resize(end_page(pos));
  // Deeper nodes overwrite the page they share with their parent: the child's
  // copy of a straddling page holds both the parent's units and its own.
  for (const auto& s : touched) {
    const std::size_t base = first_page(s.node->start);
    for (std::size_t p = first_page(s.lo); p < end_page(s.hi); ++p) {
      out.blocks[p] = s.node->blocks[p - base];
    }
  }
  return out;
}

RadixCache::Node* RadixCache::split(Node* child, std::size_t at) {
  Node* parent = child->parent;
  auto owned = std::move(parent->children.at(child->edge.front()));

  auto mid = std::make_unique<Node>();
  mid->parent = parent;
  mid->start = child->start;
  mid->edge.assign(child->edge.begin(), child->edge.begin() + static_cast<std::ptrdiff_t>(at));
  mid->lock_count = child->lock_count;
  mid->last_access = child->last_access;
  mid->serial = next_serial_++;

  const std::size_t base = first_page(child->start);
  const std::size_t boundary = child->start + at;
  mid->blocks.assign(child->blocks.begin(),
                     child->blocks.begin() + static_cast<std::ptrdiff_t>(end_page(boundary) - base));
  std::vector<BlockId> tail(child->blocks.begin() + static_cast<std::ptrdiff_t>(first_page(boundary) - base),
                            child->blocks.end());
  if (boundary % page_size_ != 0 && pager_ != nullptr) {
    // The straddling page is now listed by both halves; each listing is a holding.
    pager_->share(std::span<const BlockId>(&tail.front(), 1), kCacheOwner);
  }
  child->blocks = std::move(tail);
  child->edge.erase(child->edge.begin(), child->edge.begin() + static_cast<std::ptrdiff_t>(at));
  child->start = boundary;
  child->parent = mid.get();

  Node* mid_raw = mid.get();
  const KeyUnit child_key = child->edge.front();
  mid->children.emplace(child_key, std::move(owned));
  parent->children[mid_raw->edge.front()] = std::move(mid);
  return mid_raw;
}

RadixCache::Handle RadixCache::insert(std::span<const KeyUnit> key, std::span<const BlockId> blocks) {
  if (key.empty()) throw ContractError("insert of an empty key");
  if (blocks.size() != end_page(key.size())) {
    throw ContractError("insert: " + std::to_string(blocks.size()) + " blocks for " +
                        std::to_string(key.size()) + " units (page size " +
                        std::to_string(page_size_) + ")");
  }
  const std::uint64_t now = ++clock_;
  root_->last_access = now;
  Node* node = root_.get();
  std::size_t pos = 0;
  while (pos < key.size()) {
    auto it = node->children.find(key[pos]);
    if (it == node->children.end()) {
      auto leaf = std::make_unique<Node>();
      leaf->parent = node;
      leaf->start = pos;
      leaf->edge.assign(key.begin() + static_cast<std::ptrdiff_t>(pos), key.end());
      leaf->blocks.assign(blocks.begin() + static_cast<std::ptrdiff_t>(first_page(pos)), blocks.end());
      leaf->last_access = now;
      leaf->serial = next_serial_++;
      if (pager_ != nullptr) pager_->share(leaf->blocks, kCacheOwner);
      resident_units_ += leaf->edge.size();
      stats_.peak_resident_units = std::max(stats_.peak_resident_units, resident_units_);
      Node* raw = leaf.get();
      node->children.emplace(raw->edge.front(), std::move(leaf));
      return raw;
    }
    Node* child = it->second.get();
    const std::size_t j = common_prefix(child->edge, key.subspan(pos));
    child->last_access = now;
    if (j < child->edge.size()) child = split(child, j);
    node = child;
    pos += j;
  }
  return node;
}

void RadixCache::lock(Handle leaf) {
  for (Node* n = leaf; n != nullptr; n = n->parent) ++n->lock_count;
}

void RadixCache::unlock(Handle leaf) {
  for (Node* n = leaf; n != nullptr; n = n->parent) {
    if (n->lock_count == 0) throw ContractError("unlock without matching lock");
  }
  for (Node* n = leaf; n != nullptr; n = n->parent) --n->lock_count;
}

std::vector<KeyUnit> RadixCache::path_of(const Node* n) const {
  std::vector<const Node*> chain;
  for (; n != nullptr; n = n->parent) chain.push_back(n);
  std::vector<KeyUnit> out;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    out.insert(out.end(), (*it)->edge.begin(), (*it)->edge.end());
  }
  return out;
}

void RadixCache::remove_leaf(Node* leaf, EvictResult& out) {
  if (observer_) {
    const auto path = path_of(leaf);
    observer_(path, leaf->start);
  }
  out.evicted_units += leaf->edge.size();
  resident_units_ -= leaf->edge.size();
  stats_.evicted_units += leaf->edge.size();
  if (pager_ != nullptr) pager_->release(leaf->blocks, kCacheOwner);
  out.freed_blocks.insert(out.freed_blocks.end(), leaf->blocks.begin(), leaf->blocks.end());
  Node* parent = leaf->parent;
  parent->children.erase(leaf->edge.front());
}

RadixCache::EvictResult RadixCache::evict(std::size_t target_units) {
  EvictResult out;
  if (target_units == 0) return out;
  using Entry = std::tuple<std::uint64_t, std::uint64_t, Node*>;  // access, serial, node
  std::set<Entry> candidates;
  std::vector<Node*> stack{root_.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    for (auto& [k, c] : n->children) stack.push_back(c.get());
    if (n != root_.get() && n->children.empty() && n->lock_count == 0) {
      candidates.emplace(n->last_access, n->serial, n);
    }
  }
  while (out.evicted_units < target_units && !candidates.empty()) {
    Node* victim = std::get<2>(*candidates.begin());
    candidates.erase(candidates.begin());
    Node* parent = victim->parent;
    remove_leaf(victim, out);
    if (parent != root_.get() && parent->children.empty() && parent->lock_count == 0) {
      candidates.emplace(parent->last_access, parent->serial, parent);
    }
  }
  return out;
}

RadixCache::EvictResult RadixCache::evict_to_fit() {
  if (resident_units_ <= cfg_.capacity_units) return {};
  const auto low = static_cast<std::size_t>(cfg_.low_watermark * static_cast<double>(cfg_.capacity_units));
  return evict(resident_units_ - std::min(low, resident_units_));
}

void RadixCache::record_lookup(std::size_t matched_units, std::size_t total_units) {
  if (matched_units > total_units) throw ContractError("matched units exceed prefill units");
  stats_.matched_units += matched_units;
  stats_.total_prefill_units += total_units;
}

std::size_t RadixCache::node_count() const {
  std::size_t n = 0;
  std::vector<const Node*> stack{root_.get()};
  while (!stack.empty()) {
    const Node* x = stack.back();
    stack.pop_back();
    ++n;
    for (const auto& [k, c] : x->children) stack.push_back(c.get());
  }
  return n;
}

std::uint32_t RadixCache::lock_count(Handle h) const { return h->lock_count; }

void RadixCache::check_invariants() const {
  std::size_t units = 0;
  std::vector<const Node*> stack{root_.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    units += n->edge.size();
    if (n != root_.get()) {
      if (n->edge.empty()) throw ContractError("non-root node with empty edge");
      if (n->blocks.size() != end_page(n->end()) - first_page(n->start)) {
        throw ContractError("block coverage does not match edge length");
      }
      if (n->start != n->parent->end()) throw ContractError("edge offset does not follow parent");
    }
    std::uint64_t child_locks = 0;
    for (const auto& [k, c] : n->children) {
      if (c->edge.empty() || !(c->edge.front() == k)) {
        throw ContractError("child key differs from first unit of its edge");
      }
      if (c->parent != n) throw ContractError("broken parent link");
      child_locks += c->lock_count;
      stack.push_back(c.get());
    }
    if (child_locks > n->lock_count) throw ContractError("child locked more than its parent");
  }
  if (units != resident_units_) throw ContractError("resident unit count drifted");
}

}  // namespace dualserve
