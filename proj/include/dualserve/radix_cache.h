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

#pragma once

// Prefix cache over mixed text/audio key sequences. A frame is a single key
// unit holding its full N-token tuple, so matches never split a frame and two
// frames that differ in any codebook never share a prefix.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dualserve/kv_pager.h"
#include "dualserve/token_model.h"

namespace dualserve {

enum class KeyKind : std::uint8_t { kText, kFrame, kSpeaker, kVocal };

struct KeyUnit {
  KeyKind kind = KeyKind::kText;
  std::uint64_t value = 0;         // text id, semantic id, speaker index or label hash
  std::vector<TokenId> acoustic;  // frames only

  static KeyUnit text(TokenId id) { return {KeyKind::kText, id, {}}; }
  static KeyUnit frame(const TokenFrame& f) { return {KeyKind::kFrame, f.semantic, f.acoustic}; }
  static KeyUnit speaker(std::int64_t index) {
    return {KeyKind::kSpeaker, static_cast<std::uint64_t>(index), {}};
  }
  static KeyUnit vocal(std::string_view label) { return {KeyKind::kVocal, fnv1a(label), {}}; }

  auto operator<=>(const KeyUnit&) const = default;
  bool operator==(const KeyUnit&) const = default;
};

std::vector<KeyUnit> to_key_units(std::span<const PromptSegment> segments);

struct CacheStats {
  std::size_t matched_units = 0;
  std::size_t total_prefill_units = 0;
  std::size_t evicted_units = 0;
  std::size_t peak_resident_units = 0;
};

/// matched / total prefill units; nullopt while nothing has been looked up.
std::optional<double> hit_rate(const CacheStats& stats);

struct RadixCacheConfig {
  std::size_t capacity_units = 1 << 20;
  double low_watermark = 0.9;  // evict_to_fit target as a fraction of capacity
};

class RadixCache {
 public:
  struct Node;
  using Handle = Node*;

  struct MatchResult {
    std::size_t matched_len = 0;
    std::vector<BlockId> blocks;  // ceil(matched_len / page_size) blocks
    Handle leaf = nullptr;
  };

  struct EvictResult {
    std::vector<BlockId> freed_blocks;  // one entry per cache holding dropped
    std::size_t evicted_units = 0;
  };

  /// Called per evicted leaf with the full key path ending at that leaf and
  /// the path offset where the removed edge began.
  using EvictionObserver = std::function<void(std::span<const KeyUnit> path, std::size_t start)>;

  /// `pager` may be null, in which case block ids are opaque tags and no
  /// holdings are taken or released.
  RadixCache(std::uint32_t page_size, KvPager* pager, RadixCacheConfig cfg = {});
  ~RadixCache();
  RadixCache(const RadixCache&) = delete;
  RadixCache& operator=(const RadixCache&) = delete;

  /// Longest stored prefix of `key`. Touches access times, never reshapes the tree.
  MatchResult match_prefix(std::span<const KeyUnit> key);

  /// Stores `key` covered by `blocks` (ceil(len / page_size) of them). The cache
  /// takes its own holding on every block it keeps. Re-inserting a stored key
  /// changes nothing but access times.
  Handle insert(std::span<const KeyUnit> key, std::span<const BlockId> blocks);

  void lock(Handle leaf);
  void unlock(Handle leaf);

  /// Removes least-recently-used unlocked leaves until at least `target_units`
  /// are gone or nothing evictable remains.
  EvictResult evict(std::size_t target_units);
  /// Evicts down to the low watermark when resident units exceed capacity.
  EvictResult evict_to_fit();

  /// Accounts one request's prefill lookup towards the hit rate.
  void record_lookup(std::size_t matched_units, std::size_t total_units);

  const CacheStats& stats() const { return stats_; }
  std::size_t resident_units() const { return resident_units_; }
  std::size_t node_count() const;
  std::uint32_t lock_count(Handle h) const;
  const RadixCacheConfig& config() const { return cfg_; }
  std::uint32_t page_size() const { return page_size_; }

  void set_eviction_observer(EvictionObserver obs) { observer_ = std::move(obs); }

  /// Walks the whole tree and throws ContractError on any broken invariant
  /// (radix property, block coverage, lock monotonicity, unit count).
  void check_invariants() const;

 private:
  std::size_t first_page(std::size_t pos) const { return pos / page_size_; }
  std::size_t end_page(std::size_t pos) const { return (pos + page_size_ - 1) / page_size_; }
  Node* split(Node* child, std::size_t at);
  void remove_leaf(Node* leaf, EvictResult& out);
  std::vector<KeyUnit> path_of(const Node* n) const;

  std::uint32_t page_size_;
  KvPager* pager_;
  RadixCacheConfig cfg_;
  std::unique_ptr<Node> root_;
  std::uint64_t clock_ = 0;
  std::uint64_t next_serial_ = 0;
  std::size_t resident_units_ = 0;
  CacheStats stats_;
  EvictionObserver observer_;
};

struct RadixCache::Node {
  Node* parent = nullptr;
  std::vector<KeyUnit> edge;
  std::size_t start = 0;  // key offset of edge[0]
  std::map<KeyUnit, std::unique_ptr<Node>> children;
  std::vector<BlockId> blocks;  // pages [start / P, ceil((start + edge) / P))
  std::uint32_t lock_count = 0;
  std::uint64_t last_access = 0;
  std::uint64_t serial = 0;

  std::size_t end() const { return start + edge.size(); }
};

}  // namespace dualserve
