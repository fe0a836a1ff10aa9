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

// Fixed-size block allocator for simulated KV state. Blocks carry no payload,
// only holder bookkeeping; a block is resident while at least one holder
// references it.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dualserve/common.h"

namespace dualserve {

struct PoolConfig {
  std::uint32_t page_size = 16;
  std::uint32_t total_blocks = 4096;

  void validate() const;
};

struct BlockId {
  std::uint32_t index = 0;
  auto operator<=>(const BlockId&) const = default;
};

/// Holder identity for refcount bookkeeping. Requests use their id; the radix
/// cache holds blocks as kCacheOwner.
using OwnerId = std::uint64_t;
inline constexpr OwnerId kCacheOwner = ~OwnerId{0};

struct PageTable {
  OwnerId owner = 0;
  std::vector<BlockId> blocks;
  std::size_t filled_units = 0;
};

struct SlotRef {
  BlockId block;
  std::uint32_t slot = 0;
};

class KvPager {
 public:
  explicit KvPager(PoolConfig cfg);

  const PoolConfig& config() const { return cfg_; }
  std::uint32_t page_size() const { return cfg_.page_size; }
  std::size_t blocks_for(std::size_t units) const {
    return (units + cfg_.page_size - 1) / cfg_.page_size;
  }

  /// ceil(units / page_size) fresh blocks held once by `owner`, or nullopt when
  /// the pool cannot satisfy the whole request (state unchanged).
  std::optional<std::vector<BlockId>> alloc(std::size_t units, OwnerId owner);

  /// Adds `owner` as a holder of each block. Throws ContractError on a free block.
  void share(std::span<const BlockId> blocks, OwnerId owner);

  /// Records one more unit in `table`, allocating a block at a page boundary.
  /// Returns nullopt on OOM with the table untouched.
  std::optional<SlotRef> append_slot(PageTable& table);

  /// Drops one holding by `owner` per listed block; returns how many blocks
  /// became free. Throws ContractError when `owner` does not hold a block, which
  /// covers every double release.
  std::size_t release(std::span<const BlockId> blocks, OwnerId owner);
  /// Releases every block of `table` and clears it.
  std::size_t release(PageTable& table);

  std::uint32_t refcount(BlockId b) const;
  std::size_t free_blocks() const { return free_.size(); }
  std::size_t resident_blocks() const { return cfg_.total_blocks - free_.size(); }
  std::uint32_t total_blocks() const { return cfg_.total_blocks; }
  /// Holders of a block, one entry per holding.
  std::span<const OwnerId> holders(BlockId b) const;

 private:
  void check_id(BlockId b) const;

  PoolConfig cfg_;
  std::vector<std::vector<OwnerId>> holders_;
  std::vector<BlockId> free_;  // popped from the back; lowest ids come out first
};

}  // namespace dualserve
