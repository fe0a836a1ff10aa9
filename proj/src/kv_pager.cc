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

#include "dualserve/kv_pager.h"

#include <algorithm>
#include <string>
#include <unordered_map>

namespace dualserve {

void PoolConfig::validate() const {
  if (page_size < 1) throw InvalidArgument("page_size must be >= 1");
  if (total_blocks < 1) throw InvalidArgument("total_blocks must be >= 1");
}

KvPager::KvPager(PoolConfig cfg) : cfg_(cfg), holders_(cfg.total_blocks) {
  cfg_.validate();
  free_.reserve(cfg_.total_blocks);
  for (std::uint32_t i = cfg_.total_blocks; i-- > 0;) free_.push_back(BlockId{i});
}

void KvPager::check_id(BlockId b) const {
  if (b.index >= cfg_.total_blocks) {
    throw ContractError("block id " + std::to_string(b.index) + " outside pool");
  }
}

std::optional<std::vector<BlockId>> KvPager::alloc(std::size_t units, OwnerId owner) {
  const std::size_t n = blocks_for(units);
  if (n > free_.size()) return std::nullopt;
  std::vector<BlockId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const BlockId b = free_.back();
    free_.pop_back();
    holders_[b.index].push_back(owner);
    out.push_back(b);
  }
  return out;
}

void KvPager::share(std::span<const BlockId> blocks, OwnerId owner) {
  for (auto b : blocks) {
    check_id(b);
    if (holders_[b.index].empty()) {
      throw ContractError("share of free block " + std::to_string(b.index));
    }
  }
  for (auto b : blocks) holders_[b.index].push_back(owner);
}

std::optional<SlotRef> KvPager::append_slot(PageTable& table) {
  const std::size_t capacity = table.blocks.size() * cfg_.page_size;
  if (table.filled_units < capacity) {
    const auto slot = static_cast<std::uint32_t>(table.filled_units % cfg_.page_size);
    const BlockId b = table.blocks[table.filled_units / cfg_.page_size];
    ++table.filled_units;
    return SlotRef{b, slot};
  }
  auto fresh = alloc(1, table.owner);
  if (!fresh) return std::nullopt;
  table.blocks.push_back(fresh->front());
  ++table.filled_units;
  return SlotRef{fresh->front(), 0};
}

std::size_t KvPager::release(std::span<const BlockId> blocks, OwnerId owner) {
  // Validate the whole batch first so a contract failure leaves state intact.
  std::unordered_map<std::uint32_t, std::size_t> pending;
  for (auto b : blocks) {
    check_id(b);
    const auto& h = holders_[b.index];
    const auto held = static_cast<std::size_t>(std::count(h.begin(), h.end(), owner));
    if (held <= pending[b.index]++) {
      throw ContractError("release of block " + std::to_string(b.index) +
                          " not held by owner (double release?)");
    }
  }
  std::size_t freed = 0;
  for (auto b : blocks) {
    auto& h = holders_[b.index];
    h.erase(std::find(h.begin(), h.end(), owner));
    if (h.empty()) {
      free_.push_back(b);
      ++freed;
    }
  }
  return freed;
}

std::size_t KvPager::release(PageTable& table) {
  const std::size_t freed = release(table.blocks, table.owner);
  table.blocks.clear();
  table.filled_units = 0;
  return freed;
}

std::uint32_t KvPager::refcount(BlockId b) const {
  check_id(b);
  return static_cast<std::uint32_t>(holders_[b.index].size());
}

std::span<const OwnerId> KvPager::holders(BlockId b) const {
  check_id(b);
  return holders_[b.index];
}

}  // namespace dualserve
