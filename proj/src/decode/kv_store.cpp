#include "pdsim/decode/kv_store.h"

#include <algorithm>
#include <string>

namespace pdsim::decode {

PagedKvStore::PagedKvStore(std::int64_t capacity_pages)
    : capacity_(capacity_pages) {
  if (capacity_ < 1) throw ConfigError("cost_model.mem_capacity_tokens",
                                       "instance holds no KV pages");
}

std::int64_t PagedKvStore::resident_pages(RequestId id) const {
  auto it = resident_.find(id);
  return it == resident_.end() ? 0 : it->second;
}

std::int64_t PagedKvStore::swapped_pages(RequestId id) const {
  auto it = swapped_.find(id);
  return it == swapped_.end() ? 0 : it->second;
}

void PagedKvStore::reserve_to(RequestId id, std::int64_t pages) {
  if (swapped_.contains(id)) {
    throw InvariantViolation("allocating pages for swapped request " +
                             std::to_string(id));
  }
  const std::int64_t have = resident_pages(id);
  if (pages < have) {
    throw InvariantViolation("page allocation of request " + std::to_string(id) +
                             " shrinking from " + std::to_string(have));
  }
  if (used_ + (pages - have) > capacity_) {
    throw InvariantViolation("KV store over capacity: need " +
                             std::to_string(used_ + pages - have) + " of " +
                             std::to_string(capacity_) + " pages");
  }
  used_ += pages - have;
  resident_[id] = pages;
}

void PagedKvStore::release(RequestId id) {
  if (auto it = resident_.find(id); it != resident_.end()) {
    used_ -= it->second;
    resident_.erase(it);
  }
  swapped_.erase(id);
}

std::int64_t PagedKvStore::swap_out(RequestId id) {
  auto it = resident_.find(id);
  if (it == resident_.end()) {
    throw InvariantViolation("swap_out of non-resident request " +
                             std::to_string(id));
  }
  const std::int64_t pages = it->second;
  used_ -= pages;
  resident_.erase(it);
  swapped_[id] = pages;
  return pages;
}

std::int64_t PagedKvStore::swap_in(RequestId id) {
  auto it = swapped_.find(id);
  if (it == swapped_.end()) {
    throw InvariantViolation("swap_in of non-swapped request " +
                             std::to_string(id));
  }
  const std::int64_t pages = it->second;
  if (used_ + pages > capacity_) {
    throw InvariantViolation("swap_in of request " + std::to_string(id) +
                             " exceeds capacity");
  }
  swapped_.erase(it);
  used_ += pages;
  resident_[id] = pages;
  return pages;
}

std::vector<RequestId> select_victims(const PagedKvStore& store,
                                      std::int64_t needed,
                                      const std::vector<RequestId>& candidates) {
  std::vector<RequestId> order = candidates;
  std::sort(order.begin(), order.end(), [&](RequestId a, RequestId b) {
    const auto pa = store.resident_pages(a);
    const auto pb = store.resident_pages(b);
    return pa != pb ? pa > pb : a > b;
  });
  std::vector<RequestId> victims;
  std::int64_t free = store.free();
  for (RequestId id : order) {
    if (free >= needed) break;
    free += store.resident_pages(id);
    victims.push_back(id);
  }
  return victims;
}

std::vector<RequestId> swap_out(PagedKvStore& store, std::int64_t needed) {
  std::vector<RequestId> all;
  for (const auto& [id, pages] : store.residents()) all.push_back(id);
  auto victims = select_victims(store, needed, all);
  for (RequestId id : victims) store.swap_out(id);
  return victims;
}

}  // namespace pdsim::decode
