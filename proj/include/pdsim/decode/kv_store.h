#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "pdsim/common/types.h"

namespace pdsim::decode {

// Paged KV memory of one instance. A request's pages are either all
// resident or all swapped out.
class PagedKvStore {
 public:
  explicit PagedKvStore(std::int64_t capacity_pages);

  std::int64_t capacity() const { return capacity_; }
  std::int64_t used() const { return used_; }
  std::int64_t free() const { return capacity_ - used_; }

  bool resident(RequestId id) const { return resident_.contains(id); }
  bool swapped(RequestId id) const { return swapped_.contains(id); }
  std::int64_t resident_pages(RequestId id) const;
  std::int64_t swapped_pages(RequestId id) const;
  const std::map<RequestId, std::int64_t>& residents() const { return resident_; }

  // Grows (or creates) the resident allocation of `id` to `pages`. Throws
  // InvariantViolation if that would exceed capacity or `id` is swapped.
  void reserve_to(RequestId id, std::int64_t pages);
  void release(RequestId id);
  // Moves every page of `id` out of accelerator memory; returns the count.
  std::int64_t swap_out(RequestId id);
  // Brings a swapped request back; throws if it does not fit.
  std::int64_t swap_in(RequestId id);

 private:
  std::int64_t capacity_;
  std::int64_t used_ = 0;
  std::map<RequestId, std::int64_t> resident_;
  std::map<RequestId, std::int64_t> swapped_;
};

// Largest-resident-first victim selection (ties: larger id) among
// `candidates` until free pages reach `needed`. Does not mutate the store.
// Returns an empty list when free >= needed already.
std::vector<RequestId> select_victims(const PagedKvStore& store,
                                      std::int64_t needed,
                                      const std::vector<RequestId>& candidates);

// Evicts the victims chosen by select_victims and returns them.
std::vector<RequestId> swap_out(PagedKvStore& store, std::int64_t needed);

}  // namespace pdsim::decode
