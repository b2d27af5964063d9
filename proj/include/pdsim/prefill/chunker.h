#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pdsim/prefill/scheduler.h"

namespace pdsim::prefill {

// Tokens [start, start + len) of one request's prompt.
struct Slice {
  RequestId id = 0;
  std::int32_t start = 0;
  std::int32_t len = 0;

  bool operator==(const Slice&) const = default;
};

// A fixed-size unit of prefill work. Real tokens plus zero padding always
// add up to the chunk size.
struct Chunk {
  std::size_t index = 0;
  std::vector<Slice> slices;
  std::int32_t padded = 0;

  std::int32_t real_tokens() const;
};

// Slices the scheduled prompts, in order, into chunk_size-token chunks.
// Every chunk is full except possibly the last, which is zero-padded.
std::vector<Chunk> chunkify(std::span<const QueuedPrompt> scheduled,
                            std::int32_t chunk_size);

}  // namespace pdsim::prefill
