#include "pdsim/prefill/chunker.h"

#include <algorithm>
#include <numeric>

namespace pdsim::prefill {

std::int32_t Chunk::real_tokens() const {
  return std::accumulate(slices.begin(), slices.end(), std::int32_t{0},
                         [](std::int32_t acc, const Slice& s) {
                           return acc + s.len;
                         });
}

std::vector<Chunk> chunkify(std::span<const QueuedPrompt> scheduled,
                            std::int32_t chunk_size) {
  if (chunk_size < 1) throw ConfigError("cost_model.chunk_size", "must be >= 1");
  std::vector<Chunk> chunks;
  Chunk current;
  std::int32_t room = chunk_size;
  for (const auto& p : scheduled) {
    std::int32_t cursor = 0;  // last prefilled token position
    while (cursor < p.prompt_len) {
      const std::int32_t take = std::min(room, p.prompt_len - cursor);
      current.slices.push_back(Slice{p.id, cursor, take});
      cursor += take;
      room -= take;
      if (room == 0) {
        current.index = chunks.size();
        chunks.push_back(std::move(current));
        current = Chunk{};
        room = chunk_size;
      }
    }
  }
  if (!current.slices.empty()) {
    current.index = chunks.size();
    current.padded = room;
    chunks.push_back(std::move(current));
  }
  return chunks;
}

}  // namespace pdsim::prefill
