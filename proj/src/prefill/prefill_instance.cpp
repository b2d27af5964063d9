#include "pdsim/prefill/prefill_instance.h"

#include <algorithm>

namespace pdsim::prefill {

PrefillInstance::PrefillInstance(InstanceId id, sim::Engine& engine,
                                 const cost::CostModel& cost,
                                 PrefillConfig config,
                                 sim::RngStream& predictor_rng,
                                 sim::RngStream& dispatch_rng, Hooks hooks)
    : id_(id),
      engine_(&engine),
      cost_(&cost),
      config_(config),
      predictor_(config.predictor, predictor_rng),
      dispatcher_(config.dispatch, dispatch_rng),
      hooks_(std::move(hooks)) {
  config_.policy.validate();
}

void PrefillInstance::enqueue(const Request& req) {
  raw_.push_back(QueuedPrompt{req.id, req.arrival, req.prompt_len});
  requests_[req.id] = req;
  queued_tokens_ += req.prompt_len;
  stats_.max_raw_depth = std::max(stats_.max_raw_depth, raw_.size());
  kick();
}

bool PrefillInstance::drained() const {
  return !running_ && raw_.empty() && parked_.empty();
}

InstanceLoad PrefillInstance::load(SimTime now) const {
  InstanceLoad l;
  l.id = id_;
  l.role = Role::kPrefill;
  l.queued_prompt_tokens = queued_tokens_;
  l.snapshot_time = now;
  return l;
}

void PrefillInstance::kick() {
  // Deferred by a zero-delay event so every arrival stamped with the same
  // time lands in the raw queue before the round is formed.
  if (running_ || kick_pending_) return;
  kick_pending_ = true;
  engine_->schedule_after(0, id_, "prefill_kick", [this] {
    kick_pending_ = false;
    if (!running_) start_round();
  });
}

void PrefillInstance::start_round() {
  if (raw_.empty()) return;
  round_.clear();
  sort_raw_queue(config_.policy, raw_, round_);
  ++stats_.rounds;
  for (const auto& p : round_) {
    predictor_.predict(requests_.at(p.id));
    cursor_[p.id] = 0;
  }
  chunks_ = chunkify(round_, cost_->params().chunk_size);
  next_chunk_ = 0;
  running_ = true;
  run_next_chunk();
}

void PrefillInstance::run_next_chunk() {
  const Chunk& chunk = chunks_[next_chunk_];
  const SimTime now = engine_->now();
  for (const auto& s : chunk.slices) {
    if (s.start == 0 && hooks_.on_prefill_start) hooks_.on_prefill_start(s.id, now);
  }
  const SimTime latency = cost_->prefill_latency(
      cost_->params().chunk_size, static_cast<std::int64_t>(chunk.slices.size()),
      config_.predictor.mode, next_chunk_ == 0);
  chunk_start_ = now;
  const std::size_t index = next_chunk_;
  engine_->schedule_after(latency, id_, "prefill_chunk_done",
                          [this, index] { on_chunk_done(index); });
}

void PrefillInstance::on_chunk_done(std::size_t chunk_index) {
  const SimTime now = engine_->now();
  const Chunk& chunk = chunks_[chunk_index];
  ++stats_.chunks;
  stats_.pad_tokens += static_cast<std::uint64_t>(chunk.padded);
  stats_.real_tokens += static_cast<std::uint64_t>(chunk.real_tokens());
  if (hooks_.on_busy) hooks_.on_busy(chunk_start_, now);

  for (const auto& s : chunk.slices) {
    auto& cursor = cursor_.at(s.id);
    cursor += s.len;
    queued_tokens_ -= s.len;
    const Request& req = requests_.at(s.id);
    if (cursor < req.prompt_len) continue;
    const LengthBucket bucket = predictor_.predict(req);
    if (hooks_.on_first_token) hooks_.on_first_token(req.id, now, bucket);
    const Request done = req;
    cursor_.erase(s.id);
    requests_.erase(s.id);
    dispatch_or_park(done, bucket);
  }

  if (++next_chunk_ < chunks_.size()) {
    run_next_chunk();
    return;
  }
  running_ = false;
  chunks_.clear();
  round_.clear();
  if (!raw_.empty()) {
    start_round();
  } else if (drained() && hooks_.on_drained) {
    hooks_.on_drained();
  }
}

void PrefillInstance::dispatch_or_park(const Request& req, LengthBucket bucket) {
  auto decision = dispatcher_.dispatch(req, bucket);
  if (!decision) {
    ++stats_.parked_dispatches;
    parked_.emplace_back(req, bucket);
    return;
  }
  if (decision->fallback) ++stats_.fallback_dispatches;
  log_.push_back(DispatchLogEntry{engine_->now(), req.id, *decision});
  if (hooks_.send_kv) hooks_.send_kv(req, bucket, decision->chosen);
}

void PrefillInstance::receive_broadcast(LoadSnapshot snapshot) {
  dispatcher_.update_snapshot(std::move(snapshot));
  if (parked_.empty()) return;
  auto parked = std::move(parked_);
  parked_.clear();
  for (const auto& [req, bucket] : parked) dispatch_or_park(req, bucket);
  if (drained() && hooks_.on_drained) hooks_.on_drained();
}

void PrefillInstance::redispatch(const Request& req, LengthBucket bucket) {
  dispatch_or_park(req, bucket);
}

}  // namespace pdsim::prefill
