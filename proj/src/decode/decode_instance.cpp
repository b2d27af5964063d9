#include "pdsim/decode/decode_instance.h"

#include <algorithm>
#include <limits>
#include <string>

namespace pdsim::decode {

std::string_view to_string(DecodePolicyKind k) {
  switch (k) {
    case DecodePolicyKind::kGreedy: return "greedy";
    case DecodePolicyKind::kReserveStatic: return "reserve_static";
    case DecodePolicyKind::kReserveDynamic: return "reserve_dynamic";
  }
  return "?";
}

DecodePolicyKind parse_decode_policy(std::string_view s) {
  if (s == "greedy") return DecodePolicyKind::kGreedy;
  if (s == "reserve_static") return DecodePolicyKind::kReserveStatic;
  if (s == "reserve_dynamic") return DecodePolicyKind::kReserveDynamic;
  throw ConfigError("policies.decode.policy", "unknown decode policy '" + std::string(s) + "'");
}

void DecodePolicy::validate() const {
  if (max_batch && *max_batch < 1) {
    throw ConfigError("policies.decode.max_batch", "max_batch must be >= 1");
  }
}

DecodeBatcher::DecodeBatcher(const cost::CostModel& cost, DecodePolicy policy)
    : cost_(&cost), policy_(policy), store_(cost.params().capacity_pages()) {
  policy_.validate();
}

void DecodeBatcher::enqueue(DecodingRequest r) { waiting_.push_back(std::move(r)); }

void DecodeBatcher::add_running(DecodingRequest r) {
  store_.reserve_to(r.req.id, cost_->pages_needed(r.kv_tokens()));
  r.started = true;
  running_.push_back(std::move(r));
}

bool DecodeBatcher::batch_full() const {
  return policy_.max_batch &&
         running_.size() >= static_cast<std::size_t>(*policy_.max_batch);
}

std::int32_t DecodeBatcher::bound_tokens(const DecodingRequest& r) const {
  return policy_.bound == ReserveBound::kLower ? r.bucket.lower() : r.bucket.upper();
}

std::int64_t DecodeBatcher::pages_for_next_token(const DecodingRequest& r) const {
  return cost_->pages_needed(r.kv_tokens() + 1);
}

std::int64_t DecodeBatcher::requirement_pages(const DecodingRequest& r) const {
  return std::max(pages_for_next_token(r),
                  cost_->pages_needed(r.req.prompt_len + bound_tokens(r)));
}

std::int64_t DecodeBatcher::reserved_free_pages() const {
  std::int64_t held = 0;
  for (const auto& r : running_) {
    held += std::max(store_.resident_pages(r.req.id),
                     cost_->pages_needed(r.req.prompt_len + bound_tokens(r)));
  }
  return store_.capacity() - held;
}

std::int64_t DecodeBatcher::projected_free_pages() const {
  if (running_.empty()) return store_.free();
  std::int64_t horizon = std::numeric_limits<std::int64_t>::max();
  for (const auto& r : running_) {
    horizon = std::min<std::int64_t>(
        horizon, std::max<std::int64_t>(0, bound_tokens(r) - r.generated));
  }
  std::int64_t used = 0;
  for (const auto& r : running_) {
    used += std::max(store_.resident_pages(r.req.id),
                     cost_->pages_needed(r.kv_tokens() + horizon));
  }
  return store_.capacity() - used;
}

bool DecodeBatcher::admissible(const DecodingRequest& r) const {
  if (store_.free() < pages_for_next_token(r)) return false;
  switch (policy_.kind) {
    case DecodePolicyKind::kGreedy:
      return true;
    case DecodePolicyKind::kReserveStatic:
      return reserved_free_pages() >= requirement_pages(r);
    case DecodePolicyKind::kReserveDynamic:
      return projected_free_pages() >= requirement_pages(r);
  }
  return false;
}

std::int64_t DecodeBatcher::waiting_pages() const {
  std::int64_t pages = 0;
  for (const auto& r : waiting_) {
    pages += store_.swapped(r.req.id) ? store_.swapped_pages(r.req.id)
                                      : cost_->pages_needed(r.kv_tokens());
  }
  return pages;
}

AdmitResult DecodeBatcher::admit() {
  AdmitResult out;
  while (!waiting_.empty() && !batch_full()) {
    DecodingRequest& r = waiting_.front();
    bool ok = admissible(r);
    if (!ok && running_.empty()) {
      // An idle instance always takes its head request, or nothing would
      // ever run.
      if (pages_for_next_token(r) > store_.capacity()) {
        throw InvariantViolation("request " + std::to_string(r.req.id) +
                                 " needs more KV pages than the instance holds");
      }
      ok = true;
    }
    if (!ok) break;
    if (store_.swapped(r.req.id)) {
      out.swap_in_pages += store_.swap_in(r.req.id);
      ++out.swap_ins;
    } else {
      store_.reserve_to(r.req.id, cost_->pages_needed(r.kv_tokens()));
    }
    if (!r.started) {
      r.started = true;
      out.first_admissions.push_back(r.req.id);
    }
    out.admitted.push_back(r.req.id);
    running_.push_back(std::move(r));
    waiting_.pop_front();
  }
  return out;
}

StepPlan DecodeBatcher::plan_step() {
  StepPlan plan;
  if (running_.empty()) return plan;

  std::vector<std::int64_t> growth(running_.size());
  std::int64_t need = 0;
  for (std::size_t i = 0; i < running_.size(); ++i) {
    const auto& r = running_[i];
    growth[i] = std::max<std::int64_t>(
        0, pages_for_next_token(r) - store_.resident_pages(r.req.id));
    need += growth[i];
  }

  std::vector<bool> evicted(running_.size(), false);
  std::size_t remaining = running_.size();
  while (store_.free() < need) {
    if (remaining == 1) {
      for (std::size_t i = 0; i < running_.size(); ++i) {
        if (!evicted[i]) {
          throw InvariantViolation(
              "request " + std::to_string(running_[i].req.id) +
              " cannot grow: KV exceeds instance capacity");
        }
      }
    }
    std::size_t victim = running_.size();
    for (std::size_t i = 0; i < running_.size(); ++i) {
      if (evicted[i]) continue;
      if (victim == running_.size()) {
        victim = i;
        continue;
      }
      const auto pi = store_.resident_pages(running_[i].req.id);
      const auto pv = store_.resident_pages(running_[victim].req.id);
      if (pi > pv || (pi == pv && running_[i].req.id > running_[victim].req.id)) {
        victim = i;
      }
    }
    plan.swap_out_pages += store_.swap_out(running_[victim].req.id);
    plan.victims.push_back(running_[victim].req.id);
    need -= growth[victim];
    evicted[victim] = true;
    --remaining;
  }

  if (!plan.victims.empty()) {
    // Victims return to the head of the queue in their batch order.
    std::vector<DecodingRequest> kept;
    std::vector<DecodingRequest> out;
    for (std::size_t i = 0; i < running_.size(); ++i) {
      if (evicted[i]) {
        ++running_[i].swaps;
        out.push_back(std::move(running_[i]));
      } else {
        kept.push_back(std::move(running_[i]));
      }
    }
    running_ = std::move(kept);
    waiting_.insert(waiting_.begin(), std::make_move_iterator(out.begin()),
                    std::make_move_iterator(out.end()));
  }

  for (auto& r : running_) {
    plan.kv_tokens += r.kv_tokens();
    store_.reserve_to(r.req.id, pages_for_next_token(r));
  }
  plan.batch_size = running_.size();
  return plan;
}

std::vector<DecodingRequest> DecodeBatcher::complete_step() {
  std::vector<DecodingRequest> done;
  std::vector<DecodingRequest> kept;
  kept.reserve(running_.size());
  for (auto& r : running_) {
    if (r.generated >= r.req.decode_len) {
      throw InvariantViolation("request " + std::to_string(r.req.id) +
                               " generated past its decode length");
    }
    ++r.generated;
    if (r.done()) {
      store_.release(r.req.id);
      done.push_back(std::move(r));
    } else {
      kept.push_back(std::move(r));
    }
  }
  running_ = std::move(kept);
  return done;
}

DecodeInstance::DecodeInstance(InstanceId id, sim::Engine& engine,
                               const cost::CostModel& cost, DecodePolicy policy,
                               Hooks hooks)
    : id_(id),
      engine_(&engine),
      cost_(&cost),
      batcher_(cost, policy),
      hooks_(std::move(hooks)) {}

void DecodeInstance::announce(const Request& req, LengthBucket bucket) {
  DecodingRequest r;
  r.req = req;
  r.bucket = bucket;
  incoming_.emplace(req.id, std::move(r));
}

void DecodeInstance::receive_kv(RequestId id) {
  auto it = incoming_.find(id);
  if (it == incoming_.end()) {
    throw InvariantViolation("KV for request " + std::to_string(id) +
                             " arrived at decode instance " + std::to_string(id_) +
                             " without an announcement");
  }
  batcher_.enqueue(std::move(it->second));
  incoming_.erase(it);
  kick();
}

void DecodeInstance::withdraw(RequestId id) { incoming_.erase(id); }

void DecodeInstance::preload(DecodingRequest r) {
  r.started = true;
  batcher_.add_running(std::move(r));
  kick();
}

bool DecodeInstance::drained() const {
  return !iterating_ && incoming_.empty() && batcher_.waiting().empty() &&
         batcher_.running().empty();
}

InstanceLoad DecodeInstance::load(SimTime now) const {
  InstanceLoad l;
  l.id = id_;
  l.role = Role::kDecode;
  l.snapshot_time = now;
  const auto& store = batcher_.store();
  std::int64_t pending = batcher_.waiting_pages();
  auto count = [&l](const DecodingRequest& r) {
    if (r.bucket.heavy()) {
      ++l.heavy;
    } else {
      ++l.light;
    }
  };
  for (const auto& [rid, r] : incoming_) {
    pending += cost_->pages_needed(r.kv_tokens());
    count(r);
  }
  for (const auto& r : batcher_.waiting()) count(r);
  for (const auto& r : batcher_.running()) count(r);
  const std::int64_t page = cost_->params().page_size;
  l.used_kv_tokens = (store.used() + pending) * page;
  l.free_kv_tokens = std::max<std::int64_t>(0, store.free() - pending) * page;
  return l;
}

void DecodeInstance::kick() {
  if (iterating_ || kick_pending_) return;
  kick_pending_ = true;
  engine_->schedule_after(0, id_, "decode_kick", [this] {
    kick_pending_ = false;
    if (!iterating_) boundary();
  });
}

void DecodeInstance::boundary() {
  const SimTime now = engine_->now();
  const AdmitResult admitted = batcher_.admit();
  for (RequestId rid : admitted.first_admissions) {
    if (hooks_.on_decode_start) hooks_.on_decode_start(rid, now);
  }
  if (batcher_.running().empty()) {
    if (drained() && hooks_.on_drained) hooks_.on_drained();
    return;
  }
  const StepPlan plan = batcher_.plan_step();
  const std::int64_t swap_pages = admitted.swap_in_pages + plan.swap_out_pages;
  const SimTime latency =
      cost_->decode_iter_latency(static_cast<std::int64_t>(plan.batch_size),
                                 plan.kv_tokens) +
      cost_->swap_latency(swap_pages);

  ++stats_.iterations;
  stats_.swap_ins += admitted.swap_ins;
  stats_.swap_outs += plan.victims.size();
  stats_.max_resident_pages =
      std::max(stats_.max_resident_pages, batcher_.store().used());
  if (stats_.first_start < 0) stats_.first_start = now;

  IterationRecord rec;
  rec.start = now;
  rec.latency = latency;
  rec.batch_size = plan.batch_size;
  rec.kv_tokens = plan.kv_tokens;
  rec.admitted = admitted.admitted.size();
  rec.swap_ins = admitted.swap_ins;
  rec.swap_outs = plan.victims.size();
  rec.swap_pages = swap_pages;
  rec.resident_pages = batcher_.store().used();
  current_ = rec;

  iterating_ = true;
  iter_start_ = now;
  engine_->schedule_after(latency, id_, "decode_iter_done",
                          [this] { on_iteration_done(); });
}

void DecodeInstance::on_iteration_done() {
  const SimTime now = engine_->now();
  auto done = batcher_.complete_step();
  iterating_ = false;
  stats_.last_end = now;
  current_.completed = done.size();
  if (keep_records_) records_.push_back(current_);
  if (hooks_.on_busy) hooks_.on_busy(iter_start_, now);
  for (const auto& r : done) {
    ++stats_.completed;
    if (is_heavy_decode(r.req.decode_len)) ++stats_.true_heavy;
    if (r.bucket.heavy()) ++stats_.predicted_heavy;
    if (hooks_.on_complete) hooks_.on_complete(r, now);
  }
  boundary();
}

}  // namespace pdsim::decode
