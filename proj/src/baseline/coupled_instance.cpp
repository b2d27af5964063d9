#include "pdsim/baseline/coupled_instance.h"

#include <algorithm>
#include <string>

namespace pdsim::baseline {

void CoupledConfig::validate() const {
  if (prefill_batch < 1) {
    throw ConfigError("coupled.prefill_batch", "prefill_batch must be >= 1");
  }
  if (max_batch && *max_batch < 1) {
    throw ConfigError("coupled.max_batch", "max_batch must be >= 1");
  }
}

namespace {

decode::DecodePolicy greedy_policy(const CoupledConfig& c) {
  decode::DecodePolicy p;
  p.kind = decode::DecodePolicyKind::kGreedy;
  p.max_batch = c.max_batch;
  return p;
}

}  // namespace

CoupledInstance::CoupledInstance(InstanceId id, sim::Engine& engine,
                                 const cost::CostModel& cost, CoupledConfig config,
                                 Hooks hooks)
    : id_(id),
      engine_(&engine),
      cost_(&cost),
      config_(config),
      batcher_(cost, greedy_policy(config)),
      hooks_(std::move(hooks)) {
  config_.validate();
}

void CoupledInstance::enqueue(const Request& req) {
  prompts_.push_back(req);
  queued_tokens_ += req.prompt_len;
  kick();
}

void CoupledInstance::preload(DecodingRequest r) {
  batcher_.add_running(std::move(r));
  kick();
}

bool CoupledInstance::drained() const {
  return !iterating_ && prompts_.empty() && prefilling_.empty() &&
         batcher_.waiting().empty() && batcher_.running().empty();
}

void CoupledInstance::kick() {
  if (iterating_ || kick_pending_) return;
  kick_pending_ = true;
  engine_->schedule_after(0, id_, "coupled_kick", [this] {
    kick_pending_ = false;
    if (!iterating_) boundary();
  });
}

void CoupledInstance::boundary() {
  const SimTime now = engine_->now();
  const decode::AdmitResult resumed = batcher_.admit();
  const decode::StepPlan plan = batcher_.plan_step();
  auto& store = batcher_.store();

  std::int64_t prompt_tokens = 0;
  if (plan.victims.empty() && batcher_.waiting().empty()) {
    const auto cap = config_.max_batch
                         ? static_cast<std::size_t>(*config_.max_batch)
                         : SIZE_MAX;
    while (!prompts_.empty() &&
           prefilling_.size() < static_cast<std::size_t>(config_.prefill_batch) &&
           batcher_.running().size() + prefilling_.size() < cap) {
      const Request& req = prompts_.front();
      const std::int64_t need = cost_->pages_needed(req.prompt_len + 1);
      if (need > store.capacity()) {
        throw InvariantViolation("request " + std::to_string(req.id) +
                                 " needs more KV pages than the instance holds");
      }
      if (store.free() < need) break;
      store.reserve_to(req.id, cost_->pages_needed(req.prompt_len));
      prompt_tokens += req.prompt_len;
      queued_tokens_ -= req.prompt_len;
      if (hooks_.on_prefill_start) hooks_.on_prefill_start(req.id, now);
      prefilling_.push_back(req);
      prompts_.pop_front();
    }
  }

  if (plan.batch_size == 0 && prefilling_.empty()) return;

  const std::int64_t swap_pages = resumed.swap_in_pages + plan.swap_out_pages;
  const SimTime latency =
      cost_->mixed_iter_latency(prompt_tokens,
                                static_cast<std::int64_t>(prefilling_.size()),
                                static_cast<std::int64_t>(plan.batch_size),
                                plan.kv_tokens) +
      cost_->swap_latency(swap_pages);

  ++stats_.iterations;
  if (!prefilling_.empty()) ++stats_.mixed_iterations;
  stats_.swap_ins += resumed.swap_ins;
  stats_.swap_outs += plan.victims.size();
  stats_.max_resident_pages = std::max(stats_.max_resident_pages, store.used());
  if (stats_.first_start < 0) stats_.first_start = now;

  IterationRecord rec;
  rec.start = now;
  rec.latency = latency;
  rec.batch_size = plan.batch_size;
  rec.kv_tokens = plan.kv_tokens;
  rec.admitted = resumed.admitted.size();
  rec.swap_ins = resumed.swap_ins;
  rec.swap_outs = plan.victims.size();
  rec.swap_pages = swap_pages;
  rec.resident_pages = store.used();
  rec.prefill_tokens = prompt_tokens;
  rec.prefill_requests = prefilling_.size();
  current_ = rec;

  iterating_ = true;
  iter_start_ = now;
  engine_->schedule_after(latency, id_, "coupled_iter_done",
                          [this] { on_iteration_done(); });
}

void CoupledInstance::on_iteration_done() {
  const SimTime now = engine_->now();
  auto done = current_.batch_size > 0 ? batcher_.complete_step()
                                      : std::vector<DecodingRequest>{};
  iterating_ = false;
  stats_.last_end = now;
  current_.completed = done.size();
  if (keep_records_) records_.push_back(current_);
  if (hooks_.on_busy) hooks_.on_busy(iter_start_, now);
  for (const auto& r : done) {
    ++stats_.completed;
    if (hooks_.on_complete) hooks_.on_complete(r, now);
  }
  auto prefilled = std::move(prefilling_);
  prefilling_.clear();
  for (const auto& req : prefilled) {
    if (hooks_.on_first_token) hooks_.on_first_token(req.id, now);
    DecodingRequest r;
    r.req = req;
    batcher_.add_running(std::move(r));
  }
  boundary();
}

}  // namespace pdsim::baseline
