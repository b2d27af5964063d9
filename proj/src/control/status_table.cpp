#include "pdsim/control/status_table.h"

#include <string>

namespace pdsim::control {

void RequestStatusTable::insert(const Request& req) {
  RequestRow row;
  row.id = req.id;
  row.arrival = req.arrival;
  row.prompt_len = req.prompt_len;
  row.decode_len = req.decode_len;
  row.sla = req.sla;
  if (!rows_.emplace(req.id, row).second) {
    throw InvariantViolation("request " + std::to_string(req.id) +
                             " entered the status table twice");
  }
}

RequestRow& RequestStatusTable::at(RequestId id) {
  auto it = rows_.find(id);
  if (it == rows_.end()) {
    throw InvariantViolation("unknown request " + std::to_string(id));
  }
  return it->second;
}

const RequestRow& RequestStatusTable::at(RequestId id) const {
  return const_cast<RequestStatusTable*>(this)->at(id);
}

void RequestStatusTable::advance(RequestId id, Phase phase) {
  RequestRow& row = at(id);
  if (static_cast<int>(phase) < static_cast<int>(row.phase)) {
    throw InvariantViolation("request " + std::to_string(id) + " moved from " +
                             std::string(to_string(row.phase)) + " back to " +
                             std::string(to_string(phase)));
  }
  row.phase = phase;
}

void RequestStatusTable::complete(RequestId id, SimTime t, std::int32_t swaps) {
  RequestRow& row = at(id);
  if (row.done()) {
    throw InvariantViolation("request " + std::to_string(id) + " completed twice");
  }
  if (row.first_token < 0) {
    throw InvariantViolation("request " + std::to_string(id) +
                             " completed without a first token");
  }
  row.phase = Phase::kDone;
  row.completion = t;
  row.swaps = swaps;
  ++completed_;
}

std::vector<RequestRow> RequestStatusTable::rows() const {
  std::vector<RequestRow> out;
  out.reserve(rows_.size());
  for (const auto& [id, row] : rows_) out.push_back(row);
  return out;
}

}  // namespace pdsim::control
