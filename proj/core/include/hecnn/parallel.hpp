#pragma once

#include <cstddef>
#include <functional>

#include "hecnn/ledger.hpp"

namespace hecnn {

// Worker count from HECNN_WORKERS, else the hardware concurrency (>= 1).
int worker_count();

// Runs body(i, ledger) for i in [0, count). Each worker records into a fork
// of `ledger`; forks are merged back after the join, so counts do not depend
// on scheduling. `workers` <= 1 runs inline. The first exception thrown by a
// body is rethrown after all workers stop.
void parallel_for(std::size_t count, OpLedger& ledger,
                  const std::function<void(std::size_t, OpLedger&)>& body, int workers);
void parallel_for(std::size_t count, OpLedger& ledger,
                  const std::function<void(std::size_t, OpLedger&)>& body);

}  // namespace hecnn
