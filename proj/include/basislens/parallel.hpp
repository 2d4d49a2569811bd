// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace basislens {

// Worker cap: BASISLENS_THREADS when set to a positive integer, otherwise the
// number of logical cores.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Each index is handled by exactly one worker;
// callers write results into per-index slots and reduce in index order, which
// keeps the outcome independent of scheduling. The first exception thrown by
// any body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace basislens
