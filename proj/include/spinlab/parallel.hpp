// Copyright 2026 The spinlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <boost/random/mersenne_twister.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>

namespace spinlab {

/// Engine used for every stochastic routine. Boost's distributions are used
/// on top of it because their output is specified independently of the
/// standard library implementation.
using Rng = boost::random::mt19937_64;

/// Derives an independent stream seed from a base seed and a key path
/// (e.g. {length, realization}). SplitMix64 finalizer applied per key.
std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    return Rng(stream_seed(seed, keys));
}

/// Number of worker threads: SPINLAB_THREADS if set (>= 1), else hardware
/// concurrency. Results never depend on this value.
unsigned worker_count();

/// Runs body(i) for i in [0, n) over a static partition of worker_count()
/// threads. Bodies must write only to slot i of their outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

/// Pairwise summation in a fixed tree order.
double pairwise_sum(std::span<const double> values);

inline double pairwise_mean(std::span<const double> values) {
    return values.empty() ? 0.0 : pairwise_sum(values) / static_cast<double>(values.size());
}

}  // namespace spinlab
