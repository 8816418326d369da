#pragma once

#include <cstddef>

#include "battsynth/series.hpp"

namespace battsynth::data {

/// Deterministic in-repo benchmark series: a sinusoidal voltage profile with
/// a slow linear sag plus a small fast ripple, an exponentially fading
/// capacity with its own ripple, and per-cycle current / slowly swinging
/// temperature as auxiliary channels. No randomness — every call with the
/// same arguments reproduces the same table, and the committed
/// data/sine_fixture.csv is exactly make_sine_fixture(2000, 400).
SeriesTable make_sine_fixture(std::size_t n_rows = 2000, std::size_t cycle_len = 400);

}  // namespace battsynth::data
