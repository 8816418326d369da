#include "battsynth/fixture.hpp"

#include <cmath>
#include <stdexcept>

namespace battsynth::data {

SeriesTable make_sine_fixture(std::size_t n_rows, std::size_t cycle_len) {
    if (n_rows < 2) throw std::invalid_argument("make_sine_fixture: need at least 2 rows");
    if (cycle_len == 0) throw std::invalid_argument("make_sine_fixture: cycle_len must be >= 1");

    constexpr double two_pi = 6.283185307179586;
    SeriesTable t;
    t.source = "sine_fixture";
    auto& time = t.columns["time_s"];
    auto& voltage = t.columns["voltage_V"];
    auto& current = t.columns["current_A"];
    auto& temperature = t.columns["temperature_C"];
    auto& capacity = t.columns["capacity_Ah"];
    std::vector<int> cycles;

    const double n = static_cast<double>(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
        const double x = static_cast<double>(i);
        const int cycle = static_cast<int>(i / cycle_len);
        time.push_back(x);
        voltage.push_back(3.7 + 0.25 * std::sin(two_pi * x / 128.0) - 0.10 * x / n +
                          0.01 * std::sin(two_pi * x / 17.0));
        current.push_back(cycle % 2 == 0 ? 1.2 : -1.0);
        temperature.push_back(25.0 + 2.0 * std::sin(two_pi * x / static_cast<double>(cycle_len)));
        capacity.push_back(2.0 * std::exp(-x / 3000.0) + 0.05 * std::sin(two_pi * x / 96.0));
        cycles.push_back(cycle);
    }
    t.cycle_id = std::move(cycles);
    t.validate();
    return t;
}

}  // namespace battsynth::data
