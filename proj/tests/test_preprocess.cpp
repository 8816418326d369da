#include <cmath>
#include <stdexcept>

#include "battsynth/fixture.hpp"
#include "battsynth/preprocess.hpp"
#include "doctest.h"

using namespace battsynth::data;

namespace {

SeriesTable ramp_table(std::size_t n, std::size_t cycle_len = 0) {
    SeriesTable t;
    for (std::size_t i = 0; i < n; ++i) {
        t.columns["time_s"].push_back(static_cast<double>(i));
        t.columns["voltage_V"].push_back(static_cast<double>(i) * 0.01 + 3.0);
    }
    if (cycle_len) {
        std::vector<int> cyc;
        for (std::size_t i = 0; i < n; ++i) cyc.push_back(static_cast<int>(i / cycle_len));
        t.cycle_id = cyc;
    }
    return t;
}

}  // namespace

TEST_CASE("minmax maps fitted min/max to 0 and 1") {
    SeriesTable t;
    t.columns["time_s"] = {0, 1, 2};
    t.columns["voltage_V"] = {2, 4, 6};
    auto [norm, spec] = normalize(t, NormalizationKind::minmax);
    CHECK(norm.column("voltage_V")[0] == doctest::Approx(0.0));
    CHECK(norm.column("voltage_V")[1] == doctest::Approx(0.5));
    CHECK(norm.column("voltage_V")[2] == doctest::Approx(1.0));
    // time axis passes through untouched
    CHECK(norm.column("time_s")[2] == doctest::Approx(2.0));
    CHECK_FALSE(spec.has("time_s"));
}

TEST_CASE("zscore maps to mean 0 std 1") {
    SeriesTable t;
    t.columns["time_s"] = {0, 1, 2};
    t.columns["capacity_Ah"] = {2, 4, 6};
    auto [norm, spec] = normalize(t, NormalizationKind::zscore);
    const auto& v = norm.column("capacity_Ah");
    const double mean = (v[0] + v[1] + v[2]) / 3.0;
    const double var = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 3.0 - mean * mean;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0));
}

TEST_CASE("denormalize inverts normalize within 1e-9") {
    const SeriesTable t = make_sine_fixture(256, 64);
    for (auto kind : {NormalizationKind::minmax, NormalizationKind::zscore}) {
        auto [norm, spec] = normalize(t, kind);
        const SeriesTable back = denormalize_table(norm, spec);
        for (const auto& [name, values] : t.columns) {
            if (name == "time_s") continue;
            for (std::size_t i = 0; i < values.size(); ++i)
                CHECK(std::abs(back.column(name)[i] - values[i]) < 1e-9);
        }
    }
}

TEST_CASE("zscore of a constant column is an error pointing at minmax") {
    SeriesTable t;
    t.columns["time_s"] = {0, 1, 2};
    t.columns["current_A"] = {1, 1, 1};
    CHECK_THROWS_WITH_AS(normalize(t, NormalizationKind::zscore),
                         doctest::Contains("minmax"), std::invalid_argument);
}

TEST_CASE("constant column under minmax pins to 0 and recovers the constant") {
    SeriesTable t;
    t.columns["time_s"] = {0, 1, 2};
    t.columns["current_A"] = {1.5, 1.5, 1.5};
    auto [norm, spec] = normalize(t, NormalizationKind::minmax);
    for (double v : norm.column("current_A")) CHECK(v == 0.0);
    const SeriesTable back = denormalize_table(norm, spec);
    for (double v : back.column("current_A")) CHECK(v == doctest::Approx(1.5));
}

TEST_CASE("statistics come from the fit rows only") {
    SeriesTable t = ramp_table(100);
    const NormalizationSpec spec = fit_normalization(t, NormalizationKind::minmax, 80);
    // mutating rows past the fit range must not change the spec
    SeriesTable mutated = t;
    for (std::size_t i = 80; i < 100; ++i) mutated.columns["voltage_V"][i] = 1e6;
    const NormalizationSpec spec2 = fit_normalization(mutated, NormalizationKind::minmax, 80);
    CHECK(spec.columns.at("voltage_V").lo == spec2.columns.at("voltage_V").lo);
    CHECK(spec.columns.at("voltage_V").span == spec2.columns.at("voltage_V").span);
    // fitted max maps to 1; later larger values exceed 1
    const SeriesTable norm = apply_normalization(t, spec);
    CHECK(norm.column("voltage_V")[79] == doctest::Approx(1.0));
    CHECK(norm.column("voltage_V")[99] > 1.0);
}

TEST_CASE("step index covariate is a [0,1] ramp") {
    const SeriesTable t = ramp_table(3);
    const CovariateMatrix m = time_covariates(t);
    CHECK(m.dim == 1);  // no cycles, no aux channels
    CHECK(m.at(0, 0) == doctest::Approx(0.0));
    CHECK(m.at(1, 0) == doctest::Approx(0.5));
    CHECK(m.at(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("cycle covariate distinguishes two equal cycles") {
    const SeriesTable t = ramp_table(8, 4);
    const CovariateMatrix m = time_covariates(t);
    REQUIRE(m.dim == 2);
    for (std::size_t i = 0; i < 4; ++i) CHECK(m.at(i, 1) == doctest::Approx(0.0));
    for (std::size_t i = 4; i < 8; ++i) CHECK(m.at(i, 1) == doctest::Approx(1.0));
}

TEST_CASE("covariate dimension counts index, cycle and aux channels") {
    const SeriesTable t = make_sine_fixture(32, 8);  // cycles + current + temperature
    const CovariateMatrix m = time_covariates(t);
    CHECK(m.dim == 4);
    REQUIRE(m.names.size() == 4);
    CHECK(m.names[0] == "step_index");
    CHECK(m.names[1] == "cycle_index");
    CHECK(m.names[2] == "current_A");
    CHECK(m.names[3] == "temperature_C");
}

TEST_CASE("window count follows the sliding formula") {
    CHECK(make_windows(ramp_table(10), "voltage_V", 6, 3, 1).size() == 2);
    CHECK(make_windows(ramp_table(5), "voltage_V", 6, 3, 1).empty());
    const auto w = make_windows(ramp_table(12), "voltage_V", 6, 3, 2);
    REQUIRE(w.size() == 2);
    CHECK(w[0].start_row == 0);
    CHECK(w[1].start_row == 2);
}

TEST_CASE("windows carry the right slices") {
    const SeriesTable t = ramp_table(10);
    const auto w = make_windows(t, "voltage_V", 6, 3, 1);
    REQUIRE(w.size() == 2);
    const auto& v = t.column("voltage_V");
    for (std::size_t k = 0; k < w.size(); ++k) {
        CHECK(w[k].conditioning_len() == 6);
        CHECK(w[k].horizon() == 3);
        CHECK(w[k].total_len() == 9);
        CHECK(w[k].series_index == k);
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(w[k].z_conditioning[i] == v[w[k].start_row + i]);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(w[k].z_prediction[i] == v[w[k].start_row + 6 + i]);
        // covariate block aligns with the same rows
        const CovariateMatrix m = time_covariates(t);
        CHECK(w[k].cov_dim == m.dim);
        for (std::size_t s = 0; s < 9; ++s)
            CHECK(w[k].covariate(s, 0) == m.at(w[k].start_row + s, 0));
    }
}

TEST_CASE("windows never span cycle boundaries") {
    const SeriesTable t = ramp_table(20, 10);  // two cycles of 10
    const auto w = make_windows(t, "voltage_V", 6, 3, 1);
    REQUIRE(w.size() == 4);  // 2 per cycle
    CHECK(w[0].start_row == 0);
    CHECK(w[1].start_row == 1);
    CHECK(w[2].start_row == 10);
    CHECK(w[3].start_row == 11);
    for (const auto& win : w) {
        const std::size_t first_cycle = win.start_row / 10;
        const std::size_t last_cycle = (win.start_row + win.total_len() - 1) / 10;
        CHECK(first_cycle == last_cycle);
    }
}

TEST_CASE("make_windows validates its arguments") {
    CHECK_THROWS_AS(make_windows(ramp_table(10), "voltage_V", 0, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_windows(ramp_table(10), "voltage_V", 6, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_windows(ramp_table(10), "voltage_V", 6, 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_windows(ramp_table(10), "absent", 6, 3, 1), std::invalid_argument);
}

TEST_CASE("split arithmetic matches the documented examples") {
    const auto w10 = make_windows(ramp_table(18), "voltage_V", 6, 3, 1);
    REQUIRE(w10.size() == 10);
    const SplitWindows s = split(w10, 0.8, 7);
    CHECK(s.train.size() == 8);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 1);

    const auto w3 = make_windows(ramp_table(11), "voltage_V", 6, 3, 1);
    REQUIRE(w3.size() == 3);
    const SplitWindows s3 = split(w3, 0.34, 7);
    CHECK(s3.train.size() == 1);
    CHECK(s3.validation.size() == 1);
    CHECK(s3.test.size() == 1);

    const auto w2 = make_windows(ramp_table(10), "voltage_V", 6, 3, 1);
    REQUIRE(w2.size() == 2);
    CHECK_THROWS_WITH_AS(split(w2, 0.8, 7), doctest::Contains("too few"),
                         std::invalid_argument);
}

TEST_CASE("split is chronological: validation and test are strictly later") {
    const auto w = make_windows(ramp_table(40), "voltage_V", 6, 3, 1);
    const SplitWindows s = split(w, 0.7, 99);
    std::size_t train_max = 0;
    for (const auto& win : s.train) train_max = std::max(train_max, win.start_row);
    std::size_t val_max = 0;
    for (const auto& win : s.validation) {
        CHECK(win.start_row > train_max);
        val_max = std::max(val_max, win.start_row);
    }
    for (const auto& win : s.test) CHECK(win.start_row > val_max);
}

TEST_CASE("tumbling windows keep split ranges disjoint") {
    // stride == total length, so prediction ranges cannot leak into the
    // conditioning ranges of a later split
    const auto w = make_windows(ramp_table(100), "voltage_V", 6, 4, 10);
    REQUIRE(w.size() == 10);
    const SplitWindows s = split(w, 0.8, 1);
    auto pred_range = [](const WindowSample& win) {
        return std::pair<std::size_t, std::size_t>{win.start_row + win.conditioning_len(),
                                                   win.start_row + win.total_len()};
    };
    auto cond_range = [](const WindowSample& win) {
        return std::pair<std::size_t, std::size_t>{win.start_row,
                                                   win.start_row + win.conditioning_len()};
    };
    auto overlaps = [](std::pair<std::size_t, std::size_t> a,
                       std::pair<std::size_t, std::size_t> b) {
        return a.first < b.second && b.first < a.second;
    };
    for (const auto& a : s.train) {
        for (const auto& b : s.validation) CHECK_FALSE(overlaps(pred_range(a), cond_range(b)));
        for (const auto& b : s.test) CHECK_FALSE(overlaps(pred_range(a), cond_range(b)));
    }
    for (const auto& a : s.validation)
        for (const auto& b : s.test) CHECK_FALSE(overlaps(pred_range(a), cond_range(b)));
}

TEST_CASE("split shuffling is deterministic per seed") {
    const auto w = make_windows(ramp_table(60), "voltage_V", 6, 3, 1);
    const SplitWindows a = split(w, 0.8, 5);
    const SplitWindows b = split(w, 0.8, 5);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i)
        CHECK(a.train[i].start_row == b.train[i].start_row);

    const SplitWindows c = split(w, 0.8, 6);
    bool any_different = false;
    for (std::size_t i = 0; i < a.train.size(); ++i)
        any_different = any_different || a.train[i].start_row != c.train[i].start_row;
    CHECK(any_different);
}

TEST_CASE("split rejects out-of-range fractions") {
    const auto w = make_windows(ramp_table(40), "voltage_V", 6, 3, 1);
    CHECK_THROWS_AS(split(w, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(split(w, 1.0, 1), std::invalid_argument);
}
