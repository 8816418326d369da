#include "battsynth/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "battsynth/rng.hpp"

namespace battsynth::eval {

double mae(const std::vector<double>& y, const std::vector<double>& y_hat) {
    if (y.empty()) throw std::invalid_argument("mae: empty input");
    if (y.size() != y_hat.size())
        throw std::invalid_argument("mae: length mismatch " + std::to_string(y.size()) +
                                    " vs " + std::to_string(y_hat.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - y_hat[i]);
    return acc / static_cast<double>(y.size());
}

std::vector<double> baseline_persistence(const data::WindowSample& sample) {
    if (sample.conditioning_len() < 1)
        throw std::invalid_argument("baseline_persistence: empty conditioning range");
    return std::vector<double>(sample.horizon(), sample.z_conditioning.back());
}

double evaluate_test_mae(model::Forecaster& model,
                         const std::vector<data::WindowSample>& test_windows,
                         const std::vector<data::WindowSample>& raw_test,
                         const data::NormalizationSpec& spec, const std::string& variable,
                         std::size_t n_samples, std::uint64_t seed) {
    if (test_windows.empty() || test_windows.size() != raw_test.size())
        throw std::invalid_argument("evaluate_test_mae: test splits misaligned");
    std::vector<double> truth, predicted;
    for (std::size_t i = 0; i < test_windows.size(); ++i) {
        const auto result =
            model.forecast(test_windows[i], n_samples, num::derive_seed(seed, i));
        for (std::size_t s = 0; s < result.point.size(); ++s) {
            predicted.push_back(spec.denormalize(variable, result.point[s]));
            truth.push_back(raw_test[i].z_prediction[s]);
        }
    }
    return mae(truth, predicted);
}

double persistence_test_mae(const std::vector<data::WindowSample>& raw_test) {
    std::vector<double> truth, predicted;
    for (const auto& w : raw_test) {
        const auto fc = baseline_persistence(w);
        predicted.insert(predicted.end(), fc.begin(), fc.end());
        truth.insert(truth.end(), w.z_prediction.begin(), w.z_prediction.end());
    }
    return mae(truth, predicted);
}

HorizonSweepReport horizon_sweep(const std::string& model_name, const ModelFactory& factory,
                                 const CellBuilder& cells,
                                 const std::vector<std::size_t>& horizons,
                                 const std::string& variable,
                                 const data::NormalizationSpec& spec,
                                 const train::OptimizerConfig& opt, std::size_t n_samples) {
    if (horizons.empty()) throw std::invalid_argument("horizon_sweep: no horizons");
    if (!std::is_sorted(horizons.begin(), horizons.end()))
        throw std::invalid_argument("horizon_sweep: horizons must ascend");

    HorizonSweepReport report;
    for (const std::size_t h : horizons) {
        SweepRow row;
        row.model = model_name;
        row.variable = variable;
        row.horizon = h;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            SweepCell cell = cells(h);
            auto model = factory(h, num::derive_seed(opt.seed, h));
            train::OptimizerConfig cell_opt = opt;
            cell_opt.seed = num::derive_seed(opt.seed, 0x900d + h);
            train::fit(*model, cell.windows.train, cell.windows.validation, cell_opt);
            row.mae = evaluate_test_mae(*model, cell.windows.test, cell.raw_test, spec,
                                        variable, n_samples,
                                        num::derive_seed(opt.seed, 0xe7a1 + h));
        } catch (const std::exception& e) {
            row.skipped = true;
            row.reason = e.what();
        }
        row.runtime_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.rows.push_back(std::move(row));
    }
    return report;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RankingTable compare_models(const std::vector<HorizonSweepReport>& reports) {
    if (reports.size() < 2)
        throw std::invalid_argument("compare_models: need at least 2 reports");

    using Key = std::pair<std::string, std::size_t>;  // variable, horizon
    std::vector<Key> grid;
    for (const auto& row : reports.front().rows) grid.emplace_back(row.variable, row.horizon);

    struct Entry {
        std::string model;
        double mae;
    };
    std::map<Key, std::vector<Entry>> cells;
    std::vector<std::string> models;
    for (const auto& report : reports) {
        std::vector<Key> this_grid;
        std::string name;
        for (const auto& row : report.rows) {
            this_grid.emplace_back(row.variable, row.horizon);
            name = row.model;
            if (row.skipped)
                throw std::invalid_argument("compare_models: skipped cell for " + row.model +
                                            "/" + row.variable + "/" +
                                            std::to_string(row.horizon));
            cells[{row.variable, row.horizon}].push_back({row.model, row.mae});
        }
        if (this_grid != grid)
            throw std::invalid_argument("compare_models: reports cover different grids");
        models.push_back(name);
    }

    RankingTable table;
    std::map<std::string, double> rank_sums;
    for (const auto& key : grid) {
        auto entries = cells.at(key);
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            return a.mae != b.mae ? a.mae < b.mae : a.model < b.model;
        });
        // competition ranking: equal MAEs share the better rank
        std::vector<double> ranks(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            ranks[i] = (i > 0 && entries[i].mae == entries[i - 1].mae)
                           ? ranks[i - 1]
                           : static_cast<double>(i + 1);
            rank_sums[entries[i].model] += ranks[i];
        }
        RankingCell cell;
        cell.variable = key.first;
        cell.horizon = key.second;
        cell.winner = entries.front().model;
        cell.tie = entries.size() > 1 && entries[1].mae == entries[0].mae;
        table.any_tie = table.any_tie || cell.tie;
        table.cells.push_back(std::move(cell));
    }
    for (const auto& [name, total] : rank_sums)
        table.mean_ranks.emplace_back(name, total / static_cast<double>(grid.size()));
    std::sort(table.mean_ranks.begin(), table.mean_ranks.end(),
              [](const auto& a, const auto& b) {
                  return a.second != b.second ? a.second < b.second : a.first < b.first;
              });
    return table;
}

void save_sweep_csv(const HorizonSweepReport& report, const std::string& path,
                    bool write_runtime) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_sweep_csv: cannot write \"" + path + "\"");
    out << "model,variable,horizon,mae,runtime_s\n";
    for (const auto& row : report.rows) {
        if (row.skipped) {
            out << "# skipped: " << row.model << " " << row.variable << " " << row.horizon
                << " " << row.reason << "\n";
            out << row.model << "," << row.variable << "," << row.horizon << ",,\n";
            continue;
        }
        out << row.model << "," << row.variable << "," << row.horizon << ","
            << format_double(row.mae) << ",";
        if (write_runtime) out << format_double(row.runtime_s);
        out << "\n";
    }
}

HorizonSweepReport load_sweep_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_sweep_csv: cannot open \"" + path + "\"");
    std::string line;
    if (!std::getline(in, line) || line != "model,variable,horizon,mae,runtime_s")
        throw std::runtime_error("load_sweep_csv: \"" + path + "\" has an unexpected header");
    HorizonSweepReport report;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string model, variable, horizon, mae_s, runtime_s;
        std::getline(ss, model, ',');
        std::getline(ss, variable, ',');
        std::getline(ss, horizon, ',');
        std::getline(ss, mae_s, ',');
        std::getline(ss, runtime_s, ',');
        SweepRow row;
        row.model = model;
        row.variable = variable;
        row.horizon = std::stoul(horizon);
        if (mae_s.empty()) {
            row.skipped = true;
        } else {
            row.mae = std::stod(mae_s);
            if (!runtime_s.empty()) row.runtime_s = std::stod(runtime_s);
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

void save_ranking_csv(const RankingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_ranking_csv: cannot write \"" + path + "\"");
    out << "variable,horizon,winner,tie\n";
    for (const auto& cell : table.cells)
        out << cell.variable << "," << cell.horizon << "," << cell.winner << ","
            << (cell.tie ? 1 : 0) << "\n";
}

void save_mean_ranks_csv(const RankingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_mean_ranks_csv: cannot write \"" + path + "\"");
    out << "model,mean_rank\n";
    for (const auto& [name, rank] : table.mean_ranks)
        out << name << "," << format_double(rank) << "\n";
}

}  // namespace battsynth::eval
