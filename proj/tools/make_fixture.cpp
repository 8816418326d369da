#include <cstddef>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "battsynth/fixture.hpp"
#include "battsynth/series.hpp"

int main(int argc, char** argv) {
    CLI::App app{"regenerate the bundled sine fixture dataset"};
    std::string out = "data/sine_fixture.csv";
    std::size_t rows = 2000;
    std::size_t cycle_len = 400;
    app.add_option("--out", out, "output CSV path")->capture_default_str();
    app.add_option("--rows", rows, "number of rows")->capture_default_str();
    app.add_option("--cycle-len", cycle_len, "rows per charge/discharge cycle")
        ->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    battsynth::data::save_csv(battsynth::data::make_sine_fixture(rows, cycle_len), out);
    std::cout << "wrote " << rows << " rows to " << out << "\n";
    return 0;
}
