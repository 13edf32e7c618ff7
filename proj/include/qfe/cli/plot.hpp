#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace qfe::cli {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Throws ConfigError when the column is absent.
    std::size_t column(const std::string& name) const;
};

// Splits on commas, honouring double quotes.
CsvTable read_csv_table(const std::filesystem::path& path);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Static line chart; byte-identical output for identical input.
std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Series>& series);

// convergence.csv -> y0_vs_N.svg, decomposition.csv -> compensator_vs_n.svg,
// recovery.csv -> generator_vs_z.svg. Missing CSVs are skipped; a CSV without
// data rows is skipped with a warning. Returns the written file names.
std::vector<std::string> emit_plots(const std::filesystem::path& dir, std::ostream& warn);

}  // namespace qfe::cli
