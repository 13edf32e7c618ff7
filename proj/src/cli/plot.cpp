#include "qfe/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "qfe/core/errors.hpp"

namespace qfe::cli {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cell += '"';
                ++k;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cell += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += ch;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

bool to_number(const std::string& s, double& out) {
    if (s.empty()) {
        return false;
    }
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw ConfigError("CSV schema mismatch: missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    CsvTable t;
    std::string line;
    if (std::getline(in, line)) {
        t.header = split_csv_line(line);
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size()) {
            throw ConfigError("CSV schema mismatch in " + path.filename().string() + ": row has " +
                              std::to_string(cells.size()) + " cells, header has " +
                              std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Series>& series) {
    constexpr double W = 640, H = 420, L = 70, R = 150, Tm = 40, B = 50;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, s.y[k]);
            y1 = std::max(y1, s.y[k]);
        }
    }
    if (!(x0 <= x1)) {
        x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    }
    if (x1 - x0 < 1e-12) {
        x0 -= 0.5, x1 += 0.5;
    }
    if (y1 - y0 < 1e-12 * std::max(1.0, std::abs(y1))) {
        const double pad = std::max(0.5 * std::abs(y1), 0.5);
        y0 -= pad, y1 += pad;
    } else {
        const double pad = 0.05 * (y1 - y0);
        y0 -= pad, y1 += pad;
    }
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - Tm - B); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
      << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << fmt(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
    o << "<rect x=\"" << fmt(L) << "\" y=\"" << fmt(Tm) << "\" width=\"" << fmt(W - L - R) << "\" height=\""
      << fmt(H - Tm - B) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0;
        const double yv = y0 + (y1 - y0) * k / 4.0;
        o << "<line x1=\"" << fmt(px(xv)) << "\" y1=\"" << fmt(H - B) << "\" x2=\"" << fmt(px(xv)) << "\" y2=\""
          << fmt(H - B + 5) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << fmt(H - B + 18) << "\" text-anchor=\"middle\">"
          << tick_label(xv) << "</text>\n";
        o << "<line x1=\"" << fmt(L - 5) << "\" y1=\"" << fmt(py(yv)) << "\" x2=\"" << fmt(L) << "\" y2=\""
          << fmt(py(yv)) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << fmt(L - 8) << "\" y=\"" << fmt(py(yv) + 4) << "\" text-anchor=\"end\">"
          << tick_label(yv) << "</text>\n";
    }
    o << "<text x=\"" << fmt(L + (W - L - R) / 2) << "\" y=\"" << fmt(H - 12) << "\" text-anchor=\"middle\">"
      << escape(xlabel) << "</text>\n";
    o << "<text x=\"16\" y=\"" << fmt(Tm + (H - Tm - B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << fmt(Tm + (H - Tm - B) / 2) << ")\">" << escape(ylabel) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % std::size(palette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < series[s].x.size(); ++k) {
            o << (k ? " " : "") << fmt(px(series[s].x[k])) << ',' << fmt(py(series[s].y[k]));
        }
        o << "\"/>\n";
        for (std::size_t k = 0; k < series[s].x.size(); ++k) {
            o << "<circle cx=\"" << fmt(px(series[s].x[k])) << "\" cy=\"" << fmt(py(series[s].y[k]))
              << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        }
        const double ly = Tm + 14 + 16 * static_cast<double>(s);
        o << "<line x1=\"" << fmt(W - R + 12) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(W - R + 32)
          << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << fmt(W - R + 36) << "\" y=\"" << fmt(ly) << "\">" << escape(series[s].label)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::vector<std::string> emit_plots(const std::filesystem::path& dir, std::ostream& warn) {
    std::vector<std::string> written;
    auto load = [&](const char* name, CsvTable& t) {
        const auto p = dir / name;
        if (!std::filesystem::exists(p)) {
            return false;
        }
        t = read_csv_table(p);
        if (t.rows.empty()) {
            warn << "warning: " << name << " has no data rows; plot skipped\n";
            return false;
        }
        return true;
    };

    CsvTable t;
    if (load("convergence.csv", t)) {
        const std::size_t cn = t.column("N"), cy = t.column("y0"), co = t.column("oracle_y0");
        Series solver{"solver Y_0", {}, {}}, oracle{"oracle Y_0", {}, {}};
        for (const auto& r : t.rows) {
            double n, y, o;
            if (to_number(r[cn], n) && to_number(r[cy], y)) {
                solver.x.push_back(n);
                solver.y.push_back(y);
                if (to_number(r[co], o)) {
                    oracle.x.push_back(n);
                    oracle.y.push_back(o);
                }
            }
        }
        std::vector<Series> s{solver};
        if (!oracle.x.empty()) {
            s.push_back(oracle);
        }
        write_file(dir / "y0_vs_N.svg", render_svg("Y_0 against grid size", "N", "Y_0", s));
        written.push_back("y0_vs_N.svg");
    }
    if (load("decomposition.csv", t)) {
        const std::size_t cn = t.column("n"), ca = t.column("mean_A_T");
        Series levels{"mean A^n_T", {}, {}}, limit{"extrapolated", {}, {}};
        double last_x = 0.0, lim = std::numeric_limits<double>::quiet_NaN();
        for (const auto& r : t.rows) {
            double n, a;
            if (to_number(r[cn], n) && n > 0 && to_number(r[ca], a)) {
                levels.x.push_back(std::log2(n));
                levels.y.push_back(a);
                last_x = std::max(last_x, std::log2(n));
            } else if (r[cn] == "limit") {
                to_number(r[ca], lim);
            }
        }
        std::vector<Series> s{levels};
        if (std::isfinite(lim) && !levels.x.empty()) {
            limit.x = {levels.x.front(), last_x};
            limit.y = {lim, lim};
            s.push_back(limit);
        }
        write_file(dir / "compensator_vs_n.svg", render_svg("Compensator at T against penalization level",
                                                            "log2 n", "A^n_T", s));
        written.push_back("compensator_vs_n.svg");
    }
    if (load("recovery.csv", t)) {
        const std::size_t ct = t.column("t"), cz = t.column("z1"), cg = t.column("g");
        std::vector<std::size_t> others;
        for (std::size_t k = 2; k < t.header.size() && t.header[k] != "g"; ++k) {
            others.push_back(k);
        }
        std::map<double, Series> by_time;
        for (const auto& r : t.rows) {
            double tv, z, g, o;
            bool on_axis = true;
            for (std::size_t k : others) {
                on_axis = on_axis && to_number(r[k], o) && std::abs(o) < 1e-12;
            }
            if (on_axis && to_number(r[ct], tv) && to_number(r[cz], z) && to_number(r[cg], g)) {
                auto& s = by_time[tv];
                s.label = "t = " + tick_label(tv);
                s.x.push_back(z);
                s.y.push_back(g);
            }
        }
        std::vector<Series> s;
        for (auto& [tv, series] : by_time) {
            s.push_back(std::move(series));
        }
        write_file(dir / "generator_vs_z.svg", render_svg("Recovered generator", "z1", "g(t, z)", s));
        written.push_back("generator_vs_z.svg");
    }
    return written;
}

}  // namespace qfe::cli
