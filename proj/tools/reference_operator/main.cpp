// Reference implementation of the external-operator protocol: evaluates a
// built-in operator on the request it reads from stdin.
//   qfe_reference_operator SPEC   (SPEC as accepted by make_operator)
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "qfe/axioms/operator.hpp"

namespace {

std::vector<std::vector<std::string>> read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: qfe_reference_operator SPEC < request.json\n";
        return 2;
    }
    try {
        const auto op = qfe::make_operator(argv[1]);
        const auto req = nlohmann::json::parse(std::cin);
        if (req.at("protocol") != "qfe-external/1") {
            throw std::runtime_error("unsupported protocol");
        }
        std::ifstream ens_in(req.at("ensemble").get<std::string>());
        if (!ens_in) {
            throw std::runtime_error("cannot open ensemble file");
        }
        const qfe::PathEnsemble ens = qfe::PathEnsemble::read_csv(ens_in);
        const std::size_t M = ens.paths();
        const std::size_t N = ens.steps();
        const double horizon = req.at("horizon").get<double>();
        if (M != req.at("paths").get<std::size_t>() || N != req.at("grid_steps").get<std::size_t>() ||
            ens.grid().horizon() != horizon) {
            throw std::runtime_error("ensemble does not match the request");
        }

        qfe::TerminalCondition xi;
        xi.bound = req.at("bound").get<double>();
        xi.z = req.at("z").get<std::vector<double>>();
        xi.base.resize(M);
        xi.start.resize(M);
        xi.end.resize(M);
        xi.known_from.resize(M);
        const auto rows = read_rows(req.at("payoff").get<std::string>());
        if (rows.size() != M) {
            throw std::runtime_error("payoff file has the wrong number of rows");
        }
        for (const auto& r : rows) {
            const std::size_t m = std::stoul(r.at(0));
            xi.base.at(m) = std::stod(r.at(1));
            xi.start.at(m) = std::stoul(r.at(2));
            xi.end.at(m) = std::stoul(r.at(3));
            xi.known_from.at(m) = std::stoul(r.at(4));
        }

        const auto& b = req.at("basis");
        const qfe::RegressionBasis basis = b.at("kind") == "polynomial"
                                               ? qfe::RegressionBasis::polynomial(b.at("degree").get<std::size_t>())
                                               : qfe::RegressionBasis::piecewise_local(b.at("bins").get<std::size_t>());
        const qfe::Regressor reg(ens, basis);
        const qfe::Field y = op->evaluate_all(xi, reg);
        std::string line;
        char buf[32];
        for (std::size_t step : req.at("steps").get<std::vector<std::size_t>>()) {
            if (step > N) {
                throw std::runtime_error("requested step past the horizon");
            }
            line.clear();
            for (std::size_t m = 0; m < M; ++m) {
                std::snprintf(buf, sizeof buf, "%.17g", y(step, m));
                if (m > 0) {
                    line += ',';
                }
                line += buf;
            }
            std::cout << line << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "qfe_reference_operator: " << e.what() << '\n';
        return 1;
    }
}
