#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qtrans/errors.hpp"
#include "qtrans/solver.hpp"

// Field and report emission: CSV solution fields (reloadable) and JSON
// summaries. UTF-8, LF line endings, full-precision floats so identical runs
// produce identical bytes.

namespace qtrans {

namespace io {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace io

/// One row per grid node: indices, position, value, gradient, admissibility
/// margin, residual.
inline void write_field_csv(const std::string& path, const PolarGrid& grid,
                            const Eigen::VectorXd& u, const Eigen::VectorXd& res,
                            const std::vector<double>& lambda_min_w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NumericError("write_field_csv: cannot open " + path);
    const FieldDerivatives d = grid.derivatives(u);
    out << "r_index,theta_index,x,y,u,u_x,u_y,lambda_min_w,residual\n";
    const int nt = grid.dims().ntheta;
    for (int id = 0; id < grid.node_count(); ++id) {
        const int ri = (id == 0) ? 0 : (id - 1) / nt + 1;
        const int ti = (id == 0) ? 0 : (id - 1) % nt;
        const Eigen::Vector2d x = grid.position(id);
        out << ri << ',' << ti << ',' << io::fmt(x[0]) << ',' << io::fmt(x[1]) << ','
            << io::fmt(u[id]) << ',' << io::fmt(d.grad[static_cast<size_t>(id)][0]) << ','
            << io::fmt(d.grad[static_cast<size_t>(id)][1]) << ','
            << io::fmt(lambda_min_w[static_cast<size_t>(id)]) << ',' << io::fmt(res[id]) << '\n';
    }
}

/// Reads the `u` column of a field CSV back into a nodal vector; validates
/// the node count against the grid.
[[nodiscard]] inline Eigen::VectorXd read_field_csv(const std::string& path,
                                                    const PolarGrid& grid) {
    std::ifstream in(path);
    if (!in) throw NumericError("read_field_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw NumericError("read_field_csv: empty file");
    Eigen::VectorXd u(grid.node_count());
    int count = 0;
    const int nt = grid.dims().ntheta;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        if (cols.size() < 5) throw NumericError("read_field_csv: malformed row");
        const int ri = std::stoi(cols[0]);
        const int ti = std::stoi(cols[1]);
        const int id = (ri == 0) ? 0 : 1 + (ri - 1) * nt + ti;
        if (id < 0 || id >= grid.node_count())
            throw NumericError("read_field_csv: node index out of range");
        u[id] = std::stod(cols[4]);
        ++count;
    }
    if (count < grid.node_count())
        throw NumericError("read_field_csv: field does not cover the grid");
    return u;
}

/// Per-node admissibility margins of a field (smallest eigenvalue of w).
[[nodiscard]] inline std::vector<double> lambda_min_field(const PolarGrid& grid,
                                                          const ProblemSpec& spec,
                                                          const Eigen::VectorXd& u) {
    const FieldDerivatives d = grid.derivatives(u);
    std::vector<double> out(static_cast<size_t>(grid.node_count()));
    for (int id = 0; id < grid.node_count(); ++id) {
        const Eigen::MatrixXd a =
            a_matrix(spec.cost, grid.position(id), d.grad[static_cast<size_t>(id)]);
        const Eigen::Matrix2d w = 0.5 * (d.hess[static_cast<size_t>(id)] +
                                         d.hess[static_cast<size_t>(id)].transpose()) -
                                  Eigen::Matrix2d(0.5 * (a + a.transpose()));
        out[static_cast<size_t>(id)] = detail::sym2_eigenvalues(w)[1];
    }
    return out;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NumericError("write_json: cannot open " + path);
    out << j.dump(2) << '\n';
}

} // namespace qtrans
