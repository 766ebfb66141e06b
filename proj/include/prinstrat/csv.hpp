#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prinstrat/model.hpp"

namespace prinstrat {

/// Dataset CSV schema: headers required, column order free; columns
/// y, t, s, x1..xp, with optional truth columns s0, s1.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const Dataset& data, const std::string& path);

/// One row per retained draw, named header columns, full double precision.
void write_table_csv(const std::vector<std::string>& names, const Eigen::MatrixXd& rows,
                     const std::string& path);
/// Reads back a numeric table written by write_table_csv.
std::pair<std::vector<std::string>, Eigen::MatrixXd> read_table_csv(const std::string& path);

/// Shortest-exact formatting used for all CSV output (%.17g).
std::string format_double(double v);

}  // namespace prinstrat
