#include "prinstrat/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace prinstrat {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& tok, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError("csv: cannot parse number '" + tok + "' in " + context);
  }
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset file is empty: " + path);

  const std::vector<std::string> headers = split_line(line);
  int col_y = -1, col_t = -1, col_s = -1, col_s0 = -1, col_s1 = -1;
  std::map<int, int> xcols;  // covariate index (1-based) -> column
  for (int c = 0; c < static_cast<int>(headers.size()); ++c) {
    const std::string h = trim(headers[static_cast<std::size_t>(c)]);
    if (h == "y") col_y = c;
    else if (h == "t") col_t = c;
    else if (h == "s") col_s = c;
    else if (h == "s0") col_s0 = c;
    else if (h == "s1") col_s1 = c;
    else if (h.size() > 1 && h[0] == 'x') {
      int k = 0;
      try {
        k = std::stoi(h.substr(1));
      } catch (const std::exception&) {
        throw DataError("dataset schema mismatch: unexpected column '" + h + "'");
      }
      if (k < 1 || xcols.count(k)) throw DataError("dataset schema mismatch: column '" + h + "'");
      xcols[k] = c;
    } else {
      throw DataError("dataset schema mismatch: unexpected column '" + h + "'");
    }
  }
  if (col_y < 0) throw DataError("dataset schema mismatch: missing column 'y'");
  if (col_t < 0) throw DataError("dataset schema mismatch: missing column 't'");
  if (col_s < 0) throw DataError("dataset schema mismatch: missing column 's'");
  const int p = static_cast<int>(xcols.size());
  for (int k = 1; k <= p; ++k)
    if (!xcols.count(k))
      throw DataError("dataset schema mismatch: covariate columns must be x1..x" +
                      std::to_string(p));
  if ((col_s0 >= 0) != (col_s1 >= 0))
    throw DataError("dataset schema mismatch: s0 and s1 must appear together");

  std::vector<double> vy, vs, vs0, vs1;
  std::vector<int> vt;
  std::vector<double> vx;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto toks = split_line(line);
    if (toks.size() != headers.size())
      throw DataError("csv: row " + std::to_string(row) + " has " +
                      std::to_string(toks.size()) + " fields, expected " +
                      std::to_string(headers.size()));
    const std::string ctx = "row " + std::to_string(row);
    vy.push_back(parse_double(toks[static_cast<std::size_t>(col_y)], ctx));
    const double tv = parse_double(toks[static_cast<std::size_t>(col_t)], ctx);
    if (tv != 0.0 && tv != 1.0)
      throw DataError("csv: t must be 0/1 at " + ctx);
    vt.push_back(static_cast<int>(tv));
    vs.push_back(parse_double(toks[static_cast<std::size_t>(col_s)], ctx));
    for (int k = 1; k <= p; ++k)
      vx.push_back(parse_double(toks[static_cast<std::size_t>(xcols[k])], ctx));
    if (col_s0 >= 0) {
      vs0.push_back(parse_double(toks[static_cast<std::size_t>(col_s0)], ctx));
      vs1.push_back(parse_double(toks[static_cast<std::size_t>(col_s1)], ctx));
    }
  }
  const int n = static_cast<int>(vy.size());
  if (n == 0) throw DataError("dataset has no rows: " + path);

  Dataset d;
  d.y = Eigen::Map<Eigen::VectorXd>(vy.data(), n);
  d.t = Eigen::Map<Eigen::VectorXi>(vt.data(), n);
  d.s = Eigen::Map<Eigen::VectorXd>(vs.data(), n);
  d.x.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) d.x(i, j) = vx[static_cast<std::size_t>(i * p + j)];
  if (!vs0.empty()) {
    d.s0 = Eigen::Map<Eigen::VectorXd>(vs0.data(), n);
    d.s1 = Eigen::Map<Eigen::VectorXd>(vs1.data(), n);
  }
  d.validate();
  return d;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  out << "y,t,s";
  for (int j = 1; j <= data.p(); ++j) out << ",x" << j;
  if (data.has_truth()) out << ",s0,s1";
  out << "\n";
  for (int i = 0; i < data.n(); ++i) {
    out << format_double(data.y(i)) << ',' << data.t(i) << ',' << format_double(data.s(i));
    for (int j = 0; j < data.p(); ++j) out << ',' << format_double(data.x(i, j));
    if (data.has_truth())
      out << ',' << format_double(data.s0(i)) << ',' << format_double(data.s1(i));
    out << "\n";
  }
  if (!out) throw DataError("failed writing dataset file: " + path);
}

void write_table_csv(const std::vector<std::string>& names, const Eigen::MatrixXd& rows,
                     const std::string& path) {
  if (static_cast<Eigen::Index>(names.size()) != rows.cols())
    throw std::invalid_argument("write_table_csv: header/column mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (std::size_t j = 0; j < names.size(); ++j)
    out << (j ? "," : "") << names[j];
  out << "\n";
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j)
      out << (j ? "," : "") << format_double(rows(i, j));
    out << "\n";
  }
  if (!out) throw DataError("failed writing file: " + path);
}

std::pair<std::vector<std::string>, Eigen::MatrixXd> read_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty table file: " + path);
  std::vector<std::string> names = split_line(line);
  for (auto& nm : names) nm = trim(nm);
  std::vector<double> vals;
  int rows = 0;
  int rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (trim(line).empty()) continue;
    const auto toks = split_line(line);
    if (toks.size() != names.size())
      throw DataError("csv: row " + std::to_string(rowno) + " width mismatch");
    for (const auto& tk : toks) vals.push_back(parse_double(tk, "row " + std::to_string(rowno)));
    ++rows;
  }
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(names.size()));
  for (int i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < names.size(); ++j)
      m(i, static_cast<Eigen::Index>(j)) = vals[static_cast<std::size_t>(i) * names.size() + j];
  return {names, m};
}

}  // namespace prinstrat
