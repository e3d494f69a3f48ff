#include "ceme/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ceme/error.hpp"
#include "csv.hpp"
#include "json_io.hpp"

namespace ceme {

void Dataset::validate() const {
  const auto n = x.size();
  if (y.size() != n || z.cols() != n) throw ShapeError("Dataset: z, x and y are not aligned");
  if (x_star.size() != 0 && x_star.size() != n) throw ShapeError("Dataset: x_star is not aligned");
}

Dataset Dataset::subset(std::span<const Eigen::Index> rows) const {
  Dataset out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.z.resize(z.rows(), m);
  out.x.resize(m);
  out.y.resize(m);
  if (has_x_star()) out.x_star.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= size()) throw ShapeError("Dataset::subset: row index out of range");
    out.z.col(i) = z.col(r);
    out.x(i) = x(r);
    out.y(i) = y(r);
    if (has_x_star()) out.x_star(i) = x_star(r);
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::string text;
  const int d = data.covariate_dim();
  if (d == 1) {
    text += "z";
  } else {
    for (int k = 0; k < d; ++k) text += (k ? ",z_" : "z_") + std::to_string(k + 1);
  }
  text += ",x_star,x,y\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (int k = 0; k < d; ++k) {
      text += detail::format_double(data.z(k, i));
      text += ',';
    }
    if (data.has_x_star()) text += detail::format_double(data.x_star(i));
    text += ',';
    text += detail::format_double(data.x(i));
    text += ',';
    text += detail::format_double(data.y(i));
    text += '\n';
  }
  detail::write_text_atomic(path, text);
}

Dataset read_csv(const std::filesystem::path& path) {
  const auto table = detail::parse_csv(detail::read_text(path), path.string());
  std::vector<std::size_t> z_cols;
  std::ptrdiff_t xs_col = -1, x_col = -1, y_col = -1;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (h == "z" || h.rfind("z_", 0) == 0)
      z_cols.push_back(c);
    else if (h == "x_star")
      xs_col = static_cast<std::ptrdiff_t>(c);
    else if (h == "x")
      x_col = static_cast<std::ptrdiff_t>(c);
    else if (h == "y")
      y_col = static_cast<std::ptrdiff_t>(c);
  }
  if (z_cols.empty() || x_col < 0 || y_col < 0)
    throw IoError(path.string() + ": expected columns z..., x, y");

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  Dataset out;
  out.z.resize(static_cast<Eigen::Index>(z_cols.size()), n);
  out.x.resize(n);
  out.y.resize(n);
  bool have_star = xs_col >= 0;
  if (have_star) out.x_star.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    auto num = [&](std::size_t c) {
      auto v = detail::parse_double(row[c]);
      if (!v) throw IoError(path.string() + ": non-numeric value in row " + std::to_string(i + 2));
      return *v;
    };
    for (std::size_t k = 0; k < z_cols.size(); ++k) out.z(static_cast<Eigen::Index>(k), i) = num(z_cols[k]);
    out.x(i) = num(static_cast<std::size_t>(x_col));
    out.y(i) = num(static_cast<std::size_t>(y_col));
    if (have_star) {
      const auto& cell = row[static_cast<std::size_t>(xs_col)];
      if (cell.empty()) {
        have_star = false;
        out.x_star.resize(0);
      } else {
        out.x_star(i) = num(static_cast<std::size_t>(xs_col));
      }
    }
  }
  return out;
}

double sample_mean(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw ConfigError("sample_mean: empty vector");
  return v.mean();
}

double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() < 2) throw ConfigError("sample_sd: need at least two values");
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace ceme
