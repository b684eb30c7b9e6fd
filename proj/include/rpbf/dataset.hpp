#pragma once

// Multi-group observation data, CSV ingestion, and expression-matrix filtering.

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rpbf/error.hpp"

namespace rpbf {

/// Unordered pair of group indices, stored with i < j (0-based).
struct GroupPair {
  int i = 0;
  int j = 0;
  auto operator<=>(const GroupPair&) const = default;
};

/// All pairs (i, j), i < j, in lexicographic order.
inline std::vector<GroupPair> all_pairs(int num_groups) {
  std::vector<GroupPair> pairs;
  for (int i = 0; i < num_groups; ++i)
    for (int j = i + 1; j < num_groups; ++j) pairs.push_back({i, j});
  return pairs;
}

/// Harmonic pair weight n0 = (1/n_i + 1/n_j)^{-1}.
inline double harmonic_weight(double n_i, double n_j) { return 1.0 / (1.0 / n_i + 1.0 / n_j); }

struct Group {
  std::string label;
  Eigen::MatrixXd data;  // n_g x p, observations as rows
};

/// G >= 2 groups of observations over one shared p-dimensional feature space.
class GroupedDataset {
 public:
  explicit GroupedDataset(std::vector<Group> groups, std::vector<std::string> feature_names = {})
      : groups_(std::move(groups)), feature_names_(std::move(feature_names)) {
    if (groups_.size() < 2)
      throw DataError(DataError::Code::too_few_groups, "fewer than 2 groups");
    const Eigen::Index p = groups_.front().data.cols();
    if (p < 1) throw DataError(DataError::Code::schema, "dataset has no features");
    for (const auto& g : groups_) {
      if (g.data.cols() != p)
        throw DataError(DataError::Code::ragged_row, "group '" + g.label + "' has a different feature count");
      if (g.data.rows() < 2)
        throw DataError(DataError::Code::group_too_small,
                        "group '" + g.label + "' has fewer than 2 observations");
    }
    if (!feature_names_.empty() && static_cast<Eigen::Index>(feature_names_.size()) != p)
      throw DataError(DataError::Code::schema, "feature name count differs from column count");
  }

  int num_groups() const noexcept { return static_cast<int>(groups_.size()); }
  Eigen::Index p() const noexcept { return groups_.front().data.cols(); }
  Eigen::Index total() const noexcept {
    Eigen::Index n = 0;
    for (const auto& g : groups_) n += g.data.rows();
    return n;
  }
  std::vector<int> sizes() const {
    std::vector<int> s;
    for (const auto& g : groups_) s.push_back(static_cast<int>(g.data.rows()));
    return s;
  }
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& g : groups_) out.push_back(g.label);
    return out;
  }
  const Group& group(int g) const { return groups_.at(static_cast<std::size_t>(g)); }
  const std::vector<Group>& groups() const noexcept { return groups_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  std::vector<GroupPair> pairs() const { return all_pairs(num_groups()); }

 private:
  std::vector<Group> groups_;
  std::vector<std::string> feature_names_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row
};

inline CsvTable read_table(const std::string& path, std::optional<char> delim = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Code::missing_file, "cannot open file: " + path);
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  char d = delim.value_or(',');
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    if (!have_header) {
      if (!delim) d = line.find('\t') != std::string::npos ? '\t' : ',';
      table.header = split_csv_line(line, d);
      for (auto& h : table.header) h = std::string(trim(h));
      have_header = true;
      continue;
    }
    table.rows.push_back(split_csv_line(line, d));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw DataError(DataError::Code::schema, "file has no header row: " + path);
  return table;
}

}  // namespace detail

/// Reads a CSV with a header row; rows are grouped by the value of
/// `label_column` in order of first appearance, every other column is a
/// numeric feature.
inline GroupedDataset load_grouped_csv(const std::string& path, const std::string& label_column) {
  const detail::CsvTable table = detail::read_table(path, ',');
  const auto it = std::find(table.header.begin(), table.header.end(), label_column);
  if (it == table.header.end())
    throw DataError(DataError::Code::missing_column, "label column '" + label_column + "' not found in " + path);
  const std::size_t label_idx = static_cast<std::size_t>(it - table.header.begin());
  const std::size_t width = table.header.size();
  std::vector<std::string> features;
  for (std::size_t c = 0; c < width; ++c)
    if (c != label_idx) features.push_back(table.header[c]);

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::vector<double>>> rows_by_label;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != width)
      throw DataError(DataError::Code::ragged_row,
                      "row " + std::to_string(r + 1) + " (line " + std::to_string(table.line_numbers[r]) + ") has " +
                          std::to_string(row.size()) + " fields, expected " + std::to_string(width));
    std::vector<double> values;
    values.reserve(width - 1);
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_idx) continue;
      const auto v = detail::parse_double(row[c]);
      if (!v)
        throw DataError(DataError::Code::parse, "row " + std::to_string(r + 1) + " (line " +
                                                    std::to_string(table.line_numbers[r]) + "), column '" +
                                                    table.header[c] + "': not a number: '" + row[c] + "'");
      values.push_back(*v);
    }
    const std::string label(detail::trim(row[label_idx]));
    auto [pos, inserted] = rows_by_label.try_emplace(label);
    if (inserted) order.push_back(label);
    pos->second.push_back(std::move(values));
  }
  if (order.size() < 2) throw DataError(DataError::Code::too_few_groups, "fewer than 2 groups in " + path);

  std::vector<Group> groups;
  for (const auto& label : order) {
    const auto& rows = rows_by_label.at(label);
    if (rows.size() < 2)
      throw DataError(DataError::Code::group_too_small, "group '" + label + "' has fewer than 2 observations");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(features.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < features.size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    groups.push_back({label, std::move(m)});
  }
  return GroupedDataset(std::move(groups), std::move(features));
}

/// Writes the dataset as CSV: label column first, then features. Values use
/// the shortest round-trip representation, so reloading is exact.
inline void save_grouped_csv(const GroupedDataset& ds, const std::string& path,
                             const std::string& label_column = "group") {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Code::missing_file, "cannot write file: " + path);
  out << label_column;
  for (Eigen::Index c = 0; c < ds.p(); ++c) {
    out << ',';
    if (ds.feature_names().empty())
      out << 'x' << (c + 1);
    else
      out << ds.feature_names()[static_cast<std::size_t>(c)];
  }
  out << '\n';
  for (const auto& g : ds.groups()) {
    for (Eigen::Index r = 0; r < g.data.rows(); ++r) {
      out << g.label;
      for (Eigen::Index c = 0; c < g.data.cols(); ++c) out << ',' << detail::format_double(g.data(r, c));
      out << '\n';
    }
  }
}

/// Genes-by-cells expression values (TPM scale) with cell type labels.
struct ExpressionMatrix {
  std::vector<std::string> genes;
  std::vector<std::string> cells;
  Eigen::MatrixXd values;  // genes x cells
  std::map<std::string, std::string> cell_labels;

  void validate() const {
    if (values.rows() != static_cast<Eigen::Index>(genes.size()) ||
        values.cols() != static_cast<Eigen::Index>(cells.size()))
      throw DataError(DataError::Code::schema, "expression matrix shape does not match its identifiers");
    std::set<std::string> seen;
    for (const auto& g : genes)
      if (!seen.insert(g).second) throw DataError(DataError::Code::schema, "duplicate gene identifier '" + g + "'");
    if (values.size() > 0 && values.minCoeff() < 0.0)
      throw DataError(DataError::Code::parse, "expression values must be nonnegative");
  }
};

/// Loads a genes-as-rows matrix (CSV or TSV; first column gene ids, header
/// row cell ids) and a two-column cell_id,label file.
inline ExpressionMatrix load_expression(const std::string& matrix_path, const std::string& labels_path) {
  const detail::CsvTable table = detail::read_table(matrix_path);
  if (table.header.size() < 2) throw DataError(DataError::Code::schema, "expression matrix has no cell columns");
  ExpressionMatrix expr;
  expr.cells.assign(table.header.begin() + 1, table.header.end());
  expr.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(expr.cells.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size())
      throw DataError(DataError::Code::ragged_row, "row " + std::to_string(r + 1) + " of " + matrix_path +
                                                       " has " + std::to_string(row.size()) + " fields");
    expr.genes.emplace_back(detail::trim(row[0]));
    for (std::size_t c = 1; c < row.size(); ++c) {
      const auto v = detail::parse_double(row[c]);
      if (!v)
        throw DataError(DataError::Code::parse, "row " + std::to_string(r + 1) + ", cell '" + expr.cells[c - 1] +
                                                    "': not a number: '" + row[c] + "'");
      expr.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = *v;
    }
  }
  const detail::CsvTable labels = detail::read_table(labels_path);
  if (labels.header.size() != 2) throw DataError(DataError::Code::schema, "label file must have two columns");
  for (std::size_t r = 0; r < labels.rows.size(); ++r) {
    const auto& row = labels.rows[r];
    if (row.size() != 2)
      throw DataError(DataError::Code::ragged_row, "row " + std::to_string(r + 1) + " of " + labels_path +
                                                       " must have two fields");
    expr.cell_labels[std::string(detail::trim(row[0]))] = std::string(detail::trim(row[1]));
  }
  expr.validate();
  return expr;
}

/// Writes genes-as-rows CSV in the layout load_expression reads.
inline void save_expression(const ExpressionMatrix& expr, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Code::missing_file, "cannot write file: " + path);
  out << "gene";
  for (const auto& c : expr.cells) out << ',' << c;
  out << '\n';
  for (std::size_t g = 0; g < expr.genes.size(); ++g) {
    out << expr.genes[g];
    for (Eigen::Index c = 0; c < expr.values.cols(); ++c)
      out << ',' << detail::format_double(expr.values(static_cast<Eigen::Index>(g), c));
    out << '\n';
  }
}

/// Aggregate expression E_a(i) = log2(mean TPM over cells + 1).
inline double aggregate_expression(const Eigen::Ref<const Eigen::RowVectorXd>& tpm) {
  return std::log2(tpm.mean() + 1.0);
}

/// Keeps gene i iff E_a(i) > threshold. The cell set is unchanged; an empty
/// result is returned as-is and left to the caller to report.
inline ExpressionMatrix filter_genes(const ExpressionMatrix& expr, double threshold) {
  if (expr.genes.empty() || expr.cells.empty())
    throw DataError(DataError::Code::schema, "filter_genes requires a nonempty expression matrix");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index g = 0; g < expr.values.rows(); ++g)
    if (aggregate_expression(expr.values.row(g)) > threshold) keep.push_back(g);
  ExpressionMatrix out;
  out.cells = expr.cells;
  out.cell_labels = expr.cell_labels;
  out.values.resize(static_cast<Eigen::Index>(keep.size()), expr.values.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.genes.push_back(expr.genes[static_cast<std::size_t>(keep[k])]);
    out.values.row(static_cast<Eigen::Index>(k)) = expr.values.row(keep[k]);
  }
  return out;
}

/// Cells become observations and genes features, grouped by the selected
/// labels in the given order. With `log_transform`, values become log2(x + 1).
inline GroupedDataset to_grouped(const ExpressionMatrix& expr, const std::vector<std::string>& selected_labels,
                                 bool log_transform = false) {
  std::set<std::string> seen;
  for (const auto& label : selected_labels)
    if (!seen.insert(label).second)
      throw DataError(DataError::Code::duplicate_label, "duplicate group label '" + label + "'");
  std::vector<Group> groups;
  for (const auto& label : selected_labels) {
    std::vector<Eigen::Index> cols;
    for (std::size_t c = 0; c < expr.cells.size(); ++c) {
      const auto it = expr.cell_labels.find(expr.cells[c]);
      if (it != expr.cell_labels.end() && it->second == label) cols.push_back(static_cast<Eigen::Index>(c));
    }
    if (cols.empty()) throw DataError(DataError::Code::unknown_label, "label '" + label + "' not found among cells");
    if (cols.size() < 2)
      throw DataError(DataError::Code::group_too_small, "group '" + label + "' has fewer than 2 cells");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(cols.size()), expr.values.rows());
    for (std::size_t k = 0; k < cols.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = expr.values.col(cols[k]).transpose();
    if (log_transform) m = (m.array() + 1.0).log() / std::log(2.0);
    groups.push_back({label, std::move(m)});
  }
  return GroupedDataset(std::move(groups), expr.genes);
}

}  // namespace rpbf
