#include <gtest/gtest.h>

#include "rpbf/dataset.hpp"
#include "rpbf/rng.hpp"
#include "tempdir.hpp"

using namespace rpbf;

namespace {

DataError::Code load_error(const std::string& path, const std::string& label = "group") {
  try {
    load_grouped_csv(path, label);
  } catch (const DataError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no DataError for " << path;
  return DataError::Code::schema;
}

}  // namespace

TEST(GroupedCsv, LoadsGroupsInFirstAppearanceOrder) {
  TempDir tmp;
  const auto path = tmp.write("d.csv", "x1,group,x2\n1,b,2\n3,a,4\n5,b,6\n7,a,8\n9,c,1\n2,c,3\n");
  const GroupedDataset ds = load_grouped_csv(path, "group");
  ASSERT_EQ(ds.num_groups(), 3);
  EXPECT_EQ(ds.labels(), (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_EQ(ds.p(), 2);
  EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"x1", "x2"}));
  EXPECT_EQ(ds.group(0).data(1, 1), 6.0);
  EXPECT_EQ(ds.sizes(), (std::vector<int>{2, 2, 2}));
  EXPECT_EQ(ds.total(), 6);
  EXPECT_EQ(ds.pairs().size(), 3U);
}

TEST(GroupedCsv, RoundTripIsExact) {
  TempDir tmp;
  RngStream rng(1);
  std::vector<Group> groups;
  for (int g = 0; g < 3; ++g) {
    Eigen::MatrixXd m(4, 5);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * 1e3;
    groups.push_back({"g" + std::to_string(g), m});
  }
  const GroupedDataset ds(groups);
  save_grouped_csv(ds, tmp.file("r.csv"));
  const GroupedDataset back = load_grouped_csv(tmp.file("r.csv"), "group");
  for (int g = 0; g < 3; ++g) EXPECT_EQ(back.group(g).data, ds.group(g).data);
}

TEST(GroupedCsv, ErrorsCarryDistinctCodes) {
  TempDir tmp;
  EXPECT_EQ(load_error(tmp.file("absent.csv")), DataError::Code::missing_file);
  EXPECT_EQ(load_error(tmp.write("a.csv", "group,x\na,1\na,2\nb,3,4\n")), DataError::Code::ragged_row);
  EXPECT_EQ(load_error(tmp.write("b.csv", "group,x\na,1\na,zz\nb,3\nb,4\n")), DataError::Code::parse);
  EXPECT_EQ(load_error(tmp.write("c.csv", "group,x\na,1\na,2\n")), DataError::Code::too_few_groups);
  EXPECT_EQ(load_error(tmp.write("d.csv", "group,x\na,1\na,2\nb,3\n")), DataError::Code::group_too_small);
  EXPECT_EQ(load_error(tmp.write("e.csv", "label,x\na,1\na,2\nb,3\nb,4\n")), DataError::Code::missing_column);
}

TEST(GroupedCsv, ParseErrorNamesRowAndLine) {
  TempDir tmp;
  const auto path = tmp.write("p.csv", "group,x\n\na,1\na,nan?\n");
  try {
    load_grouped_csv(path, "group");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2 (line 4)"), std::string::npos) << e.what();
  }
}

TEST(GroupedDataset, ValidatesShape) {
  EXPECT_THROW(GroupedDataset({{"a", Eigen::MatrixXd::Zero(3, 2)}}), DataError);
  EXPECT_THROW(GroupedDataset({{"a", Eigen::MatrixXd::Zero(3, 2)}, {"b", Eigen::MatrixXd::Zero(3, 3)}}), DataError);
  EXPECT_THROW(GroupedDataset({{"a", Eigen::MatrixXd::Zero(1, 2)}, {"b", Eigen::MatrixXd::Zero(3, 2)}}), DataError);
}

TEST(Pairs, LexicographicAndHarmonicWeight) {
  const auto pairs = all_pairs(4);
  ASSERT_EQ(pairs.size(), 6U);
  EXPECT_EQ(pairs.front(), (GroupPair{0, 1}));
  EXPECT_EQ(pairs.back(), (GroupPair{2, 3}));
  EXPECT_DOUBLE_EQ(harmonic_weight(50, 50), 25.0);
  EXPECT_NEAR(harmonic_weight(138, 98), 57.30508474576271, 1e-12);
}

class Expression : public ::testing::Test {
 protected:
  TempDir tmp;
  std::string matrix, labels;

  void SetUp() override {
    matrix = tmp.write("m.tsv",
                       "gene\tc1\tc2\tc3\tc4\tc5\n"
                       "g_const65\t65\t65\t65\t65\t65\n"
                       "g_low\t1\t0\t2\t0\t1\n"
                       "g_edge\t63\t63\t63\t63\t63\n"
                       "g_high\t500\t20\t300\t80\t100\n");
    labels = tmp.write("l.csv", "cell,label\nc1,A\nc2,A\nc3,B\nc4,B\nc5,C\n");
  }
};

TEST_F(Expression, AggregateAndFilter) {
  const ExpressionMatrix expr = load_expression(matrix, labels);
  EXPECT_EQ(expr.genes.size(), 4U);
  EXPECT_DOUBLE_EQ(aggregate_expression(expr.values.row(0)), std::log2(66.0));
  // log2(63 + 1) = 6 exactly, so the strict rule drops it
  EXPECT_DOUBLE_EQ(aggregate_expression(expr.values.row(2)), 6.0);
  const ExpressionMatrix kept = filter_genes(expr, 6.0);
  EXPECT_EQ(kept.genes, (std::vector<std::string>{"g_const65", "g_high"}));
  EXPECT_EQ(kept.cells.size(), 5U);
}

TEST_F(Expression, AllZeroMatrixKeepsNothing) {
  const auto m = tmp.write("z.csv", "gene,c1,c2\ng1,0,0\ng2,0,0\n");
  const auto l = tmp.write("zl.csv", "cell,label\nc1,A\nc2,B\n");
  EXPECT_TRUE(filter_genes(load_expression(m, l), 6.0).genes.empty());
}

TEST_F(Expression, ToGroupedSelectsLabels) {
  const ExpressionMatrix expr = load_expression(matrix, labels);
  const GroupedDataset ds = to_grouped(expr, {"B", "A"});
  EXPECT_EQ(ds.labels(), (std::vector<std::string>{"B", "A"}));
  EXPECT_EQ(ds.p(), 4);
  EXPECT_EQ(ds.group(0).data(0, 3), 300.0);
  const GroupedDataset logged = to_grouped(expr, {"A", "B"}, true);
  EXPECT_DOUBLE_EQ(logged.group(0).data(0, 0), std::log2(66.0));
}

TEST_F(Expression, ToGroupedErrors) {
  const ExpressionMatrix expr = load_expression(matrix, labels);
  auto code = [&](const std::vector<std::string>& sel) {
    try {
      to_grouped(expr, sel);
    } catch (const DataError& e) {
      return e.code();
    }
    return DataError::Code::schema;
  };
  EXPECT_EQ(code({"A", "A"}), DataError::Code::duplicate_label);
  EXPECT_EQ(code({"A", "Z"}), DataError::Code::unknown_label);
  EXPECT_EQ(code({"A", "C"}), DataError::Code::group_too_small);
}

TEST_F(Expression, SaveRoundTrip) {
  const ExpressionMatrix expr = load_expression(matrix, labels);
  save_expression(expr, tmp.file("out.csv"));
  const ExpressionMatrix back = load_expression(tmp.file("out.csv"), labels);
  EXPECT_EQ(back.genes, expr.genes);
  EXPECT_EQ(back.values, expr.values);
}

TEST(BundledData, DeskExtractFilters) {
  const std::string dir = std::string(RPBF_DATA_DIR) + "/hnscc_desk";
  const ExpressionMatrix expr = load_expression(dir + "/expression.csv", dir + "/labels.csv");
  EXPECT_EQ(expr.genes.size(), 800U);
  const ExpressionMatrix kept = filter_genes(expr, 6.0);
  EXPECT_EQ(kept.genes.size(), 300U);
  const GroupedDataset ds = to_grouped(kept, {"B cell", "Macrophage", "Mast"}, true);
  EXPECT_EQ(ds.sizes(), (std::vector<int>{46, 33, 40}));
  EXPECT_EQ(ds.p(), 300);
}
