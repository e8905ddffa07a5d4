#include <doctest.h>

#include <limits>
#include <stdexcept>

#include "promptinv/rng.hpp"
#include "promptinv/vocab.hpp"

using namespace promptinv;

namespace {

Vocabulary small_vocab() {
  return Vocabulary({"cat", "dog", "sun", "sea"});
}

}  // namespace

TEST_CASE("vocabulary construction rejects bad input") {
  CHECK_THROWS_AS(Vocabulary({"a", "a"}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary({"a", ""}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary({"a"}, {1}), std::invalid_argument);  // id range
  CHECK_THROWS_AS(Vocabulary({"a"}, {0}), std::invalid_argument);  // all special
}

TEST_CASE("tokenize / detokenize round-trips") {
  Vocabulary v = small_vocab();

  CHECK(v.tokenize("cat sea dog") == std::vector<int>{0, 3, 1});
  CHECK(v.detokenize({0, 3, 1}) == "cat sea dog");
  // whitespace-normalized round trip
  CHECK(v.detokenize(v.tokenize("  dog   cat ")) == "dog cat");
  CHECK(v.tokenize("").empty());
  CHECK_THROWS_AS(v.tokenize("cat wolf"), std::out_of_range);

  // random valid id sequences round-trip through tokenize
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<int> ids;
    for (int j = 0; j < 6; ++j) ids.push_back(int(rng.uniform_int(0, v.size() - 1)));
    CHECK(v.tokenize(v.detokenize(ids)) == ids);
  }
}

TEST_CASE("projection: hand-checked nearest neighbor") {
  Vocabulary v({"t0", "t1", "t2", "t3"});
  Eigen::MatrixXd e(4, 2);
  e << 0, 0, 1, 0, 0, 1, 1, 1;
  EmbeddingTable table(e, v);

  Eigen::MatrixXd q(1, 2);
  q << 0.9, 0.2;
  auto [ids, rows] = table.project(q, Metric::Euclidean);
  CHECK(ids == std::vector<int>{1});
  CHECK(rows.row(0) == e.row(1));
}

TEST_CASE("projection: exhaustive optimality against brute force") {
  const int V = 97, d = 5;
  Rng rng(11);
  std::vector<std::string> toks;
  for (int i = 0; i < V; ++i) toks.push_back("w" + std::to_string(i));
  Vocabulary v(toks);
  EmbeddingTable table(rng.normal_matrix(V, d), v);

  for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
    Eigen::MatrixXd queries = rng.normal_matrix(40, d);
    auto [ids, rows] = table.project(queries, metric);
    for (int j = 0; j < 40; ++j) {
      const Eigen::RowVectorXd q = queries.row(j);
      int best = -1;
      double best_dist = std::numeric_limits<double>::infinity();
      for (int i = 0; i < V; ++i) {
        double dist = metric == Metric::Euclidean
                          ? (q - table.vectors().row(i)).norm()
                          : 1.0 - q.dot(table.vectors().row(i)) /
                                      (q.norm() * table.vectors().row(i).norm());
        if (dist < best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      CHECK(ids[size_t(j)] == best);
      CHECK(rows.row(j) == table.vectors().row(best));
    }
  }
}

TEST_CASE("projection: idempotence on table rows") {
  const int V = 16, d = 8;
  Rng rng(3);
  std::vector<std::string> toks;
  for (int i = 0; i < V; ++i) toks.push_back("w" + std::to_string(i));
  Vocabulary v(toks);
  EmbeddingTable table(rng.normal_matrix(V, d), v);

  std::vector<int> ids = {5, 0, 15, 7};
  for (Metric metric : {Metric::Euclidean, Metric::Cosine}) {
    auto [got, rows] = table.project(table.embed(ids), metric);
    CHECK(got == ids);
    auto [again, rows2] = table.project(rows, metric);
    CHECK(again == got);
    CHECK(rows2 == rows);
  }
}

TEST_CASE("projection: ties break to the lowest index") {
  Vocabulary v({"a", "b", "c"});
  Eigen::MatrixXd e(3, 1);
  e << -1, 1, 1;  // rows 1 and 2 identical
  EmbeddingTable table(e, v);

  Eigen::MatrixXd q(2, 1);
  q << 0.0, 5.0;  // 0 ties all three rows; 5 ties the identical rows 1 and 2
  auto [ids, rows] = table.project(q, Metric::Euclidean);
  CHECK(ids == std::vector<int>{0, 1});
}

TEST_CASE("projection: special tokens are excluded") {
  Vocabulary v({"<pad>", "x", "y"}, {0});
  Eigen::MatrixXd e(3, 1);
  e << 0, 10, -10;
  EmbeddingTable table(e, v);

  Eigen::MatrixXd q(1, 1);
  q << 0.1;  // nearest overall is the special row 0
  auto [ids, rows] = table.project(q, Metric::Euclidean);
  CHECK(ids == std::vector<int>{1});

  // specials stay addressable through embed / detokenize
  CHECK(table.embed({0})(0, 0) == 0.0);
  CHECK(v.detokenize({0, 1}) == "<pad> x");
}

TEST_CASE("projection: cosine rejects a zero-norm query") {
  Vocabulary v({"a", "b"});
  Eigen::MatrixXd e(2, 2);
  e << 1, 0, 0, 1;
  EmbeddingTable table(e, v);

  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(1, 2);
  CHECK_THROWS_AS(table.project(q, Metric::Cosine), std::domain_error);
  CHECK_NOTHROW(table.project(q, Metric::Euclidean));
}

TEST_CASE("cosine projection ignores magnitude") {
  Vocabulary v({"a", "b"});
  Eigen::MatrixXd e(2, 2);
  e << 1, 0, 1, 1;
  EmbeddingTable table(e, v);

  Eigen::MatrixXd q(1, 2);
  q << 100.0, 90.0;  // direction nearer (1,1); euclidean prefers nothing close
  auto [ids, rows] = table.project(q, Metric::Cosine);
  CHECK(ids == std::vector<int>{1});
}

TEST_CASE("metric names round-trip") {
  CHECK(metric_from_string("euclidean") == Metric::Euclidean);
  CHECK(metric_from_string("cosine") == Metric::Cosine);
  CHECK(to_string(Metric::Cosine) == "cosine");
  CHECK_THROWS_AS(metric_from_string("manhattan"), std::invalid_argument);
}

TEST_CASE("embed validates ids and dimensions") {
  Vocabulary v = small_vocab();
  Rng rng(1);
  EmbeddingTable table(rng.normal_matrix(4, 3), v);
  CHECK_THROWS_AS(table.embed({4}), std::out_of_range);
  CHECK_THROWS_AS(table.embed({-1}), std::out_of_range);
  Eigen::MatrixXd wrong(1, 2);
  wrong << 0, 0;
  CHECK_THROWS_AS(table.project(wrong), std::invalid_argument);
  CHECK_THROWS_AS(EmbeddingTable(rng.normal_matrix(3, 3), v), std::invalid_argument);
  Eigen::MatrixXd bad = rng.normal_matrix(4, 3);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(EmbeddingTable(bad, v), std::invalid_argument);
}
