#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace promptinv {

enum class Metric { Euclidean, Cosine };

Metric metric_from_string(const std::string& name);
std::string to_string(Metric m);

/// Ordered token set; index = token id. special_ids are excluded from
/// projection (they stay addressable for embed/detokenize).
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, std::set<int> special_ids = {});

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::set<int>& special_ids() const { return special_ids_; }
  bool is_special(int id) const { return special_ids_.count(id) != 0; }

  std::vector<int> tokenize(const std::string& text) const;
  std::string detokenize(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::set<int> special_ids_;
  std::unordered_map<std::string, int> index_;
};

/// |V| x d matrix of token embeddings; the feasible set of the discrete
/// problem is its non-special rows.
class EmbeddingTable {
 public:
  EmbeddingTable(Eigen::MatrixXd vectors, const Vocabulary& vocab);

  const Eigen::MatrixXd& vectors() const { return vectors_; }
  Eigen::Index dim() const { return vectors_.cols(); }
  Eigen::Index rows() const { return vectors_.rows(); }

  Eigen::MatrixXd embed(const std::vector<int>& ids) const;

  /// Per-row nearest-neighbor projection onto non-special table rows.
  /// Ties break to the smallest index. Zero-norm query under the cosine
  /// metric is an error.
  std::pair<std::vector<int>, Eigen::MatrixXd> project(
      const Eigen::MatrixXd& free, Metric metric = Metric::Euclidean) const;

 private:
  Eigen::MatrixXd vectors_;
  std::vector<int> candidate_ids_;  // non-special, ascending
};

/// Optimization state of one prompt: the unconstrained variable, its
/// nearest-vocabulary twin, and the decoded ids.
struct PromptState {
  Eigen::MatrixXd free;       // L x d, unconstrained
  Eigen::MatrixXd projected;  // L x d, rows of the table
  std::vector<int> token_ids;
};

}  // namespace promptinv
