#include "promptinv/vocab.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace promptinv {

Metric metric_from_string(const std::string& name) {
  if (name == "euclidean") return Metric::Euclidean;
  if (name == "cosine") return Metric::Cosine;
  throw std::invalid_argument("unknown projection metric: " + name);
}

std::string to_string(Metric m) {
  return m == Metric::Euclidean ? "euclidean" : "cosine";
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::set<int> special_ids)
    : tokens_(std::move(tokens)), special_ids_(std::move(special_ids)) {
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    if (tokens_[i].empty())
      throw std::invalid_argument("empty token string at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], i).second)
      throw std::invalid_argument("duplicate token: " + tokens_[i]);
  }
  for (int id : special_ids_) {
    if (id < 0 || id >= size())
      throw std::invalid_argument("special id out of range: " + std::to_string(id));
  }
  if (static_cast<int>(special_ids_.size()) >= size())
    throw std::invalid_argument("no non-special tokens remain");
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
  std::vector<int> ids;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    auto it = index_.find(word);
    if (it == index_.end())
      throw std::out_of_range("word not in vocabulary: " + word);
    ids.push_back(it->second);
  }
  return ids;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

EmbeddingTable::EmbeddingTable(Eigen::MatrixXd vectors, const Vocabulary& vocab)
    : vectors_(std::move(vectors)) {
  if (vectors_.rows() != vocab.size())
    throw std::invalid_argument("embedding row count does not match vocabulary size");
  if (!vectors_.allFinite())
    throw std::invalid_argument("embedding table contains non-finite entries");
  for (int i = 0; i < vocab.size(); ++i)
    if (!vocab.is_special(i)) candidate_ids_.push_back(i);
}

Eigen::MatrixXd EmbeddingTable::embed(const std::vector<int>& ids) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), dim());
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= rows())
      throw std::out_of_range("token id out of range: " + std::to_string(ids[j]));
    out.row(static_cast<Eigen::Index>(j)) = vectors_.row(ids[j]);
  }
  return out;
}

std::pair<std::vector<int>, Eigen::MatrixXd> EmbeddingTable::project(
    const Eigen::MatrixXd& free, Metric metric) const {
  if (free.cols() != dim())
    throw std::invalid_argument("query column count does not match embedding dim");

  const Eigen::Index L = free.rows();
  std::vector<int> ids(static_cast<std::size_t>(L));
  Eigen::MatrixXd projected(L, dim());

  for (Eigen::Index j = 0; j < L; ++j) {
    const Eigen::RowVectorXd q = free.row(j);
    double q_norm = q.norm();
    if (metric == Metric::Cosine && q_norm == 0.0)
      throw std::domain_error("cosine projection of zero-norm row " + std::to_string(j));

    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int i : candidate_ids_) {
      double dist;
      if (metric == Metric::Euclidean) {
        dist = (q - vectors_.row(i)).norm();
      } else {
        double r_norm = vectors_.row(i).norm();
        // Zero-norm table rows are maximally distant, never preferred.
        dist = r_norm == 0.0 ? 2.0 : 1.0 - q.dot(vectors_.row(i)) / (q_norm * r_norm);
      }
      if (dist < best_dist) {  // strict: ties keep the smaller index
        best_dist = dist;
        best = i;
      }
    }
    ids[static_cast<std::size_t>(j)] = best;
    projected.row(j) = vectors_.row(best);
  }
  return {std::move(ids), std::move(projected)};
}

}  // namespace promptinv
