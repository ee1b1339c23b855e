#include <algorithm>
#include <cmath>
#include <numeric>

#include "metatriage/error.hpp"
#include "metatriage/learn.hpp"
#include "metatriage/parallel.hpp"
#include "metatriage/rng.hpp"

namespace metatriage {

namespace {

double gini(double pos, double n) {
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double child_impurity = 0.0;  // weighted Gini of the two children
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const int> y, const ForestParams& params, std::size_t mtry)
      : x_(x), y_(y), params_(params), mtry_(mtry) {}

  Tree build(std::vector<std::size_t> samples, Engine& rng) {
    Tree tree;
    samples_ = std::move(samples);
    root_size_ = static_cast<double>(samples_.size());
    features_.resize(x_.n_cols());
    struct Pending {
      std::size_t begin, end, depth;
      int node;
    };
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, samples_.size(), 0, 0}};
    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      const std::size_t n = job.end - job.begin;
      std::size_t pos = 0;
      for (std::size_t k = job.begin; k < job.end; ++k) pos += y_[samples_[k]] == 1 ? 1 : 0;
      TreeNode& node = tree.nodes[job.node];
      node.n_samples = n;
      node.value = n > 0 ? static_cast<double>(pos) / static_cast<double>(n) : 0.0;

      const bool depth_capped = params_.max_depth && job.depth >= *params_.max_depth;
      if (pos == 0 || pos == n || depth_capped || n < 2 * params_.min_leaf) continue;

      const double parent = gini(static_cast<double>(pos), static_cast<double>(n));
      const auto split = best_split(job.begin, job.end, pos, rng);
      if (split.feature < 0 || !(split.child_impurity < parent - 1e-12)) continue;

      // Partition samples in place: x <= threshold first.
      const auto mid = std::stable_partition(
          samples_.begin() + static_cast<std::ptrdiff_t>(job.begin), samples_.begin() + static_cast<std::ptrdiff_t>(job.end),
          [&](std::size_t s) { return x_.at(s, static_cast<std::size_t>(split.feature)) <= split.threshold; });
      const auto mid_index = static_cast<std::size_t>(mid - samples_.begin());

      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& parent_node = tree.nodes[job.node];
      parent_node.feature = split.feature;
      parent_node.threshold = split.threshold;
      parent_node.left = left;
      parent_node.right = left + 1;
      parent_node.impurity_decrease = (static_cast<double>(n) / root_size_) * (parent - split.child_impurity);
      stack.push_back({mid_index, job.end, job.depth + 1, left + 1});
      stack.push_back({job.begin, mid_index, job.depth + 1, left});
    }
    return tree;
  }

 private:
  SplitCandidate best_split(std::size_t begin, std::size_t end, std::size_t pos, Engine& rng) {
    const std::size_t p = x_.n_cols();
    std::iota(features_.begin(), features_.end(), 0);
    std::size_t tried = p;
    if (mtry_ < p) {
      for (std::size_t i = 0; i < mtry_; ++i) {
        const std::size_t j = i + uniform_index(rng, p - i);
        std::swap(features_[i], features_[j]);
      }
      std::sort(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry_));
      tried = mtry_;
    }

    const std::size_t n = end - begin;
    const double total = static_cast<double>(n);
    const double total_pos = static_cast<double>(pos);
    SplitCandidate best;
    best.child_impurity = std::numeric_limits<double>::infinity();
    pairs_.resize(n);
    for (std::size_t f = 0; f < tried; ++f) {
      const std::size_t feature = features_[f];
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t s = samples_[begin + k];
        pairs_[k] = {x_.at(s, feature), y_[s] == 1 ? 1 : 0};
      }
      std::sort(pairs_.begin(), pairs_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_pos = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_pos += pairs_[k].second;
        if (pairs_[k].first == pairs_[k + 1].first) continue;
        const std::size_t n_left = k + 1;
        if (n_left < params_.min_leaf || n - n_left < params_.min_leaf) continue;
        const double nl = static_cast<double>(n_left);
        const double nr = total - nl;
        const double impurity = (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / total;
        if (impurity < best.child_impurity) {
          best.child_impurity = impurity;
          best.feature = static_cast<int>(feature);
          double threshold = 0.5 * (pairs_[k].first + pairs_[k + 1].first);
          if (!(threshold < pairs_[k + 1].first)) threshold = pairs_[k].first;
          best.threshold = threshold;
        }
      }
    }
    return best;
  }

  const FeatureMatrix& x_;
  std::span<const int> y_;
  const ForestParams& params_;
  std::size_t mtry_;
  std::vector<std::size_t> samples_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, int>> pairs_;
  double root_size_ = 1.0;
};

}  // namespace

double Tree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& node = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return nodes[i].value;
}

TrainedModel train_forest(const FeatureMatrix& x, std::span<const int> y, const ForestParams& params) {
  if (y.size() != x.n_rows) throw ContractError("label count differs from row count");
  if (x.n_rows == 0) throw ContractError("cannot fit on an empty matrix");
  if (x.n_cols() == 0) throw ContractError("cannot fit a forest without features");
  if (params.n_trees == 0) throw ContractError("n_trees must be positive");
  if (params.min_leaf == 0) throw ContractError("min_leaf must be positive");
  const std::size_t p = x.n_cols();
  const std::size_t mtry =
      params.mtry ? *params.mtry : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
  if (mtry == 0 || mtry > p) throw ContractError("mtry must lie in [1, number of features]");

  ForestModel forest;
  forest.n_features = p;
  forest.trees.resize(params.n_trees);
  parallel_for(params.n_trees, [&](std::size_t t) {
    Engine rng(derive_seed(params.seed, t));
    std::vector<std::size_t> samples(x.n_rows);
    if (params.bootstrap) {
      for (auto& s : samples) s = uniform_index(rng, x.n_rows);
      std::sort(samples.begin(), samples.end());
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(x, y, params, mtry);
    forest.trees[t] = builder.build(std::move(samples), rng);
  });

  TrainedModel out;
  out.kind = ModelKind::forest;
  out.column_names = x.column_names;
  out.training_meta["seed"] = params.seed;
  out.training_meta["mtry"] = mtry;
  out.parameters = std::move(forest);
  return out;
}

}  // namespace metatriage
