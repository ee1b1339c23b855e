#pragma once

// Logistic regression, linear SVM and random forest behind one scoring
// interface.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "metatriage/featurize.hpp"

namespace metatriage {

enum class ModelKind { logistic, linear_svm, forest };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct LogisticParams {
  double learning_rate = 0.1;
  double l2_lambda = 1e-4;
  std::size_t epochs = 500;
  double tolerance = 1e-6;  // stop once the gradient norm falls below
};

struct SvmParams {
  /// Regulariser of (lambda/2)||w||^2 + mean hinge; equivalent to C = 1/(lambda n).
  double lambda = 1e-4;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
};

struct ForestParams {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;  // unlimited when empty
  std::size_t min_leaf = 1;
  std::optional<std::size_t> mtry;  // ceil(sqrt(P)) when empty
  std::uint64_t seed = 0;
  bool bootstrap = true;
};

struct Hyperparams {
  LogisticParams logistic;
  SvmParams svm;
  ForestParams forest;
};

nlohmann::ordered_json to_json(const Hyperparams& h);
Hyperparams hyperparams_from_json(const nlohmann::json& doc, Hyperparams base = {});

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x <= threshold go left
  int left = -1;
  int right = -1;
  double value = 0.0;  // malware fraction of the training rows reaching the node
  std::size_t n_samples = 0;
  /// (n_node / n_root) * (gini(node) - weighted gini(children)); 0 at leaves.
  double impurity_decrease = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
};

struct ForestModel {
  std::vector<Tree> trees;
  std::size_t n_features = 0;
};

struct TrainedModel {
  ModelKind kind = ModelKind::logistic;
  std::variant<LinearModel, ForestModel> parameters;
  std::vector<std::string> column_names;
  nlohmann::ordered_json training_meta = nlohmann::ordered_json::object();

  const LinearModel& linear() const { return std::get<LinearModel>(parameters); }
  const ForestModel& forest() const { return std::get<ForestModel>(parameters); }
};

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticObjective {
  double loss = 0.0;  // mean negative log-likelihood + (lambda/2)||w||^2
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

/// Objective and analytic gradient at (weights, bias); the bias is not
/// regularised.
LogisticObjective logistic_objective(const FeatureMatrix& x, std::span<const int> y, std::span<const double> weights,
                                     double bias, double l2_lambda);

struct LogisticTrace {
  std::vector<double> loss;  // loss before every step
};

/// Full-batch gradient descent. Throws DivergenceError on a non-finite loss.
TrainedModel train_logistic(const FeatureMatrix& x, std::span<const int> y, const LogisticParams& params,
                            LogisticTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Linear SVM

struct SvmTrace {
  std::vector<LinearModel> epoch_iterates;  // raw iterate at the end of each epoch
};

/// Primal objective (lambda/2)(||w||^2 + b^2) + mean hinge loss. The bias is
/// learnt as the weight of a constant feature and is regularised with it.
double svm_objective(const FeatureMatrix& x, std::span<const int> y, const LinearModel& model, double lambda);

/// Pegasos stochastic subgradient descent with step 1/(lambda t). The visit
/// order of each epoch is derived from the seed and the row contents, so it
/// does not depend on the order rows are supplied in. Returns the average of
/// the iterates over the second half of the run.
TrainedModel train_linear_svm(const FeatureMatrix& x, std::span<const int> y, const SvmParams& params,
                              SvmTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Random forest

/// CART trees with Gini splits on bootstrap samples; each tree's randomness is
/// derived from (seed, tree index) so results do not depend on threading.
TrainedModel train_forest(const FeatureMatrix& x, std::span<const int> y, const ForestParams& params);

// ---------------------------------------------------------------------------

/// Malware-ness score per row: forest in [0,1], logistic in (0,1), SVM margin.
/// Throws ContractError when the columns differ from the training columns.
std::vector<double> predict_score(const TrainedModel& model, const FeatureMatrix& x);

TrainedModel train_model(ModelKind kind, const FeatureMatrix& x, std::span<const int> y, const Hyperparams& h);

inline constexpr int kModelFormatVersion = 1;

nlohmann::ordered_json to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& doc);

}  // namespace metatriage
