#include <algorithm>
#include <cmath>
#include <numeric>

#include "metatriage/error.hpp"
#include "metatriage/learn.hpp"

namespace metatriage {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// The design matrix stored as a per-column base value plus sparse row-wise
// deviations from it. Hashed permission columns are mostly one value, so the
// products cost O(nnz) instead of O(n P).
class LogisticProblem {
 public:
  LogisticProblem(const FeatureMatrix& x, std::span<const int> y) : y_(y), n_(x.n_rows), p_(x.n_cols()) {
    if (y.size() != n_) throw ContractError("label count differs from row count");
    if (n_ == 0) throw ContractError("cannot fit on an empty matrix");
    base_.assign(p_, 0.0);
    std::vector<double> col(n_);
    for (std::size_t c = 0; c < p_; ++c) {
      for (std::size_t r = 0; r < n_; ++r) col[r] = x.at(r, c);
      std::sort(col.begin(), col.end());
      double best = col[0];
      std::size_t best_run = 0;
      for (std::size_t i = 0; i < n_;) {
        std::size_t j = i;
        while (j < n_ && col[j] == col[i]) ++j;
        if (j - i > best_run) {
          best_run = j - i;
          best = col[i];
        }
        i = j;
      }
      base_[c] = best;
    }
    row_start_.reserve(n_ + 1);
    row_start_.push_back(0);
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t c = 0; c < p_; ++c) {
        const double d = x.at(r, c) - base_[c];
        if (d != 0.0) {
          cols_.push_back(static_cast<std::uint32_t>(c));
          devs_.push_back(d);
        }
      }
      row_start_.push_back(cols_.size());
    }
  }

  std::size_t n_features() const { return p_; }

  LogisticObjective evaluate(std::span<const double> w, double b, double lambda) const {
    LogisticObjective out;
    out.grad_weights.assign(p_, 0.0);
    const double offset = b + std::inner_product(w.begin(), w.end(), base_.begin(), 0.0);
    double loss = 0.0, residual_sum = 0.0;
    for (std::size_t r = 0; r < n_; ++r) {
      double z = offset;
      for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) z += w[cols_[k]] * devs_[k];
      const double target = y_[r] == 1 ? 1.0 : 0.0;
      loss += softplus(z) - target * z;
      const double residual = sigmoid(z) - target;
      residual_sum += residual;
      for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) out.grad_weights[cols_[k]] += residual * devs_[k];
    }
    const double inv_n = 1.0 / static_cast<double>(n_);
    double reg = 0.0;
    for (std::size_t c = 0; c < p_; ++c) {
      out.grad_weights[c] = (out.grad_weights[c] + base_[c] * residual_sum) * inv_n + lambda * w[c];
      reg += w[c] * w[c];
    }
    out.grad_bias = residual_sum * inv_n;
    out.loss = loss * inv_n + 0.5 * lambda * reg;
    return out;
  }

 private:
  std::span<const int> y_;
  std::size_t n_, p_;
  std::vector<double> base_;
  std::vector<std::size_t> row_start_;
  std::vector<std::uint32_t> cols_;
  std::vector<double> devs_;
};

}  // namespace

LogisticObjective logistic_objective(const FeatureMatrix& x, std::span<const int> y, std::span<const double> weights,
                                     double bias, double l2_lambda) {
  if (weights.size() != x.n_cols()) throw ContractError("weight vector length differs from feature count");
  return LogisticProblem(x, y).evaluate(weights, bias, l2_lambda);
}

TrainedModel train_logistic(const FeatureMatrix& x, std::span<const int> y, const LogisticParams& params,
                            LogisticTrace* trace) {
  if (!(params.learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  const LogisticProblem problem(x, y);
  LinearModel model;
  model.weights.assign(problem.n_features(), 0.0);
  std::size_t epoch = 0;
  double grad_norm = 0.0, loss = 0.0;
  for (; epoch < params.epochs; ++epoch) {
    const auto obj = problem.evaluate(model.weights, model.bias, params.l2_lambda);
    loss = obj.loss;
    if (!std::isfinite(obj.loss)) {
      throw DivergenceError("logistic regression diverged at epoch " + std::to_string(epoch) +
                            "; try a smaller learning_rate");
    }
    if (trace) trace->loss.push_back(obj.loss);
    grad_norm = obj.grad_bias * obj.grad_bias;
    for (double g : obj.grad_weights) grad_norm += g * g;
    grad_norm = std::sqrt(grad_norm);
    if (grad_norm < params.tolerance) break;
    for (std::size_t c = 0; c < model.weights.size(); ++c) model.weights[c] -= params.learning_rate * obj.grad_weights[c];
    model.bias -= params.learning_rate * obj.grad_bias;
  }
  TrainedModel out;
  out.kind = ModelKind::logistic;
  out.column_names = x.column_names;
  out.training_meta["epochs_run"] = epoch;
  out.training_meta["final_loss"] = loss;
  out.training_meta["final_gradient_norm"] = grad_norm;
  out.parameters = std::move(model);
  return out;
}

}  // namespace metatriage
