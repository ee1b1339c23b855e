#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "metatriage/error.hpp"
#include "metatriage/hash.hpp"
#include "metatriage/learn.hpp"
#include "metatriage/rng.hpp"

namespace metatriage {

namespace {

std::uint64_t row_fingerprint(std::span<const double> row, int label) {
  std::string bytes(row.size() * sizeof(double) + 1, '\0');
  std::memcpy(bytes.data(), row.data(), row.size() * sizeof(double));
  bytes.back() = static_cast<char>(label);
  return hash64(bytes, 0x73766d726f77ULL);
}

double margin(const LinearModel& m, std::span<const double> row) {
  return std::inner_product(row.begin(), row.end(), m.weights.begin(), m.bias);
}

}  // namespace

double svm_objective(const FeatureMatrix& x, std::span<const int> y, const LinearModel& model, double lambda) {
  if (y.size() != x.n_rows) throw ContractError("label count differs from row count");
  double hinge = 0.0;
  for (std::size_t r = 0; r < x.n_rows; ++r) {
    const double s = y[r] == 1 ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - s * margin(model, x.row(r)));
  }
  double norm = model.bias * model.bias;
  for (double w : model.weights) norm += w * w;
  return 0.5 * lambda * norm + hinge / static_cast<double>(std::max<std::size_t>(1, x.n_rows));
}

TrainedModel train_linear_svm(const FeatureMatrix& x, std::span<const int> y, const SvmParams& params,
                              SvmTrace* trace) {
  if (y.size() != x.n_rows) throw ContractError("label count differs from row count");
  if (x.n_rows == 0) throw ContractError("cannot fit on an empty matrix");
  if (!(params.lambda > 0.0)) throw ContractError("svm lambda must be positive");
  const std::size_t n = x.n_rows, p = x.n_cols();

  std::vector<std::uint64_t> fingerprint(n);
  for (std::size_t r = 0; r < n; ++r) fingerprint[r] = row_fingerprint(x.row(r), y[r]);

  LinearModel w;
  w.weights.assign(p, 0.0);
  LinearModel avg;
  avg.weights.assign(p, 0.0);
  std::size_t averaged = 0;
  const std::size_t total_steps = n * params.epochs;
  const std::size_t average_from = total_steps / 2;
  const double radius = 1.0 / std::sqrt(params.lambda);

  std::vector<std::pair<std::uint64_t, std::size_t>> order(n);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(params.seed, epoch);
    for (std::size_t r = 0; r < n; ++r) order[r] = {splitmix64(fingerprint[r] ^ epoch_seed), r};
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& [_, r] : order) {
      ++t;
      const double eta = 1.0 / (params.lambda * static_cast<double>(t));
      const double s = y[r] == 1 ? 1.0 : -1.0;
      const auto row = x.row(r);
      const bool violated = s * margin(w, row) < 1.0;
      const double shrink = 1.0 - eta * params.lambda;
      for (auto& v : w.weights) v *= shrink;
      w.bias *= shrink;
      if (violated) {
        for (std::size_t c = 0; c < p; ++c) w.weights[c] += eta * s * row[c];
        w.bias += eta * s;
      }
      double norm = w.bias * w.bias;
      for (double v : w.weights) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > radius) {
        const double scale = radius / norm;
        for (auto& v : w.weights) v *= scale;
        w.bias *= scale;
      }
      if (t > average_from) {
        ++averaged;
        const double k = 1.0 / static_cast<double>(averaged);
        for (std::size_t c = 0; c < p; ++c) avg.weights[c] += (w.weights[c] - avg.weights[c]) * k;
        avg.bias += (w.bias - avg.bias) * k;
      }
    }
    if (trace) trace->epoch_iterates.push_back(w);
  }
  if (averaged == 0) avg = w;
  for (double v : avg.weights) {
    if (!std::isfinite(v)) throw DivergenceError("linear SVM produced non-finite weights");
  }

  TrainedModel out;
  out.kind = ModelKind::linear_svm;
  out.column_names = x.column_names;
  out.training_meta["steps"] = t;
  out.training_meta["seed"] = params.seed;
  out.training_meta["final_objective"] = svm_objective(x, y, avg, params.lambda);
  out.parameters = std::move(avg);
  return out;
}

}  // namespace metatriage
