#include <algorithm>
#include <cmath>
#include <numeric>

#include "metatriage/error.hpp"
#include "metatriage/learn.hpp"

namespace metatriage {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::linear_svm: return "svm";
    case ModelKind::forest: return "forest";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "logistic" || name == "lr") return ModelKind::logistic;
  if (name == "svm" || name == "linear_svm") return ModelKind::linear_svm;
  if (name == "forest" || name == "rf") return ModelKind::forest;
  throw ContractError("unknown model kind '" + name + "' (expected logistic, svm or forest)");
}

std::vector<double> predict_score(const TrainedModel& model, const FeatureMatrix& x) {
  if (x.column_names != model.column_names) {
    std::string diff;
    const std::size_t n = std::max(x.column_names.size(), model.column_names.size());
    for (std::size_t i = 0; i < n; ++i) {
      const std::string got = i < x.column_names.size() ? x.column_names[i] : "<none>";
      const std::string want = i < model.column_names.size() ? model.column_names[i] : "<none>";
      if (got != want) diff += " [" + std::to_string(i) + "] expected '" + want + "' got '" + got + "'";
    }
    throw ContractError("feature columns differ from the training columns:" + diff);
  }
  std::vector<double> scores(x.n_rows);
  switch (model.kind) {
    case ModelKind::logistic:
    case ModelKind::linear_svm: {
      const auto& lin = model.linear();
      for (std::size_t r = 0; r < x.n_rows; ++r) {
        const auto row = x.row(r);
        const double z = std::inner_product(row.begin(), row.end(), lin.weights.begin(), lin.bias);
        scores[r] = model.kind == ModelKind::logistic ? 1.0 / (1.0 + std::exp(-z)) : z;
      }
      break;
    }
    case ModelKind::forest: {
      const auto& forest = model.forest();
      for (std::size_t r = 0; r < x.n_rows; ++r) {
        double sum = 0.0;
        for (const auto& tree : forest.trees) sum += tree.predict(x.row(r));
        scores[r] = sum / static_cast<double>(forest.trees.size());
      }
      break;
    }
  }
  return scores;
}

TrainedModel train_model(ModelKind kind, const FeatureMatrix& x, std::span<const int> y, const Hyperparams& h) {
  switch (kind) {
    case ModelKind::logistic: return train_logistic(x, y, h.logistic);
    case ModelKind::linear_svm: return train_linear_svm(x, y, h.svm);
    case ModelKind::forest: return train_forest(x, y, h.forest);
  }
  throw ContractError("unknown model kind");
}

nlohmann::ordered_json to_json(const Hyperparams& h) {
  nlohmann::ordered_json j;
  j["logistic"] = {{"learning_rate", h.logistic.learning_rate},
                   {"l2_lambda", h.logistic.l2_lambda},
                   {"epochs", h.logistic.epochs},
                   {"tolerance", h.logistic.tolerance}};
  j["svm"] = {{"lambda", h.svm.lambda}, {"epochs", h.svm.epochs}, {"seed", h.svm.seed}};
  nlohmann::ordered_json forest;
  forest["n_trees"] = h.forest.n_trees;
  forest["max_depth"] = h.forest.max_depth ? nlohmann::ordered_json(*h.forest.max_depth) : nullptr;
  forest["min_leaf"] = h.forest.min_leaf;
  forest["mtry"] = h.forest.mtry ? nlohmann::ordered_json(*h.forest.mtry) : nullptr;
  forest["seed"] = h.forest.seed;
  forest["bootstrap"] = h.forest.bootstrap;
  j["forest"] = forest;
  return j;
}

Hyperparams hyperparams_from_json(const nlohmann::json& doc, Hyperparams h) {
  auto read = [](const nlohmann::json& obj, const char* key, auto& field) {
    if (const auto it = obj.find(key); it != obj.end() && !it->is_null()) it->get_to(field);
  };
  auto read_optional = [](const nlohmann::json& obj, const char* key, std::optional<std::size_t>& field) {
    if (const auto it = obj.find(key); it != obj.end()) {
      field = it->is_null() ? std::nullopt : std::optional<std::size_t>(it->get<std::size_t>());
    }
  };
  auto check_keys = [](const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> known) {
    if (!obj.is_object()) {
      throw DataError("hyperparameters " + (where.empty() ? std::string("document") : where) + " must be a JSON object");
    }
    for (const auto& item : obj.items()) {
      if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
        throw DataError("unknown hyperparameter '" + where + (where.empty() ? "" : ".") + item.key() + "'");
      }
    }
  };
  check_keys(doc, "", {"logistic", "svm", "forest"});
  if (doc.contains("logistic")) {
    check_keys(doc["logistic"], "logistic", {"learning_rate", "l2_lambda", "epochs", "tolerance"});
  }
  if (doc.contains("svm")) check_keys(doc["svm"], "svm", {"lambda", "epochs", "seed"});
  if (doc.contains("forest")) {
    check_keys(doc["forest"], "forest", {"n_trees", "max_depth", "min_leaf", "mtry", "seed", "bootstrap"});
  }
  try {
    if (const auto it = doc.find("logistic"); it != doc.end()) {
      read(*it, "learning_rate", h.logistic.learning_rate);
      read(*it, "l2_lambda", h.logistic.l2_lambda);
      read(*it, "epochs", h.logistic.epochs);
      read(*it, "tolerance", h.logistic.tolerance);
    }
    if (const auto it = doc.find("svm"); it != doc.end()) {
      read(*it, "lambda", h.svm.lambda);
      read(*it, "epochs", h.svm.epochs);
      read(*it, "seed", h.svm.seed);
    }
    if (const auto it = doc.find("forest"); it != doc.end()) {
      read(*it, "n_trees", h.forest.n_trees);
      read_optional(*it, "max_depth", h.forest.max_depth);
      read(*it, "min_leaf", h.forest.min_leaf);
      read_optional(*it, "mtry", h.forest.mtry);
      read(*it, "seed", h.forest.seed);
      read(*it, "bootstrap", h.forest.bootstrap);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid hyperparameters: ") + e.what());
  }
  return h;
}

nlohmann::ordered_json to_json(const TrainedModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = to_string(model.kind);
  j["column_names"] = model.column_names;
  j["training_meta"] = model.training_meta;
  if (model.kind == ModelKind::forest) {
    const auto& forest = model.forest();
    j["n_features"] = forest.n_features;
    auto& trees = j["trees"];
    trees = nlohmann::ordered_json::array();
    for (const auto& tree : forest.trees) {
      nlohmann::ordered_json t;
      std::vector<int> feature, left, right;
      std::vector<double> threshold, value, decrease;
      std::vector<std::size_t> samples;
      for (const auto& node : tree.nodes) {
        feature.push_back(node.feature);
        threshold.push_back(node.threshold);
        left.push_back(node.left);
        right.push_back(node.right);
        value.push_back(node.value);
        samples.push_back(node.n_samples);
        decrease.push_back(node.impurity_decrease);
      }
      t["feature"] = feature;
      t["threshold"] = threshold;
      t["left"] = left;
      t["right"] = right;
      t["value"] = value;
      t["n_samples"] = samples;
      t["impurity_decrease"] = decrease;
      trees.push_back(std::move(t));
    }
  } else {
    j["weights"] = model.linear().weights;
    j["bias"] = model.linear().bias;
  }
  return j;
}

TrainedModel model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kModelFormatVersion) {
      throw DataError("unsupported model format version");
    }
    TrainedModel model;
    model.kind = model_kind_from_string(doc.at("kind").get<std::string>());
    model.column_names = doc.at("column_names").get<std::vector<std::string>>();
    if (const auto it = doc.find("training_meta"); it != doc.end()) model.training_meta = *it;
    if (model.kind == ModelKind::forest) {
      ForestModel forest;
      forest.n_features = doc.at("n_features").get<std::size_t>();
      for (const auto& t : doc.at("trees")) {
        Tree tree;
        const auto feature = t.at("feature").get<std::vector<int>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<int>>();
        const auto right = t.at("right").get<std::vector<int>>();
        const auto value = t.at("value").get<std::vector<double>>();
        const auto samples = t.at("n_samples").get<std::vector<std::size_t>>();
        const auto decrease = t.at("impurity_decrease").get<std::vector<double>>();
        const std::size_t n = feature.size();
        if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
            samples.size() != n || decrease.size() != n || n == 0) {
          throw DataError("inconsistent tree arrays in model document");
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                                  left[i] >= static_cast<int>(n) || right[i] >= static_cast<int>(n) ||
                                  static_cast<std::size_t>(feature[i]) >= forest.n_features)) {
            throw DataError("malformed tree node in model document");
          }
          tree.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i], samples[i], decrease[i]});
        }
        forest.trees.push_back(std::move(tree));
      }
      model.parameters = std::move(forest);
    } else {
      LinearModel lin;
      lin.weights = doc.at("weights").get<std::vector<double>>();
      lin.bias = doc.at("bias").get<double>();
      if (lin.weights.size() != model.column_names.size()) throw DataError("weight count differs from column count");
      model.parameters = std::move(lin);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace metatriage
