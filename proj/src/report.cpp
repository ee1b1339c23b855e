#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "metatriage/bench.hpp"
#include "metatriage/csv.hpp"
#include "metatriage/error.hpp"
#include "metatriage/svg.hpp"

namespace metatriage {

namespace {

std::string num(double v, int precision = 6) { return csv::format_number(v, precision); }

std::string pct(double fraction) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%g%%", std::round(fraction * 1000.0) / 10.0);
  return buf;
}

std::string pair(double train, double test) { return num(train, 2) + "/" + num(test, 2); }

std::string ref_pair(const BenchRow& row, const char* metric) {
  const auto tr = row.reference.find(std::string("train_") + metric);
  const auto te = row.reference.find(std::string("test_") + metric);
  if (tr == row.reference.end() || te == row.reference.end()) return "";
  return pair(tr->second, te->second);
}

std::string optional_ref(const BenchRow& row, const char* key) {
  const auto it = row.reference.find(key);
  return it == row.reference.end() ? "" : num(it->second, 2);
}

void markdown_flags(std::ostringstream& md, const BenchReport& report) {
  if (report.flags.empty()) return;
  md << "\n## Flags\n\n";
  for (const auto& f : report.flags) md << "- " << f << "\n";
}

void markdown_ranking(std::ostringstream& md, const BenchReport& report) {
  if (report.ranking.empty()) return;
  md << "\n## Feature ranking\n\n| Rank | Column | Score |\n|---:|---|---:|\n";
  for (std::size_t i = 0; i < report.ranking.size(); ++i) {
    md << "| " << i + 1 << " | " << report.ranking[i].name << " | " << num(report.ranking[i].score, 4) << " |\n";
  }
}

std::string row_status(const BenchRow& row) { return row.infeasible ? "infeasible: " + row.note : row.note; }

void markdown_grid(std::ostringstream& md, const BenchReport& report) {
  std::vector<std::string> models;
  for (const auto& r : report.rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  for (const auto& m : models) {
    md << "\n## " << m << " (train/test)\n\n"
       << "| Malware | Threshold | F1 | Precision | Recall | Ref. F1 | Ref. precision | Ref. recall | Note |\n"
       << "|---:|---:|---|---|---|---|---|---|---|\n";
    for (const auto& r : report.rows) {
      if (r.model != m) continue;
      md << "| " << pct(r.malware_fraction) << " | " << r.threshold << " | ";
      if (r.infeasible) {
        md << "| | ";
      } else {
        md << pair(r.train.f1, r.test.f1) << " | " << pair(r.train.precision, r.test.precision) << " | "
           << pair(r.train.recall, r.test.recall);
      }
      md << " | " << ref_pair(r, "f1") << " | " << ref_pair(r, "precision") << " | " << ref_pair(r, "recall") << " | "
         << row_status(r) << " |\n";
    }
  }
}

void markdown_robustness(std::ostringstream& md, const BenchReport& report) {
  std::vector<std::string> windows;
  std::vector<std::uint32_t> thresholds;
  std::map<std::pair<std::uint32_t, std::string>, const BenchRow*> cells;
  for (const auto& r : report.rows) {
    if (std::find(windows.begin(), windows.end(), r.variant) == windows.end()) windows.push_back(r.variant);
    if (std::find(thresholds.begin(), thresholds.end(), r.threshold) == thresholds.end()) thresholds.push_back(r.threshold);
    cells[{r.threshold, r.variant}] = &r;
  }
  auto table = [&](const char* title, bool reference) {
    md << "\n## " << title << "\n\n| Threshold |";
    for (const auto& w : windows) md << ' ' << w << " |";
    md << "\n|---:|";
    for (std::size_t i = 0; i < windows.size(); ++i) md << "---|";
    md << "\n";
    for (auto t : thresholds) {
      md << "| " << t << " AV |";
      for (const auto& w : windows) {
        const auto it = cells.find({t, w});
        std::string text;
        if (it != cells.end()) {
          const auto& r = *it->second;
          if (reference) text = ref_pair(r, "f1");
          else text = r.infeasible ? "infeasible" : pair(r.train.f1, r.test.f1);
        }
        md << ' ' << text << " |";
      }
      md << "\n";
    }
  };
  table("Forest F1 (train/test) by feature window", false);
  table("Reference F1 (train/test)", true);
}

void markdown_sweep(std::ostringstream& md, const BenchReport& report) {
  md << "\n## Hash width sweep\n\n| Hashes | Model | Test AUC | Test F1 | Note |\n|---:|---|---:|---:|---|\n";
  for (const auto& r : report.rows) {
    md << "| " << r.parameter << " | " << r.model << " | " << (r.infeasible ? "" : num(r.test.auc, 4)) << " | "
       << (r.infeasible ? "" : num(r.test.f1, 4)) << " | " << row_status(r) << " |\n";
  }
}

void markdown_curve(std::ostringstream& md, const BenchReport& report) {
  std::vector<std::string> models;
  std::vector<std::size_t> ks;
  std::map<std::pair<std::size_t, std::string>, const BenchRow*> cells;
  for (const auto& r : report.rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(ks.begin(), ks.end(), r.parameter) == ks.end()) ks.push_back(r.parameter);
    cells[{r.parameter, r.model}] = &r;
  }
  std::sort(ks.begin(), ks.end());
  md << "\n## Test F1 by number of top-ranked features\n\n| k |";
  for (const auto& m : models) md << ' ' << m << " |";
  md << "\n|---:|";
  for (std::size_t i = 0; i < models.size(); ++i) md << "---:|";
  md << "\n";
  for (auto k : ks) {
    md << "| " << k << " |";
    for (const auto& m : models) {
      const auto it = cells.find({k, m});
      std::string text;
      if (it != cells.end()) text = it->second->infeasible ? "infeasible" : num(it->second->test.f1, 4);
      md << ' ' << text << " |";
    }
    md << "\n";
  }
}

// Drops ROC points that move less than a small step from the last kept one.
std::vector<std::pair<double, double>> thin_curve(const std::vector<RocPoint>& points) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!out.empty() && i + 1 < points.size() && std::abs(p.fpr - out.back().first) < 0.004 &&
        std::abs(p.tpr - out.back().second) < 0.004) {
      continue;
    }
    out.emplace_back(p.fpr, p.tpr);
  }
  return out;
}

std::map<std::string, std::string> render_svgs(const BenchReport& report) {
  std::map<std::string, std::string> files;
  auto group_by = [&](auto key_of, auto x_of, auto y_of) {
    std::vector<svg::Series> series;
    for (const auto& r : report.rows) {
      if (r.infeasible) continue;
      const std::string key = key_of(r);
      auto it = std::find_if(series.begin(), series.end(), [&](const svg::Series& s) { return s.name == key; });
      if (it == series.end()) {
        series.push_back({key, {}});
        it = std::prev(series.end());
      }
      it->points.emplace_back(x_of(r), y_of(r));
    }
    for (auto& s : series) std::sort(s.points.begin(), s.points.end());
    return series;
  };
  if (report.experiment == "hash-sweep") {
    std::vector<svg::Series> roc;
    for (const auto& c : report.roc) roc.push_back({c.label + " (AUC " + num(c.auc, 3) + ")", thin_curve(c.points)});
    files["roc.svg"] = svg::line_chart(roc, {"ROC by hash width", "False positive rate", "True positive rate", true, false});
    const auto auc = group_by([](const BenchRow& r) { return r.model; },
                              [](const BenchRow& r) { return static_cast<double>(r.parameter); },
                              [](const BenchRow& r) { return r.test.auc; });
    files["auc.svg"] = svg::line_chart(auc, {"Test AUC by hash width", "Hashes", "AUC", false, true});
  } else if (report.experiment == "feature-curve") {
    const auto f1 = group_by([](const BenchRow& r) { return r.model; },
                             [](const BenchRow& r) { return static_cast<double>(r.parameter); },
                             [](const BenchRow& r) { return r.test.f1; });
    files["f1_by_k.svg"] = svg::line_chart(f1, {"Test F1 by feature count", "Top-k features", "F1", false, false});
    if (!report.ranking.empty()) {
      svg::Series s{"importance", {}};
      for (std::size_t i = 0; i < report.ranking.size(); ++i) s.points.emplace_back(i + 1.0, report.ranking[i].score);
      files["ranking.svg"] = svg::line_chart({s}, {"Normalised importance by rank", "Rank", "Score", false, false});
    }
  } else if (report.experiment == "grid") {
    const auto f1 = group_by(
        [](const BenchRow& r) { return r.model + " " + std::to_string(r.threshold) + "AV"; },
        [](const BenchRow& r) { return r.malware_fraction; }, [](const BenchRow& r) { return r.test.f1; });
    files["grid_f1.svg"] = svg::line_chart(f1, {"Test F1 by malware fraction", "Malware fraction", "F1", false, false});
  } else if (report.experiment == "robustness") {
    const auto f1 = group_by([](const BenchRow& r) { return std::to_string(r.threshold) + " AV"; },
                             [](const BenchRow& r) { return static_cast<double>(r.parameter); },
                             [](const BenchRow& r) { return r.test.f1; });
    files["windows_f1.svg"] = svg::line_chart(f1, {"Test F1 by window start", "First rank in window", "F1", false, false});
  }
  return files;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace

void write_results_csv(std::ostream& out, const BenchReport& report) {
  out << "experiment,malware_fraction,threshold,model,variant,parameter,n_rows,n_malware,"
         "train_precision,train_recall,train_f1,train_auc,test_precision,test_recall,test_f1,test_auc,"
         "test_f1_stddev,infeasible,note,ref_train_f1,ref_test_f1\n";
  for (const auto& r : report.rows) {
    out << csv::escape(report.experiment) << ',' << num(r.malware_fraction) << ',' << r.threshold << ','
        << csv::escape(r.model) << ',' << csv::escape(r.variant) << ',' << r.parameter << ',' << r.n_rows << ','
        << r.n_malware << ',' << num(r.train.precision) << ',' << num(r.train.recall) << ',' << num(r.train.f1) << ','
        << num(r.train.auc) << ',' << num(r.test.precision) << ',' << num(r.test.recall) << ',' << num(r.test.f1)
        << ',' << num(r.test.auc) << ',' << num(r.test_f1_stddev) << ',' << (r.infeasible ? 1 : 0) << ','
        << csv::escape(r.note) << ',' << optional_ref(r, "train_f1") << ',' << optional_ref(r, "test_f1") << '\n';
  }
}

std::string render_markdown(const BenchReport& report) {
  std::ostringstream md;
  md << "# " << (report.experiment.empty() ? "report" : report.experiment) << "\n";
  if (report.rows.empty()) {
    md << "\nNo results.\n";
    markdown_flags(md, report);
    return md.str();
  }
  if (report.experiment == "grid") markdown_grid(md, report);
  else if (report.experiment == "robustness") markdown_robustness(md, report);
  else if (report.experiment == "hash-sweep") markdown_sweep(md, report);
  else if (report.experiment == "feature-curve") markdown_curve(md, report);
  markdown_ranking(md, report);
  if (std::any_of(report.rows.begin(), report.rows.end(), [](const BenchRow& r) { return !r.reference.empty(); })) {
    md << "\nRef. columns are fixed display-only values, not computed from this run.\n";
  }
  markdown_flags(md, report);
  return md.str();
}

std::vector<std::filesystem::path> emit_report(const BenchReport& report, const std::filesystem::path& dir,
                                               const EmitFormats& formats) {
  namespace fs = std::filesystem;
  std::map<std::string, std::string> files;
  if (formats.csv) {
    std::ostringstream csv_out;
    write_results_csv(csv_out, report);
    files["results.csv"] = csv_out.str();
  }
  if (formats.markdown) files["report.md"] = render_markdown(report);
  if (formats.svg) {
    for (auto& [name, body] : render_svgs(report)) files[name] = std::move(body);
  }
  files["provenance.json"] = dump(report.provenance);
  files["report.json"] = dump(report.to_json());

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<fs::path> staged;
  auto discard = [&] {
    for (const auto& p : staged) fs::remove(p, ec);
  };
  for (const auto& [name, body] : files) {
    const auto tmp = dir / ("." + name + ".tmp");
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (out) staged.push_back(tmp);
    out << body;
    out.close();
    if (!out) {
      discard();
      throw IoError("cannot write " + (dir / name).string());
    }
  }
  std::vector<fs::path> written;
  std::size_t i = 0;
  for (const auto& [name, body] : files) {
    fs::rename(staged[i++], dir / name, ec);
    if (ec) {
      discard();
      throw IoError("cannot move " + name + " into " + dir.string() + ": " + ec.message());
    }
    written.push_back(dir / name);
  }
  return written;
}

}  // namespace metatriage
