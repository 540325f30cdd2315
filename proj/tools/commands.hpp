#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dmaps/dmaps.hpp"

// Command implementations behind the dmaps executable. Each run_* takes a
// plain options struct so tests can call it without going through argv.
// Files written here never contain timings, so reruns are byte-identical.

namespace dmaps::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline void prepare_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

inline void write_json(const fs::path& path, const json& value) {
  prepare_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << value.dump(2) << '\n';
}

inline void write_text(const fs::path& path, const std::string& text) {
  prepare_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

/// Loads a data CSV; `label_column` is used as labels only if present.
inline DataMatrix load_points(const fs::path& path, const std::string& label_column) {
  if (!fs::exists(path)) throw DataError("no such file '" + path.string() + "'");
  const auto table = read_csv(path);
  const bool has_label = !label_column.empty() &&
                         std::find(table.header.begin(), table.header.end(), label_column) != table.header.end();
  return load_csv(path, has_label ? std::optional<std::string>(label_column) : std::nullopt);
}

inline json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline std::string hex64(std::uint64_t value) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << value;
  return s.str();
}

// ---------------------------------------------------------------------------

struct GenerateOptions {
  std::string dataset;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  std::string out;
};

inline void run_generate(const GenerateOptions& o, std::ostream& log) {
  const auto data = generate_dataset(o.dataset, o.n, o.seed);
  prepare_parent(o.out);
  save_csv(o.out, data);
  log << "wrote " << data.rows() << " rows to " << o.out << '\n';
}

// ---------------------------------------------------------------------------

struct FitOptions {
  std::string data;
  std::string label_column = "label";
  double quantile = 0.05;
  double sigma = 0.0;  // <= 0: derive from quantile
  double alpha = 1.0;
  int t = 1;
  std::size_t d = 0;  // 0: likelihood suggestion
  std::string out_dir;
  bool all_vectors = false;
  bool warnings_as_errors = false;
};

struct FitFiles {
  fs::path model, embedding, likelihood, summary;
};

inline FitFiles fit_files(const fs::path& dir) {
  return {dir / "model.txt", dir / "embedding.csv", dir / "likelihood.csv", dir / "fit_summary.json"};
}

inline void write_likelihood(const fs::path& path, const std::vector<double>& curve) {
  Eigen::MatrixXd values(static_cast<Eigen::Index>(curve.size()), 2);
  for (std::size_t k = 0; k < curve.size(); ++k) {
    values(static_cast<Eigen::Index>(k), 0) = static_cast<double>(k + 1);
    values(static_cast<Eigen::Index>(k), 1) = curve[k];
  }
  write_csv(path, {"d", "log_likelihood"}, values);
}

inline json fit_summary(const DiffusionModel& model) {
  json s;
  s["points"] = model.size();
  s["sigma"] = model.config.sigma;
  s["quantile"] = model.config.quantile;
  s["alpha"] = model.config.alpha;
  s["t"] = model.config.t;
  s["d"] = model.d;
  s["suggested_d"] = model.suggested_d;
  const Eigen::Index shown = std::min<Eigen::Index>(model.eigen.values.size(), 26);
  s["leading_eigenvalues"] = to_json(model.eigen.values.head(shown));
  s["warnings"] = model.warnings;
  return s;
}

inline void report_warnings(const std::vector<std::string>& warnings, bool as_errors, std::ostream& log) {
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  if (as_errors && !warnings.empty()) {
    throw NumericalError(std::to_string(warnings.size()) + " warning(s) treated as errors");
  }
}

inline DiffusionModel run_fit(const FitOptions& o, std::ostream& log) {
  const auto data = load_points(o.data, o.label_column);
  KernelConfig config;
  config.quantile = o.quantile;
  config.sigma = o.sigma;
  config.alpha = o.alpha;
  config.t = o.t;
  const auto model = fit(data, config, o.d ? std::optional<std::size_t>(o.d) : std::nullopt);
  report_warnings(model.warnings, o.warnings_as_errors, log);

  const auto files = fit_files(o.out_dir);
  fs::create_directories(o.out_dir);
  const auto kept = o.all_vectors ? std::nullopt : std::optional<Eigen::Index>(model.d + 1);
  save_model(files.model, model, kept);
  save_embedding(files.embedding, embed(model), data.labels, data.label_name);
  write_likelihood(files.likelihood, model.likelihood_curve);
  write_json(files.summary, fit_summary(model));
  log << "fit " << model.size() << " points: sigma " << format_double(model.config.sigma) << ", d "
      << model.d << " (suggested " << model.suggested_d << ")\n";
  return model;
}

// ---------------------------------------------------------------------------

struct ExtendOptions {
  std::string model;
  std::string data;
  std::string label_column = "label";
  std::string out;
  std::string eigenvectors_out;  // optional raw extended phi_1 .. phi_{d+1}
  std::string scaling = "asymptotic";
};

inline NystromScaling parse_scaling(const std::string& name) {
  if (name == "asymptotic") return NystromScaling::asymptotic;
  if (name == "finite-sample") return NystromScaling::finite_sample;
  throw UsageError("unknown scaling '" + name + "' (expected asymptotic or finite-sample)");
}

inline Embedding run_extend(const ExtendOptions& o, std::ostream& log) {
  const auto scaling = parse_scaling(o.scaling);
  const auto model = load_model(fs::path(o.model));
  const auto data = load_points(o.data, o.label_column);
  const auto emb = extend_embedding(model, data);
  prepare_parent(o.out);
  save_embedding(o.out, emb, data.labels, data.label_name);
  if (!o.eigenvectors_out.empty()) {
    const Eigen::MatrixXd phi = extend_eigenvectors(model, data, scaling);
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < phi.cols(); ++j) header.push_back("phi_" + std::to_string(j + 1));
    prepare_parent(o.eigenvectors_out);
    write_csv(o.eigenvectors_out, header, phi);
  }
  log << "extended " << data.rows() << " points\n";
  return emb;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string model;
  std::string data;  // optional; must equal the model's training points
  std::string out_dir;
  double learning_rate = 1e-2;
  std::size_t batch_size = 512;
  std::size_t epochs = 200;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::vector<std::size_t> hidden = {128, 64, 32};
  std::size_t output_dim = 0;  // 0: the model's d
  bool raw_inputs = false;
};

struct TrainFiles {
  fs::path network, report, summary;
};

inline TrainFiles train_files(const fs::path& dir) {
  return {dir / "network.txt", dir / "train_report.csv", dir / "train_summary.json"};
}

inline TrainConfig train_config(const TrainOptions& o, std::size_t model_d) {
  TrainConfig c;
  c.learning_rate = o.learning_rate;
  c.batch_size = o.batch_size;
  c.epochs = o.epochs;
  c.validation_fraction = o.validation_fraction;
  c.seed = o.seed;
  c.adam_beta1 = o.adam_beta1;
  c.adam_beta2 = o.adam_beta2;
  c.adam_epsilon = o.adam_epsilon;
  c.hidden = o.hidden;
  c.output_dim = o.output_dim ? o.output_dim : model_d;
  c.standardize_inputs = !o.raw_inputs;
  return c;
}

inline void write_train_outputs(const fs::path& dir, const TrainResult& result) {
  const auto files = train_files(dir);
  fs::create_directories(dir);
  save_network(files.network, result.model);
  const auto& r = result.report;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(r.train_loss.size()), 3);
  for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
    const auto row = static_cast<Eigen::Index>(e);
    values(row, 0) = static_cast<double>(e + 1);
    values(row, 1) = r.train_loss[e];
    values(row, 2) = r.validation_loss[e];
  }
  write_csv(files.report, {"epoch", "train_loss", "validation_loss"}, values);
  json s;
  s["epochs_run"] = r.train_loss.size();
  s["best_epoch"] = r.best_epoch;
  s["best_validation_loss"] = r.best_epoch ? json(r.validation_loss[r.best_epoch - 1]) : json(nullptr);
  s["train_rows"] = r.train_rows.size();
  s["validation_rows"] = r.validation_rows.size();
  s["checksum"] = hex64(r.checksum);
  write_json(files.summary, s);
}

inline TrainResult run_train(const TrainOptions& o, std::ostream& log) {
  const auto model = load_model(fs::path(o.model));
  DataMatrix data = model.train_points;
  if (!o.data.empty()) {
    const auto given = load_points(o.data, model.train_points.label_name);
    if (given.points.rows() != data.points.rows() || given.points.cols() != data.points.cols() ||
        given.points != data.points) {
      throw DataError("'" + o.data + "' does not match the model's training points");
    }
  }
  const auto target = gram_target(model);
  const auto result = train(data, target, train_config(o, model.d));
  write_train_outputs(o.out_dir, result);
  log << "trained " << result.report.train_loss.size() << " epochs in " << std::fixed << std::setprecision(1)
      << result.report.seconds << std::defaultfloat << " s, best epoch " << result.report.best_epoch << '\n';
  return result;
}

// ---------------------------------------------------------------------------

struct PredictOptions {
  std::string network;
  std::string data;
  std::string label_column = "label";
  std::string out;
};

inline Embedding run_predict(const PredictOptions& o, std::ostream& log) {
  const auto net = load_network(fs::path(o.network));
  const auto data = load_points(o.data, o.label_column);
  const auto emb = predict(net, data);
  prepare_parent(o.out);
  save_embedding(o.out, emb, data.labels, data.label_name);
  log << "predicted " << data.rows() << " points\n";
  return emb;
}

// ---------------------------------------------------------------------------

struct EvaluateOptions {
  std::string test;
  std::string reference;
  std::string label_column = "label";
  std::string out_dir;
  bool exclude_zero = false;
  double level = 0.95;
  std::size_t resamples = 1000;
  std::uint64_t seed = 0;
};

struct Evaluation {
  double mre = 0.0;
  Interval ci;
  DecileReport deciles;
  std::size_t pairs = 0;
  std::size_t excluded = 0;
};

inline Evaluation evaluate(const Embedding& test, const Embedding& reference, const EvaluateOptions& o) {
  const auto errors = pair_relative_errors(test.coords, reference.coords, o.exclude_zero);
  Evaluation ev;
  ev.mre = mean_of(errors.relative);
  ev.ci = bootstrap_ci(errors.relative, o.level, o.resamples, o.seed);
  ev.deciles = mre_by_decile(errors);
  ev.pairs = errors.relative.size();
  ev.excluded = errors.excluded;
  return ev;
}

inline void write_deciles(const fs::path& path, const DecileReport& deciles) {
  Eigen::MatrixXd values(10, 4);
  for (Eigen::Index b = 0; b < 10; ++b) {
    const auto k = static_cast<std::size_t>(b);
    values.row(b) << static_cast<double>(b + 1), static_cast<double>(deciles.count[k]), deciles.upper[k],
        deciles.mre[k];
  }
  prepare_parent(path);
  write_csv(path, {"decile", "pairs", "upper_distance", "mre"}, values);
}

inline std::string format_metrics(const Evaluation& ev, const EvaluateOptions& o) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "pairs," << ev.pairs << '\n';
  out << "excluded_pairs," << ev.excluded << '\n';
  out << "mre," << format_double(ev.mre) << '\n';
  out << "ci_level," << format_double(o.level) << '\n';
  out << "ci_low," << format_double(ev.ci.low) << '\n';
  out << "ci_high," << format_double(ev.ci.high) << '\n';
  out << "bootstrap_resamples," << o.resamples << '\n';
  out << "bootstrap_seed," << o.seed << '\n';
  return out.str();
}

inline Evaluation run_evaluate(const EvaluateOptions& o, std::ostream& log) {
  const auto test = load_embedding(o.test, o.label_column);
  const auto reference = load_embedding(o.reference, o.label_column);
  const auto ev = evaluate(test, reference, o);
  fs::create_directories(o.out_dir);
  write_text(fs::path(o.out_dir) / "metrics.csv", format_metrics(ev, o));
  write_deciles(fs::path(o.out_dir) / "deciles.csv", ev.deciles);
  log << "MRE " << format_double(ev.mre) << " (" << format_double(ev.ci.low) << ", "
      << format_double(ev.ci.high) << ") over " << ev.pairs << " pairs\n";
  return ev;
}

// ---------------------------------------------------------------------------

struct ReproduceOptions {
  std::string dataset;
  std::string workdir;
  std::size_t n = 2000;
  std::size_t n_train = 1000;
  std::uint64_t data_seed = 7;
  std::uint64_t split_seed = 11;
  std::optional<double> quantile;  // default: per-dataset benchmark value
  double alpha = 1.0;
  int t = 100;
  std::size_t d = 2;
  bool per_sample_bandwidth = false;
  TrainOptions train;  // model/data/out_dir unused
  double level = 0.95;
  std::size_t resamples = 1000;
  std::uint64_t bootstrap_seed = 0;
};

/// Bandwidth quantiles chosen for the synthetic benchmarks.
inline double default_quantile(const std::string& dataset) {
  if (dataset == "swiss-roll" || dataset == "s-curve") return 5e-3;
  if (dataset == "helix") return 3e-2;
  throw UsageError("unknown dataset '" + dataset + "' (expected swiss-roll, s-curve or helix)");
}

struct SummaryRow {
  std::string method;
  std::string subset;
  Evaluation eval;
};

struct ReproduceResult {
  std::vector<SummaryRow> rows;
  std::size_t suggested_d_full = 0;
  double sigma_full = 0.0;
};

inline Embedding rows_of(const Embedding& emb, const std::vector<std::size_t>& rows) {
  Embedding out;
  out.t = emb.t;
  out.eigenvalues_used = emb.eigenvalues_used;
  out.coords.resize(static_cast<Eigen::Index>(rows.size()), emb.coords.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.coords.row(static_cast<Eigen::Index>(r)) = emb.coords.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

inline std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "method,subset,mre,ci_low,ci_high,decile_of_max\n";
  for (const auto& row : rows) {
    const auto& m = row.eval.deciles.mre;
    const auto peak = std::max_element(m.begin(), m.end()) - m.begin() + 1;
    out << row.method << ',' << row.subset << ',' << format_double(row.eval.mre) << ','
        << format_double(row.eval.ci.low) << ',' << format_double(row.eval.ci.high) << ',' << peak << '\n';
  }
  return out.str();
}

/// generate -> split -> fit(all) and fit(D_a) -> extend(D_b) -> train on D_a
/// -> predict -> evaluate against the full-sample embedding.
inline ReproduceResult run_reproduce(const ReproduceOptions& o, std::ostream& log) {
  const double q = o.quantile.value_or(default_quantile(o.dataset));
  const fs::path dir = o.workdir;
  fs::create_directories(dir);

  const auto data = generate_dataset(o.dataset, o.n, o.data_seed);
  save_csv(dir / "data.csv", data);
  if (o.n_train >= o.n) throw UsageError("--n-train must be smaller than --n");
  const auto parts = split(data, o.n_train, o.split_seed);
  save_csv(dir / "data_a.csv", parts.first);
  save_csv(dir / "data_b.csv", parts.second);

  KernelConfig config;
  config.quantile = q;
  config.alpha = o.alpha;
  config.t = o.t;
  const KernelConfig full_config = resolve_bandwidth(data, config);
  log << "fitting all " << data.rows() << " points\n";
  const auto full = fit(data, full_config, o.d);
  report_warnings(full.warnings, false, log);
  const auto reference = embed(full);
  save_embedding(dir / "dm_all.csv", reference, data.labels, data.label_name);
  write_likelihood(dir / "likelihood_all.csv", full.likelihood_curve);

  log << "fitting D_a (" << parts.first.rows() << " points)\n";
  const auto model_a = fit(parts.first, o.per_sample_bandwidth ? config : full_config, o.d);
  report_warnings(model_a.warnings, false, log);
  save_model(dir / "model_a.txt", model_a, static_cast<Eigen::Index>(model_a.d + 1));
  write_likelihood(dir / "likelihood_a.csv", model_a.likelihood_curve);

  const auto ref_a = rows_of(reference, parts.first_rows);
  const auto ref_b = rows_of(reference, parts.second_rows);
  const auto nys_a = embed(model_a);
  const auto nys_b = extend_embedding(model_a, parts.second);
  save_embedding(dir / "nystrom_a.csv", nys_a, parts.first.labels, data.label_name);
  save_embedding(dir / "nystrom_b.csv", nys_b, parts.second.labels, data.label_name);

  log << "training (" << o.train.epochs << " epochs)\n";
  const auto target = gram_target(model_a);
  const auto trained = train(parts.first, target, train_config(o.train, model_a.d));
  write_train_outputs(dir / "ddm", trained);
  log << "training took " << std::fixed << std::setprecision(1) << trained.report.seconds << std::defaultfloat
      << " s, best epoch " << trained.report.best_epoch << '\n';
  const auto ddm_a = predict(trained.model, parts.first);
  const auto ddm_b = predict(trained.model, parts.second);
  save_embedding(dir / "ddm_a.csv", ddm_a, parts.first.labels, data.label_name);
  save_embedding(dir / "ddm_b.csv", ddm_b, parts.second.labels, data.label_name);

  EvaluateOptions eval_options;
  eval_options.level = o.level;
  eval_options.resamples = o.resamples;
  eval_options.seed = o.bootstrap_seed;
  ReproduceResult result;
  result.suggested_d_full = full.suggested_d;
  result.sigma_full = full.config.sigma;
  const std::array<std::tuple<const char*, const char*, const Embedding*, const Embedding*>, 4> cases{{
      {"nystrom", "a", &nys_a, &ref_a},
      {"nystrom", "b", &nys_b, &ref_b},
      {"ddm", "a", &ddm_a, &ref_a},
      {"ddm", "b", &ddm_b, &ref_b},
  }};
  for (const auto& [method, subset, test, ref] : cases) {
    auto ev = evaluate(*test, *ref, eval_options);
    write_deciles(dir / (std::string("deciles_") + method + "_" + subset + ".csv"), ev.deciles);
    result.rows.push_back({method, subset, std::move(ev)});
  }
  write_text(dir / "summary.csv", format_summary(result.rows));

  json s;
  s["dataset"] = o.dataset;
  s["quantile"] = q;
  s["sigma_all"] = full.config.sigma;
  s["sigma_a"] = model_a.config.sigma;
  s["suggested_d_all"] = full.suggested_d;
  s["suggested_d_a"] = model_a.suggested_d;
  s["leading_eigenvalues_all"] = to_json(full.eigen.values.head(std::min<Eigen::Index>(6, full.eigen.values.size())));
  s["ddm_checksum"] = hex64(trained.report.checksum);
  s["ddm_best_epoch"] = trained.report.best_epoch;
  write_json(dir / "reproduce_summary.json", s);
  return result;
}

}  // namespace dmaps::cli
