#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "commands.hpp"

namespace fs = std::filesystem;
using dmaps::cli::json;

namespace {

// Long option name without the leading dashes, e.g. "learning-rate".
std::string key_of(const CLI::Option* opt) {
  return opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
}

std::set<const CLI::Option*> flags;
std::set<const CLI::Option*> needed;

// Required options are checked after the config file is merged, so they
// may come from either source.
void need(const CLI::Option* opt) { needed.insert(opt); }

void check_needed(const CLI::App* sub) {
  for (const auto* opt : sub->get_options()) {
    if (needed.count(opt) && opt->count() == 0) {
      throw dmaps::UsageError("--" + key_of(opt) + " is required (flag or config key)");
    }
  }
}

CLI::Option* add_flag(CLI::App* sub, const std::string& name, bool& value, const std::string& help = "") {
  auto* opt = sub->add_flag(name, value, help);
  flags.insert(opt);
  return opt;
}


bool skip(const CLI::Option* opt) {
  const auto key = key_of(opt);
  return key == "help" || key == "config";
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

// Fills every option that was not given on the command line from the JSON
// object in `path`. Unknown keys are usage errors.
void apply_config(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dmaps::DataError("cannot open config '" + path + "'");
  json config;
  try {
    config = json::parse(in);
  } catch (const json::parse_error& e) {
    throw dmaps::DataError("config '" + path + "': " + e.what());
  }
  if (!config.is_object()) throw dmaps::DataError("config '" + path + "' must hold a JSON object");
  for (const auto& [key, value] : config.items()) {
    CLI::Option* opt = nullptr;
    for (auto* o : sub->get_options()) {
      if (!skip(o) && key_of(o) == key) opt = o;
    }
    if (!opt) throw dmaps::UsageError("config '" + path + "': unknown key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;  // flags win
    if (value.is_array()) {
      for (const auto& item : value) opt->add_result(scalar_text(item));
    } else {
      opt->add_result(scalar_text(value));
    }
    opt->run_callback();
  }
}

// Every option of the subcommand with the value actually in effect.
json resolved_config(const CLI::App* sub) {
  json out;
  out["command"] = sub->get_name();
  for (const auto* opt : sub->get_options()) {
    if (skip(opt)) continue;
    const auto key = key_of(opt);
    if (flags.count(opt)) {
      out[key] = opt->count() > 0 && opt->as<bool>();
      continue;
    }
    std::vector<std::string> values = opt->results();
    if (values.empty() && !opt->get_default_str().empty()) values = {opt->get_default_str()};
    auto convert = [](const std::string& text) -> json {
      const auto number = dmaps::parse_double(text);
      if (!number) return text;
      if (text.find_first_of(".eE") == std::string::npos && std::abs(*number) < 9e15) {
        return static_cast<long long>(*number);
      }
      return *number;
    };
    if (opt->get_items_expected_max() > 1) {
      json list = json::array();
      for (const auto& v : values) {
        // Defaults of list options arrive as "[a,b,c]".
        std::string item = v;
        if (!item.empty() && item.front() == '[') item = item.substr(1, item.size() - 2);
        std::stringstream ss(item);
        for (std::string part; std::getline(ss, part, ',');) list.push_back(convert(std::string(dmaps::trim(part))));
      }
      out[key] = list;
    } else {
      out[key] = values.empty() ? json(nullptr) : convert(values.back());
    }
  }
  return out;
}

void write_config_next_to(const CLI::App* sub, const fs::path& file) {
  dmaps::cli::write_json(fs::path(file.string() + ".config.json"), resolved_config(sub));
}

void write_config_in(const CLI::App* sub, const fs::path& dir) {
  dmaps::cli::write_json(dir / (sub->get_name() + "_config.json"), resolved_config(sub));
}

void add_config(CLI::App* sub, std::string& path) {
  sub->add_option("--config", path, "JSON file of option values; command-line flags take precedence")
      ->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion maps, Nystrom extension and deep diffusion maps"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string config_path;

  dmaps::cli::GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Sample a synthetic manifold to CSV");
  add_config(generate, config_path);
  need(generate->add_option("--dataset", gen.dataset, "swiss-roll, s-curve or helix"));
  generate->add_option("--n", gen.n, "Number of points");
  generate->add_option("--seed", gen.seed, "Sampling seed");
  need(generate->add_option("--out", gen.out, "Output CSV"));

  dmaps::cli::FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a diffusion-map model");
  add_config(fit_cmd, config_path);
  need(fit_cmd->add_option("--data", fit.data, "Input CSV"));
  fit_cmd->add_option("--label-column", fit.label_column, "Column kept as labels if present");
  fit_cmd->add_option("--quantile", fit.quantile, "Distance quantile that sets the bandwidth");
  fit_cmd->add_option("--sigma", fit.sigma, "Bandwidth; overrides --quantile when > 0");
  fit_cmd->add_option("--alpha", fit.alpha, "Density normalization exponent");
  fit_cmd->add_option("--t", fit.t, "Diffusion time")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--d", fit.d, "Embedding dimension; 0 picks the likelihood maximum");
  need(fit_cmd->add_option("--out-dir", fit.out_dir, "Output directory"));
  add_flag(fit_cmd, "--all-vectors", fit.all_vectors, "Store every eigenvector, not just the first d+1");
  add_flag(fit_cmd, "--warnings-as-errors", fit.warnings_as_errors, "Exit with code 3 on conditioning warnings");

  dmaps::cli::ExtendOptions ext;
  auto* extend = app.add_subcommand("extend", "Nystrom extension of a fitted model to new points");
  add_config(extend, config_path);
  need(extend->add_option("--model", ext.model, "Model file from fit"));
  need(extend->add_option("--data", ext.data, "New points CSV"));
  extend->add_option("--label-column", ext.label_column, "Column kept as labels if present");
  need(extend->add_option("--out", ext.out, "Output embedding CSV"));
  extend->add_option("--eigenvectors-out", ext.eigenvectors_out, "Also write the extended eigenvectors");
  extend->add_option("--scaling", ext.scaling, "asymptotic or finite-sample (eigenvector output only)");

  dmaps::cli::TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train a deep diffusion map network on a fitted model");
  add_config(train, config_path);
  need(train->add_option("--model", tr.model, "Model file from fit"));
  train->add_option("--data", tr.data, "Training CSV; must match the model's points");
  need(train->add_option("--out-dir", tr.out_dir, "Output directory"));
  train->add_option("--learning-rate", tr.learning_rate);
  train->add_option("--batch-size", tr.batch_size);
  train->add_option("--epochs", tr.epochs);
  train->add_option("--validation-fraction", tr.validation_fraction);
  train->add_option("--seed", tr.seed);
  train->add_option("--adam-beta1", tr.adam_beta1);
  train->add_option("--adam-beta2", tr.adam_beta2);
  train->add_option("--adam-epsilon", tr.adam_epsilon);
  train->add_option("--hidden", tr.hidden, "Hidden layer widths")->delimiter(',');
  train->add_option("--output-dim", tr.output_dim, "0 uses the model's d");
  add_flag(train, "--raw-inputs", tr.raw_inputs, "Feed inputs without per-feature standardization");

  dmaps::cli::PredictOptions pred;
  auto* predict = app.add_subcommand("predict", "Embed points with a trained network");
  add_config(predict, config_path);
  need(predict->add_option("--network", pred.network, "Network file from train"));
  need(predict->add_option("--data", pred.data, "Points CSV"));
  predict->add_option("--label-column", pred.label_column, "Column kept as labels if present");
  need(predict->add_option("--out", pred.out, "Output embedding CSV"));

  dmaps::cli::EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Compare an embedding with a reference embedding");
  add_config(evaluate, config_path);
  need(evaluate->add_option("--test", ev.test, "Embedding under test"));
  need(evaluate->add_option("--reference", ev.reference, "Reference embedding"));
  evaluate->add_option("--label-column", ev.label_column, "Column ignored when headers are not psi_*");
  need(evaluate->add_option("--out-dir", ev.out_dir, "Output directory"));
  add_flag(evaluate, "--exclude-zero", ev.exclude_zero, "Skip pairs with zero reference distance");
  evaluate->add_option("--level", ev.level, "Confidence level");
  evaluate->add_option("--resamples", ev.resamples, "Bootstrap resamples");
  evaluate->add_option("--seed", ev.seed, "Bootstrap seed");

  dmaps::cli::ReproduceOptions rep;
  rep.train.epochs = 2000;
  auto* reproduce = app.add_subcommand("reproduce", "Full benchmark pipeline for a synthetic dataset");
  add_config(reproduce, config_path);
  need(reproduce->add_option("--dataset", rep.dataset, "swiss-roll, s-curve or helix"));
  need(reproduce->add_option("--workdir", rep.workdir, "Output directory"));
  reproduce->add_option("--n", rep.n, "Total points");
  reproduce->add_option("--n-train", rep.n_train, "Points in the training subset");
  reproduce->add_option("--data-seed", rep.data_seed);
  reproduce->add_option("--split-seed", rep.split_seed);
  reproduce->add_option("--quantile", rep.quantile, "Default depends on the dataset");
  reproduce->add_option("--alpha", rep.alpha);
  reproduce->add_option("--t", rep.t)->check(CLI::PositiveNumber);
  reproduce->add_option("--d", rep.d);
  add_flag(reproduce, "--per-sample-bandwidth", rep.per_sample_bandwidth,
                      "Derive the subset bandwidth from the subset instead of reusing the full-sample one");
  reproduce->add_option("--epochs", rep.train.epochs);
  reproduce->add_option("--learning-rate", rep.train.learning_rate);
  reproduce->add_option("--batch-size", rep.train.batch_size);
  reproduce->add_option("--train-seed", rep.train.seed);
  add_flag(reproduce, "--raw-inputs", rep.train.raw_inputs);
  reproduce->add_option("--level", rep.level);
  reproduce->add_option("--resamples", rep.resamples);
  reproduce->add_option("--bootstrap-seed", rep.bootstrap_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!config_path.empty()) apply_config(sub, config_path);
    check_needed(sub);

    if (sub == generate) {
      dmaps::cli::run_generate(gen, std::cerr);
      write_config_next_to(sub, gen.out);
    } else if (sub == fit_cmd) {
      dmaps::cli::run_fit(fit, std::cerr);
      write_config_in(sub, fit.out_dir);
    } else if (sub == extend) {
      dmaps::cli::run_extend(ext, std::cerr);
      write_config_next_to(sub, ext.out);
    } else if (sub == train) {
      dmaps::cli::run_train(tr, std::cerr);
      write_config_in(sub, tr.out_dir);
    } else if (sub == predict) {
      dmaps::cli::run_predict(pred, std::cerr);
      write_config_next_to(sub, pred.out);
    } else if (sub == evaluate) {
      const auto result = dmaps::cli::run_evaluate(ev, std::cerr);
      std::cout << dmaps::cli::format_metrics(result, ev);
      write_config_in(sub, ev.out_dir);
    } else if (sub == reproduce) {
      const auto result = dmaps::cli::run_reproduce(rep, std::cerr);
      std::cout << dmaps::cli::format_summary(result.rows);
      write_config_in(sub, rep.workdir);
    }
  } catch (const dmaps::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
