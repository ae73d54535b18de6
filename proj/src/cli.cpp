#include "gapfill/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>

#include "gapfill/civil_time.hpp"
#include "gapfill/csv_io.hpp"
#include "gapfill/errors.hpp"
#include "gapfill/evaluation.hpp"
#include "gapfill/models.hpp"
#include "gapfill/preprocess.hpp"
#include "gapfill/synth.hpp"
#include "gapfill/training.hpp"

namespace gapfill {
namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

void write_manifest(const std::string& output, const std::string& command, const json& options) {
  json doc{{"tool", "gapfill"}, {"version", kVersion}, {"command", command}, {"options", options}};
  auto out = open_output(output + ".manifest.json");
  out << doc.dump(2) << '\n';
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> values;
  for (auto field : split_csv_line(text)) {
    const std::string s(trim(field));
    try {
      std::size_t used = 0;
      values.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": '" + s + "' is not a number");
    }
  }
  if (values.empty()) throw ConfigError(std::string(what) + ": empty list");
  return values;
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(text, what)) {
    if (v < 0 || v != std::floor(v)) throw ConfigError(std::string(what) + ": expected whole numbers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

json to_json(const std::vector<double>& v) { return json(v); }

// Training data prepared the same way by train, grid-search and evaluate.
struct PreparedData {
  DataSplit split;
  Normalizer normalizer;
  DayMatrix train;
  DayMatrix validation;
};

PreparedData prepare(const DayMatrix& dm) {
  PreparedData p;
  p.split = split(dm);
  p.normalizer = fit_normalizer(p.split.train);
  p.train = normalize(p.split.train, p.normalizer);
  p.validation = normalize(p.split.validation, p.normalizer);
  return p;
}

bool same_normalizer(const Normalizer& a, const Normalizer& b) {
  const auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(y)); };
  return close(a.mean, b.mean) && close(a.stddev, b.stddev);
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string config, out, variable;
  std::optional<std::size_t> days, rooms;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  std::map<std::string, std::string> values;
  if (!a.config.empty()) {
    auto in = open_input(a.config);
    values = synth_config_to_map(parse_synth_config(in));
  }
  if (!a.variable.empty()) {
    // A different variable starts from that variable's defaults.
    if (values.count("variable") == 0 || parse_variable(values["variable"]) != parse_variable(a.variable)) {
      values = synth_config_to_map(SynthConfig::defaults(parse_variable(a.variable)));
      if (!a.config.empty()) throw ConfigError("--variable conflicts with the config file's variable");
    }
  }
  if (a.days) values["days"] = std::to_string(*a.days);
  if (a.rooms) values["rooms"] = std::to_string(*a.rooms);
  if (a.seed) values["seed"] = std::to_string(*a.seed);
  const SynthConfig cfg = synth_config_from_map(values);
  const auto series = generate(cfg);
  write_series_csv_file(a.out, series);
  json opts(synth_config_to_map(cfg));
  opts["out"] = a.out;
  write_manifest(a.out, "generate", opts);
  std::size_t rows = 0;
  for (const auto& s : series) rows += s.samples.size();
  out << "wrote " << rows << " rows for " << series.size() << " rooms to " << a.out << '\n';
  return kExitOk;
}

// ---- preprocess ---------------------------------------------------------------

struct PreprocessArgs {
  std::string in, out, variable, cleaning = "theoretical", report;
};

void write_cleaning_report(std::ostream& os, const CleaningReport& report) {
  os << "room_id,samples,missing_samples,outliers,candidate_days,complete_days,discarded_days,iqr_lower,iqr_upper\n";
  const auto row = [&](const RoomReport& r) {
    os << r.room_id << ',' << r.samples << ',' << r.missing_samples << ',' << r.outliers << ','
       << r.candidate_days << ',' << r.complete_days << ',' << r.discarded_days << ',';
    if (r.iqr_bounds) os << format_double(r.iqr_bounds->lower) << ',' << format_double(r.iqr_bounds->upper);
    else os << ',';
    os << '\n';
  };
  for (const auto& r : report.rooms) row(r);
  row(report.totals());
}

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out) {
  const Variable variable = parse_variable(a.variable);
  const CleaningMethod method = parse_cleaning_method(a.cleaning);
  // A day-matrix file (e.g. this command's own output) is accepted as input.
  std::string first_line;
  {
    auto probe = open_input(a.in);
    std::getline(probe, first_line);
  }
  const auto series = is_day_matrix_header(first_line)
                          ? day_matrix_to_series(read_day_matrix_csv_file(a.in), variable)
                          : read_series_csv_file(a.in);
  const auto result = preprocess(series, variable, method);
  write_day_matrix_csv_file(a.out, result.matrix);
  const std::string report_path = a.report.empty() ? a.out + ".report.csv" : a.report;
  {
    auto rep = open_output(report_path);
    write_cleaning_report(rep, result.report);
  }
  write_manifest(a.out, "preprocess",
                 {{"in", a.in}, {"out", a.out}, {"variable", to_string(variable)},
                  {"cleaning", to_string(method)}, {"report", report_path}});
  const auto t = result.report.totals();
  out << "variable " << to_string(variable) << ": " << t.outliers << " outliers, " << t.candidate_days
      << " candidate days, " << t.complete_days << " complete, " << t.discarded_days << " discarded\n";
  return kExitOk;
}

// ---- train ---------------------------------------------------------------------

struct ModelArgs {
  std::string arch = "feed_forward";
  std::size_t layers = 1;
  std::size_t units = 32;
  std::size_t kernel = 3;
  std::string init = "glorot_uniform";
  std::string encoder_activation = "relu";
  std::string decoder_activation = "tanh";
  std::string batchnorm;  // empty: architecture default
};

struct TrainArgs {
  std::string days, out, history, variable;
  ModelArgs model;
  TrainConfig cfg;
  std::string optimizer = "adam";
  bool pretrain = false;
};

AutoencoderSpec resolve_spec(const ModelArgs& m) {
  AutoencoderSpec spec = AutoencoderSpec::make(parse_architecture(m.arch), m.layers, m.units, m.kernel);
  spec.init = parse_init_scheme(m.init);
  spec.encoder_activation = parse_activation(m.encoder_activation);
  spec.decoder_activation = parse_activation(m.decoder_activation);
  if (!m.batchnorm.empty()) spec.batchnorm = parse_batchnorm_placement(m.batchnorm);
  spec.validate();
  return spec;
}

json spec_json(const AutoencoderSpec& s) {
  return {{"arch", to_string(s.arch)},
          {"units", s.units},
          {"kernel", s.kernel_size},
          {"init", to_string(s.init)},
          {"encoder_activation", to_string(s.encoder_activation)},
          {"decoder_activation", to_string(s.decoder_activation)},
          {"batchnorm", to_string(s.batchnorm)}};
}

json train_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"optimizer", to_string(c.optimizer)}, {"max_epochs", c.max_epochs},
          {"patience", c.patience}, {"train_cr", c.train_cr}, {"random_gap_length", c.random_gap_length},
          {"seed", c.seed}};
}

int cmd_train(TrainArgs a, std::ostream& out) {
  a.cfg.optimizer = parse_optimizer(a.optimizer);
  a.cfg.validate();
  const Variable variable = parse_variable(a.variable);
  const AutoencoderSpec spec = resolve_spec(a.model);
  const auto data = prepare(read_day_matrix_csv_file(a.days));

  Rng rng(mix_seed(a.cfg.seed, 0x6275696c64ULL));
  Autoencoder model = Autoencoder::build(spec, rng);
  model.normalizer = data.normalizer;
  model.variable = variable;
  if (a.pretrain && a.cfg.max_epochs > 0) pretrain_layerwise(model, data.train, a.cfg);
  const auto history = train(model, data.train, data.validation, a.cfg);
  save_model(model, a.out);

  const std::string history_path = a.history.empty() ? a.out + ".history.csv" : a.history;
  {
    auto h = open_output(history_path);
    h << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
      h << e + 1 << ',' << format_double(history.train_loss[e]) << ',' << format_double(history.val_loss[e]) << '\n';
    }
  }
  write_manifest(a.out, "train",
                 {{"days", a.days}, {"out", a.out}, {"history", history_path},
                  {"variable", to_string(variable)}, {"model", spec_json(spec)},
                  {"training", train_json(a.cfg)}, {"pretrain", a.pretrain},
                  {"normalizer", {{"mean", data.normalizer.mean}, {"stddev", data.normalizer.stddev}}},
                  {"split", {{"train", data.split.train.rows()}, {"validation", data.split.validation.rows()},
                             {"evaluation", data.split.evaluation.rows()}}}});
  out << "trained " << to_string(spec.arch) << " for " << history.stopped_epoch << " epochs (best "
      << history.best_epoch << "), " << model.parameter_count() << " parameters -> " << a.out << '\n';
  return kExitOk;
}

// ---- grid search -------------------------------------------------------------

struct GridArgs {
  std::string days, out, best_model, variable, arch = "feed_forward";
  std::string layers = "1,2,3", units = "8,16,32,64,128", kernels = "2,3,5,7,11";
  std::string learning_rates = "0.001,0.01,0.1", optimizers = "sgd_momentum,adam";
  std::string crs = "0.2,0.3,0.4,0.5,0.6,0.7,0.8";
  TrainConfig cfg;
  std::size_t workers = 1;
  std::size_t reruns = 0;
};

int cmd_grid_search(GridArgs a, std::ostream& out) {
  GridMenus menus;
  menus.layers = parse_size_list(a.layers, "--layers");
  menus.units = parse_size_list(a.units, "--units");
  menus.kernels = parse_size_list(a.kernels, "--kernels");
  menus.learning_rates = parse_double_list(a.learning_rates, "--learning-rates");
  menus.optimizers.clear();
  for (auto o : split_csv_line(a.optimizers)) menus.optimizers.push_back(parse_optimizer(trim(o)));
  menus.batch_size = a.cfg.batch_size;
  const Architecture arch = parse_architecture(a.arch);
  const Variable variable = parse_variable(a.variable);
  const auto grid = expand_grid(menus, arch);
  for (const auto& g : grid) g.to_spec().validate();
  a.cfg.validate();

  GridSearchOptions options;
  options.base = a.cfg;
  options.cr_grid = parse_double_list(a.crs, "--crs");
  for (double cr : options.cr_grid) mask_length(cr);
  options.workers = a.workers;
  options.reruns = a.reruns;
  const auto data = prepare(read_day_matrix_csv_file(a.days));
  auto outcome = grid_search(grid, data.train, data.validation, options);
  {
    auto csv = open_output(a.out);
    write_grid_csv(csv, outcome.ranked);
  }
  if (!a.best_model.empty()) {
    if (!outcome.best_model) throw DivergenceError("every configuration diverged; no model to save");
    outcome.best_model->normalizer = data.normalizer;
    outcome.best_model->variable = variable;
    save_model(*outcome.best_model, a.best_model);
  }
  write_manifest(a.out, "grid-search",
                 {{"days", a.days}, {"out", a.out}, {"best_model", a.best_model},
                  {"variable", to_string(variable)}, {"arch", to_string(arch)},
                  {"layers", menus.layers}, {"units", menus.units},
                  {"kernels", arch == Architecture::conv ? json(menus.kernels) : json::array()},
                  {"learning_rates", menus.learning_rates}, {"optimizers", a.optimizers},
                  {"training", train_json(a.cfg)}, {"crs", to_json(options.cr_grid)},
                  {"workers", a.workers}, {"reruns", a.reruns}, {"configurations", grid.size()}});
  const auto& top = outcome.ranked.front();
  out << grid.size() << " configurations; best " << top.config.label() << " score "
      << format_double(top.score) << '\n';
  return kExitOk;
}

// ---- evaluate / forecast -------------------------------------------------------

struct EvalArgs {
  std::string model, days, out, json_out, mode = "reconstruction", split = "eval", variable, arch;
  std::string crs;
  bool no_baselines = false;
  std::uint64_t mask_seed = kEvaluationMaskSeed;
};

// Loads the model and the day matrix, checks that they belong together and
// returns the days to evaluate in original units.
DayMatrix load_eval_days(const Autoencoder& model, const std::string& days_path, const std::string& which,
                         const std::string& variable) {
  if (!variable.empty() && parse_variable(variable) != model.variable) {
    throw MismatchError("model was trained on " + to_string(model.variable) + ", data is " + variable);
  }
  DayMatrix dm = read_day_matrix_csv_file(days_path);
  if (which == "all") return dm;
  if (which != "eval") throw ConfigError("--split must be 'eval' or 'all'");
  const auto data = prepare(dm);
  if (!same_normalizer(data.normalizer, model.normalizer)) {
    throw MismatchError("normalizer mismatch: model has mean " + format_double(model.normalizer.mean) +
                        " sd " + format_double(model.normalizer.stddev) + ", data training split has mean " +
                        format_double(data.normalizer.mean) + " sd " + format_double(data.normalizer.stddev));
  }
  if (data.split.evaluation.empty()) throw InsufficientDataError("evaluation split is empty");
  return data.split.evaluation;
}

std::optional<Architecture> expected_arch(const std::string& arch) {
  if (arch.empty()) return std::nullopt;
  return parse_architecture(arch);
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
  const CorruptionMode mode = parse_corruption_mode(a.mode);
  const Autoencoder model = load_model(a.model, expected_arch(a.arch));
  const DayMatrix days = load_eval_days(model, a.days, a.split, a.variable);
  EvaluationOptions options;
  options.mask_seed = a.mask_seed;
  options.model_name = to_string(model.spec().arch);
  if (!a.crs.empty()) options.cr_grid = parse_double_list(a.crs, "--crs");
  else if (mode == CorruptionMode::forecast) options.cr_grid = {0.1, 0.5, 0.9};
  for (double cr : options.cr_grid) mask_length(cr);
  if (a.no_baselines || mode == CorruptionMode::forecast) options.baseline_degrees.clear();
  const auto report = mode == CorruptionMode::forecast ? evaluate_forecast(model, days, options)
                                                       : evaluate_reconstruction(model, days, options);
  {
    auto csv = open_output(a.out);
    write_report_csv(csv, report);
  }
  const std::string json_path = a.json_out.empty() ? a.out + ".json" : a.json_out;
  {
    auto js = open_output(json_path);
    js << report_to_json(report) << '\n';
  }
  write_manifest(a.out, "evaluate",
                 {{"model", a.model}, {"days", a.days}, {"out", a.out}, {"json", json_path},
                  {"mode", to_string(mode)}, {"split", a.split}, {"crs", to_json(options.cr_grid)},
                  {"baselines", options.baseline_degrees}, {"mask_seed", a.mask_seed},
                  {"evaluated_days", days.rows()}});
  for (const auto& r : report.rows) {
    if (!r.average) continue;
    out << r.method << " average RMSE " << format_double(r.rmse) << ' ' << unit_of(report.variable)
        << ", NRMSE " << format_double(r.nrmse) << '\n';
  }
  return kExitOk;
}

struct ForecastArgs {
  std::string model, days, out, split = "all", variable;
  double cr = 0.5;
};

int cmd_forecast(const ForecastArgs& a, std::ostream& out) {
  const Autoencoder model = load_model(a.model);
  const DayMatrix days = load_eval_days(model, a.days, a.split, a.variable);
  const auto run = run_cr(model, days, a.cr, CorruptionMode::forecast);
  {
    auto csv = open_output(a.out);
    csv << "room_id,date,timestamp,observed,forecast\n";
    for (std::size_t i = 0; i < days.rows(); ++i) {
      const auto& key = days.keys()[i];
      const auto& m = run.masked[i];
      const auto filled = run.filled.row(i);
      for (std::size_t t = m.gap_start; t < m.gap_start + m.gap_length; ++t) {
        csv << key.room_id << ',' << format_date(key.day) << ','
            << format_timestamp(key.day * kSecondsPerDay + static_cast<Timestamp>(t) * kSecondsPerSlot) << ','
            << format_double(m.original[t]) << ',' << format_double(filled[t]) << '\n';
      }
    }
  }
  write_manifest(a.out, "forecast",
                 {{"model", a.model}, {"days", a.days}, {"out", a.out}, {"split", a.split},
                  {"cr", a.cr}, {"horizon_h", horizon_hours(a.cr)}});
  out << "horizon " << format_double(horizon_hours(a.cr)) << " h, RMSE "
      << format_double(rmse(run.observed, run.inserted)) << ' ' << unit_of(model.variable) << " over "
      << days.rows() << " days\n";
  return kExitOk;
}

// ---- fill ------------------------------------------------------------------------

struct FillArgs {
  std::string model, in, out;
};

int cmd_fill(const FillArgs& a, std::ostream& out, std::ostream& err) {
  const Autoencoder model = load_model(a.model);
  const auto series = read_series_csv_file(a.in);
  const Bounds limits = CleaningLimits{}.of(model.variable);
  const Normalizer& nz = model.normalizer;
  auto csv = open_output(a.out);
  csv << kSeriesHeader << ",filled\n";
  std::size_t filled_bins = 0, filled_days = 0, skipped = 0, matched = 0;

  for (const auto& ts : series) {
    if (ts.variable != model.variable) continue;
    ++matched;
    std::map<std::int64_t, std::array<std::optional<double>, kBinsPerDay>> by_day;
    for (const auto& s : resample_30min(ts).samples) {
      const std::int64_t day = floor_div(s.time, kSecondsPerDay);
      const auto slot = static_cast<std::size_t>((s.time - day * kSecondsPerDay) / kSecondsPerSlot);
      by_day[day][slot] = s.value;
    }
    for (const auto& [day, bins] : by_day) {
      const auto observed = static_cast<std::size_t>(
          std::count_if(bins.begin(), bins.end(), [](const auto& v) { return v.has_value(); }));
      std::array<double, kBinsPerDay> values{};
      std::array<bool, kBinsPerDay> marked{};
      if (observed == 0) {
        ++skipped;
        err << "warning: " << ts.room_id << ' ' << format_date(day) << " has no observations; left unfilled\n";
      } else if (observed < kBinsPerDay) {
        Tensor input({1, kBinsPerDay});
        for (std::size_t t = 0; t < kBinsPerDay; ++t) input[t] = bins[t] ? nz.normalize(*bins[t]) : 0.0;
        const DayVector rec = model.reconstruct(input.values());
        for (std::size_t t = 0; t < kBinsPerDay; ++t) {
          if (bins[t]) continue;
          values[t] = std::clamp(nz.denormalize(rec[t]), limits.lower, limits.upper);
          marked[t] = true;
          ++filled_bins;
        }
        ++filled_days;
      }
      for (std::size_t t = 0; t < kBinsPerDay; ++t) {
        csv << format_timestamp(day * kSecondsPerDay + static_cast<Timestamp>(t) * kSecondsPerSlot) << ','
            << ts.room_id << ',' << to_string(ts.variable) << ',';
        if (bins[t]) csv << format_double(*bins[t]);
        else if (marked[t]) csv << format_double(values[t]);
        csv << ',' << (marked[t] ? 1 : 0) << '\n';
      }
    }
  }
  if (matched == 0) throw MismatchError("input has no " + to_string(model.variable) + " rows for this model");
  write_manifest(a.out, "fill", {{"model", a.model}, {"in", a.in}, {"out", a.out},
                                 {"variable", to_string(model.variable)},
                                 {"clamp", {limits.lower, limits.upper}}});
  out << "filled " << filled_bins << " half-hour bins in " << filled_days << " days; skipped " << skipped
      << " empty days\n";
  return kExitOk;
}

void add_train_options(CLI::App* cmd, TrainConfig& cfg, std::string& optimizer) {
  cmd->add_option("--batch-size", cfg.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--optimizer", optimizer, "sgd_momentum | adam")->capture_default_str();
  cmd->add_option("--max-epochs", cfg.max_epochs, "Epoch limit")->capture_default_str();
  cmd->add_option("--patience", cfg.patience, "Early-stopping patience in epochs")->capture_default_str();
  cmd->add_option("--train-cr", cfg.train_cr, "Corruption rate used during training")->capture_default_str();
  cmd->add_flag("!--fixed-gap-length", cfg.random_gap_length,
                "Train with every gap exactly round(train-cr * 48) bins long");
  cmd->add_option("--seed", cfg.seed, "Seed for initialization, shuffling and masks")->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gap reconstruction for indoor-climate time series with denoising autoencoders", "gapfill"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Write a synthetic time-series CSV");
  c_gen->add_option("--config", gen.config, "Flat key = value generator config");
  c_gen->add_option("--variable", gen.variable, "T | RH | CO2 (defaults when no config)");
  c_gen->add_option("--days", gen.days, "Override the number of days");
  c_gen->add_option("--rooms", gen.rooms, "Override the number of rooms");
  c_gen->add_option("--seed", gen.seed, "Override the seed");
  c_gen->add_option("--out", gen.out, "Output CSV")->required();

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Clean, resample and build the complete-day matrix");
  c_pre->add_option("--in", pre.in, "Input time-series CSV")->required();
  c_pre->add_option("--out", pre.out, "Output day-matrix CSV")->required();
  c_pre->add_option("--variable", pre.variable, "T | RH | CO2")->required();
  c_pre->add_option("--cleaning", pre.cleaning, "theoretical | iqr | none")->capture_default_str();
  c_pre->add_option("--report", pre.report, "Cleaning report CSV (default <out>.report.csv)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Split, normalize and train one autoencoder");
  c_train->add_option("--days", tr.days, "Day-matrix CSV")->required();
  c_train->add_option("--out", tr.out, "Output model file")->required();
  c_train->add_option("--variable", tr.variable, "T | RH | CO2")->required();
  c_train->add_option("--history", tr.history, "History CSV (default <out>.history.csv)");
  c_train->add_option("--arch", tr.model.arch, "feed_forward | conv | lstm")->capture_default_str();
  c_train->add_option("--layers", tr.model.layers, "Hidden layers per side (1-3)")->capture_default_str();
  c_train->add_option("--units", tr.model.units, "Units or filters per layer")->capture_default_str();
  c_train->add_option("--kernel", tr.model.kernel, "Convolution kernel size")->capture_default_str();
  c_train->add_option("--init", tr.model.init, "glorot_uniform | classical_uniform")->capture_default_str();
  c_train->add_option("--encoder-activation", tr.model.encoder_activation, "relu | tanh | sigmoid | linear")
      ->capture_default_str();
  c_train->add_option("--decoder-activation", tr.model.decoder_activation, "relu | tanh | sigmoid | linear")
      ->capture_default_str();
  c_train->add_option("--batchnorm", tr.model.batchnorm, "decoder_only | every_layer | none");
  c_train->add_flag("--pretrain", tr.pretrain, "Greedy layerwise pretraining first (feed_forward)");
  add_train_options(c_train, tr.cfg, tr.optimizer);

  GridArgs gs;
  auto* c_grid = app.add_subcommand("grid-search", "Train and rank a hyperparameter grid");
  c_grid->add_option("--days", gs.days, "Day-matrix CSV")->required();
  c_grid->add_option("--out", gs.out, "Ranked results CSV")->required();
  c_grid->add_option("--variable", gs.variable, "T | RH | CO2")->required();
  c_grid->add_option("--best-model", gs.best_model, "Save the winning model here");
  c_grid->add_option("--arch", gs.arch, "feed_forward | conv | lstm")->capture_default_str();
  c_grid->add_option("--layers", gs.layers, "Layer menu")->capture_default_str();
  c_grid->add_option("--units", gs.units, "Unit/filter menu")->capture_default_str();
  c_grid->add_option("--kernels", gs.kernels, "Kernel menu (conv)")->capture_default_str();
  c_grid->add_option("--learning-rates", gs.learning_rates, "Learning-rate menu")->capture_default_str();
  c_grid->add_option("--optimizers", gs.optimizers, "Optimizer menu")->capture_default_str();
  c_grid->add_option("--crs", gs.crs, "Scoring corruption rates")->capture_default_str();
  c_grid->add_option("--workers", gs.workers, "Parallel workers")->capture_default_str();
  c_grid->add_option("--reruns", gs.reruns, "Retrain the winner this many times")->capture_default_str();
  c_grid->add_option("--batch-size", gs.cfg.batch_size, "Minibatch size")->capture_default_str();
  c_grid->add_option("--max-epochs", gs.cfg.max_epochs, "Epoch limit")->capture_default_str();
  c_grid->add_option("--patience", gs.cfg.patience, "Early-stopping patience")->capture_default_str();
  c_grid->add_option("--train-cr", gs.cfg.train_cr, "Training corruption rate")->capture_default_str();
  c_grid->add_flag("!--fixed-gap-length", gs.cfg.random_gap_length,
                   "Train with every gap exactly round(train-cr * 48) bins long");
  c_grid->add_option("--seed", gs.cfg.seed, "Base seed")->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "RMSE/NRMSE/SAT tables over corruption rates or horizons");
  c_eval->add_option("--model", ev.model, "Model file")->required();
  c_eval->add_option("--days", ev.days, "Day-matrix CSV")->required();
  c_eval->add_option("--out", ev.out, "Report CSV")->required();
  c_eval->add_option("--json", ev.json_out, "Structured report (default <out>.json)");
  c_eval->add_option("--mode", ev.mode, "reconstruction | forecast")->capture_default_str();
  c_eval->add_option("--split", ev.split, "eval (chronological evaluation split) | all")->capture_default_str();
  c_eval->add_option("--variable", ev.variable, "Expected variable of the data");
  c_eval->add_option("--arch", ev.arch, "Expected model architecture");
  c_eval->add_option("--crs", ev.crs, "Corruption rates (default 0.1..0.9; forecast 0.1,0.5,0.9)");
  c_eval->add_option("--mask-seed", ev.mask_seed, "Seed of the fixed evaluation masks");
  c_eval->add_flag("--no-baselines", ev.no_baselines, "Skip polynomial baselines");

  ForecastArgs fc;
  auto* c_fc = app.add_subcommand("forecast", "Predict the trailing part of each day");
  c_fc->add_option("--model", fc.model, "Model file")->required();
  c_fc->add_option("--days", fc.days, "Day-matrix CSV")->required();
  c_fc->add_option("--out", fc.out, "Forecast CSV")->required();
  c_fc->add_option("--cr", fc.cr, "Share of the day to forecast")->capture_default_str();
  c_fc->add_option("--split", fc.split, "all | eval")->capture_default_str();
  c_fc->add_option("--variable", fc.variable, "Expected variable of the data");

  FillArgs fl;
  auto* c_fill = app.add_subcommand("fill", "Reconstruct missing half-hours in a time-series CSV");
  c_fill->add_option("--model", fl.model, "Model file")->required();
  c_fill->add_option("--in", fl.in, "Time-series CSV with gaps")->required();
  c_fill->add_option("--out", fl.out, "Filled half-hourly CSV")->required();

  std::vector<std::string> argv_store{"gapfill"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (c_gen->parsed()) return cmd_generate(gen, out);
    if (c_pre->parsed()) return cmd_preprocess(pre, out);
    if (c_train->parsed()) return cmd_train(tr, out);
    if (c_grid->parsed()) return cmd_grid_search(gs, out);
    if (c_eval->parsed()) return cmd_evaluate(ev, out);
    if (c_fc->parsed()) return cmd_forecast(fc, out);
    if (c_fill->parsed()) return cmd_fill(fl, out, err);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const FormatError& e) {
    err << "unreadable file: " << e.what() << '\n';
    return kExitParse;
  } catch (const InsufficientDataError& e) {
    err << "insufficient data: " << e.what() << '\n';
    return kExitInsufficientData;
  } catch (const MismatchError& e) {
    err << "mismatch: " << e.what() << '\n';
    return kExitMismatch;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace gapfill
