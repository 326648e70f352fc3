#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "strucdiff/checkpoint.hpp"
#include "strucdiff/config.hpp"
#include "strucdiff/dataset_io.hpp"
#include "strucdiff/errors.hpp"
#include "strucdiff/evaluation.hpp"
#include "strucdiff/generation.hpp"
#include "strucdiff/report_io.hpp"
#include "strucdiff/toy_data.hpp"
#include "strucdiff/training.hpp"
#include "strucdiff/version.hpp"

namespace strucdiff::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

bool is_jsonl(const fs::path& path) { return path.extension() == ".jsonl"; }

Dataset load_rows(const fs::path& path, const EntitySchema& schema) {
  const std::string text = read_file(path);
  return is_jsonl(path) ? read_jsonl_dataset(text, schema) : read_csv_dataset(text, schema);
}

std::string format_rows(const fs::path& path, const Dataset& rows, const EntitySchema& schema) {
  return is_jsonl(path) ? write_jsonl_dataset(rows, schema) : write_csv_dataset(rows, schema);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Loads a checkpoint and, when a schema file is given, insists that it is
// the schema the checkpoint was trained with.
Checkpoint open_checkpoint(const std::string& ckpt, const std::string& schema_path) {
  Checkpoint ck = load_checkpoint(ckpt);
  if (!schema_path.empty()) {
    const EntitySchema given = load_schema(read_file(schema_path));
    const std::uint64_t a = schema_fingerprint(given), b = ck.model.fingerprint();
    if (a != b)
      throw SchemaError("schema fingerprint " + fingerprint_hex(a) + " does not match checkpoint fingerprint " + fingerprint_hex(b));
  }
  return ck;
}

class Manifest {
 public:
  explicit Manifest(std::string command) : start_(Clock::now()) {
    doc_["command"] = std::move(command);
    doc_["config"] = json::object();
    doc_["seed"] = nullptr;
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
    doc_["fingerprint"] = nullptr;
  }

  template <class T>
  void config(const std::string& key, const T& value) {
    doc_["config"][key] = value;
  }
  void seed(std::uint64_t s) { doc_["seed"] = s; }
  void input(const std::string& role, const std::string& path) { doc_["inputs"][role] = path; }
  void output(const std::string& role, const std::string& path) { doc_["outputs"][role] = path; }
  void fingerprint(std::uint64_t fp) { doc_["fingerprint"] = fingerprint_hex(fp); }
  json& extra() { return doc_; }

  void write(const fs::path& path) {
    doc_["wall_clock_seconds"] = std::chrono::duration<double>(Clock::now() - start_).count();
    doc_["versions"] = {{"strucdiff", std::string(kVersion)}, {"checkpoint_format", "SDFCKPT1"}};
    write_file(path, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  Clock::time_point start_;
};

fs::path manifest_beside(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

// ---------------------------------------------------------------- commands

struct SchemaInferArgs {
  std::string csv, output;
  int categorical_cutoff = 20;
  int text_max_length = 32;
  std::string missing = "NA";
  std::vector<std::string> hints;
};

void cmd_schema_infer(const SchemaInferArgs& a) {
  Manifest manifest("schema-infer");
  CsvOptions opt;
  opt.categorical_cutoff = a.categorical_cutoff;
  opt.text_max_length = a.text_max_length;
  opt.missing_sentinel = a.missing;
  for (const auto& h : a.hints) {
    const auto eq = h.find('=');
    if (eq == std::string::npos) throw UsageError("--hint expects path=kind, got '" + h + "'");
    try {
      opt.type_hints[h.substr(0, eq)] = parse_kind(h.substr(eq + 1));
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  const EntitySchema schema = infer_schema_from_csv(read_file(a.csv), opt);
  write_file(a.output, save_schema(schema));
  manifest.config("categorical_cutoff", a.categorical_cutoff);
  manifest.config("text_max_length", a.text_max_length);
  manifest.config("missing", a.missing);
  manifest.config("hints", a.hints);
  manifest.input("csv", a.csv);
  manifest.output("schema", a.output);
  manifest.fingerprint(schema_fingerprint(schema));
  manifest.write(manifest_beside(a.output));
}

struct TrainArgs {
  std::string data, schema, config, output;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int checkpoint_every = 0;
};

void cmd_train(const TrainArgs& a, std::ostream& err) {
  Manifest manifest("train");
  Settings settings;
  if (!a.config.empty()) settings = Settings::parse(read_file(a.config));
  for (const auto& o : a.overrides) settings.set_assignment(o);
  if (a.seed) settings.set("train.seed", std::to_string(*a.seed));
  if (const auto unknown = unknown_keys(settings); !unknown.empty()) throw UsageError("unknown setting '" + unknown.front() + "'");
  ModelConfig model_config;
  TrainConfig train_config;
  apply(settings, model_config);
  apply(settings, train_config);
  model_config.validate();
  train_config.validate();

  const EntitySchema raw_schema = load_schema(read_file(a.schema));
  const Dataset rows = load_rows(a.data, raw_schema);
  const EntitySchema schema = fit_normalizers(raw_schema, rows);
  std::vector<Cell> baseline = fit_constant_baseline(schema, rows);

  Settings effective = to_settings(model_config);
  effective.merge(to_settings(train_config));
  const fs::path dir(a.output);
  fs::create_directories(dir);

  std::vector<std::string> snapshots;
  const FitResult result = fit(rows, schema, model_config, train_config, [&](const EpochRecord& r, const Model& model) {
    err << "epoch " << r.epoch << "/" << train_config.epochs << " train_loss=" << format_number(r.train_loss)
        << " validation_loss=" << (std::isnan(r.validation_loss) ? std::string("nan") : format_number(r.validation_loss))
        << " lr=" << format_number(r.lr) << "\n";
    if (a.checkpoint_every > 0 && r.epoch % a.checkpoint_every == 0 && r.epoch != train_config.epochs) {
      const fs::path p = dir / ("checkpoint_epoch" + std::to_string(r.epoch) + ".ckpt");
      save_checkpoint(p, Checkpoint{model, baseline, effective.to_text()});
      snapshots.push_back(p.string());
    }
  });

  const fs::path ckpt = dir / "model.ckpt";
  save_checkpoint(ckpt, Checkpoint{result.model, std::move(baseline), effective.to_text()});
  write_file(dir / "config.txt", effective.to_text());
  write_file(dir / "loss_curve.csv", loss_curve_csv(result));
  write_file(dir / "schema.json", save_schema(schema));

  for (const auto& [k, v] : effective.values()) manifest.config(k, v);
  manifest.config("checkpoint_every", a.checkpoint_every);
  manifest.seed(train_config.seed);
  manifest.input("data", a.data);
  manifest.input("schema", a.schema);
  if (!a.config.empty()) manifest.input("config", a.config);
  manifest.output("checkpoint", ckpt.string());
  manifest.output("config", (dir / "config.txt").string());
  manifest.output("loss_curve", (dir / "loss_curve.csv").string());
  manifest.output("schema", (dir / "schema.json").string());
  manifest.extra()["outputs"]["snapshots"] = snapshots;
  manifest.fingerprint(schema_fingerprint(schema));
  manifest.write(dir / "manifest.json");
}

struct SampleArgs {
  std::string ckpt, output;
  int n = 100;
  int leap = 1;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  bool point = false;
};

int clamp_leap(int leap, int d_eff, std::ostream& err) {
  if (leap < 1) throw UsageError("--leap must be >= 1");
  if (leap > d_eff) {
    err << "warning: leap " << leap << " exceeds D_eff " << d_eff << "; clamped to " << d_eff << "\n";
    return d_eff;
  }
  return leap;
}

void cmd_sample(const SampleArgs& a, std::ostream& err) {
  Manifest manifest("sample");
  if (a.n < 1) throw UsageError("--n must be >= 1");
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const EntitySchema& schema = ck.model.schema();
  SampleConfig cfg{clamp_leap(a.leap, schema.size(), err), a.temperature, a.point ? NumericMode::point : NumericMode::sample};
  SampleStats stats;
  const Dataset rows = sample_batch(ck.model, unconditional_prompts(schema, a.n), cfg, Rng(a.seed), &stats);
  write_file(a.output, format_rows(a.output, rows, schema));

  manifest.config("n", a.n);
  manifest.config("leap", cfg.leap);
  manifest.config("temperature", a.temperature);
  manifest.config("numeric_mode", a.point ? "point" : "sample");
  manifest.seed(a.seed);
  manifest.input("checkpoint", a.ckpt);
  manifest.output("samples", a.output);
  manifest.fingerprint(ck.model.fingerprint());
  manifest.extra()["network_calls"] = stats.network_calls;
  manifest.write(manifest_beside(a.output));
}

struct ImputeArgs {
  std::string ckpt, data, schema, observe = "auto", output;
  int leap = 1;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  bool point = false;
};

void cmd_impute(const ImputeArgs& a, std::ostream& err) {
  Manifest manifest("impute");
  const Checkpoint ck = open_checkpoint(a.ckpt, a.schema);
  const EntitySchema& schema = ck.model.schema();
  Dataset prompts = load_rows(a.data, schema);

  // auto: keep what is present and fill the gaps; otherwise keep the listed
  // leaves and regenerate every other leaf.
  std::vector<bool> observed(static_cast<std::size_t>(schema.size()), true);
  if (a.observe != "auto") {
    std::fill(observed.begin(), observed.end(), false);
    for (const auto& path : split_list(a.observe)) {
      const int i = schema.index_of(path);
      if (i < 0) throw SchemaError("--observe: unknown leaf '" + path + "'");
      observed[static_cast<std::size_t>(i)] = true;
    }
  }
  for (auto& e : prompts) {
    for (std::size_t i = 0; i < e.values.size(); ++i) {
      if (a.observe == "auto" ? e.values[i].is_missing() : !observed[i]) e.values[i] = Cell::masked();
    }
  }
  int max_masked = 1;
  for (const auto& e : prompts) max_masked = std::max(max_masked, e.count_masked());
  SampleConfig cfg{clamp_leap(a.leap, max_masked, err), a.temperature, a.point ? NumericMode::point : NumericMode::sample};
  const Dataset rows = sample_batch(ck.model, prompts, cfg, Rng(a.seed));
  write_file(a.output, format_rows(a.output, rows, schema));

  manifest.config("observe", a.observe);
  manifest.config("leap", cfg.leap);
  manifest.config("temperature", a.temperature);
  manifest.config("numeric_mode", a.point ? "point" : "sample");
  manifest.seed(a.seed);
  manifest.input("checkpoint", a.ckpt);
  manifest.input("data", a.data);
  if (!a.schema.empty()) manifest.input("schema", a.schema);
  manifest.output("imputed", a.output);
  manifest.fingerprint(ck.model.fingerprint());
  manifest.write(manifest_beside(a.output));
}

struct EvaluateArgs {
  std::string ckpt, data, schema, metrics = "leave_one_out", output;
  int draws = 1000;
  int max_entities = 100;
  std::uint64_t seed = 0;
};

void cmd_evaluate(const EvaluateArgs& a) {
  Manifest manifest("evaluate");
  const auto wanted = split_list(a.metrics);
  for (const auto& m : wanted)
    if (m != "leave_one_out" && m != "bound" && m != "exact_loglik")
      throw UsageError("unknown metric '" + m + "' (expected leave_one_out, bound, exact_loglik)");
  if (a.draws < 1 || a.max_entities < 1) throw UsageError("--draws and --max-entities must be >= 1");
  const Checkpoint ck = open_checkpoint(a.ckpt, a.schema);
  const Dataset rows = load_rows(a.data, ck.model.schema());
  if (rows.empty()) throw DataError("evaluate: no rows");
  const std::size_t limit = std::min(rows.size(), static_cast<std::size_t>(a.max_entities));

  json report;
  report["fingerprint"] = fingerprint_hex(ck.model.fingerprint());
  report["rows"] = rows.size();
  std::optional<MetricReport> loo;
  for (const auto& m : wanted) {
    if (m == "leave_one_out") {
      loo = leave_one_out_metrics(ck.model, rows, ck.baseline);
      report["leave_one_out"] = json::parse(metric_reports_json(std::span<const MetricReport>(&*loo, 1)))["reports"][0];
    } else if (m == "bound") {
      const Rng root(a.seed);
      double total = 0.0, var = 0.0;
      for (std::size_t k = 0; k < limit; ++k) {
        const BoundEstimate b = diffusion_bound(ck.model, rows[k], a.draws, root.split(k));
        total += b.mean;
        var += b.stderr_value * b.stderr_value;
      }
      const double n = static_cast<double>(limit);
      report["bound"] = {{"entities", limit}, {"draws", a.draws}, {"mean", total / n}, {"stderr", std::sqrt(var) / n}};
    } else {
      double total = 0.0;
      for (std::size_t k = 0; k < limit; ++k) total += exact_reverse_loglik(ck.model, rows[k]);
      report["exact_loglik"] = {{"entities", limit}, {"mean_nll", -total / static_cast<double>(limit)}};
    }
  }
  // Everything is computed before anything is written.
  write_file(a.output, report.dump(2) + "\n");
  const fs::path csv = fs::path(a.output).replace_extension(".csv");
  if (loo) write_file(csv, metric_reports_aligned_csv(std::span<const MetricReport>(&*loo, 1)));

  manifest.config("metrics", wanted);
  manifest.config("draws", a.draws);
  manifest.config("max_entities", a.max_entities);
  manifest.seed(a.seed);
  manifest.input("checkpoint", a.ckpt);
  manifest.input("data", a.data);
  if (!a.schema.empty()) manifest.input("schema", a.schema);
  manifest.output("report", a.output);
  if (loo) manifest.output("table", csv.string());
  manifest.fingerprint(ck.model.fingerprint());
  manifest.write(manifest_beside(a.output));
}

struct SweepArgs {
  std::string ckpt, data, schema, fractions = "0,0.25,0.5,0.75,0.9", output;
  int trials = 5;
  std::uint64_t seed = 0;
};

void cmd_sweep(const SweepArgs& a) {
  Manifest manifest("sweep");
  std::vector<double> fractions;
  for (const auto& f : split_list(a.fractions)) {
    try {
      std::size_t used = 0;
      fractions.push_back(std::stod(f, &used));
      if (used != f.size()) throw std::invalid_argument(f);
    } catch (const std::exception&) {
      throw UsageError("--fractions: not a number: '" + f + "'");
    }
    if (!(fractions.back() >= 0.0 && fractions.back() <= 1.0)) throw UsageError("--fractions must lie in [0,1]");
  }
  if (fractions.empty()) throw UsageError("--fractions is empty");
  if (a.trials < 1) throw UsageError("--trials must be >= 1");
  const Checkpoint ck = open_checkpoint(a.ckpt, a.schema);
  const Dataset rows = load_rows(a.data, ck.model.schema());
  const auto reports = masking_sweep(ck.model, rows, fractions, a.trials, ck.baseline, Rng(a.seed));
  write_file(a.output, metric_reports_long_csv(reports));
  const fs::path report_json = fs::path(a.output).replace_extension(".json");
  write_file(report_json, metric_reports_json(reports));

  manifest.config("fractions", fractions);
  manifest.config("trials", a.trials);
  manifest.seed(a.seed);
  manifest.input("checkpoint", a.ckpt);
  manifest.input("data", a.data);
  if (!a.schema.empty()) manifest.input("schema", a.schema);
  manifest.output("table", a.output);
  manifest.output("report", report_json.string());
  manifest.fingerprint(ck.model.fingerprint());
  manifest.write(manifest_beside(a.output));
}

struct AblateArgs {
  std::string ckpt, data, schema, test, target, exclude, output;
  int learner_seeds = 10;
  double manifold_eps = 0.15;
  std::uint64_t seed = 0;
};

json efficacy_json(const EfficacyReport& r) {
  return {{"metric", r.metric},          {"real_mean", r.real_mean},     {"real_std", r.real_std},
          {"synthetic_mean", r.synthetic_mean}, {"synthetic_std", r.synthetic_std}, {"real_scores", r.real_scores},
          {"synthetic_scores", r.synthetic_scores}};
}

json arm_json(const AblationArm& arm) {
  json j;
  j["leap"] = arm.leap;
  j["samples"] = arm.samples.size();
  j["copy_match"] = arm.copy_match ? json(*arm.copy_match) : json(nullptr);
  j["manifold_hit"] = arm.manifold_hit ? json(*arm.manifold_hit) : json(nullptr);
  j["dependence_gap"] = arm.dependence;
  j["efficacy"] = arm.efficacy ? efficacy_json(*arm.efficacy) : json(nullptr);
  return j;
}

void cmd_ablate(const AblateArgs& a) {
  Manifest manifest("ablate");
  if (!a.target.empty() && a.test.empty()) throw UsageError("--target needs --test");
  const Checkpoint ck = open_checkpoint(a.ckpt, a.schema);
  const EntitySchema& schema = ck.model.schema();
  const Dataset reference = load_rows(a.data, schema);
  Dataset test;
  std::optional<EfficacyTask> task;
  if (!a.target.empty()) {
    test = load_rows(a.test, schema);
    task = EfficacyTask{a.target, split_list(a.exclude), a.learner_seeds};
  }
  const AblationReport r = ablate_single_step_vs_diffusion(ck.model, reference, Rng(a.seed), task, test, a.manifold_eps);
  json doc{{"fingerprint", fingerprint_hex(ck.model.fingerprint())}, {"stepwise", arm_json(r.stepwise)}, {"single_step", arm_json(r.single_step)}};
  write_file(a.output, doc.dump(2) + "\n");

  manifest.config("target", a.target);
  manifest.config("exclude", a.exclude);
  manifest.config("learner_seeds", a.learner_seeds);
  manifest.config("manifold_eps", a.manifold_eps);
  manifest.seed(a.seed);
  manifest.input("checkpoint", a.ckpt);
  manifest.input("data", a.data);
  if (!a.test.empty()) manifest.input("test", a.test);
  manifest.output("report", a.output);
  manifest.fingerprint(ck.model.fingerprint());
  manifest.write(manifest_beside(a.output));
}

struct ToyArgs {
  std::string name, output, schema_output;
  int n = 1000;
  double noise = -1.0;
  std::uint64_t seed = 0;
};

void cmd_toy(const ToyArgs& a) {
  Manifest manifest("toy");
  const auto& names = toy_names();
  if (std::find(names.begin(), names.end(), a.name) == names.end()) throw UsageError("unknown toy dataset '" + a.name + "'");
  if (a.n < 1) throw UsageError("--n must be >= 1");
  const ToyDataset toy = make_toy(a.name, a.n, a.noise, a.seed);
  const fs::path schema_out = a.schema_output.empty() ? fs::path(a.output).replace_extension(".schema.json") : fs::path(a.schema_output);
  write_file(a.output, format_rows(a.output, toy.rows, toy.schema));
  write_file(schema_out, save_schema(toy.schema));

  manifest.config("name", a.name);
  manifest.config("n", a.n);
  manifest.config("noise", a.noise);
  manifest.seed(a.seed);
  manifest.output("data", a.output);
  manifest.output("schema", schema_out.string());
  manifest.fingerprint(schema_fingerprint(toy.schema));
  manifest.write(manifest_beside(a.output));
}

void error_line(std::ostream& err, const char* kind, int code, const std::string& message) {
  err << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked diffusion over structured entities", "strucdiff"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  SchemaInferArgs si;
  auto* c_schema = app.add_subcommand("schema-infer", "Infer a schema document from a CSV file");
  c_schema->add_option("csv", si.csv, "Input CSV")->required();
  c_schema->add_option("-o,--output", si.output, "Schema output path")->required();
  c_schema->add_option("--categorical-cutoff", si.categorical_cutoff, "Max distinct labels for a categorical column");
  c_schema->add_option("--text-max-length", si.text_max_length, "Minimum text length budget");
  c_schema->add_option("--missing", si.missing, "Missing-value sentinel besides the empty cell");
  c_schema->add_option("--hint", si.hints, "Force a kind: path=numerical|categorical|text");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model and write a run directory");
  c_train->add_option("--data", tr.data, "Training rows (.csv or .jsonl)")->required();
  c_train->add_option("--schema", tr.schema, "Schema document")->required();
  c_train->add_option("--config", tr.config, "key=value settings file");
  c_train->add_option("--set", tr.overrides, "Override a setting: key=value (repeatable)");
  c_train->add_option("--seed", tr.seed, "Seed (overrides train.seed)");
  c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Extra checkpoint every N epochs (0: final only)");
  c_train->add_option("-o,--output", tr.output, "Run directory")->required();

  SampleArgs sa;
  auto* c_sample = app.add_subcommand("sample", "Generate entities unconditionally");
  c_sample->add_option("--ckpt", sa.ckpt, "Checkpoint")->required();
  c_sample->add_option("--n", sa.n, "Number of entities");
  c_sample->add_option("--leap", sa.leap, "Leaves revealed per network call");
  c_sample->add_option("--seed", sa.seed, "Seed");
  c_sample->add_option("--temperature", sa.temperature, "Categorical and text temperature");
  c_sample->add_flag("--point", sa.point, "Deterministic point values instead of draws");
  c_sample->add_option("-o,--output", sa.output, "Output (.jsonl or .csv)")->required();

  ImputeArgs im;
  auto* c_impute = app.add_subcommand("impute", "Fill unobserved leaves conditioned on observed ones");
  c_impute->add_option("--ckpt", im.ckpt, "Checkpoint")->required();
  c_impute->add_option("--data", im.data, "Rows to complete")->required();
  c_impute->add_option("--schema", im.schema, "Schema document the rows follow");
  c_impute->add_option("--observe", im.observe, "Comma-separated leaf paths to keep, or auto (fill Missing cells)");
  c_impute->add_option("--leap", im.leap, "Leaves revealed per network call");
  c_impute->add_option("--seed", im.seed, "Seed");
  c_impute->add_option("--temperature", im.temperature, "Categorical and text temperature");
  c_impute->add_flag("--point", im.point, "Deterministic point values instead of draws");
  c_impute->add_option("-o,--output", im.output, "Output (.jsonl or .csv)")->required();

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score a checkpoint on held-out rows");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  c_eval->add_option("--data", ev.data, "Held-out rows")->required();
  c_eval->add_option("--schema", ev.schema, "Schema document the rows follow");
  c_eval->add_option("--metrics", ev.metrics, "Comma list of leave_one_out, bound, exact_loglik");
  c_eval->add_option("--draws", ev.draws, "Monte-Carlo draws per entity for bound");
  c_eval->add_option("--max-entities", ev.max_entities, "Entities used by bound and exact_loglik");
  c_eval->add_option("--seed", ev.seed, "Seed");
  c_eval->add_option("-o,--output", ev.output, "Report (.json); an aligned .csv is written beside it")->required();

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Metrics as a function of the masked fraction");
  c_sweep->add_option("--ckpt", sw.ckpt, "Checkpoint")->required();
  c_sweep->add_option("--data", sw.data, "Held-out rows")->required();
  c_sweep->add_option("--schema", sw.schema, "Schema document the rows follow");
  c_sweep->add_option("--fractions", sw.fractions, "Comma list of masked fractions");
  c_sweep->add_option("--trials", sw.trials, "Random masks per fraction");
  c_sweep->add_option("--seed", sw.seed, "Seed");
  c_sweep->add_option("-o,--output", sw.output, "Long-format CSV; a .json report is written beside it")->required();

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "Stepwise versus single-step generation");
  c_ablate->add_option("--ckpt", ab.ckpt, "Checkpoint")->required();
  c_ablate->add_option("--data", ab.data, "Reference rows")->required();
  c_ablate->add_option("--schema", ab.schema, "Schema document the rows follow");
  c_ablate->add_option("--test", ab.test, "Held-out rows for the efficacy protocol");
  c_ablate->add_option("--target", ab.target, "Efficacy target leaf");
  c_ablate->add_option("--exclude", ab.exclude, "Comma list of leaves not used as features");
  c_ablate->add_option("--learner-seeds", ab.learner_seeds, "Downstream learner seeds");
  c_ablate->add_option("--manifold-eps", ab.manifold_eps, "Two-moons hit distance");
  c_ablate->add_option("--seed", ab.seed, "Seed");
  c_ablate->add_option("-o,--output", ab.output, "Report (.json)")->required();

  ToyArgs ty;
  auto* c_toy = app.add_subcommand("toy", "Write a synthetic dataset and its schema");
  c_toy->add_option("--name", ty.name, "two_moons, copy_pair, correlated_table or binary_grid")->required();
  c_toy->add_option("--n", ty.n, "Rows");
  c_toy->add_option("--noise", ty.noise, "Noise level (negative: dataset default)");
  c_toy->add_option("--seed", ty.seed, "Seed");
  c_toy->add_option("--schema-output", ty.schema_output, "Schema path (default: <output stem>.schema.json)");
  c_toy->add_option("-o,--output", ty.output, "Output (.csv or .jsonl)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    out << (dynamic_cast<const CLI::CallForVersion*>(&e) ? e.what() : app.help("", CLI::AppFormatMode::All));
    if (dynamic_cast<const CLI::CallForVersion*>(&e)) out << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", kUsage, e.what());
    return kUsage;
  }

  try {
    if (c_schema->parsed()) cmd_schema_infer(si);
    if (c_train->parsed()) cmd_train(tr, err);
    if (c_sample->parsed()) cmd_sample(sa, err);
    if (c_impute->parsed()) cmd_impute(im, err);
    if (c_eval->parsed()) cmd_evaluate(ev);
    if (c_sweep->parsed()) cmd_sweep(sw);
    if (c_ablate->parsed()) cmd_ablate(ab);
    if (c_toy->parsed()) cmd_toy(ty);
  } catch (const UsageError& e) {
    error_line(err, "usage", kUsage, e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    error_line(err, "usage", kUsage, e.what());
    return kUsage;
  } catch (const SchemaError& e) {
    error_line(err, "schema", kData, e.what());
    return kData;
  } catch (const DataError& e) {
    error_line(err, "data", kData, e.what());
    return kData;
  } catch (const NumericalError& e) {
    error_line(err, "numerical", kNumerical, e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    error_line(err, "internal", kFailure, e.what());
    return kFailure;
  }
  return kOk;
}

}  // namespace strucdiff::cli
