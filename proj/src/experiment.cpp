#include "groupvae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "groupvae/rng.hpp"

namespace groupvae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(12);
  out << v;
  return out.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::string trace_tsv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "step\trecon_x\trecon_x_prime\tkl_prior_x\tkl_prior_x_prime\t"
         "kl_reg\ttotal\n";
  for (const TraceRow& row : trace) {
    out << row.step << '\t' << fmt(row.loss.recon_x) << '\t'
        << fmt(row.loss.recon_x_prime) << '\t' << fmt(row.loss.kl_prior_x)
        << '\t' << fmt(row.loss.kl_prior_x_prime) << '\t'
        << fmt(row.loss.kl_reg) << '\t' << fmt(row.loss.total) << '\n';
  }
  return out.str();
}

struct RunSpec {
  Objective objective;
  double value;
  std::uint64_t seed;
  std::string id;
};

std::vector<RunSpec> enumerate_runs(const ExperimentConfig& cfg,
                                    std::uint64_t seed_offset) {
  std::vector<RunSpec> runs;
  for (const SweepEntry& entry : cfg.sweep) {
    for (double value : entry.values) {
      for (std::uint64_t seed : cfg.seeds) {
        const std::uint64_t s = seed + seed_offset;
        runs.push_back(
            {entry.objective, value, s, run_id(entry.objective, value, s)});
      }
    }
  }
  return runs;
}

// Runs tasks [0, n) across `jobs` threads; tasks must be independent.
void parallel_for_tasks(int n, int jobs,
                        const std::function<void(int)>& task) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) task(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : workers) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json likelihood_json(Likelihood l) {
  return l == Likelihood::kBernoulli ? "bernoulli" : "gaussian";
}

Likelihood likelihood_from(const std::string& s) {
  if (s == "bernoulli") return Likelihood::kBernoulli;
  if (s == "gaussian") return Likelihood::kGaussian;
  throw std::invalid_argument("unknown likelihood: " + s);
}

json config_json(const ExperimentConfig& cfg) {
  json j;
  json factors = json::array();
  for (int f = 0; f < cfg.factor_spec.num_factors(); ++f) {
    factors.push_back({{"name", cfg.factor_spec.factor_names[f]},
                       {"card", cfg.factor_spec.cardinalities[f]}});
  }
  json groups = json::array();
  for (const auto& g : cfg.group_spec.groups) {
    groups.push_back({{"name", g.name}, {"factors", g.factor_indices}});
  }
  j["dataset"] = {{"factors", factors},
                  {"groups", groups},
                  {"obs_dim", cfg.obs_dim},
                  {"render_seed", cfg.render_seed}};
  j["model"] = {{"hidden", cfg.model.hidden_sizes},
                {"partition", cfg.model.partition_sizes},
                {"likelihood", likelihood_json(cfg.model.likelihood)}};
  j["train"] = {{"batch_size", cfg.train.batch_size},
                {"iterations", cfg.train.iterations},
                {"learning_rate", cfg.train.learning_rate},
                {"adam_beta1", cfg.train.adam_beta1},
                {"adam_beta2", cfg.train.adam_beta2},
                {"adam_eps", cfg.train.adam_eps},
                {"eval_every", cfg.train.eval_every},
                {"pair_allow_self", cfg.train.pair_allow_self}};
  json sweep = json::array();
  for (const SweepEntry& entry : cfg.sweep) {
    sweep.push_back({{"objective", objective_name(entry.objective)},
                     {"values", entry.values}});
  }
  j["sweep"] = sweep;
  j["seeds"] = cfg.seeds;
  j["metrics"] = {{"bins", cfg.mi_bins}};
  if (cfg.fair) {
    const FairSection& fair = *cfg.fair;
    j["fair"] = {{"target_factor", fair.task.target_factor},
                 {"sensitive_factors", fair.task.sensitive_factors},
                 {"sensitive_group", fair.task.sensitive_group},
                 {"predictive_group", fair.task.predictive_group},
                 {"train_frac", fair.task.train_frac},
                 {"val_frac", fair.task.val_frac},
                 {"sigma", fair.sigma},
                 {"binarize_thresholds", fair.binarize_thresholds},
                 {"train_draws", fair.train_draws},
                 {"split_seed", fair.split_seed},
                 {"classifier",
                  {{"hidden", fair.classifier.hidden},
                   {"iterations", fair.classifier.iterations},
                   {"batch_size", fair.classifier.batch_size},
                   {"learning_rate", fair.classifier.learning_rate},
                   {"adam_beta1", fair.classifier.adam_beta1},
                   {"adam_beta2", fair.classifier.adam_beta2},
                   {"adam_eps", fair.classifier.adam_eps},
                   {"seed", fair.classifier.seed}}}};
  }
  return j;
}

FactorDataset build_dataset(const ExperimentConfig& cfg) {
  return build_grid_dataset(cfg.factor_spec, cfg.group_spec, cfg.obs_dim,
                            cfg.render_seed);
}

}  // namespace

void ExperimentConfig::validate() const {
  factor_spec.validate();
  group_spec.validate(factor_spec);
  if (obs_dim < 1) throw std::invalid_argument("config: obs_dim >= 1");
  train.validate();
  if (sweep.empty()) throw std::invalid_argument("config: sweep is empty");
  for (const SweepEntry& entry : sweep) {
    if (entry.values.empty()) {
      throw std::invalid_argument("config: sweep entry without values");
    }
    for (double v : entry.values) {
      if (v < 0.0) throw std::invalid_argument("config: negative sweep value");
    }
  }
  if (seeds.empty()) throw std::invalid_argument("config: seeds is empty");
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("config: seeds must be distinct");
  }
  if (mi_bins < 2) throw std::invalid_argument("config: mi_bins >= 2");
  if (static_cast<int>(model.partition_sizes.size()) !=
      group_spec.num_groups()) {
    throw std::invalid_argument(
        "config: latent partition groups != factor groups");
  }
}

ExperimentConfig default_toy_config() {
  ExperimentConfig cfg;
  cfg.factor_spec.factor_names = {"f0", "f1", "f2", "f3", "f4"};
  cfg.factor_spec.cardinalities = {3, 3, 4, 4, 4};
  cfg.group_spec.groups = {{"content", {0, 1}}, {"style", {2, 3, 4}}};
  cfg.obs_dim = 32;
  cfg.render_seed = 0;
  cfg.model.hidden_sizes = {64, 64};
  cfg.model.partition_sizes = {5, 5};
  cfg.model.likelihood = Likelihood::kBernoulli;
  cfg.sweep = {{Objective::kGroupVae, {1, 2, 8, 16, 32, 64}},
               {Objective::kMlvae, {1, 2, 4, 6, 8, 16}},
               {Objective::kGvae, {1, 2, 4, 6, 8, 16}}};
  cfg.seeds = {0, 1, 2, 3, 4};
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  json j;
  f >> j;

  ExperimentConfig cfg = default_toy_config();
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    if (d.contains("factors")) {
      cfg.factor_spec.factor_names.clear();
      cfg.factor_spec.cardinalities.clear();
      for (const json& fj : d["factors"]) {
        cfg.factor_spec.factor_names.push_back(fj.at("name").get<std::string>());
        cfg.factor_spec.cardinalities.push_back(fj.at("card").get<int>());
      }
    }
    if (d.contains("groups")) {
      cfg.group_spec.groups.clear();
      for (const json& gj : d["groups"]) {
        cfg.group_spec.groups.push_back(
            {gj.at("name").get<std::string>(),
             gj.at("factors").get<std::vector<int>>()});
      }
    }
    cfg.obs_dim = d.value("obs_dim", cfg.obs_dim);
    cfg.render_seed = d.value("render_seed", cfg.render_seed);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    cfg.model.hidden_sizes = m.value("hidden", cfg.model.hidden_sizes);
    cfg.model.partition_sizes = m.value("partition", cfg.model.partition_sizes);
    if (m.contains("likelihood")) {
      cfg.model.likelihood = likelihood_from(m["likelihood"].get<std::string>());
    }
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.iterations = t.value("iterations", cfg.train.iterations);
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.adam_beta1 = t.value("adam_beta1", cfg.train.adam_beta1);
    cfg.train.adam_beta2 = t.value("adam_beta2", cfg.train.adam_beta2);
    cfg.train.adam_eps = t.value("adam_eps", cfg.train.adam_eps);
    cfg.train.eval_every = t.value("eval_every", cfg.train.eval_every);
    cfg.train.pair_allow_self =
        t.value("pair_allow_self", cfg.train.pair_allow_self);
  }
  if (j.contains("sweep")) {
    cfg.sweep.clear();
    for (const json& sj : j["sweep"]) {
      cfg.sweep.push_back(
          {objective_from_name(sj.at("objective").get<std::string>()),
           sj.at("values").get<std::vector<double>>()});
    }
  }
  cfg.seeds = j.value("seeds", cfg.seeds);
  if (j.contains("metrics")) {
    cfg.mi_bins = j["metrics"].value("bins", cfg.mi_bins);
  }
  if (j.contains("fair")) {
    const json& fj = j["fair"];
    FairSection fair;
    fair.task.target_factor = fj.at("target_factor").get<int>();
    fair.task.sensitive_factors =
        fj.at("sensitive_factors").get<std::vector<int>>();
    fair.task.sensitive_group = fj.value("sensitive_group", 0);
    fair.task.predictive_group = fj.value("predictive_group", 1);
    fair.task.train_frac = fj.value("train_frac", fair.task.train_frac);
    fair.task.val_frac = fj.value("val_frac", fair.task.val_frac);
    fair.sigma = fj.value("sigma", fair.sigma);
    fair.binarize_thresholds =
        fj.at("binarize_thresholds").get<std::vector<int>>();
    fair.train_draws = fj.value("train_draws", fair.train_draws);
    fair.split_seed = fj.value("split_seed", fair.split_seed);
    if (fj.contains("classifier")) {
      const json& cj = fj["classifier"];
      fair.classifier.hidden = cj.value("hidden", fair.classifier.hidden);
      fair.classifier.iterations =
          cj.value("iterations", fair.classifier.iterations);
      fair.classifier.batch_size =
          cj.value("batch_size", fair.classifier.batch_size);
      fair.classifier.learning_rate =
          cj.value("learning_rate", fair.classifier.learning_rate);
      fair.classifier.adam_beta1 =
          cj.value("adam_beta1", fair.classifier.adam_beta1);
      fair.classifier.adam_beta2 =
          cj.value("adam_beta2", fair.classifier.adam_beta2);
      fair.classifier.adam_eps = cj.value("adam_eps", fair.classifier.adam_eps);
      fair.classifier.seed = cj.value("seed", fair.classifier.seed);
    }
    cfg.fair = fair;
  }
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_json(cfg).dump(2);
}

const char* objective_name(Objective obj) {
  switch (obj) {
    case Objective::kPairedElbo: return "paired_elbo";
    case Objective::kGroupVae: return "groupvae";
    case Objective::kMlvae: return "mlvae";
    case Objective::kGvae: return "gvae";
    case Objective::kBetaVae: return "betavae";
  }
  throw std::invalid_argument("objective_name: unknown objective");
}

Objective objective_from_name(const std::string& name) {
  if (name == "paired_elbo") return Objective::kPairedElbo;
  if (name == "groupvae") return Objective::kGroupVae;
  if (name == "mlvae") return Objective::kMlvae;
  if (name == "gvae") return Objective::kGvae;
  if (name == "betavae") return Objective::kBetaVae;
  throw std::invalid_argument("unknown objective: " + name);
}

std::string run_id(Objective obj, double value, std::uint64_t seed) {
  std::ostringstream out;
  out << objective_name(obj) << "_v";
  if (value == std::floor(value) && std::abs(value) < 1e15) {
    out << static_cast<long long>(value);
  } else {
    out.precision(6);
    out << value;
  }
  out << "_s" << seed;
  return out.str();
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("file_hash_hex: cannot open " + path);
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a offset basis
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    const std::streamsize got = f.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;  // FNV prime
    }
    if (!f) break;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

void run_generate(const ExperimentConfig& cfg, const std::string& out_dir,
                  bool force) {
  cfg.validate();
  fs::create_directories(out_dir);
  const fs::path ds_path = fs::path(out_dir) / "dataset.bin";
  if (fs::exists(ds_path) && !force) {
    throw std::runtime_error("dataset exists (use --force to overwrite): " +
                             ds_path.string());
  }
  const FactorDataset ds = build_dataset(cfg);
  save_dataset(ds, ds_path.string());

  json manifest;
  manifest["config"] = config_json(cfg);
  manifest["dataset_file"] = "dataset.bin";
  manifest["dataset_hash"] = file_hash_hex(ds_path.string());
  manifest["observations"] = ds.size();
  write_text_file(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

// Trains one sweep run into its directory. DONE is written last so an
// interrupted run restarts cleanly.
void train_one_run(const ExperimentConfig& cfg, const FactorDataset& ds,
                   const fs::path& run_dir, const RunSpec& run, bool force) {
  const fs::path done = run_dir / "DONE";
  if (fs::exists(done) && !force) return;
  fs::create_directories(run_dir);
  fs::remove(done);

  TrainConfig tc = cfg.train;
  tc.objective = run.objective;
  tc.gamma_or_beta = run.value;
  tc.seed = run.seed;

  const fs::path ckpt = run_dir / "checkpoint.bin";
  const EvalCallback periodic = [&](const TrainState& state, const TraceRow&) {
    save_checkpoint(state.params, ckpt.string());
  };
  const TrainResult result = train_loop(ds, cfg.model, tc, periodic);

  save_checkpoint(result.state.params, ckpt.string());
  write_text_file(run_dir / "trace.tsv", trace_tsv(result.trace));
  json echo;
  echo["id"] = run.id;
  echo["objective"] = objective_name(run.objective);
  echo["value"] = run.value;
  echo["seed"] = run.seed;
  echo["train"] = {{"batch_size", tc.batch_size},
                   {"iterations", tc.iterations},
                   {"learning_rate", tc.learning_rate},
                   {"eval_every", tc.eval_every}};
  write_text_file(run_dir / "config.json", echo.dump(2) + "\n");
  write_text_file(done, "done\n");
}

}  // namespace

void run_train(const ExperimentConfig& cfg, const std::string& out_dir,
               bool force, std::uint64_t seed_offset, int jobs) {
  cfg.validate();
  const fs::path ds_path = fs::path(out_dir) / "dataset.bin";
  if (!fs::exists(ds_path)) {
    throw std::runtime_error("dataset missing; run generate first: " +
                             ds_path.string());
  }
  const FactorDataset ds = load_dataset(ds_path.string());
  const std::vector<RunSpec> runs = enumerate_runs(cfg, seed_offset);
  const fs::path runs_dir = fs::path(out_dir) / "runs";
  fs::create_directories(runs_dir);
  parallel_for_tasks(static_cast<int>(runs.size()), jobs, [&](int i) {
    train_one_run(cfg, ds, runs_dir / runs[i].id, runs[i], force);
  });
}

EvalRow evaluate_run(const ExperimentConfig& cfg, const FactorDataset& ds,
                     const std::string& checkpoint_path, Objective obj,
                     double value, std::uint64_t seed) {
  const ModelParams params = load_checkpoint(checkpoint_path);
  const GroupedPosterior q = encode(params, ds.observations);
  const GroupMIReport report =
      group_mig(q.mean, ds.factor_values, ds.group_spec, params.partition,
                cfg.mi_bins);
  EvalRow row;
  row.id = run_id(obj, value, seed);
  row.objective = obj;
  row.value = value;
  row.seed = seed;
  row.mig = report.mig;
  row.group_mig = report.group_mig;
  return row;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty input");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

void run_eval(const ExperimentConfig& cfg, const std::string& out_dir,
              std::uint64_t seed_offset) {
  cfg.validate();
  const FactorDataset ds =
      load_dataset((fs::path(out_dir) / "dataset.bin").string());
  const fs::path reports = fs::path(out_dir) / "reports";
  fs::create_directories(reports / "mi");

  std::ostringstream per_run;
  per_run << "id\tobjective\tvalue\tseed\tmig\tgroup_mig\n";

  struct Agg {
    Objective objective;
    double value;
    std::vector<double> migs, gmigs;
  };
  std::vector<Agg> aggs;

  for (const SweepEntry& entry : cfg.sweep) {
    for (double value : entry.values) {
      Agg agg{entry.objective, value, {}, {}};
      for (std::uint64_t seed : cfg.seeds) {
        const std::uint64_t s = seed + seed_offset;
        const std::string id = run_id(entry.objective, value, s);
        const fs::path run_dir = fs::path(out_dir) / "runs" / id;
        const fs::path ckpt = run_dir / "checkpoint.bin";
        if (!fs::exists(run_dir / "DONE") || !fs::exists(ckpt)) {
          throw std::runtime_error("run not trained yet: " + id);
        }
        const EvalRow row =
            evaluate_run(cfg, ds, ckpt.string(), entry.objective, value, s);
        per_run << row.id << '\t' << objective_name(row.objective) << '\t'
                << fmt(row.value) << '\t' << row.seed << '\t' << fmt(row.mig)
                << '\t' << fmt(row.group_mig) << '\n';
        agg.migs.push_back(row.mig);
        agg.gmigs.push_back(row.group_mig);

        const ModelParams params = load_checkpoint(ckpt.string());
        const GroupedPosterior q = encode(params, ds.observations);
        const MIMatrix mi =
            estimate_mi(q.mean, ds.factor_values, cfg.mi_bins);
        write_text_file(reports / "mi" / (id + ".tsv"),
                        mi_table_tsv(mi, ds.spec.factor_names));
      }
      aggs.push_back(std::move(agg));
    }
  }
  write_text_file(reports / "per_run.tsv", per_run.str());

  std::ostringstream table;
  table << "objective\tvalue\tn_seeds\tmedian_group_mig\tmin_group_mig\t"
           "max_group_mig\tmedian_mig\tmin_mig\tmax_mig\n";
  for (const Agg& agg : aggs) {
    table << objective_name(agg.objective) << '\t' << fmt(agg.value) << '\t'
          << agg.gmigs.size() << '\t' << fmt(median(agg.gmigs)) << '\t'
          << fmt(*std::min_element(agg.gmigs.begin(), agg.gmigs.end())) << '\t'
          << fmt(*std::max_element(agg.gmigs.begin(), agg.gmigs.end())) << '\t'
          << fmt(median(agg.migs)) << '\t'
          << fmt(*std::min_element(agg.migs.begin(), agg.migs.end())) << '\t'
          << fmt(*std::max_element(agg.migs.begin(), agg.migs.end())) << '\n';
  }
  write_text_file(reports / "report.tsv", table.str());

  std::ostringstream summary;
  summary << "objective\tbest_value\tmedian_group_mig\tmedian_mig\n";
  for (const SweepEntry& entry : cfg.sweep) {
    const Agg* best = nullptr;
    for (const Agg& agg : aggs) {
      if (agg.objective != entry.objective) continue;
      if (best == nullptr || median(agg.gmigs) > median(best->gmigs)) {
        best = &agg;
      }
    }
    if (best != nullptr) {
      summary << objective_name(entry.objective) << '\t' << fmt(best->value)
              << '\t' << fmt(median(best->gmigs)) << '\t'
              << fmt(median(best->migs)) << '\n';
    }
  }
  write_text_file(reports / "summary.tsv", summary.str());
}

void run_traverse(const ExperimentConfig& cfg, const std::string& out_dir,
                  const std::string& which_run,
                  const std::vector<int>& anchors) {
  cfg.validate();
  const FactorDataset ds =
      load_dataset((fs::path(out_dir) / "dataset.bin").string());
  const fs::path ckpt =
      fs::path(out_dir) / "runs" / which_run / "checkpoint.bin";
  const ModelParams params = load_checkpoint(ckpt.string());
  const fs::path traverse_dir = fs::path(out_dir) / "traverse" / which_run;
  fs::create_directories(traverse_dir);

  constexpr int kSteps = 8;
  for (int anchor : anchors) {
    if (anchor < 0 || anchor >= ds.size()) {
      throw std::invalid_argument("run_traverse: anchor out of range");
    }
    const GroupedPosterior q = encode(params, ds.observations.row(anchor));
    std::ostringstream out;
    out << "dim\tstep\tz_value";
    for (int d = 0; d < ds.obs_dim(); ++d) out << "\tx" << d;
    out << '\n';
    out.precision(12);
    for (int j = 0; j < params.latent_dim(); ++j) {
      const double mu = q.mean(0, j);
      const double sigma = std::exp(0.5 * q.log_var(0, j));
      for (int s = 0; s < kSteps; ++s) {
        const double t = -3.0 + 6.0 * s / (kSteps - 1);
        Eigen::MatrixXd z = q.mean;
        z(0, j) = mu + t * sigma;
        const Eigen::MatrixXd recon = reconstruction_mean(params, z);
        out << j << '\t' << s << '\t' << fmt(z(0, j));
        for (int d = 0; d < ds.obs_dim(); ++d) out << '\t' << fmt(recon(0, d));
        out << '\n';
      }
    }
    write_text_file(traverse_dir / ("anchor_" + std::to_string(anchor) + ".tsv"),
                    out.str());
  }
}

namespace {

struct FairRow {
  std::string id;
  std::string objective;  // sweep objective or "raw_mlp"
  double value = 0.0;
  std::uint64_t seed = 0;
  double val_fair_gap = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> test_dp;
  double test_fair_gap = 0.0;
  bool selected = false;
};

Eigen::MatrixXi sensitive_matrix(const FactorDataset& ds,
                                 const std::vector<int>& sensitive_factors) {
  Eigen::MatrixXi out(ds.size(), sensitive_factors.size());
  for (int i = 0; i < ds.size(); ++i) {
    for (std::size_t k = 0; k < sensitive_factors.size(); ++k) {
      out(i, k) = ds.factor_values(i, sensitive_factors[k]);
    }
  }
  return out;
}

std::vector<int> label_vector(const FactorDataset& ds, int factor) {
  std::vector<int> out(ds.size());
  for (int i = 0; i < ds.size(); ++i) out[i] = ds.factor_values(i, factor);
  return out;
}

}  // namespace

void run_fair(const ExperimentConfig& cfg, const std::string& out_dir,
              bool force, std::uint64_t seed_offset, int jobs) {
  cfg.validate();
  if (!cfg.fair) throw std::invalid_argument("run_fair: config has no fair section");
  const FairSection& fair = *cfg.fair;

  const FactorDataset full = build_dataset(cfg);
  const FactorDataset bds = binarize_factors(full, fair.binarize_thresholds);
  fair.task.validate(bds);

  const SplitIndices split = split_dataset(
      bds.size(), fair.task.train_frac, fair.task.val_frac, fair.split_seed);
  // Bias only the training pool; validation and test stay uniform so the
  // reported DP measures carried-over correlation, not split design.
  const int s_idx = fair.task.sensitive_factors.front();
  const std::vector<int> biased_rows = sample_unfair(
      bds, split.train, s_idx, fair.task.target_factor, fair.sigma,
      derive_seed(fair.split_seed, Stream::kEval, 1), fair.train_draws);
  const FactorDataset train_ds = subset(bds, biased_rows);
  const FactorDataset val_ds = subset(bds, split.val);
  const FactorDataset test_ds = subset(bds, split.test);

  const std::vector<int> train_labels =
      label_vector(train_ds, fair.task.target_factor);
  const std::vector<int> val_labels =
      label_vector(val_ds, fair.task.target_factor);
  const std::vector<int> test_labels =
      label_vector(test_ds, fair.task.target_factor);
  const Eigen::MatrixXi val_sensitive =
      sensitive_matrix(val_ds, fair.task.sensitive_factors);
  const Eigen::MatrixXi test_sensitive =
      sensitive_matrix(test_ds, fair.task.sensitive_factors);

  const fs::path fair_dir = fs::path(out_dir) / "fair";
  const fs::path runs_dir = fair_dir / "runs";
  fs::create_directories(runs_dir);

  const std::vector<RunSpec> runs = enumerate_runs(cfg, seed_offset);
  parallel_for_tasks(static_cast<int>(runs.size()), jobs, [&](int i) {
    train_one_run(cfg, train_ds, runs_dir / runs[i].id, runs[i], force);
  });

  auto classify_pipeline = [&](const Eigen::MatrixXd& train_reps,
                               const Eigen::MatrixXd& val_reps,
                               const Eigen::MatrixXd& test_reps,
                               std::uint64_t clf_seed, FairRow& row) {
    ClassifierConfig cc = fair.classifier;
    cc.seed = clf_seed;
    const FairClassifier clf =
        train_fair_classifier(train_reps, train_labels, cc);
    const FairReport val_report =
        evaluate_fairness(clf, val_reps, val_labels, val_sensitive);
    const FairReport test_report =
        evaluate_fairness(clf, test_reps, test_labels, test_sensitive);
    row.val_fair_gap = val_report.fair_gap;
    row.test_accuracy = test_report.accuracy;
    row.test_dp = test_report.dp;
    row.test_fair_gap = test_report.fair_gap;
  };

  std::vector<FairRow> rows;
  for (const RunSpec& run : runs) {
    const fs::path ckpt = runs_dir / run.id / "checkpoint.bin";
    const ModelParams params = load_checkpoint(ckpt.string());
    FairRow row;
    row.id = run.id;
    row.objective = objective_name(run.objective);
    row.value = run.value;
    row.seed = run.seed;
    classify_pipeline(
        extract_representation(params, train_ds.observations,
                               fair.task.predictive_group),
        extract_representation(params, val_ds.observations,
                               fair.task.predictive_group),
        extract_representation(params, test_ds.observations,
                               fair.task.predictive_group),
        run.seed, row);
    rows.push_back(std::move(row));
  }

  // Raw-observation baseline: same classifier head on the inputs directly.
  {
    FairRow row;
    const std::uint64_t seed = cfg.seeds.front() + seed_offset;
    row.id = "raw_mlp_s" + std::to_string(seed);
    row.objective = "raw_mlp";
    row.value = 0.0;
    row.seed = seed;
    classify_pipeline(train_ds.observations, val_ds.observations,
                      test_ds.observations, seed, row);
    rows.push_back(std::move(row));
  }

  // FairGap model selection: per objective, the best validation FairGap,
  // first-in-sweep-order on ties.
  for (const SweepEntry& entry : cfg.sweep) {
    int best = -1;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].objective != objective_name(entry.objective)) continue;
      if (best < 0 || rows[i].val_fair_gap > rows[best].val_fair_gap) {
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) rows[best].selected = true;
  }

  std::ostringstream out;
  out << "id\tobjective\tvalue\tseed\tval_fair_gap\ttest_accuracy";
  for (std::size_t k = 0; k < fair.task.sensitive_factors.size(); ++k) {
    out << "\tdp_"
        << bds.spec.factor_names[fair.task.sensitive_factors[k]];
  }
  out << "\ttest_fair_gap\tselected\n";
  for (const FairRow& row : rows) {
    out << row.id << '\t' << row.objective << '\t' << fmt(row.value) << '\t'
        << row.seed << '\t' << fmt(row.val_fair_gap) << '\t'
        << fmt(row.test_accuracy);
    for (double dp : row.test_dp) out << '\t' << fmt(dp);
    out << '\t' << fmt(row.test_fair_gap) << '\t' << (row.selected ? 1 : 0)
        << '\n';
  }
  write_text_file(fair_dir / "fair_report.tsv", out.str());
}

}  // namespace groupvae
