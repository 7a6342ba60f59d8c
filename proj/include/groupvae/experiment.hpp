#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groupvae/data.hpp"
#include "groupvae/fairness.hpp"
#include "groupvae/metrics.hpp"
#include "groupvae/training.hpp"

namespace groupvae {

// One objective with the list of gamma/beta values to sweep.
struct SweepEntry {
  Objective objective = Objective::kGroupVae;
  std::vector<double> values;
};

struct FairSection {
  FairTask task;
  ClassifierConfig classifier;
  double sigma = 0.2;
  std::vector<int> binarize_thresholds;
  int train_draws = 2000;
  std::uint64_t split_seed = 0;
};

// Fully resolved experiment description; every field is echoed into the
// manifest so a run is reproducible from its manifest alone.
struct ExperimentConfig {
  FactorSpec factor_spec;
  GroupSpec group_spec;
  int obs_dim = 32;
  std::uint64_t render_seed = 0;

  ModelConfig model;
  TrainConfig train;

  std::vector<SweepEntry> sweep;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int mi_bins = 20;

  std::optional<FairSection> fair;

  void validate() const;
};

// Default toy disentanglement spec: factors [3,3,4,4,4], groups
// content=[0,1] / style=[2,3,4], latent 10 split 5/5.
ExperimentConfig default_toy_config();

ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);  // resolved echo

const char* objective_name(Objective obj);
Objective objective_from_name(const std::string& name);

// Stable identifier of one sweep run, e.g. "groupvae_v8_s0".
std::string run_id(Objective obj, double value, std::uint64_t seed);

// FNV-1a content hash of a file, hex-encoded.
std::string file_hash_hex(const std::string& path);

// generate: dataset.bin + manifest.json under out_dir. Refuses to overwrite
// an existing dataset unless force is set.
void run_generate(const ExperimentConfig& cfg, const std::string& out_dir,
                  bool force);

// train: one directory per (objective, value, seed) under out_dir/runs with
// checkpoint.bin, trace.tsv, config echo and a DONE marker; finished runs
// are skipped on resume. seed_offset shifts every seed. jobs > 1 trains
// independent runs in parallel threads.
void run_train(const ExperimentConfig& cfg, const std::string& out_dir,
               bool force, std::uint64_t seed_offset = 0, int jobs = 1);

// eval: per-run MI tables and metrics plus aggregate tables (median/min/max
// over seeds) under out_dir/reports.
void run_eval(const ExperimentConfig& cfg, const std::string& out_dir,
              std::uint64_t seed_offset = 0);

// traverse: for one run's checkpoint, decode a per-dimension sweep of
// posterior mean +/- 3 sigma in 8 steps around each anchor observation.
void run_traverse(const ExperimentConfig& cfg, const std::string& out_dir,
                  const std::string& which_run,
                  const std::vector<int>& anchors);

// fair: the full unfair-data pipeline (binarize, split, biased train pool,
// sweep VAEs, classifiers, raw-input baseline, FairGap selection) writing
// out_dir/fair/fair_report.tsv. jobs as in run_train.
void run_fair(const ExperimentConfig& cfg, const std::string& out_dir,
              bool force, std::uint64_t seed_offset = 0, int jobs = 1);

// Aggregation helpers shared by reports and tests.
double median(std::vector<double> xs);

struct EvalRow {
  std::string id;
  Objective objective = Objective::kGroupVae;
  double value = 0.0;
  std::uint64_t seed = 0;
  double mig = 0.0;
  double group_mig = 0.0;
};

// Encodes the whole dataset with a checkpoint and scores it.
EvalRow evaluate_run(const ExperimentConfig& cfg, const FactorDataset& ds,
                     const std::string& checkpoint_path, Objective obj,
                     double value, std::uint64_t seed);

}  // namespace groupvae
