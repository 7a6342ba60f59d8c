#include "groupvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>
#include <stdexcept>

namespace groupvae {

namespace {

using nlohmann::json;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_factor_index(const FactorSpec& spec, int idx, const char* what) {
  if (idx < 0 || idx >= spec.num_factors()) {
    throw std::invalid_argument(std::string(what) + ": factor index out of range");
  }
}

}  // namespace

long long FactorSpec::grid_size() const {
  long long n = 1;
  for (int c : cardinalities) n *= c;
  return n;
}

void FactorSpec::validate() const {
  if (cardinalities.empty()) {
    throw std::invalid_argument("FactorSpec: at least one factor required");
  }
  if (factor_names.size() != cardinalities.size()) {
    throw std::invalid_argument("FactorSpec: names/cardinalities length mismatch");
  }
  for (int c : cardinalities) {
    if (c < 2) throw std::invalid_argument("FactorSpec: cardinality must be >= 2");
  }
}

void GroupSpec::validate(const FactorSpec& spec) const {
  if (groups.size() < 2) {
    throw std::invalid_argument("GroupSpec: at least 2 groups required");
  }
  std::set<int> seen;
  for (const Group& g : groups) {
    if (g.factor_indices.empty()) {
      throw std::invalid_argument("GroupSpec: group '" + g.name + "' is empty");
    }
    for (int f : g.factor_indices) {
      check_factor_index(spec, f, "GroupSpec");
      if (!seen.insert(f).second) {
        throw std::invalid_argument("GroupSpec: factor assigned to two groups");
      }
    }
  }
  if (static_cast<int>(seen.size()) != spec.num_factors()) {
    throw std::invalid_argument("GroupSpec: groups must cover every factor");
  }
}

long long FactorDataset::group_key(int row, int group) const {
  const GroupSpec::Group& g = group_spec.groups.at(group);
  long long key = 0;
  for (int f : g.factor_indices) {
    key = key * spec.cardinalities[f] + factor_values(row, f);
  }
  return key;
}

long long FactorDataset::group_key_space(int group) const {
  const GroupSpec::Group& g = group_spec.groups.at(group);
  long long n = 1;
  for (int f : g.factor_indices) n *= spec.cardinalities[f];
  return n;
}

const std::vector<std::vector<int>>& FactorDataset::matches(int group) const {
  return match_index_.at(group);
}

void FactorDataset::rebuild_match_index() {
  match_index_.assign(group_spec.num_groups(), {});
  for (int g = 0; g < group_spec.num_groups(); ++g) {
    match_index_[g].assign(group_key_space(g), {});
    for (int row = 0; row < size(); ++row) {
      match_index_[g][group_key(row, g)].push_back(row);
    }
  }
}

FactorDataset build_grid_dataset(const FactorSpec& spec,
                                 const GroupSpec& group_spec, int obs_dim,
                                 std::uint64_t render_seed) {
  spec.validate();
  group_spec.validate(spec);
  if (obs_dim < 1) throw std::invalid_argument("build_grid_dataset: obs_dim >= 1");

  const int F = spec.num_factors();
  const long long n = spec.grid_size();
  int onehot_dim = 0;
  for (int c : spec.cardinalities) onehot_dim += c;

  FactorDataset ds;
  ds.spec = spec;
  ds.group_spec = group_spec;
  ds.render_seed = render_seed;
  ds.factor_values.resize(n, F);
  ds.observations.resize(n, obs_dim);

  // Enumerate the grid in mixed-radix order, last factor fastest.
  std::vector<int> tuple(F, 0);
  for (long long row = 0; row < n; ++row) {
    for (int f = 0; f < F; ++f) ds.factor_values(row, f) = tuple[f];
    for (int f = F - 1; f >= 0; --f) {
      if (++tuple[f] < spec.cardinalities[f]) break;
      tuple[f] = 0;
    }
  }

  // Fixed random rendering map: one-hot codes -> linear -> sigmoid.
  RngStream rng(derive_seed(render_seed, Stream::kInit, 0));
  Eigen::MatrixXd w(onehot_dim, obs_dim);
  Eigen::RowVectorXd b(obs_dim);
  for (int i = 0; i < onehot_dim; ++i)
    for (int j = 0; j < obs_dim; ++j) w(i, j) = rng.normal();
  for (int j = 0; j < obs_dim; ++j) b(j) = rng.normal();

  std::vector<int> offsets(F, 0);
  for (int f = 1; f < F; ++f) offsets[f] = offsets[f - 1] + spec.cardinalities[f - 1];
  for (long long row = 0; row < n; ++row) {
    Eigen::RowVectorXd pre = b;
    for (int f = 0; f < F; ++f) {
      pre += w.row(offsets[f] + ds.factor_values(row, f));
    }
    for (int j = 0; j < obs_dim; ++j) ds.observations(row, j) = sigmoid(pre(j));
  }

  // Injectivity: distinct factor tuples must render to distinct observations.
  for (long long i = 0; i < n; ++i) {
    for (long long j = i + 1; j < n; ++j) {
      if (ds.observations.row(i) == ds.observations.row(j)) {
        throw std::runtime_error(
            "build_grid_dataset: rendering collision; change render_seed");
      }
    }
  }

  ds.rebuild_match_index();
  return ds;
}

PairedBatch sample_pair(const FactorDataset& ds, std::uint64_t rng_seed,
                        int batch, bool allow_self) {
  if (ds.size() == 0) throw std::invalid_argument("sample_pair: empty dataset");
  if (batch < 1) throw std::invalid_argument("sample_pair: batch >= 1");
  RngStream rng(rng_seed);
  const int num_groups = ds.group_spec.num_groups();

  PairedBatch out;
  out.x.resize(batch, ds.obs_dim());
  out.x_prime.resize(batch, ds.obs_dim());
  out.shared_group.resize(batch);
  out.index_x.resize(batch);
  out.index_x_prime.resize(batch);

  for (int p = 0; p < batch; ++p) {
    const int g = static_cast<int>(rng.uniform_int(num_groups));
    const int i = static_cast<int>(rng.uniform_int(ds.size()));
    const std::vector<int>& cand = ds.matches(g)[ds.group_key(i, g)];
    int j;
    if (!allow_self && cand.size() > 1) {
      // uniform over matches excluding i itself
      const int pos = static_cast<int>(
          std::find(cand.begin(), cand.end(), i) - cand.begin());
      int pick = rng.uniform_int(static_cast<int>(cand.size()) - 1);
      if (pick >= pos) ++pick;
      j = cand[pick];
    } else {
      j = cand[rng.uniform_int(static_cast<int>(cand.size()))];
    }
    out.shared_group[p] = g;
    out.index_x[p] = i;
    out.index_x_prime[p] = j;
    out.x.row(p) = ds.observations.row(i);
    out.x_prime.row(p) = ds.observations.row(j);
  }
  return out;
}

std::vector<int> sample_rows(const FactorDataset& ds, std::uint64_t rng_seed,
                             int count) {
  if (ds.size() == 0) throw std::invalid_argument("sample_rows: empty dataset");
  if (count < 1) throw std::invalid_argument("sample_rows: count >= 1");
  RngStream rng(rng_seed);
  std::vector<int> rows(count);
  for (int i = 0; i < count; ++i) {
    rows[i] = static_cast<int>(rng.uniform_int(ds.size()));
  }
  return rows;
}

std::vector<int> sample_unfair(const FactorDataset& ds,
                               const std::vector<int>& pool, int s_idx,
                               int x_idx, double sigma, std::uint64_t rng_seed,
                               int count) {
  check_factor_index(ds.spec, s_idx, "sample_unfair");
  check_factor_index(ds.spec, x_idx, "sample_unfair");
  if (s_idx == x_idx) throw std::invalid_argument("sample_unfair: s_idx == x_idx");
  if (ds.spec.cardinalities[s_idx] != 2 || ds.spec.cardinalities[x_idx] != 2) {
    throw std::invalid_argument(
        "sample_unfair: designated factors must be binary (binarize first)");
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("sample_unfair: sigma > 0");
  if (count < 1) throw std::invalid_argument("sample_unfair: count >= 1");
  if (pool.empty()) throw std::invalid_argument("sample_unfair: empty pool");

  const double mismatch_weight = std::exp(-1.0 / (2.0 * sigma * sigma));
  std::vector<double> cumulative(pool.size());
  double total = 0.0;
  for (std::size_t p = 0; p < pool.size(); ++p) {
    const int row = pool[p];
    const int s = ds.factor_values(row, s_idx);
    const int x = ds.factor_values(row, x_idx);
    total += (s == x) ? 1.0 : mismatch_weight;
    cumulative[p] = total;
  }

  RngStream rng(rng_seed);
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t p = std::min<std::size_t>(
        static_cast<std::size_t>(it - cumulative.begin()), pool.size() - 1);
    out[i] = pool[p];
  }
  return out;
}

std::vector<int> sample_unfair(const FactorDataset& ds, int s_idx, int x_idx,
                               double sigma, std::uint64_t rng_seed, int count) {
  std::vector<int> pool(ds.size());
  for (int i = 0; i < ds.size(); ++i) pool[i] = i;
  return sample_unfair(ds, pool, s_idx, x_idx, sigma, rng_seed, count);
}

FactorDataset binarize_factors(const FactorDataset& ds,
                               const std::vector<int>& thresholds) {
  if (static_cast<int>(thresholds.size()) != ds.spec.num_factors()) {
    throw std::invalid_argument("binarize_factors: one threshold per factor");
  }
  for (int f = 0; f < ds.spec.num_factors(); ++f) {
    if (thresholds[f] < 1 || thresholds[f] > ds.spec.cardinalities[f] - 1) {
      throw std::invalid_argument(
          "binarize_factors: threshold must leave values on both sides");
    }
  }
  FactorDataset out;
  out.spec = ds.spec;
  for (int& c : out.spec.cardinalities) c = 2;
  out.group_spec = ds.group_spec;
  out.observations = ds.observations;
  out.render_seed = ds.render_seed;
  out.factor_values.resize(ds.size(), ds.spec.num_factors());
  for (int row = 0; row < ds.size(); ++row) {
    for (int f = 0; f < ds.spec.num_factors(); ++f) {
      out.factor_values(row, f) = ds.factor_values(row, f) >= thresholds[f] ? 1 : 0;
    }
  }
  out.rebuild_match_index();
  return out;
}

FactorDataset subset(const FactorDataset& ds, const std::vector<int>& rows) {
  FactorDataset out;
  out.spec = ds.spec;
  out.group_spec = ds.group_spec;
  out.render_seed = ds.render_seed;
  out.observations.resize(rows.size(), ds.obs_dim());
  out.factor_values.resize(rows.size(), ds.spec.num_factors());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= ds.size()) {
      throw std::invalid_argument("subset: row index out of range");
    }
    out.observations.row(i) = ds.observations.row(rows[i]);
    out.factor_values.row(i) = ds.factor_values.row(rows[i]);
  }
  out.rebuild_match_index();
  return out;
}

namespace {

constexpr char kMagic[4] = {'G', 'V', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_dataset(const FactorDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_dataset: cannot open " + path);

  json header;
  header["factor_names"] = ds.spec.factor_names;
  header["cardinalities"] = ds.spec.cardinalities;
  json groups = json::array();
  for (const auto& g : ds.group_spec.groups) {
    groups.push_back({{"name", g.name}, {"factors", g.factor_indices}});
  }
  header["groups"] = groups;
  header["render_seed"] = ds.render_seed;
  header["n"] = ds.size();
  header["obs_dim"] = ds.obs_dim();
  const std::string htext = header.dump();

  f.write(kMagic, 4);
  write_pod(f, kVersion);
  write_pod(f, static_cast<std::uint64_t>(htext.size()));
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));

  for (int row = 0; row < ds.size(); ++row) {
    for (int c = 0; c < ds.spec.num_factors(); ++c) {
      write_pod(f, static_cast<std::int32_t>(ds.factor_values(row, c)));
    }
  }
  for (int row = 0; row < ds.size(); ++row) {
    for (int c = 0; c < ds.obs_dim(); ++c) {
      write_pod(f, ds.observations(row, c));
    }
  }
  if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

FactorDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);

  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("load_dataset: bad magic in " + path);
  }
  const auto version = read_pod<std::uint32_t>(f);
  if (version != kVersion) {
    throw std::runtime_error("load_dataset: unsupported version");
  }
  const auto hlen = read_pod<std::uint64_t>(f);
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  const json header = json::parse(htext);

  FactorDataset ds;
  ds.spec.factor_names = header.at("factor_names").get<std::vector<std::string>>();
  ds.spec.cardinalities = header.at("cardinalities").get<std::vector<int>>();
  for (const auto& g : header.at("groups")) {
    ds.group_spec.groups.push_back(
        {g.at("name").get<std::string>(),
         g.at("factors").get<std::vector<int>>()});
  }
  ds.render_seed = header.at("render_seed").get<std::uint64_t>();
  const int n = header.at("n").get<int>();
  const int obs_dim = header.at("obs_dim").get<int>();
  const int F = ds.spec.num_factors();

  ds.factor_values.resize(n, F);
  ds.observations.resize(n, obs_dim);
  for (int row = 0; row < n; ++row) {
    for (int c = 0; c < F; ++c) {
      ds.factor_values(row, c) = read_pod<std::int32_t>(f);
    }
  }
  for (int row = 0; row < n; ++row) {
    for (int c = 0; c < obs_dim; ++c) {
      ds.observations(row, c) = read_pod<double>(f);
    }
  }
  if (!f) throw std::runtime_error("load_dataset: truncated file " + path);
  ds.spec.validate();
  ds.group_spec.validate(ds.spec);
  ds.rebuild_match_index();
  return ds;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(i) = m.row(rows[i]);
  }
  return out;
}

}  // namespace groupvae
