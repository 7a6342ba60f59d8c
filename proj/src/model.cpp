#include "groupvae/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <stdexcept>

#include "groupvae/rng.hpp"

namespace groupvae {

namespace {

using nlohmann::json;

double softplus_scalar(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

Eigen::MatrixXd forward_mlp(const std::vector<Eigen::MatrixXd>& ws,
                            const std::vector<Eigen::MatrixXd>& bs,
                            const Eigen::MatrixXd& input) {
  Eigen::MatrixXd h = input;
  for (std::size_t l = 0; l < ws.size(); ++l) {
    Eigen::MatrixXd pre = h * ws[l];
    pre.rowwise() += bs[l].row(0);
    if (l + 1 < ws.size()) {
      h = pre.cwiseMax(0.0);
    } else {
      h = std::move(pre);  // linear output layer
    }
  }
  return h;
}

}  // namespace

int LatentPartition::latent_dim() const {
  int total = 0;
  for (int s : sizes) total += s;
  return total;
}

int LatentPartition::offset(int group) const {
  if (group < 0 || group >= num_groups()) {
    throw std::invalid_argument("LatentPartition: group index out of range");
  }
  int off = 0;
  for (int g = 0; g < group; ++g) off += sizes[g];
  return off;
}

void LatentPartition::validate() const {
  if (sizes.empty()) {
    throw std::invalid_argument("LatentPartition: at least one group");
  }
  for (int s : sizes) {
    if (s < 1) throw std::invalid_argument("LatentPartition: empty slice");
  }
}

DiagGaussian GroupedPosterior::group(int row, int g) const {
  const int off = partition.offset(g);
  const int w = partition.width(g);
  return DiagGaussian{mean.row(row).segment(off, w).transpose(),
                      log_var.row(row).segment(off, w).transpose()};
}

void GroupedPosterior::validate() const {
  partition.validate();
  if (mean.rows() != log_var.rows() || mean.cols() != log_var.cols() ||
      mean.cols() != partition.latent_dim()) {
    throw std::invalid_argument("GroupedPosterior: shape mismatch");
  }
}

long long ModelParams::num_params() const {
  long long n = 0;
  for (const auto& w : enc_w) n += w.size();
  for (const auto& b : enc_b) n += b.size();
  for (const auto& w : dec_w) n += w.size();
  for (const auto& b : dec_b) n += b.size();
  return n;
}

void ModelParams::validate() const {
  partition.validate();
  if (obs_dim < 1) throw std::invalid_argument("ModelParams: obs_dim >= 1");
  if (enc_w.empty() || dec_w.empty() || enc_w.size() != enc_b.size() ||
      dec_w.size() != dec_b.size()) {
    throw std::invalid_argument("ModelParams: missing layers");
  }
  for (const auto& b : enc_b) {
    if (b.rows() != 1) throw std::invalid_argument("ModelParams: bias not 1 x D");
  }
  for (const auto& b : dec_b) {
    if (b.rows() != 1) throw std::invalid_argument("ModelParams: bias not 1 x D");
  }
  const int latent = partition.latent_dim();
  long long in = obs_dim;
  for (std::size_t l = 0; l < enc_w.size(); ++l) {
    if (enc_w[l].rows() != in || enc_b[l].cols() != enc_w[l].cols()) {
      throw std::invalid_argument("ModelParams: encoder shape chain broken");
    }
    in = enc_w[l].cols();
  }
  if (in != 2 * latent) {
    throw std::invalid_argument("ModelParams: encoder must output 2*latent");
  }
  in = latent;
  for (std::size_t l = 0; l < dec_w.size(); ++l) {
    if (dec_w[l].rows() != in || dec_b[l].cols() != dec_w[l].cols()) {
      throw std::invalid_argument("ModelParams: decoder shape chain broken");
    }
    in = dec_w[l].cols();
  }
  if (in != obs_dim) {
    throw std::invalid_argument("ModelParams: decoder must output obs_dim");
  }
}

ModelParams init_params(int obs_dim, const std::vector<int>& hidden_sizes,
                        const LatentPartition& partition, Likelihood likelihood,
                        std::uint64_t seed) {
  partition.validate();
  if (obs_dim < 1) throw std::invalid_argument("init_params: obs_dim >= 1");
  for (int h : hidden_sizes) {
    if (h < 1) throw std::invalid_argument("init_params: hidden size >= 1");
  }

  RngStream rng(derive_seed(seed, Stream::kInit, 0));
  auto glorot = [&rng](int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) {
        w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
      }
    }
    return w;
  };

  ModelParams p;
  p.partition = partition;
  p.likelihood = likelihood;
  p.obs_dim = obs_dim;
  const int latent = partition.latent_dim();

  std::vector<int> enc_dims = {obs_dim};
  enc_dims.insert(enc_dims.end(), hidden_sizes.begin(), hidden_sizes.end());
  enc_dims.push_back(2 * latent);
  for (std::size_t l = 0; l + 1 < enc_dims.size(); ++l) {
    p.enc_w.push_back(glorot(enc_dims[l], enc_dims[l + 1]));
    p.enc_b.push_back(Eigen::MatrixXd::Zero(1, enc_dims[l + 1]));
  }

  std::vector<int> dec_dims = {latent};
  dec_dims.insert(dec_dims.end(), hidden_sizes.rbegin(), hidden_sizes.rend());
  dec_dims.push_back(obs_dim);
  for (std::size_t l = 0; l + 1 < dec_dims.size(); ++l) {
    p.dec_w.push_back(glorot(dec_dims[l], dec_dims[l + 1]));
    p.dec_b.push_back(Eigen::MatrixXd::Zero(1, dec_dims[l + 1]));
  }

  p.validate();
  return p;
}

GroupedPosterior encode(const ModelParams& p, const Eigen::MatrixXd& x) {
  if (x.cols() != p.obs_dim) {
    throw std::invalid_argument("encode: observation width mismatch");
  }
  const Eigen::MatrixXd out = forward_mlp(p.enc_w, p.enc_b, x);
  const int latent = p.latent_dim();
  GroupedPosterior q;
  q.partition = p.partition;
  q.mean = out.leftCols(latent);
  q.log_var = out.rightCols(latent).cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
  return q;
}

Eigen::MatrixXd decode(const ModelParams& p, const Eigen::MatrixXd& z) {
  if (z.cols() != p.latent_dim()) {
    throw std::invalid_argument("decode: latent width mismatch");
  }
  return forward_mlp(p.dec_w, p.dec_b, z);
}

Eigen::MatrixXd reconstruction_mean(const ModelParams& p,
                                    const Eigen::MatrixXd& z) {
  Eigen::MatrixXd out = decode(p, z);
  if (p.likelihood == Likelihood::kBernoulli) {
    out = out.unaryExpr([](double v) {
      if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
      const double e = std::exp(v);
      return e / (1.0 + e);
    });
  }
  return out;
}

Eigen::VectorXd log_likelihood(const ModelParams& p,
                               const Eigen::MatrixXd& decoded,
                               const Eigen::MatrixXd& x) {
  if (decoded.rows() != x.rows() || decoded.cols() != x.cols() ||
      x.cols() != p.obs_dim) {
    throw std::invalid_argument("log_likelihood: shape mismatch");
  }
  Eigen::VectorXd ll(x.rows());
  if (p.likelihood == Likelihood::kBernoulli) {
    // sum_d [x*l - softplus(l)] = -binary cross-entropy with logits
    const Eigen::MatrixXd sp = decoded.unaryExpr(&softplus_scalar);
    ll = (x.cwiseProduct(decoded) - sp).rowwise().sum();
  } else {
    const double c = -0.5 * std::log(2.0 * std::numbers::pi);
    const Eigen::MatrixXd res = x - decoded;
    ll = (-0.5 * res.array().square().rowwise().sum() + c * x.cols()).matrix();
  }
  return ll;
}

namespace {

constexpr char kMagic[4] = {'G', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_mat(std::ofstream& f, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      f.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  }
}

void read_mat(std::ifstream& f, Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v;
      f.read(reinterpret_cast<char*>(&v), sizeof(double));
      m(i, j) = v;
    }
  }
}

json shapes_of(const std::vector<Eigen::MatrixXd>& ms) {
  json out = json::array();
  for (const auto& m : ms) out.push_back({m.rows(), m.cols()});
  return out;
}

}  // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
  p.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);

  json header;
  header["obs_dim"] = p.obs_dim;
  header["partition"] = p.partition.sizes;
  header["likelihood"] =
      p.likelihood == Likelihood::kBernoulli ? "bernoulli" : "gaussian";
  header["enc_w"] = shapes_of(p.enc_w);
  header["dec_w"] = shapes_of(p.dec_w);
  const std::string htext = header.dump();

  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  const std::uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(htext.data(), static_cast<std::streamsize>(hlen));

  for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
    write_mat(f, p.enc_w[l]);
    write_mat(f, p.enc_b[l]);
  }
  for (std::size_t l = 0; l < p.dec_w.size(); ++l) {
    write_mat(f, p.dec_w[l]);
    write_mat(f, p.dec_b[l]);
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);

  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  std::uint32_t version;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version");
  }
  std::uint64_t hlen;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  const json header = json::parse(htext);

  ModelParams p;
  p.obs_dim = header.at("obs_dim").get<int>();
  p.partition.sizes = header.at("partition").get<std::vector<int>>();
  p.likelihood = header.at("likelihood").get<std::string>() == "bernoulli"
                     ? Likelihood::kBernoulli
                     : Likelihood::kGaussian;
  for (const auto& s : header.at("enc_w")) {
    p.enc_w.emplace_back(s[0].get<Eigen::Index>(), s[1].get<Eigen::Index>());
    p.enc_b.emplace_back(1, p.enc_w.back().cols());
  }
  for (const auto& s : header.at("dec_w")) {
    p.dec_w.emplace_back(s[0].get<Eigen::Index>(), s[1].get<Eigen::Index>());
    p.dec_b.emplace_back(1, p.dec_w.back().cols());
  }
  for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
    read_mat(f, p.enc_w[l]);
    read_mat(f, p.enc_b[l]);
  }
  for (std::size_t l = 0; l < p.dec_w.size(); ++l) {
    read_mat(f, p.dec_w[l]);
    read_mat(f, p.dec_b[l]);
  }
  if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
  p.validate();
  return p;
}

std::vector<Eigen::MatrixXd*> param_list(ModelParams& p) {
  std::vector<Eigen::MatrixXd*> out;
  for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
    out.push_back(&p.enc_w[l]);
    out.push_back(&p.enc_b[l]);
  }
  for (std::size_t l = 0; l < p.dec_w.size(); ++l) {
    out.push_back(&p.dec_w[l]);
    out.push_back(&p.dec_b[l]);
  }
  return out;
}

std::vector<const Eigen::MatrixXd*> param_list(const ModelParams& p) {
  std::vector<const Eigen::MatrixXd*> out;
  for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
    out.push_back(&p.enc_w[l]);
    out.push_back(&p.enc_b[l]);
  }
  for (std::size_t l = 0; l < p.dec_w.size(); ++l) {
    out.push_back(&p.dec_w[l]);
    out.push_back(&p.dec_b[l]);
  }
  return out;
}

}  // namespace groupvae
