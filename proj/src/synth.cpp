#include "ddl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ddl/errors.hpp"
#include "ddl/rng.hpp"

namespace ddl {

std::string pattern_name(SupportPattern p) {
  switch (p) {
    case SupportPattern::Diverse: return "diverse";
    case SupportPattern::Dense: return "dense";
    case SupportPattern::Custom: return "custom";
  }
  return "?";
}

SupportPattern pattern_from_name(const std::string& name) {
  if (name == "diverse") return SupportPattern::Diverse;
  if (name == "dense") return SupportPattern::Dense;
  if (name == "custom") return SupportPattern::Custom;
  throw std::invalid_argument("unknown support pattern \"" + name + "\"");
}

SupportMatrix load_support(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open support file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return SupportMatrix::from_text(ss.str());
}

SupportMatrix make_support(std::size_t d_x, std::size_t d_z, SupportPattern pattern, std::uint64_t seed,
                           const SupportOptions& opts) {
  if (d_z < 1 || d_x < d_z) throw std::invalid_argument("make_support: requires d_x >= d_z >= 1");
  if (d_x > kMaxDim) throw std::invalid_argument("make_support: d_x must be <= 64");
  switch (pattern) {
    case SupportPattern::Dense: return SupportMatrix::dense(d_x, d_z);
    case SupportPattern::Custom: {
      auto s = load_support(opts.custom_path);
      if (s.d_x() != d_x || s.d_z() != d_z) {
        throw FormatError("custom support " + opts.custom_path + " is " + std::to_string(s.d_x()) + "x" +
                          std::to_string(s.d_z()) + ", expected " + std::to_string(d_x) + "x" + std::to_string(d_z));
      }
      return s;
    }
    case SupportPattern::Diverse: break;
  }
  if (!(opts.density > 0.0 && opts.density <= 1.0)) throw std::invalid_argument("make_support: density must be in (0, 1]");
  std::mt19937_64 rng(derive_seed(seed, "support"));
  std::bernoulli_distribution coin(opts.density);
  for (std::size_t attempt = 0; attempt < opts.max_resamples; ++attempt) {
    std::vector<IndexSet> rows(d_x);
    for (auto& r : rows) {
      for (std::size_t j = 0; j < d_z; ++j) {
        if (coin(rng)) r.insert(j);
      }
    }
    auto s = SupportMatrix::relaxed(d_x, d_z, rows);
    if (!s.covers_all()) continue;
    const bool trivial =
        d_z > 1 && std::all_of(rows.begin(), rows.end(), [](const IndexSet& r) { return r.size() == 1; });
    if (opts.reject_trivial && trivial) continue;
    if (element_identifiability_predicted(s)) return SupportMatrix(d_x, d_z, std::move(rows));
  }
  throw GenerationError("make_support: no sufficiently diverse support found after " +
                        std::to_string(opts.max_resamples) + " draws; try another seed or density");
}

Eigen::MatrixXd Prior::sample(std::size_t n, std::size_t d_z, std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd eps(n, d_z);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d_z; ++c) eps(r, c) = normal(rng);
  if (kind == PriorKind::StandardNormal) return eps;
  if (covariance.rows() != static_cast<Eigen::Index>(d_z) || covariance.cols() != static_cast<Eigen::Index>(d_z)) {
    throw std::invalid_argument("Prior: covariance must be d_z x d_z");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("Prior: covariance is not positive definite");
  return eps * llt.matrixL().transpose();
}

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& z, const IndexSet& cols) {
  const auto idx = cols.members();
  Eigen::MatrixXd out(z.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = z.col(static_cast<Eigen::Index>(idx[c]));
  return out;
}

double smallest_singular(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s.size() == 0 ? 0.0 : s(s.size() - 1);
}

}  // namespace

Eigen::MatrixXd GroundTruthModel::eval_batch(const Eigen::MatrixXd& z) const {
  if (z.cols() != static_cast<Eigen::Index>(d_z())) throw std::invalid_argument("GroundTruthModel: latent dimension mismatch");
  Eigen::MatrixXd x(z.rows(), static_cast<Eigen::Index>(d_x()));
  for (std::size_t i = 0; i < d_x(); ++i) {
    const Eigen::MatrixXd in = select_columns(z, support.row(i)).transpose();
    x.col(static_cast<Eigen::Index>(i)) = predict(outputs[i], in).row(0).transpose();
  }
  return x;
}

Eigen::VectorXd GroundTruthModel::eval(const Eigen::VectorXd& z) const {
  return eval_batch(z.transpose()).row(0).transpose();
}

Eigen::MatrixXd GroundTruthModel::jacobian(const Eigen::VectorXd& z) const {
  if (z.size() != static_cast<Eigen::Index>(d_z())) throw std::invalid_argument("GroundTruthModel: latent dimension mismatch");
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d_x()), static_cast<Eigen::Index>(d_z()));
  for (std::size_t i = 0; i < d_x(); ++i) {
    const auto idx = support.row(i).members();
    Eigen::VectorXd in(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) in(static_cast<Eigen::Index>(c)) = z(static_cast<Eigen::Index>(idx[c]));
    const Eigen::MatrixXd row = ddl::jacobian(outputs[i], in);
    for (std::size_t c = 0; c < idx.size(); ++c) {
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx[c])) = row(0, static_cast<Eigen::Index>(c));
    }
  }
  return jac;
}

GroundTruthModel make_ground_truth(const SupportMatrix& support, const MixingArch& arch, std::uint64_t seed,
                                   const Prior& prior, const GroundTruthOptions& opts) {
  if (opts.max_resamples == 0 || opts.probe_samples == 0) throw std::invalid_argument("make_ground_truth: empty budget");
  std::mt19937_64 probe_rng(derive_seed(seed, "probe"));
  const Eigen::MatrixXd probes = prior.sample(opts.probe_samples, support.d_z(), probe_rng);
  std::mt19937_64 rng(derive_seed(seed, "mixing"));

  const bool square = support.d_x() == support.d_z();
  double best = 0.0;
  for (std::size_t attempt = 1; attempt <= opts.max_resamples; ++attempt) {
    GroundTruthModel m{support, arch, prior, {}, seed, attempt, 0.0};
    bool constant_output = false;
    for (std::size_t i = 0; i < support.d_x(); ++i) {
      NetParams net = make_mlp(support.row(i).size(), 1, arch.depth, arch.width, arch.slope, rng);
      if (opts.sign_monotone) {
        Eigen::VectorXd sign(net.layers.front().weight.cols());
        for (Eigen::Index c = 0; c < sign.size(); ++c) sign(c) = (rng() & 1U) ? 1.0 : -1.0;
        for (auto& layer : net.layers) layer.weight = layer.weight.cwiseAbs();
        net.layers.front().weight = net.layers.front().weight * sign.asDiagonal();
      }
      const Eigen::MatrixXd in = select_columns(probes, support.row(i)).transpose();
      const Eigen::RowVectorXd out = predict(net, in).row(0);
      const double mean = out.mean();
      const double sd = std::sqrt((out.array() - mean).square().sum() / static_cast<double>(out.size()));
      if (!(sd > 1e-8)) {
        constant_output = true;
        break;
      }
      auto& last = net.layers.back();
      last.weight /= sd;
      last.bias = (last.bias.array() - mean) / sd;
      m.outputs.push_back(std::move(net));
    }
    if (constant_output) continue;

    if (!square) return m;
    double min_sv = std::numeric_limits<double>::infinity();
    bool positive = false, negative = false;
    for (Eigen::Index r = 0; r < probes.rows(); ++r) {
      const Eigen::MatrixXd jac = m.jacobian(probes.row(r).transpose());
      min_sv = std::min(min_sv, smallest_singular(jac));
      const double det = jac.determinant();
      positive = positive || det > 0.0;
      negative = negative || det < 0.0;
    }
    m.probe_min_singular = min_sv;
    const bool oriented = !(positive && negative) || !opts.require_orientation;
    if (oriented) best = std::max(best, min_sv);
    if (oriented && min_sv > opts.min_singular) return m;
  }
  std::ostringstream os;
  os << "make_ground_truth: no injective-looking mixing after " << opts.max_resamples
     << " resamples (best orientation-consistent probe singular value " << best << "); try another seed or architecture";
  throw GenerationError(os.str());
}

Dataset sample_dataset(const GroundTruthModel& model, std::size_t n, double noise_std, std::uint64_t seed,
                       bool noise_relative) {
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw std::invalid_argument("sample_dataset: noise_std must be >= 0");
  Dataset ds;
  ds.noise_std = noise_std;
  ds.noise_relative = noise_relative;
  ds.seed = seed;
  std::mt19937_64 zrng(derive_seed(seed, "latent"));
  ds.z = model.prior.sample(n, model.d_z(), zrng);
  ds.x = model.eval_batch(ds.z);
  if (noise_std > 0.0 && n > 0) {
    Eigen::VectorXd scale = Eigen::VectorXd::Constant(ds.x.cols(), noise_std);
    if (noise_relative) {
      for (Eigen::Index c = 0; c < ds.x.cols(); ++c) {
        const auto col = ds.x.col(c).array();
        const double mean = col.mean();
        scale(c) *= std::sqrt((col - mean).square().sum() / static_cast<double>(n));
      }
    }
    std::mt19937_64 nrng(derive_seed(seed, "noise"));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index r = 0; r < ds.x.rows(); ++r)
      for (Eigen::Index c = 0; c < ds.x.cols(); ++c) ds.x(r, c) += scale(c) * normal(nrng);
  }
  return ds;
}

SupportMatrix support_of_jacobian(const JacobianFn& jac, const Eigen::MatrixXd& samples, double tau) {
  if (samples.rows() == 0) throw std::invalid_argument("support_of_jacobian: no samples");
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("support_of_jacobian: tau must be in [0, 1)");
  Eigen::MatrixXd peak;
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    const Eigen::MatrixXd j = jac(samples.row(r).transpose()).cwiseAbs();
    if (r == 0) {
      peak = j;
    } else {
      if (j.rows() != peak.rows() || j.cols() != peak.cols()) throw std::invalid_argument("support_of_jacobian: shape changed");
      peak = peak.cwiseMax(j);
    }
  }
  if (!peak.allFinite()) throw NumericError("support_of_jacobian: non-finite Jacobian entry");
  const double global = peak.maxCoeff();
  if (!(global > 0.0)) throw NumericError("support_of_jacobian: degenerate map (Jacobian is zero on every sample)");
  const double cut = tau * global;
  std::vector<IndexSet> rows(static_cast<std::size_t>(peak.rows()));
  for (Eigen::Index i = 0; i < peak.rows(); ++i)
    for (Eigen::Index j = 0; j < peak.cols(); ++j)
      if (peak(i, j) > cut) rows[static_cast<std::size_t>(i)].insert(static_cast<std::size_t>(j));
  return SupportMatrix::relaxed(static_cast<std::size_t>(peak.rows()), static_cast<std::size_t>(peak.cols()), std::move(rows));
}

}  // namespace ddl
