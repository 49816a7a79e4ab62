#include "ddl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ddl/errors.hpp"

namespace ddl {

std::vector<std::size_t> hungarian_min(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows()) throw std::invalid_argument("hungarian_min: cost matrix must be square");
  if (!cost.allFinite()) throw std::invalid_argument("hungarian_min: non-finite cost");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials and matching are 1-based; index 0 is the virtual root column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= n; ++j) out[match[j] - 1] = j - 1;
  return out;
}

std::string corr_method_name(CorrMethod m) { return m == CorrMethod::PearsonAbs ? "pearson-abs" : "spearman-abs"; }

Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return v(static_cast<Eigen::Index>(a)) < v(static_cast<Eigen::Index>(b));
  });
  Eigen::VectorXd ranks(v.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v(static_cast<Eigen::Index>(idx[j + 1])) == v(static_cast<Eigen::Index>(idx[i]))) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks(static_cast<Eigen::Index>(idx[t])) = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

// Columns centered and scaled to unit norm; constant columns become zero.
// Plain sequential sum so that a column dotted with itself, or with its exact
// negation, gives bit-identical magnitudes regardless of memory alignment.
double plain_dot(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

/// |corr| matrix; sqrt(ss_a * ss_b) keeps identical and reversed columns at exactly 1.
Eigen::MatrixXd abs_correlation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::vector<bool>& const_a,
                                std::vector<bool>& const_b) {
  const Eigen::MatrixXd ca = a.rowwise() - a.colwise().mean();
  const Eigen::MatrixXd cb = b.rowwise() - b.colwise().mean();
  const Eigen::Index n = a.rows();
  auto sums = [n](const Eigen::MatrixXd& c, std::vector<bool>& constant) {
    std::vector<double> ss(static_cast<std::size_t>(c.cols()));
    constant.assign(ss.size(), false);
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      ss[static_cast<std::size_t>(j)] = plain_dot(c.col(j).data(), c.col(j).data(), n);
      const double v = ss[static_cast<std::size_t>(j)];
      constant[static_cast<std::size_t>(j)] = !(v > 0.0 && std::isfinite(v));
    }
    return ss;
  };
  const auto ssa = sums(ca, const_a);
  const auto ssb = sums(cb, const_b);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    if (const_a[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      if (const_b[static_cast<std::size_t>(j)]) continue;
      const double denom = std::sqrt(ssa[static_cast<std::size_t>(i)] * ssb[static_cast<std::size_t>(j)]);
      out(i, j) = std::min(1.0, std::abs(plain_dot(ca.col(i).data(), cb.col(j).data(), n)) / denom);
    }
  }
  return out;
}

Eigen::MatrixXd rank_columns(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.col(c) = average_ranks(m.col(c));
  return out;
}

Eigen::MatrixXd select_cols(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(static_cast<Eigen::Index>(cols[c]));
  return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * a * b.transpose();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

MccResult mcc(const Eigen::MatrixXd& z_true, const Eigen::MatrixXd& z_hat, CorrMethod method) {
  if (z_true.rows() != z_hat.rows()) throw std::invalid_argument("mcc: row counts differ");
  if (z_true.cols() != z_hat.cols()) throw std::invalid_argument("mcc: column counts differ");
  if (z_true.rows() < 2) throw std::invalid_argument("mcc: need at least two rows");
  MccResult res;
  res.method = method;
  const Eigen::MatrixXd a = method == CorrMethod::SpearmanAbs ? rank_columns(z_true) : z_true;
  const Eigen::MatrixXd b = method == CorrMethod::SpearmanAbs ? rank_columns(z_hat) : z_hat;
  std::vector<bool> const_a, const_b;
  res.abs_corr = abs_correlation(a, b, const_a, const_b);
  for (std::size_t c = 0; c < const_a.size(); ++c)
    if (const_a[c]) res.warnings.push_back("mcc: true latent " + std::to_string(c) + " is constant; correlations set to 0");
  for (std::size_t c = 0; c < const_b.size(); ++c)
    if (const_b[c]) res.warnings.push_back("mcc: estimated latent " + std::to_string(c) + " is constant; correlations set to 0");
  res.permutation = hungarian_min(-res.abs_corr);
  double total = 0.0;
  for (std::size_t i = 0; i < res.permutation.size(); ++i) {
    total += res.abs_corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(res.permutation[i]));
  }
  res.score = total / static_cast<double>(res.permutation.size());
  return res;
}

R2Value r2_group(const Eigen::MatrixXd& target, const Eigen::MatrixXd& predictors, const R2Options& opts) {
  if (target.rows() != predictors.rows()) throw std::invalid_argument("r2_group: row counts differ");
  if (target.cols() < 1) throw std::invalid_argument("r2_group: target has no columns");
  if (!(opts.train_fraction > 0.0 && opts.train_fraction < 1.0)) throw std::invalid_argument("r2_group: bad train_fraction");
  R2Value out;
  if (predictors.cols() == 0) return out;

  const auto n = static_cast<std::size_t>(target.rows());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(opts.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train_full = static_cast<std::size_t>(std::llround(opts.train_fraction * static_cast<double>(n)));
  if (n_train_full < 2 || n - n_train_full < 2) throw std::invalid_argument("r2_group: too few rows for a split");
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(n_train_full, opts.max_fit)));
  std::vector<std::size_t> te(idx.begin() + static_cast<std::ptrdiff_t>(n_train_full), idx.end());
  if (te.size() > opts.max_test) te.resize(opts.max_test);

  Eigen::MatrixXd ptr = select_rows(predictors, tr);
  Eigen::MatrixXd pte = select_rows(predictors, te);
  const Eigen::RowVectorXd mu = ptr.colwise().mean();
  Eigen::RowVectorXd sd = ((ptr.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(tr.size())).sqrt();
  for (Eigen::Index c = 0; c < sd.size(); ++c)
    if (!(sd(c) > 0.0)) sd(c) = 1.0;
  ptr = ((ptr.rowwise() - mu).array().rowwise() / sd.array()).matrix();
  pte = ((pte.rowwise() - mu).array().rowwise() / sd.array()).matrix();

  const std::size_t nb = std::min(opts.bandwidth_sample, tr.size());
  const Eigen::MatrixXd sub = ptr.topRows(static_cast<Eigen::Index>(nb));
  const Eigen::MatrixXd dsub = squared_distances(sub, sub);
  std::vector<double> dists;
  dists.reserve(nb * (nb - 1) / 2);
  for (Eigen::Index i = 0; i < dsub.rows(); ++i)
    for (Eigen::Index j = i + 1; j < dsub.cols(); ++j) dists.push_back(std::sqrt(dsub(i, j)));
  double h = 1.0;
  if (!dists.empty()) {
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    if (*mid > 0.0) h = *mid;
  }
  const double gamma = 1.0 / (2.0 * h * h);

  Eigen::MatrixXd k_train = (-gamma * squared_distances(ptr, ptr)).array().exp().matrix();
  k_train.diagonal().array() += opts.ridge;
  const Eigen::LLT<Eigen::MatrixXd> llt(k_train);
  if (llt.info() != Eigen::Success) throw NumericError("r2_group: kernel system is not positive definite");
  const Eigen::MatrixXd k_test = (-gamma * squared_distances(pte, ptr)).array().exp().matrix();

  const Eigen::MatrixXd ytr = select_rows(target, tr);
  const Eigen::MatrixXd yte = select_rows(target, te);
  double sum_raw = 0.0;
  double sum_clip = 0.0;
  for (Eigen::Index c = 0; c < target.cols(); ++c) {
    const double m = ytr.col(c).mean();
    const Eigen::VectorXd ycen = ytr.col(c).array() - m;
    const double ss_tot = (yte.col(c).array() - yte.col(c).mean()).square().sum();
    if (ycen.squaredNorm() == 0.0 || ss_tot == 0.0) {
      out.warnings.push_back("r2_group: target column " + std::to_string(c) + " is constant; scored 0");
      continue;
    }
    const Eigen::VectorXd coef = llt.solve(ycen);
    const Eigen::VectorXd pred = (k_test * coef).array() + m;
    const double r2 = 1.0 - (yte.col(c) - pred).squaredNorm() / ss_tot;
    sum_raw += r2;
    sum_clip += std::max(0.0, r2);
  }
  const double cols = static_cast<double>(target.cols());
  out.raw = sum_raw / cols;
  out.reported = sum_clip / cols;
  return out;
}

R2Suite r2_suite(const Eigen::MatrixXd& z_true, const Eigen::MatrixXd& z_hat, const SupportMatrix& support,
                 ObsSplit split, const std::vector<std::size_t>& perm, const R2Options& opts) {
  const auto d_z = support.d_z();
  if (z_true.cols() != static_cast<Eigen::Index>(d_z) || z_hat.cols() != static_cast<Eigen::Index>(d_z)) {
    throw std::invalid_argument("r2_suite: latent matrices must have d_z columns");
  }
  if (perm.size() != d_z) throw std::invalid_argument("r2_suite: permutation size mismatch");
  {
    std::vector<bool> seen(d_z, false);
    for (auto p : perm) {
      if (p >= d_z || seen[p]) throw std::invalid_argument("r2_suite: not a permutation");
      seen[p] = true;
    }
  }
  if (split.k.empty() || split.v.empty()) throw std::invalid_argument("r2_suite: K and V must be nonempty");

  R2Suite s;
  s.split = split;
  s.ik = index_set(support, split.k);
  s.iv = index_set(support, split.v);

  auto truth_cols = [&](IndexSet set) { return select_cols(z_true, set.members()); };
  auto est_cols = [&](IndexSet set) {
    std::vector<std::size_t> cols;
    for (auto i : set.members()) cols.push_back(perm[i]);
    return select_cols(z_hat, cols);
  };
  auto score = [&](IndexSet target, IndexSet source) -> std::optional<R2Value> {
    if (target.empty() || source.empty()) return std::nullopt;
    return r2_group(truth_cols(target), est_cols(source), opts);
  };
  const IndexSet both = s.ik & s.iv;
  const IndexSet sym = s.ik ^ s.iv;
  s.intersection = score(both, sym);
  s.symdiff = score(sym, both);
  s.comp_a = score(s.ik - s.iv, s.iv - s.ik);
  s.comp_b = score(s.iv - s.ik, s.ik - s.iv);
  s.ref = r2_group(z_true, z_hat, opts);
  return s;
}

StructureMatch structure_match(const SupportMatrix& s_true, const SupportMatrix& s_hat) {
  if (s_true.d_x() != s_hat.d_x() || s_true.d_z() != s_hat.d_z()) {
    throw std::invalid_argument("structure_match: support dimensions differ");
  }
  const auto d_z = static_cast<Eigen::Index>(s_true.d_z());
  Eigen::MatrixXd cost(d_z, d_z);
  for (Eigen::Index a = 0; a < d_z; ++a) {
    const ObsSet ca = s_true.column(static_cast<std::size_t>(a));
    for (Eigen::Index b = 0; b < d_z; ++b) {
      cost(a, b) = static_cast<double>((ca ^ s_hat.column(static_cast<std::size_t>(b))).size());
    }
  }
  StructureMatch m;
  m.permutation = hungarian_min(cost);
  for (Eigen::Index a = 0; a < d_z; ++a) {
    m.shd += static_cast<std::size_t>(cost(a, static_cast<Eigen::Index>(m.permutation[static_cast<std::size_t>(a)])));
  }
  return m;
}

namespace {

std::size_t numerical_rank(const Eigen::MatrixXd& m, double rank_tol) {
  if (m.rows() == 0) return 0;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(0) > 0.0)) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rank_tol * sv(0)) ++r;
  return r;
}

}  // namespace

std::vector<NonlinearityVerdict> check_sufficient_nonlinearity(const JacobianFn& jac, const SupportMatrix& support,
                                                               const Eigen::MatrixXd& samples, double rank_tol) {
  if (samples.rows() == 0) throw std::invalid_argument("check_sufficient_nonlinearity: no samples");
  const std::size_t d_x = support.d_x();
  std::vector<NonlinearityVerdict> out(d_x);
  std::vector<Eigen::MatrixXd> basis(d_x);
  std::vector<std::vector<std::size_t>> cols(d_x);
  std::size_t open = 0;
  for (std::size_t i = 0; i < d_x; ++i) {
    cols[i] = support.row(i).members();
    out[i].row = i;
    out[i].required = cols[i].size();
    basis[i].resize(0, static_cast<Eigen::Index>(cols[i].size()));
    if (out[i].required > 0) ++open;
  }
  for (Eigen::Index s = 0; s < samples.rows() && open > 0; ++s) {
    const Eigen::MatrixXd j = jac(samples.row(s).transpose());
    if (j.rows() != static_cast<Eigen::Index>(d_x) || j.cols() != static_cast<Eigen::Index>(support.d_z())) {
      throw std::invalid_argument("check_sufficient_nonlinearity: Jacobian shape mismatch");
    }
    for (std::size_t i = 0; i < d_x; ++i) {
      auto& v = out[i];
      if (v.achieved == v.required) continue;
      Eigen::RowVectorXd row(static_cast<Eigen::Index>(cols[i].size()));
      for (std::size_t c = 0; c < cols[i].size(); ++c)
        row(static_cast<Eigen::Index>(c)) = j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols[i][c]));
      Eigen::MatrixXd cand(basis[i].rows() + 1, basis[i].cols());
      cand << basis[i], row;
      const std::size_t r = numerical_rank(cand, rank_tol);
      if (r > v.achieved) {
        basis[i] = std::move(cand);
        v.achieved = r;
        if (v.achieved == v.required) --open;
      }
    }
  }
  for (auto& v : out) v.pass = v.achieved == v.required;
  return out;
}

EvaluationReport evaluate_latents(const Eigen::MatrixXd& z_hat, const SupportMatrix& empirical_support,
                                  const Dataset& dataset, const GroundTruthModel& truth,
                                  const std::vector<ObsSplit>& splits, const EvalOptions& opts) {
  // Errors keep their category and gain the stage name.
  auto stage = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const NumericError& e) {
      throw NumericError(std::string("evaluate/") + name + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("evaluate/") + name + ": " + e.what());
    }
  };
  if (z_hat.rows() != dataset.z.rows()) throw std::invalid_argument("evaluate: estimate rows differ from dataset rows");
  if (dataset.z.cols() != static_cast<Eigen::Index>(truth.d_z()) ||
      dataset.x.cols() != static_cast<Eigen::Index>(truth.d_x())) {
    throw std::invalid_argument("evaluate: dataset dimensions do not match the ground-truth model");
  }

  EvaluationReport rep;
  rep.options = opts;
  rep.empirical_support = empirical_support;
  rep.mcc_spearman = stage("mcc", [&] { return mcc(dataset.z, z_hat, CorrMethod::SpearmanAbs); });
  rep.mcc_pearson = stage("mcc", [&] { return mcc(dataset.z, z_hat, CorrMethod::PearsonAbs); });
  rep.structure = stage("structure", [&] { return structure_match(truth.support, empirical_support); });
  for (const auto& sp : splits) {
    rep.r2.push_back(stage("r2", [&] {
      return r2_suite(dataset.z, z_hat, truth.support, sp, rep.mcc_spearman.permutation, opts.r2);
    }));
  }
  rep.diversity = check_sufficient_diversity(truth.support);
  rep.element_identifiability_predicted =
      std::all_of(rep.diversity.begin(), rep.diversity.end(), [](const auto& v) { return v.satisfied; });
  const auto m = std::min<Eigen::Index>(static_cast<Eigen::Index>(opts.nonlinearity_samples), dataset.z.rows());
  if (m > 0) {
    rep.nonlinearity = stage("nonlinearity", [&] {
      return check_sufficient_nonlinearity([&](const Eigen::VectorXd& z) { return truth.jacobian(z); }, truth.support,
                                           dataset.z.topRows(m), opts.rank_tol);
    });
  }
  return rep;
}

EvaluationReport evaluate(const TrainedEstimator& estimator, const Dataset& dataset, const GroundTruthModel& truth,
                          const std::vector<ObsSplit>& splits, const EvalOptions& opts) {
  if (estimator.config.d_z != truth.d_z()) throw std::invalid_argument("evaluate: estimator d_z differs from truth");
  const Eigen::MatrixXd z_hat = encode(estimator, dataset.x);
  return evaluate_latents(z_hat, estimator.empirical_support, dataset, truth, splits, opts);
}

}  // namespace ddl
