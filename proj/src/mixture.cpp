#include "daywatch/mixture.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "daywatch/hash.hpp"
#include "json.hpp"

namespace daywatch::mixture {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double digamma(double x) { return boost::math::digamma(x); }

// Cholesky factor of a covariance-like matrix; throws RegularizationError
// when the matrix is not positive definite.
Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& cov, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw RegularizationError(std::string(what) +
                              " is not positive definite; set reg_covar > 0");
  }
  return llt;
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

struct FactoredComponent {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
};

std::vector<FactoredComponent> factor_all(const std::vector<Eigen::MatrixXd>& covs) {
  std::vector<FactoredComponent> out;
  out.reserve(covs.size());
  for (const auto& cov : covs) {
    FactoredComponent fc;
    fc.llt = factorize(cov, "component covariance");
    fc.log_det = log_det_from_llt(fc.llt);
    out.push_back(std::move(fc));
  }
  return out;
}

double log_density_factored(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const FactoredComponent& fc) {
  const auto d = static_cast<double>(x.size());
  Eigen::VectorXd z = fc.llt.matrixL().solve(x - mean);
  return -0.5 * (d * kLog2Pi + fc.log_det + z.squaredNorm());
}

// One-hot responsibilities from a hard assignment.
Eigen::MatrixXd one_hot(const std::vector<int>& assignment, int k) {
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(assignment.size()), k);
  for (std::size_t n = 0; n < assignment.size(); ++n) resp(static_cast<Eigen::Index>(n), assignment[n]) = 1.0;
  return resp;
}

Eigen::MatrixXd initial_responsibilities(const Eigen::MatrixXd& X, int k, std::mt19937_64& rng) {
  std::vector<int> seeds = kmeans_plus_plus(X, k, rng);
  Eigen::MatrixXd centers(k, X.cols());
  for (int j = 0; j < k; ++j) centers.row(j) = X.row(seeds[static_cast<std::size_t>(j)]);
  return one_hot(nearest_center(X, centers), k);
}

}  // namespace

void MixtureModel::validate() const {
  const int k = components();
  if (k == 0) throw std::invalid_argument("mixture model has no components");
  if (static_cast<int>(means.size()) != k || static_cast<int>(covariances.size()) != k) {
    throw std::invalid_argument("mixture model field lengths disagree");
  }
  if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture weights are not on the simplex");
  }
  const int d = dim();
  for (int j = 0; j < k; ++j) {
    if (means[j].size() != d || covariances[j].rows() != d || covariances[j].cols() != d) {
      throw std::invalid_argument("mixture component shapes disagree");
    }
    if ((covariances[j] - covariances[j].transpose()).cwiseAbs().maxCoeff() > 1e-9) {
      throw std::invalid_argument("component covariance is not symmetric");
    }
  }
}

void FitConfig::validate() const {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");
  if (reg_covar < 0.0) throw std::invalid_argument("reg_covar must be >= 0");
  if (!(weight_concentration > 0.0)) {
    throw std::invalid_argument("weight_concentration must be > 0");
  }
  if (n_init < 1) throw std::invalid_argument("n_init must be >= 1");
}

double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& cov) {
  if (x.size() != mean.size() || cov.rows() != x.size() || cov.cols() != x.size()) {
    throw std::invalid_argument("gaussian_log_density dimension mismatch");
  }
  FactoredComponent fc;
  fc.llt = factorize(cov, "covariance");
  fc.log_det = log_det_from_llt(fc.llt);
  return log_density_factored(x, mean, fc);
}

double log_sum_exp(std::span<const double> values) {
  double m = kNegInf;
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf/nan propagates)
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

double mixture_log_likelihood(const Eigen::VectorXd& x, const MixtureModel& model) {
  const int k = model.components();
  std::vector<double> terms(static_cast<std::size_t>(k), kNegInf);
  for (int j = 0; j < k; ++j) {
    if (model.weights[j] <= 0.0) continue;
    FactoredComponent fc;
    fc.llt = factorize(model.covariances[static_cast<std::size_t>(j)], "component covariance");
    fc.log_det = log_det_from_llt(fc.llt);
    terms[static_cast<std::size_t>(j)] =
        std::log(model.weights[j]) +
        log_density_factored(x, model.means[static_cast<std::size_t>(j)], fc);
  }
  return log_sum_exp(terms);
}

MixtureScorer::MixtureScorer(const MixtureModel& model) : model_(model) {
  const int k = model.components();
  log_weights_.resize(k);
  solvers_.reserve(static_cast<std::size_t>(k));
  log_dets_.resize(k);
  for (int j = 0; j < k; ++j) {
    if (model.weights[j] > 0.0) {
      log_weights_[j] = std::log(model.weights[j]);
      Eigen::LLT<Eigen::MatrixXd> llt =
          factorize(model.covariances[static_cast<std::size_t>(j)], "component covariance");
      log_dets_[j] = log_det_from_llt(llt);
      solvers_.push_back(std::move(llt));
    } else {
      log_weights_[j] = kNegInf;
      log_dets_[j] = 0.0;
      solvers_.emplace_back();
    }
  }
}

double MixtureScorer::log_likelihood(const Eigen::VectorXd& x) const {
  const int k = model_.components();
  const double d = static_cast<double>(x.size());
  std::vector<double> terms(static_cast<std::size_t>(k), kNegInf);
  for (int j = 0; j < k; ++j) {
    if (log_weights_[j] == kNegInf) continue;
    Eigen::VectorXd z =
        solvers_[static_cast<std::size_t>(j)].matrixL().solve(x - model_.means[static_cast<std::size_t>(j)]);
    terms[static_cast<std::size_t>(j)] =
        log_weights_[j] - 0.5 * (d * kLog2Pi + log_dets_[j] + z.squaredNorm());
  }
  return log_sum_exp(terms);
}

double dataset_log_likelihood(const Eigen::MatrixXd& X, const MixtureModel& model) {
  if (X.rows() == 0) return 0.0;
  MixtureScorer scorer(model);
  double total = 0.0;
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    total += scorer.log_likelihood(X.row(n).transpose());
  }
  return total;
}

int effective_components(const MixtureModel& model, double weight_floor) {
  if (!(weight_floor > 0.0) || !(weight_floor < 1.0)) {
    throw std::invalid_argument("weight_floor must lie in (0, 1)");
  }
  int count = 0;
  for (int j = 0; j < model.components(); ++j) {
    if (model.weights[j] >= weight_floor) ++count;
  }
  return count;
}

std::vector<int> kmeans_plus_plus(const Eigen::MatrixXd& X, int k, std::mt19937_64& rng) {
  const Eigen::Index n = X.rows();
  if (k < 1 || n < k) throw std::invalid_argument("kmeans++ needs 1 <= k <= |X|");

  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  std::uniform_int_distribution<Eigen::Index> uniform_idx(0, n - 1);
  chosen.push_back(static_cast<int>(uniform_idx(rng)));

  Eigen::VectorXd dist2 =
      (X.rowwise() - X.row(chosen.back())).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  taken[static_cast<std::size_t>(chosen.back())] = 1;

  while (static_cast<int>(chosen.size()) < k) {
    double total = dist2.sum();
    int next = -1;
    if (total > 0.0) {
      double target = unit(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          next = static_cast<int>(i);
          break;
        }
      }
      if (next < 0) next = static_cast<int>(n - 1);
    } else {
      // All remaining points coincide with a chosen center; take the first
      // index not already used so centers stay distinct rows.
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!taken[static_cast<std::size_t>(i)]) {
          next = static_cast<int>(i);
          break;
        }
      }
    }
    chosen.push_back(next);
    taken[static_cast<std::size_t>(next)] = 1;
    dist2 = dist2.cwiseMin((X.rowwise() - X.row(next)).rowwise().squaredNorm());
  }
  return chosen;
}

std::vector<int> nearest_center(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centers) {
  std::vector<int> assignment(static_cast<std::size_t>(X.rows()), 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < centers.rows(); ++j) {
      double d2 = (X.row(i) - centers.row(j)).squaredNorm();
      if (d2 < best) {
        best = d2;
        assignment[static_cast<std::size_t>(i)] = static_cast<int>(j);
      }
    }
  }
  return assignment;
}

// ---------------------------------------------------------------------------
// Classical EM
// ---------------------------------------------------------------------------

namespace {

struct EmParams {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
};

// Re-estimates weights/means/covariances from responsibilities.
EmParams em_m_step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& resp, double reg_covar) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const Eigen::Index k = resp.cols();
  constexpr double eps = 10.0 * std::numeric_limits<double>::epsilon();

  EmParams p;
  Eigen::VectorXd nk = resp.colwise().sum();
  p.weights = nk / static_cast<double>(n);
  p.means.resize(static_cast<std::size_t>(k));
  p.covariances.resize(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    const double denom = nk[j] + eps;
    Eigen::VectorXd mean = (resp.col(j).transpose() * X).transpose() / denom;
    Eigen::MatrixXd centered = X.rowwise() - mean.transpose();
    Eigen::MatrixXd cov =
        (centered.transpose() * resp.col(j).asDiagonal() * centered) / denom;
    cov.diagonal().array() += reg_covar;
    p.means[static_cast<std::size_t>(j)] = std::move(mean);
    p.covariances[static_cast<std::size_t>(j)] = 0.5 * (cov + cov.transpose());
  }
  return p;
}

// Computes responsibilities for the current parameters and returns the
// dataset log-likelihood of those parameters.
double em_e_step(const Eigen::MatrixXd& X, const EmParams& p, Eigen::MatrixXd& resp) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = p.weights.size();
  const double d = static_cast<double>(X.cols());

  std::vector<FactoredComponent> factors = factor_all(p.covariances);
  std::vector<double> log_w(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    log_w[static_cast<std::size_t>(j)] = p.weights[j] > 0.0 ? std::log(p.weights[j]) : kNegInf;
  }

  resp.resize(n, k);
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      row[ju] = log_w[ju] == kNegInf
                    ? kNegInf
                    : log_w[ju] + log_density_factored(X.row(i).transpose(), p.means[ju],
                                                       factors[ju]);
    }
    double lse = log_sum_exp(row);
    total += lse;
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      resp(i, j) = row[ju] == kNegInf ? 0.0 : std::exp(row[ju] - lse);
    }
  }
  return total;
}

struct EmRun {
  EmParams params;
  FitReport report;
};

EmRun run_em_once(const Eigen::MatrixXd& X, const FitConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  const auto n = static_cast<double>(X.rows());

  Eigen::MatrixXd resp = initial_responsibilities(X, config.k, rng);
  EmParams params = em_m_step(X, resp, config.reg_covar);

  FitReport report;
  double prev_ll = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= config.max_iter; ++it) {
    double ll = em_e_step(X, params, resp);
    report.objective_trace.push_back(ll);
    report.iterations = it;
    if (it > 1 && std::abs(ll - prev_ll) <= config.tol * n) {
      report.converged = true;
      break;
    }
    prev_ll = ll;
    if (it < config.max_iter) params = em_m_step(X, resp, config.reg_covar);
  }
  return EmRun{std::move(params), std::move(report)};
}

}  // namespace

std::pair<MixtureModel, FitReport> fit_gmm_em(const Eigen::MatrixXd& X, const FitConfig& config) {
  config.validate();
  if (X.cols() < 1) throw std::invalid_argument("fit_gmm_em needs D >= 1");
  if (X.rows() < config.k) {
    throw std::invalid_argument("fit_gmm_em needs |X| >= K (" + std::to_string(X.rows()) +
                                " < " + std::to_string(config.k) + ")");
  }

  EmRun best;
  bool have_best = false;
  for (int attempt = 0; attempt < config.n_init; ++attempt) {
    EmRun run = run_em_once(X, config, mix_seed(config.seed, static_cast<std::uint64_t>(attempt)));
    if (!have_best || run.report.objective_trace.back() > best.report.objective_trace.back()) {
      best = std::move(run);
      have_best = true;
    }
  }

  MixtureModel model;
  model.weights = std::move(best.params.weights);
  model.means = std::move(best.params.means);
  model.covariances = std::move(best.params.covariances);
  best.report.effective_k = effective_components(model, kDefaultWeightFloor);
  model.validate();
  return {std::move(model), std::move(best.report)};
}

// ---------------------------------------------------------------------------
// Variational Bayesian mixture (truncated stick-breaking Dirichlet process)
// ---------------------------------------------------------------------------

namespace {

// Log normalizer of a Wishart(nu, W) distribution, with log|W| passed in.
double log_wishart_norm(double nu, double log_det_w, int d) {
  double sum_lgamma = 0.0;
  for (int i = 1; i <= d; ++i) sum_lgamma += std::lgamma(0.5 * (nu + 1.0 - i));
  return -0.5 * nu * log_det_w - 0.5 * nu * d * std::numbers::ln2 -
         0.25 * d * (d - 1) * std::log(std::numbers::pi) - sum_lgamma;
}

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

struct BgmmPriors {
  double gamma = 0.1;   // stick Beta(1, gamma)
  double beta0 = 1.0;   // mean precision scale
  double nu0 = 0.0;     // Wishart degrees of freedom, >= D
  Eigen::VectorXd m0;   // prior mean (data mean)
  Eigen::MatrixXd w0_inv;  // prior Wishart scale inverse (data covariance + reg)
  double log_det_w0 = 0.0;
};

struct BgmmPosterior {
  // Stick Beta(a, b) per component.
  Eigen::VectorXd a, b;
  // Normal-Wishart per component.
  Eigen::VectorXd beta, nu;
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::MatrixXd> scale_inv;  // W_k^{-1}
  std::vector<Eigen::LLT<Eigen::MatrixXd>> scale_inv_llt;
  Eigen::VectorXd log_det_scale_inv;       // log|W_k^{-1}|
  // Cached expectations.
  Eigen::VectorXd e_log_det_lambda;  // E[log|Lambda_k|]
  Eigen::VectorXd e_log_stick;       // E[log v_k]
  Eigen::VectorXd e_log_one_minus;   // E[log(1 - v_k)]
  Eigen::VectorXd e_log_pi;          // E[log pi_k]
};

struct BgmmStats {
  Eigen::VectorXd nk;                  // responsibility mass per component
  std::vector<Eigen::VectorXd> xbar;   // responsibility-weighted means
  std::vector<Eigen::MatrixXd> scatter;  // sum_n r_nk (x - xbar)(x - xbar)^T
};

BgmmStats sufficient_stats(const Eigen::MatrixXd& X, const Eigen::MatrixXd& resp) {
  constexpr double eps = 10.0 * std::numeric_limits<double>::epsilon();
  const Eigen::Index k = resp.cols();
  BgmmStats s;
  s.nk = resp.colwise().sum();
  s.xbar.resize(static_cast<std::size_t>(k));
  s.scatter.resize(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    Eigen::VectorXd sum_x = (resp.col(j).transpose() * X).transpose();
    s.xbar[ju] = sum_x / (s.nk[j] + eps);
    Eigen::MatrixXd centered = X.rowwise() - s.xbar[ju].transpose();
    Eigen::MatrixXd sc = centered.transpose() * resp.col(j).asDiagonal() * centered;
    s.scatter[ju] = 0.5 * (sc + sc.transpose());
  }
  return s;
}

void bgmm_m_step(const BgmmPriors& prior, const BgmmStats& s, BgmmPosterior& q) {
  const Eigen::Index k = s.nk.size();
  const int d = static_cast<int>(prior.m0.size());

  q.a.resize(k);
  q.b.resize(k);
  q.beta.resize(k);
  q.nu.resize(k);
  q.m.resize(static_cast<std::size_t>(k));
  q.scale_inv.resize(static_cast<std::size_t>(k));
  q.scale_inv_llt.resize(static_cast<std::size_t>(k));
  q.log_det_scale_inv.resize(k);
  q.e_log_det_lambda.resize(k);
  q.e_log_stick.resize(k);
  q.e_log_one_minus.resize(k);
  q.e_log_pi.resize(k);

  // Mass of all sticks after k (for the stick-breaking Beta posterior).
  double tail = 0.0;
  Eigen::VectorXd tail_mass(k);
  for (Eigen::Index j = k - 1; j >= 0; --j) {
    tail_mass[j] = tail;
    tail += s.nk[j];
  }

  double cum_one_minus = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    q.a[j] = 1.0 + s.nk[j];
    q.b[j] = prior.gamma + tail_mass[j];

    q.beta[j] = prior.beta0 + s.nk[j];
    q.nu[j] = prior.nu0 + s.nk[j];
    q.m[ju] = (prior.beta0 * prior.m0 + s.nk[j] * s.xbar[ju]) / q.beta[j];
    Eigen::VectorXd diff = s.xbar[ju] - prior.m0;
    Eigen::MatrixXd w_inv = prior.w0_inv + s.scatter[ju] +
                            (prior.beta0 * s.nk[j] / q.beta[j]) * (diff * diff.transpose());
    q.scale_inv[ju] = 0.5 * (w_inv + w_inv.transpose());
    q.scale_inv_llt[ju] = factorize(q.scale_inv[ju], "posterior Wishart scale");
    q.log_det_scale_inv[j] = log_det_from_llt(q.scale_inv_llt[ju]);

    double sum_digamma = 0.0;
    for (int i = 1; i <= d; ++i) sum_digamma += digamma(0.5 * (q.nu[j] + 1.0 - i));
    q.e_log_det_lambda[j] = sum_digamma + d * std::numbers::ln2 - q.log_det_scale_inv[j];

    const double dg_total = digamma(q.a[j] + q.b[j]);
    q.e_log_stick[j] = digamma(q.a[j]) - dg_total;
    q.e_log_one_minus[j] = digamma(q.b[j]) - dg_total;
    q.e_log_pi[j] = q.e_log_stick[j] + cum_one_minus;
    cum_one_minus += q.e_log_one_minus[j];
  }
}

// Responsibilities under the current posterior; returns them in `resp`.
void bgmm_e_step(const Eigen::MatrixXd& X, const BgmmPosterior& q, Eigen::MatrixXd& resp) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = q.a.size();
  const double d = static_cast<double>(X.cols());

  resp.resize(n, k);
  std::vector<double> row(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      Eigen::VectorXd z = q.scale_inv_llt[ju].matrixL().solve(X.row(i).transpose() - q.m[ju]);
      const double quad = q.nu[j] * z.squaredNorm();
      row[ju] = q.e_log_pi[j] +
                0.5 * (q.e_log_det_lambda[j] - d * kLog2Pi - d / q.beta[j] - quad);
    }
    const double lse = log_sum_exp(row);
    for (Eigen::Index j = 0; j < k; ++j) {
      resp(i, j) = std::exp(row[static_cast<std::size_t>(j)] - lse);
    }
  }
}

// Full evidence lower bound for the truncated stick-breaking model, evaluated
// at responsibilities `resp` and the current posterior. Every term is kept so
// coordinate updates provably never decrease the value.
double bgmm_elbo(const Eigen::MatrixXd& X, const BgmmPriors& prior, const BgmmPosterior& q,
                 const Eigen::MatrixXd& resp, const BgmmStats& s) {
  const Eigen::Index k = q.a.size();
  const int d = static_cast<int>(X.cols());
  const double dd = static_cast<double>(d);

  double elbo = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const auto& llt = q.scale_inv_llt[ju];

    // E[log p(X | Z, mu, Lambda)]
    Eigen::VectorXd diff_mean = s.xbar[ju] - q.m[ju];
    Eigen::MatrixXd moment = s.scatter[ju] + s.nk[j] * (diff_mean * diff_mean.transpose());
    const double weighted_quad = q.nu[j] * llt.solve(moment).trace();
    elbo += 0.5 * (s.nk[j] * (q.e_log_det_lambda[j] - dd * kLog2Pi - dd / q.beta[j]) -
                   weighted_quad);

    // E[log p(Z | v)]
    elbo += s.nk[j] * q.e_log_pi[j];

    // E[log p(v_k)], v_k ~ Beta(1, gamma)
    elbo += std::log(prior.gamma) + (prior.gamma - 1.0) * q.e_log_one_minus[j];

    // E[log p(mu_k, Lambda_k)] under the Normal-Wishart prior
    Eigen::VectorXd m_diff = q.m[ju] - prior.m0;
    const double m_quad =
        q.nu[j] * llt.matrixL().solve(m_diff).squaredNorm();
    elbo += 0.5 * (dd * std::log(prior.beta0 / (2.0 * std::numbers::pi)) +
                   q.e_log_det_lambda[j] - dd * prior.beta0 / q.beta[j] -
                   prior.beta0 * m_quad);
    elbo += log_wishart_norm(prior.nu0, prior.log_det_w0, d) +
            0.5 * (prior.nu0 - dd - 1.0) * q.e_log_det_lambda[j] -
            0.5 * q.nu[j] * llt.solve(prior.w0_inv).trace();

    // -E[log q(v_k)]: Beta entropy
    elbo += log_beta_fn(q.a[j], q.b[j]) - (q.a[j] - 1.0) * digamma(q.a[j]) -
            (q.b[j] - 1.0) * digamma(q.b[j]) +
            (q.a[j] + q.b[j] - 2.0) * digamma(q.a[j] + q.b[j]);

    // -E[log q(mu_k, Lambda_k)]: Gaussian part plus Wishart entropy
    const double log_det_w = -q.log_det_scale_inv[j];
    const double wishart_entropy = -log_wishart_norm(q.nu[j], log_det_w, d) -
                                   0.5 * (q.nu[j] - dd - 1.0) * q.e_log_det_lambda[j] +
                                   0.5 * q.nu[j] * dd;
    elbo -= 0.5 * q.e_log_det_lambda[j] + 0.5 * dd * std::log(q.beta[j] / (2.0 * std::numbers::pi)) -
            0.5 * dd - wishart_entropy;
  }

  // -E[log q(Z)]: responsibility entropy
  double resp_entropy = 0.0;
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double r = resp(i, j);
      if (r > 0.0) resp_entropy -= r * std::log(r);
    }
  }
  return elbo + resp_entropy;
}

struct BgmmRun {
  BgmmPosterior posterior;
  FitReport report;
};

BgmmRun run_bgmm_once(const Eigen::MatrixXd& X, const BgmmPriors& prior, int k,
                      const FitConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  const auto n = static_cast<double>(X.rows());

  Eigen::MatrixXd resp = initial_responsibilities(X, k, rng);
  BgmmPosterior q;
  BgmmStats stats = sufficient_stats(X, resp);
  bgmm_m_step(prior, stats, q);

  FitReport report;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= config.max_iter; ++it) {
    bgmm_e_step(X, q, resp);
    stats = sufficient_stats(X, resp);
    bgmm_m_step(prior, stats, q);
    const double elbo = bgmm_elbo(X, prior, q, resp, stats);
    report.objective_trace.push_back(elbo);
    report.iterations = it;
    if (it > 1 && std::abs(elbo - prev) <= config.tol * n) {
      report.converged = true;
      break;
    }
    prev = elbo;
  }
  return BgmmRun{std::move(q), std::move(report)};
}

}  // namespace

std::pair<MixtureModel, FitReport> fit_bgmm(const Eigen::MatrixXd& X, const FitConfig& config) {
  config.validate();
  if (X.cols() < 1) throw std::invalid_argument("fit_bgmm needs D >= 1");
  if (X.rows() < 2) throw std::invalid_argument("fit_bgmm needs at least 2 samples");

  // Short histories get a lower truncation level.
  int k = config.k;
  if (X.rows() < 2 * static_cast<Eigen::Index>(k)) {
    k = std::max(1, static_cast<int>(X.rows() / 2));
  }

  const Eigen::Index n = X.rows();
  const int d = static_cast<int>(X.cols());

  BgmmPriors prior;
  prior.gamma = config.weight_concentration;
  prior.beta0 = 1.0;
  prior.nu0 = static_cast<double>(d);
  prior.m0 = X.colwise().mean().transpose();
  Eigen::MatrixXd centered = X.rowwise() - prior.m0.transpose();
  Eigen::MatrixXd data_cov = (centered.transpose() * centered) / static_cast<double>(n);
  data_cov.diagonal().array() += config.reg_covar;
  prior.w0_inv = 0.5 * (data_cov + data_cov.transpose());
  prior.log_det_w0 = -log_det_from_llt(factorize(prior.w0_inv, "prior covariance"));

  BgmmRun best;
  bool have_best = false;
  for (int attempt = 0; attempt < config.n_init; ++attempt) {
    BgmmRun run =
        run_bgmm_once(X, prior, k, config, mix_seed(config.seed, static_cast<std::uint64_t>(attempt)));
    if (!have_best || run.report.objective_trace.back() > best.report.objective_trace.back()) {
      best = std::move(run);
      have_best = true;
    }
  }

  // Posterior-expected mixture: stick means for weights (renormalized),
  // posterior means, and Wishart-expected covariances W_k^{-1}/nu_k.
  const BgmmPosterior& q = best.posterior;
  MixtureModel model;
  model.weights.resize(k);
  double running = 1.0;
  for (int j = 0; j < k; ++j) {
    const double mean_stick = q.a[j] / (q.a[j] + q.b[j]);
    model.weights[j] = mean_stick * running;
    running *= 1.0 - mean_stick;
  }
  model.weights /= model.weights.sum();
  model.means = q.m;
  model.covariances.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    model.covariances[static_cast<std::size_t>(j)] = q.scale_inv[static_cast<std::size_t>(j)] / q.nu[j];
  }
  best.report.effective_k = effective_components(model, kDefaultWeightFloor);
  model.validate();
  return {std::move(model), std::move(best.report)};
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const FitConfig& c) {
  return {{"k", c.k},
          {"reg_covar", c.reg_covar},
          {"tol", c.tol},
          {"max_iter", c.max_iter},
          {"seed", c.seed},
          {"weight_concentration", c.weight_concentration},
          {"n_init", c.n_init}};
}

FitConfig config_from_json(const nlohmann::json& j) {
  FitConfig c;
  c.k = j.at("k").get<int>();
  c.reg_covar = j.at("reg_covar").get<double>();
  c.tol = j.at("tol").get<double>();
  c.max_iter = j.at("max_iter").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.weight_concentration = j.at("weight_concentration").get<double>();
  c.n_init = j.at("n_init").get<int>();
  return c;
}

}  // namespace

void save_model_json(const std::string& path, const std::string& user_id,
                     const MixtureModel& model, const FitConfig& config,
                     const FitReport& report) {
  nlohmann::json j;
  j["user"] = user_id;
  j["k"] = model.components();
  j["weights"] = std::vector<double>(model.weights.begin(), model.weights.end());
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json covs = nlohmann::json::array();
  for (int c = 0; c < model.components(); ++c) {
    const auto cu = static_cast<std::size_t>(c);
    means.push_back(std::vector<double>(model.means[cu].begin(), model.means[cu].end()));
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < model.covariances[cu].rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(model.covariances[cu].cols()));
      for (Eigen::Index cc = 0; cc < model.covariances[cu].cols(); ++cc) {
        row[static_cast<std::size_t>(cc)] = model.covariances[cu](r, cc);
      }
      rows.push_back(row);
    }
    covs.push_back(rows);
  }
  j["means"] = std::move(means);
  j["covariances"] = std::move(covs);
  j["config"] = config_to_json(config);
  j["fit_report"] = {{"iterations", report.iterations},
                     {"objective_trace", report.objective_trace},
                     {"converged", report.converged},
                     {"effective_k", report.effective_k}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

SavedModel load_model_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);

  SavedModel saved;
  saved.user_id = j.at("user").get<std::string>();
  const int k = j.at("k").get<int>();
  auto weights = j.at("weights").get<std::vector<double>>();
  if (static_cast<int>(weights.size()) != k) {
    throw std::runtime_error("model file weight length disagrees with k: " + path);
  }
  saved.model.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), k);
  for (const auto& mj : j.at("means")) {
    auto v = mj.get<std::vector<double>>();
    saved.model.means.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  for (const auto& cj : j.at("covariances")) {
    const auto rows = cj.size();
    Eigen::MatrixXd cov(rows, rows);
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = cj[r].get<std::vector<double>>();
      if (row.size() != rows) throw std::runtime_error("non-square covariance in " + path);
      for (std::size_t c = 0; c < rows; ++c) cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
    saved.model.covariances.push_back(std::move(cov));
  }
  saved.config = config_from_json(j.at("config"));
  const auto& rj = j.at("fit_report");
  saved.report.iterations = rj.at("iterations").get<int>();
  saved.report.objective_trace = rj.at("objective_trace").get<std::vector<double>>();
  saved.report.converged = rj.at("converged").get<bool>();
  saved.report.effective_k = rj.at("effective_k").get<int>();
  saved.model.validate();
  return saved;
}

}  // namespace daywatch::mixture
