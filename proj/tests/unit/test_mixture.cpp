#include "daywatch/mixture.hpp"

#include <cmath>
#include <random>
#include <set>

#include "daywatch/hash.hpp"
#include "doctest.h"
#include "temp_dir.hpp"

using namespace daywatch;
using namespace daywatch::mixture;

namespace {

Eigen::MatrixXd sample_blobs(int per_cluster, const std::vector<Eigen::Vector2d>& centers,
                             double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Eigen::MatrixXd X(per_cluster * static_cast<int>(centers.size()), 2);
  int row = 0;
  for (const auto& c : centers) {
    for (int i = 0; i < per_cluster; ++i, ++row) {
      X(row, 0) = c.x() + noise(rng);
      X(row, 1) = c.y() + noise(rng);
    }
  }
  return X;
}

// Straight-line reimplementation of weighted Gaussian EM used as an oracle:
// plain loops, direct inverse and determinant instead of factorizations.
struct NaiveParams {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
};

NaiveParams naive_m_step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& resp,
                         double reg_covar) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  const int k = static_cast<int>(resp.cols());
  const double eps = 10.0 * std::numeric_limits<double>::epsilon();
  NaiveParams p;
  p.weights.resize(k);
  p.means.assign(k, Eigen::VectorXd::Zero(d));
  p.covs.assign(k, Eigen::MatrixXd::Zero(d, d));
  for (int j = 0; j < k; ++j) {
    double nk = 0.0;
    for (int i = 0; i < n; ++i) nk += resp(i, j);
    p.weights[j] = nk / n;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) sum += resp(i, j) * X.row(i).transpose();
    p.means[j] = sum / (nk + eps);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd c = X.row(i).transpose() - p.means[j];
      cov += resp(i, j) * (c * c.transpose());
    }
    cov /= (nk + eps);
    for (int a = 0; a < d; ++a) cov(a, a) += reg_covar;
    p.covs[j] = 0.5 * (cov + cov.transpose());
  }
  return p;
}

double naive_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& cov) {
  const double d = static_cast<double>(x.size());
  Eigen::VectorXd diff = x - mu;
  double quad = diff.transpose() * cov.inverse() * diff;
  return -0.5 * (d * std::log(2.0 * M_PI) + std::log(cov.determinant()) + quad);
}

double naive_e_step(const Eigen::MatrixXd& X, const NaiveParams& p, Eigen::MatrixXd& resp) {
  const int n = static_cast<int>(X.rows());
  const int k = static_cast<int>(p.weights.size());
  resp.resize(n, k);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> terms(k, -std::numeric_limits<double>::infinity());
    for (int j = 0; j < k; ++j) {
      if (p.weights[j] > 0.0) {
        terms[j] = std::log(p.weights[j]) +
                   naive_log_density(X.row(i).transpose(), p.means[j], p.covs[j]);
      }
    }
    double m = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    double lse = m + std::log(s);
    total += lse;
    for (int j = 0; j < k; ++j) {
      resp(i, j) = std::isinf(terms[j]) ? 0.0 : std::exp(terms[j] - lse);
    }
  }
  return total;
}

// Mirrors the library's loop shape (init M-step, then E/M with the objective
// recorded per E-step) while computing everything the naive way.
std::pair<NaiveParams, std::vector<double>> naive_fit(const Eigen::MatrixXd& X,
                                                      const FitConfig& cfg) {
  std::mt19937_64 rng(splitmix64(mix_seed(cfg.seed, 0)));
  std::vector<int> seeds = kmeans_plus_plus(X, cfg.k, rng);
  Eigen::MatrixXd centers(cfg.k, X.cols());
  for (int j = 0; j < cfg.k; ++j) centers.row(j) = X.row(seeds[j]);
  std::vector<int> assign = nearest_center(X, centers);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(X.rows(), cfg.k);
  for (int i = 0; i < static_cast<int>(assign.size()); ++i) resp(i, assign[i]) = 1.0;

  NaiveParams params = naive_m_step(X, resp, cfg.reg_covar);
  std::vector<double> trace;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= cfg.max_iter; ++it) {
    double ll = naive_e_step(X, params, resp);
    trace.push_back(ll);
    if (it > 1 && std::abs(ll - prev) <= cfg.tol * static_cast<double>(X.rows())) break;
    prev = ll;
    if (it < cfg.max_iter) params = naive_m_step(X, resp, cfg.reg_covar);
  }
  return {params, trace};
}

}  // namespace

TEST_CASE("gaussian_log_density matches closed forms") {
  // 1D: log N(x | mu, s^2)
  Eigen::VectorXd x(1), mu(1);
  Eigen::MatrixXd cov(1, 1);
  x << 1.7;
  mu << 0.4;
  cov << 2.25;
  double expected = -0.5 * std::log(2.0 * M_PI * 2.25) - 0.5 * (1.3 * 1.3) / 2.25;
  CHECK(gaussian_log_density(x, mu, cov) == doctest::Approx(expected).epsilon(1e-12));

  // 2D diagonal factorizes into independent 1D terms.
  Eigen::VectorXd x2(2), mu2(2);
  Eigen::MatrixXd cov2 = Eigen::MatrixXd::Zero(2, 2);
  x2 << 0.3, -1.1;
  mu2 << -0.2, 0.5;
  cov2(0, 0) = 0.49;
  cov2(1, 1) = 4.0;
  double e0 = -0.5 * std::log(2.0 * M_PI * 0.49) - 0.5 * 0.25 / 0.49;
  double e1 = -0.5 * std::log(2.0 * M_PI * 4.0) - 0.5 * 2.56 / 4.0;
  CHECK(gaussian_log_density(x2, mu2, cov2) == doctest::Approx(e0 + e1).epsilon(1e-12));

  // Correlated 2x2 checked against the direct inverse formula.
  Eigen::MatrixXd corr(2, 2);
  corr << 2.0, 0.8, 0.8, 1.5;
  CHECK(gaussian_log_density(x2, mu2, corr) ==
        doctest::Approx(naive_log_density(x2, mu2, corr)).epsilon(1e-12));
}

TEST_CASE("gaussian_log_density rejects non positive definite covariance") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(gaussian_log_density(x, x, zero), RegularizationError);
  Eigen::MatrixXd indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
  CHECK_THROWS_AS(gaussian_log_density(x, x, indef), RegularizationError);
  try {
    gaussian_log_density(x, x, zero);
  } catch (const RegularizationError& e) {
    CHECK(std::string(e.what()).find("reg_covar") != std::string::npos);
  }
}

TEST_CASE("log_sum_exp agrees with the naive sum and survives extremes") {
  std::vector<double> v{-1.5, 0.2, 3.0};
  double naive = std::log(std::exp(-1.5) + std::exp(0.2) + std::exp(3.0));
  CHECK(log_sum_exp(v) == doctest::Approx(naive).epsilon(1e-12));

  std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));

  std::vector<double> tiny{-1000.0, -1001.0};
  CHECK(std::isfinite(log_sum_exp(tiny)));

  std::vector<double> none{-std::numeric_limits<double>::infinity(),
                           -std::numeric_limits<double>::infinity()};
  CHECK(std::isinf(log_sum_exp(none)));
  CHECK(log_sum_exp(none) < 0);
}

TEST_CASE("mixture likelihood matches naive evaluation and skips zero weights") {
  MixtureModel m;
  m.weights = Eigen::Vector3d(0.5, 0.5, 0.0);
  m.means = {Eigen::Vector2d(0, 0), Eigen::Vector2d(3, 1), Eigen::Vector2d(9, 9)};
  m.covariances = {Eigen::Matrix2d::Identity(), 2.0 * Eigen::Matrix2d::Identity(),
                   Eigen::Matrix2d::Zero()};  // zero-weight component may be singular

  Eigen::VectorXd x = Eigen::Vector2d(1.0, 0.5);
  double expected = std::log(
      0.5 * std::exp(naive_log_density(x, m.means[0], m.covariances[0])) +
      0.5 * std::exp(naive_log_density(x, m.means[1], m.covariances[1])));
  CHECK(mixture_log_likelihood(x, m) == doctest::Approx(expected).epsilon(1e-12));

  MixtureScorer scorer(m);
  CHECK(scorer.log_likelihood(x) == doctest::Approx(mixture_log_likelihood(x, m)).epsilon(1e-14));

  Eigen::MatrixXd X(2, 2);
  X << 1.0, 0.5, -0.3, 2.0;
  double total = mixture_log_likelihood(X.row(0).transpose(), m) +
                 mixture_log_likelihood(X.row(1).transpose(), m);
  CHECK(dataset_log_likelihood(X, m) == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("effective_components counts weights above the floor") {
  MixtureModel m;
  m.weights = Eigen::VectorXd(4);
  m.weights << 0.6, 0.35, 0.041, 0.009;
  m.means.assign(4, Eigen::VectorXd::Zero(1));
  m.covariances.assign(4, Eigen::MatrixXd::Identity(1, 1));
  CHECK(effective_components(m, 0.01) == 3);
  CHECK(effective_components(m, 0.05) == 2);
  CHECK(effective_components(m, 0.5) == 1);
  CHECK_THROWS_AS(effective_components(m, 0.0), std::invalid_argument);
}

TEST_CASE("kmeans++ is deterministic, distinct, and spread across clusters") {
  auto X = sample_blobs(50, {{0, 0}, {10, 0}, {0, 10}}, 0.5, 7);
  std::mt19937_64 a(123), b(123);
  auto s1 = kmeans_plus_plus(X, 3, a);
  auto s2 = kmeans_plus_plus(X, 3, b);
  CHECK(s1 == s2);
  CHECK(std::set<int>(s1.begin(), s1.end()).size() == 3);

  // With 6-sigma separated blobs the seeds land in distinct clusters.
  std::set<int> clusters;
  for (int idx : s1) clusters.insert(idx / 50);
  CHECK(clusters.size() == 3);

  auto assign = nearest_center(X, Eigen::MatrixXd::Zero(1, 2));
  CHECK(assign == std::vector<int>(X.rows(), 0));
}

TEST_CASE("kmeans++ handles duplicate points without repeating rows") {
  Eigen::MatrixXd X(4, 1);
  X << 1.0, 1.0, 1.0, 1.0;
  std::mt19937_64 rng(5);
  auto seeds = kmeans_plus_plus(X, 3, rng);
  CHECK(std::set<int>(seeds.begin(), seeds.end()).size() == 3);
}

TEST_CASE("EM agrees with a from-scratch oracle run from the same start") {
  auto X = sample_blobs(40, {{0, 0}, {6, 0}, {0, 6}}, 1.0, 42);
  FitConfig cfg;
  cfg.k = 3;
  cfg.seed = 42;
  cfg.max_iter = 25;
  cfg.tol = 1e-9;  // force a long trace

  auto [model, report] = fit_gmm_em(X, cfg);
  auto [naive, trace] = naive_fit(X, cfg);

  REQUIRE(report.objective_trace.size() == trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(report.objective_trace[i] ==
          doctest::Approx(trace[i]).epsilon(1e-9));
  }
  for (int j = 0; j < 3; ++j) {
    CHECK(model.weights[j] == doctest::Approx(naive.weights[j]).epsilon(1e-8));
    CHECK((model.means[j] - naive.means[j]).norm() == doctest::Approx(0.0).epsilon(1e-7));
    CHECK((model.covariances[j] - naive.covs[j]).norm() == doctest::Approx(0.0).epsilon(1e-7));
  }
}

TEST_CASE("EM objective trace never decreases") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL, 6ULL, 7ULL, 8ULL}) {
    auto X = sample_blobs(40, {{0, 0}, {4, 1}, {-2, 5}}, 1.2, seed);
    FitConfig cfg;
    cfg.k = 3;
    cfg.seed = seed;
    auto [model, report] = fit_gmm_em(X, cfg);
    for (std::size_t i = 1; i < report.objective_trace.size(); ++i) {
      CHECK(report.objective_trace[i] >= report.objective_trace[i - 1] - 1e-8);
    }
    CHECK(model.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("EM input validation") {
  Eigen::MatrixXd X(2, 2);
  X << 0, 0, 1, 1;
  FitConfig cfg;
  cfg.k = 3;
  CHECK_THROWS_AS(fit_gmm_em(X, cfg), std::invalid_argument);
  cfg.k = 0;
  CHECK_THROWS_AS(fit_gmm_em(X, cfg), std::invalid_argument);
  cfg.k = 1;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(fit_gmm_em(X, cfg), std::invalid_argument);
}

TEST_CASE("degenerate data needs regularization") {
  Eigen::MatrixXd X(10, 2);
  for (int i = 0; i < 10; ++i) X.row(i) << 3.0, -1.0;
  FitConfig cfg;
  cfg.k = 2;
  cfg.reg_covar = 0.0;
  CHECK_THROWS_AS(fit_gmm_em(X, cfg), RegularizationError);
  cfg.reg_covar = 1e-6;
  auto [model, report] = fit_gmm_em(X, cfg);
  CHECK(model.weights.sum() == doctest::Approx(1.0));
  CHECK((model.means[0] - Eigen::Vector2d(3.0, -1.0)).norm() < 1e-9);
}

TEST_CASE("EM with more restarts never ends worse") {
  auto X = sample_blobs(30, {{0, 0}, {5, 5}, {-5, 5}, {5, -5}}, 1.0, 11);
  FitConfig one;
  one.k = 4;
  one.seed = 11;
  FitConfig many = one;
  many.n_init = 4;
  auto [m1, r1] = fit_gmm_em(X, one);
  auto [m2, r2] = fit_gmm_em(X, many);
  CHECK(r2.objective_trace.back() >= r1.objective_trace.back() - 1e-9);
}

TEST_CASE("variational fit keeps its objective nondecreasing") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    auto X = sample_blobs(60, {{0, 0}, {7, 2}}, 1.0, seed ^ 0x9e37);
    FitConfig cfg;
    cfg.k = 10;
    cfg.seed = seed;
    cfg.tol = 1e-9;
    cfg.max_iter = 60;
    auto [model, report] = fit_bgmm(X, cfg);
    REQUIRE(report.objective_trace.size() > 3);
    for (std::size_t i = 1; i < report.objective_trace.size(); ++i) {
      CHECK(report.objective_trace[i] >= report.objective_trace[i - 1] - 1e-8);
    }
    CHECK(model.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(model.weights.minCoeff() >= 0.0);
  }
}

TEST_CASE("variational fit prunes unused capacity on separated clusters") {
  // Recovery needs the fit run to an actual optimum: the default per-sample
  // tolerance stops inside the slow drain of duplicate sticks, so this uses a
  // tight tolerance plus restarts with best-objective selection.
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto X = sample_blobs(200, {{0, 0}, {6, 0}, {0, 6}}, 1.0, 1000 + seed);
    FitConfig cfg;
    cfg.k = 10;
    cfg.seed = seed;
    cfg.tol = 1e-6;
    cfg.max_iter = 500;
    cfg.n_init = 4;
    auto [model, report] = fit_bgmm(X, cfg);
    CHECK(model.components() == 10);
    if (report.effective_k == 3) ++hits;
  }
  CHECK(hits >= 9);
}

TEST_CASE("identical points collapse to one effective component") {
  Eigen::MatrixXd X(30, 2);
  for (int i = 0; i < 30; ++i) X.row(i) << 2.5, -7.0;
  FitConfig cfg;
  cfg.k = 10;
  cfg.reg_covar = 1e-6;
  auto [model, report] = fit_bgmm(X, cfg);
  CHECK(report.effective_k == 1);
  CHECK((model.means[0] - Eigen::Vector2d(2.5, -7.0)).norm() < 1e-6);
}

TEST_CASE("variational fit lowers truncation for short histories") {
  Eigen::MatrixXd X(6, 2);
  X << 0, 0, 0.1, 0, 5, 5, 5.1, 5, -4, 2, -4.1, 2;
  FitConfig cfg;
  cfg.k = 10;
  auto [model, report] = fit_bgmm(X, cfg);
  CHECK(model.components() == 3);

  Eigen::MatrixXd two(2, 1);
  two << 0.0, 1.0;
  cfg.k = 10;
  auto [m2, r2] = fit_bgmm(two, cfg);
  CHECK(m2.components() == 1);

  Eigen::MatrixXd one(1, 1);
  one << 0.0;
  CHECK_THROWS_AS(fit_bgmm(one, cfg), std::invalid_argument);
}

TEST_CASE("variational covariances stay positive definite") {
  auto X = sample_blobs(50, {{0, 0}, {8, 0}}, 1.5, 77);
  FitConfig cfg;
  cfg.k = 6;
  cfg.seed = 77;
  auto [model, report] = fit_bgmm(X, cfg);
  for (const auto& cov : model.covariances) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    CHECK(llt.info() == Eigen::Success);
  }
  // Scoring through the shared path works on the variational output.
  CHECK(std::isfinite(dataset_log_likelihood(X, model)));
}

TEST_CASE("model json round trip preserves every coefficient") {
  TempDir tmp;
  auto X = sample_blobs(40, {{0, 0}, {5, 3}}, 1.0, 9);
  FitConfig cfg;
  cfg.k = 4;
  cfg.seed = 9;
  auto [model, report] = fit_bgmm(X, cfg);

  std::string path = tmp.file("model.json");
  save_model_json(path, "U-042", model, cfg, report);
  SavedModel saved = load_model_json(path);

  CHECK(saved.user_id == "U-042");
  CHECK(saved.config.k == cfg.k);
  CHECK(saved.config.seed == cfg.seed);
  CHECK(saved.report.iterations == report.iterations);
  CHECK(saved.report.converged == report.converged);
  CHECK(saved.report.effective_k == report.effective_k);
  REQUIRE(saved.report.objective_trace.size() == report.objective_trace.size());
  for (std::size_t i = 0; i < report.objective_trace.size(); ++i) {
    CHECK(saved.report.objective_trace[i] == report.objective_trace[i]);
  }
  REQUIRE(saved.model.components() == model.components());
  for (int j = 0; j < model.components(); ++j) {
    CHECK(saved.model.weights[j] == model.weights[j]);
    CHECK(saved.model.means[j] == model.means[j]);
    CHECK(saved.model.covariances[j] == model.covariances[j]);
  }
}

TEST_CASE("model validation rejects broken shapes") {
  MixtureModel m;
  m.weights = Eigen::Vector2d(0.7, 0.4);  // sums to 1.1
  m.means = {Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)};
  m.covariances = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m.weights = Eigen::Vector2d(0.5, 0.5);
  CHECK_NOTHROW(m.validate());
  m.means.pop_back();
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}
