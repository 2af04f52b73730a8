// Gaussian mixture machinery: density kernels, EM fitting of classical
// mixtures, and truncated stick-breaking variational inference for Bayesian
// mixtures with automatic component pruning.
//
// Both fitters produce the same MixtureModel shape; scoring is a single code
// path regardless of which fitter learned the parameters.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace daywatch::mixture {

// Covariance could not be factorized; raise reg_covar.
struct RegularizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MixtureModel {
  Eigen::VectorXd weights;                   // K, on the simplex
  std::vector<Eigen::VectorXd> means;        // K vectors of length D
  std::vector<Eigen::MatrixXd> covariances;  // K full DxD matrices

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }

  // Checks the simplex and covariance-symmetry invariants (1e-9 slack).
  void validate() const;
};

struct FitConfig {
  int k = 10;                    // components for EM; truncation level for the variational fit
  double reg_covar = 1e-6;       // added to covariance diagonals
  double tol = 1e-3;             // convergence threshold on per-sample objective change
  int max_iter = 100;
  std::uint64_t seed = 0;
  double weight_concentration = 0.1;  // stick-breaking prior strength gamma
  int n_init = 1;                     // restarts, best final objective kept

  void validate() const;
};

inline constexpr double kDefaultWeightFloor = 0.01;

struct FitReport {
  int iterations = 0;
  std::vector<double> objective_trace;  // log-likelihood for EM, ELBO for the variational fit
  bool converged = false;
  int effective_k = 0;  // components with weight >= kDefaultWeightFloor
};

// log N(x | mean, cov) via Cholesky factorization. Throws RegularizationError
// when cov is not positive definite.
double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& cov);

// log sum_i w_i N(x | mu_i, Sigma_i), evaluated with log-sum-exp.
double mixture_log_likelihood(const Eigen::VectorXd& x, const MixtureModel& model);

// Repeated scoring against one model: factorizes every covariance once.
class MixtureScorer {
 public:
  explicit MixtureScorer(const MixtureModel& model);
  double log_likelihood(const Eigen::VectorXd& x) const;

 private:
  const MixtureModel& model_;
  std::vector<double> log_weights_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> solvers_;
  std::vector<double> log_dets_;
};

// Sum of per-row mixture log-likelihoods; 0 for an empty dataset.
double dataset_log_likelihood(const Eigen::MatrixXd& X, const MixtureModel& model);

// Number of components whose weight is >= weight_floor.
int effective_components(const MixtureModel& model, double weight_floor = kDefaultWeightFloor);

double log_sum_exp(std::span<const double> values);

// Seeded k-means++ seeding: returns k row indices of X. Exposed so test
// oracles can start from the identical initialization.
std::vector<int> kmeans_plus_plus(const Eigen::MatrixXd& X, int k, std::mt19937_64& rng);

// Index of the nearest center (squared Euclidean) for every row of X.
std::vector<int> nearest_center(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centers);

// Classical EM with full covariances. X has one sample per row.
std::pair<MixtureModel, FitReport> fit_gmm_em(const Eigen::MatrixXd& X, const FitConfig& config);

// Variational Bayesian mixture with a truncated stick-breaking Dirichlet
// process prior over the weights and Normal-Wishart priors over component
// parameters. Returns posterior-expected weights/means/covariances for all
// truncation slots; unsupported components end up with weight near 0.
// For short inputs (N < 2k) the truncation level drops to max(1, N/2).
std::pair<MixtureModel, FitReport> fit_bgmm(const Eigen::MatrixXd& X, const FitConfig& config);

// Model persistence, schema:
// {user, k, weights:[...], means:[[...]], covariances:[[[...]]], config, fit_report}
void save_model_json(const std::string& path, const std::string& user_id,
                     const MixtureModel& model, const FitConfig& config,
                     const FitReport& report);

struct SavedModel {
  std::string user_id;
  MixtureModel model;
  FitConfig config;
  FitReport report;
};
SavedModel load_model_json(const std::string& path);

}  // namespace daywatch::mixture
