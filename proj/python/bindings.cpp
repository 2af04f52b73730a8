// Python module exposing the core operations: mixture fitting and scoring,
// rate metrics and ROC, skip-gram training with day summaries, corpus
// synthesis, ratio normalization and full pipeline runs.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "daywatch/detection.hpp"
#include "daywatch/embedding.hpp"
#include "daywatch/evaluation.hpp"
#include "daywatch/ingest.hpp"
#include "daywatch/mixture.hpp"
#include "daywatch/pipeline.hpp"
#include "daywatch/synthgen.hpp"
#include "daywatch/tokens.hpp"

namespace py = pybind11;
using namespace daywatch;

namespace {

py::object opt(std::optional<double> value) {
  if (!value) return py::none();
  return py::float_(*value);
}

py::dict fit_result(const mixture::MixtureModel& model, const mixture::FitReport& report) {
  py::dict d;
  d["weights"] = model.weights;
  py::list means;
  py::list covariances;
  for (int c = 0; c < model.components(); ++c) {
    means.append(model.means[static_cast<std::size_t>(c)]);
    covariances.append(model.covariances[static_cast<std::size_t>(c)]);
  }
  d["means"] = std::move(means);
  d["covariances"] = std::move(covariances);
  d["iterations"] = report.iterations;
  d["converged"] = report.converged;
  d["objective_trace"] = report.objective_trace;
  d["effective_k"] = report.effective_k;
  return d;
}

mixture::MixtureModel model_from_parts(const Eigen::VectorXd& weights,
                                       const std::vector<Eigen::VectorXd>& means,
                                       const std::vector<Eigen::MatrixXd>& covariances) {
  mixture::MixtureModel model;
  model.weights = weights;
  model.means = means;
  model.covariances = covariances;
  model.validate();
  return model;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "per-user daily-activity anomaly detection core";

  m.def(
      "fit_gmm_em",
      [](const Eigen::MatrixXd& X, int k, double reg_covar, double tol, int max_iter,
         std::uint64_t seed, int n_init) {
        mixture::FitConfig fc;
        fc.k = k;
        fc.reg_covar = reg_covar;
        fc.tol = tol;
        fc.max_iter = max_iter;
        fc.seed = seed;
        fc.n_init = n_init;
        const auto [model, report] = mixture::fit_gmm_em(X, fc);
        return fit_result(model, report);
      },
      py::arg("X"), py::arg("k") = 10, py::arg("reg_covar") = 1e-6, py::arg("tol") = 1e-3,
      py::arg("max_iter") = 100, py::arg("seed") = 0, py::arg("n_init") = 1,
      "Classical EM fit; returns weights, means, covariances and the fit report.");

  m.def(
      "fit_bgmm",
      [](const Eigen::MatrixXd& X, int k_max, double reg_covar, double tol, int max_iter,
         std::uint64_t seed, double weight_concentration, int n_init) {
        mixture::FitConfig fc;
        fc.k = k_max;
        fc.reg_covar = reg_covar;
        fc.tol = tol;
        fc.max_iter = max_iter;
        fc.seed = seed;
        fc.weight_concentration = weight_concentration;
        fc.n_init = n_init;
        const auto [model, report] = mixture::fit_bgmm(X, fc);
        return fit_result(model, report);
      },
      py::arg("X"), py::arg("k_max") = 10, py::arg("reg_covar") = 1e-6, py::arg("tol") = 1e-3,
      py::arg("max_iter") = 100, py::arg("seed") = 0, py::arg("weight_concentration") = 0.1,
      py::arg("n_init") = 1,
      "Variational fit with automatic component pruning; same result shape as fit_gmm_em.");

  m.def(
      "log_likelihoods",
      [](const Eigen::VectorXd& weights, const std::vector<Eigen::VectorXd>& means,
         const std::vector<Eigen::MatrixXd>& covariances, const Eigen::MatrixXd& X) {
        const mixture::MixtureModel model = model_from_parts(weights, means, covariances);
        const mixture::MixtureScorer scorer(model);
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
          out[i] = scorer.log_likelihood(X.row(i).transpose());
        }
        return out;
      },
      py::arg("weights"), py::arg("means"), py::arg("covariances"), py::arg("X"),
      "Per-row mixture log-likelihood under the given parameters.");

  m.def(
      "normalize_ratios",
      [](const std::vector<double>& log_likelihoods) {
        std::vector<detection::ScoredDay> days(log_likelihoods.size());
        for (std::size_t i = 0; i < log_likelihoods.size(); ++i) {
          days[i].log_likelihood = log_likelihoods[i];
        }
        std::string warning;
        days = detection::normalize_scores(std::move(days), &warning);
        std::vector<double> ratios(days.size());
        for (std::size_t i = 0; i < days.size(); ++i) ratios[i] = days[i].ratio;
        py::dict d;
        d["ratios"] = ratios;
        d["warning"] = warning;
        return d;
      },
      py::arg("log_likelihoods"),
      "Mean-normalized ratios for one user's day log-likelihoods.");

  m.def(
      "metrics",
      [](std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
        evaluation::ConfusionMatrix cm;
        cm.tp = tp;
        cm.fp = fp;
        cm.tn = tn;
        cm.fn = fn;
        const evaluation::Metrics result = evaluation::metrics(cm);
        py::dict d;
        d["fpr"] = opt(result.fpr);
        d["recall"] = opt(result.recall);
        d["tnr"] = opt(result.tnr);
        d["accuracy"] = opt(result.accuracy);
        return d;
      },
      py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"),
      "Rate metrics from confusion counts; undefined rates come back as None.");

  m.def(
      "roc",
      [](const std::vector<double>& ratios, const std::vector<bool>& labels) {
        const evaluation::RocCurve curve = evaluation::roc_from_scores(ratios, labels);
        std::vector<double> thresholds, fpr, tpr;
        for (const evaluation::RocPoint& p : curve.points) {
          thresholds.push_back(p.threshold);
          fpr.push_back(p.fpr);
          tpr.push_back(p.tpr);
        }
        py::dict d;
        d["auc"] = curve.auc;
        d["thresholds"] = thresholds;
        d["fpr"] = fpr;
        d["tpr"] = tpr;
        return d;
      },
      py::arg("ratios"), py::arg("labels"),
      "Tie-grouped ROC over the ratio values with trapezoidal AUC.");

  m.def(
      "train_skipgram",
      [](const std::string& user,
         const std::vector<std::pair<std::string, std::vector<std::string>>>& days, int dim,
         int window, int negatives, int epochs, double learning_rate, double learning_rate_min,
         std::uint64_t seed) {
        std::vector<ingest::UserDaySequence> sequences;
        sequences.reserve(days.size());
        for (const auto& [date, tokens] : days) {
          ingest::UserDaySequence seq;
          seq.user_id = user;
          seq.day = Date::parse(date);
          seq.tokens.reserve(tokens.size());
          for (const std::string& t : tokens) seq.tokens.push_back(token_from_string(t));
          sequences.push_back(std::move(seq));
        }
        embedding::EmbeddingConfig ec;
        ec.dim = dim;
        ec.window = window;
        ec.negatives = negatives;
        ec.epochs = epochs;
        ec.learning_rate = learning_rate;
        ec.learning_rate_min = learning_rate_min;
        ec.seed = seed;
        const embedding::EmbeddingTable table = embedding::train_skipgram(sequences, ec);
        const std::vector<embedding::DaySummary> summaries =
            embedding::summarize_all(sequences, table);

        py::dict tokens;
        for (const auto& [token, input] : table.input_vectors) {
          py::dict entry;
          entry["input"] = input;
          entry["output"] = table.output_vectors.at(token);
          tokens[py::str(std::string(to_string(token)))] = std::move(entry);
        }
        py::dict d;
        d["tokens"] = std::move(tokens);
        d["summaries"] = embedding::summary_matrix(summaries);
        return d;
      },
      py::arg("user"), py::arg("days"), py::arg("dim") = 4, py::arg("window") = 5,
      py::arg("negatives") = 5, py::arg("epochs") = 5, py::arg("learning_rate") = 0.025,
      py::arg("learning_rate_min") = 1e-4, py::arg("seed") = 0,
      "Trains one user's token embeddings; days are (date, [token name]) pairs. "
      "Returns the table plus one summary vector per day.");

  m.def(
      "generate_corpus",
      [](const std::string& out_dir, int users, int days, int behaviors, int anomaly_users,
         int anomaly_days, double separation, std::uint64_t seed) {
        synthgen::SynthConfig sc;
        sc.n_users = users;
        sc.n_days = days;
        sc.behaviors_per_user = behaviors;
        sc.anomaly_users = anomaly_users;
        sc.anomaly_days_per_user = anomaly_days;
        sc.separation = separation;
        sc.seed = seed;
        const synthgen::SynthManifest manifest = synthgen::generate_org(sc, out_dir);
        py::dict d;
        d["out_dir"] = manifest.out_dir;
        d["logon_csv"] = manifest.logon_csv;
        d["device_csv"] = manifest.device_csv;
        d["http_csv"] = manifest.http_csv;
        d["email_csv"] = manifest.email_csv;
        d["file_csv"] = manifest.file_csv;
        d["label_sidecar"] = manifest.label_sidecar;
        d["ground_truth_json"] = manifest.ground_truth_json;
        d["manifest_json"] = manifest.manifest_json;
        return d;
      },
      py::arg("out_dir"), py::arg("users") = 50, py::arg("days") = 200, py::arg("behaviors") = 2,
      py::arg("anomaly_users") = 5, py::arg("anomaly_days") = 3, py::arg("separation") = 6.0,
      py::arg("seed") = 0,
      "Writes a labeled synthetic audit corpus and returns its file paths.");

  m.def(
      "run",
      [](const std::map<std::string, std::string>& entries) {
        pipeline::RunConfig config;
        for (const auto& [key, value] : entries) {
          pipeline::apply_config_entry(config, key, value);
        }
        const pipeline::RunManifest manifest = pipeline::run(config);
        py::dict d;
        d["output_dir"] = manifest.output_dir;
        d["manifest_json"] = manifest.manifest_json;
        d["stability_json"] = manifest.stability_json;
        py::list seeds;
        for (const pipeline::SeedArtifacts& sa : manifest.seeds) {
          py::dict s;
          s["seed"] = sa.seed;
          s["seed_dir"] = sa.seed_dir;
          s["corpus_dir"] = sa.corpus_dir;
          s["sequences_csv"] = sa.sequences_csv;
          s["scored_csv"] = sa.scored_csv;
          s["metrics_json"] = sa.metrics_json;
          s["roc_csv"] = sa.roc_csv;
          seeds.append(std::move(s));
        }
        d["seeds"] = std::move(seeds);
        return d;
      },
      py::arg("entries"),
      "Full pipeline run configured by flat config entries "
      "(the same keys the config file and CLI use).");
}
