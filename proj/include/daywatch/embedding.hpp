// Per-user skip-gram embeddings over daily activity strings, and daily
// summary vectors formed by summing the day's token embeddings.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "daywatch/calendar.hpp"
#include "daywatch/ingest.hpp"
#include "daywatch/tokens.hpp"

namespace daywatch::embedding {

struct EmbeddingConfig {
  // Day summaries are linear in the 7 token counts, so they span at most 7
  // directions regardless of dim; several counts are typically constant or
  // collinear (logon/logoff, paired connect/disconnect). dim above that
  // intrinsic rank creates exact zero-variance directions whose fitted
  // covariance eigenvalues collapse to the regularization floor, pushing
  // log-likelihoods positive and breaking ratio normalization.
  int dim = 4;
  int window = 5;     // context radius, never crossing a day boundary
  int negatives = 5;  // negative samples per positive pair
  int epochs = 5;
  double learning_rate = 0.025;      // linearly decayed per center-token step
  double learning_rate_min = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EmbeddingTable {
  std::string user_id;
  // One entry per vocabulary token present in the training corpus.
  std::map<EventToken, Eigen::VectorXd> input_vectors;
  std::map<EventToken, Eigen::VectorXd> output_vectors;

  int dim() const {
    return input_vectors.empty() ? 0 : static_cast<int>(input_vectors.begin()->second.size());
  }
};

struct DaySummary {
  std::string user_id;
  Date day;
  Eigen::VectorXd vector;  // sum of input vectors over the day's tokens
  std::optional<bool> label;
};

// Negative-sampling loss for one (center, context) pair with the given
// negative output vectors:
//   -log sigmoid(u_ctx . v_c) - sum_i log sigmoid(-u_neg_i . v_c)
double sgns_pair_loss(const Eigen::VectorXd& center_in, const Eigen::VectorXd& context_out,
                      std::span<const Eigen::VectorXd> negatives_out);

struct SgnsPairGradients {
  Eigen::VectorXd center;
  Eigen::VectorXd context;
  std::vector<Eigen::VectorXd> negatives;
};

// Analytic gradients of sgns_pair_loss with respect to every argument.
// The trainer steps along exactly these.
SgnsPairGradients sgns_pair_gradients(const Eigen::VectorXd& center_in,
                                      const Eigen::VectorXd& context_out,
                                      std::span<const Eigen::VectorXd> negatives_out);

// Trains one user's table with skip-gram negative sampling. Each day is one
// sentence; the noise distribution is unigram frequency^(3/4) over the
// user's corpus. Deterministic for fixed inputs.
EmbeddingTable train_skipgram(std::span<const ingest::UserDaySequence> sequences,
                              const EmbeddingConfig& config);

// Sums input vectors over the day's tokens; label is copied through.
// A token without a table entry raises VocabularyError naming the token.
DaySummary summarize_day(const ingest::UserDaySequence& sequence, const EmbeddingTable& table);

std::vector<DaySummary> summarize_all(std::span<const ingest::UserDaySequence> sequences,
                                      const EmbeddingTable& table);

// Rows in input order; requires a non-empty list with equal dimensions.
Eigen::MatrixXd summary_matrix(std::span<const DaySummary> summaries);

// Table persistence: {user, dim, seed, tokens:[{token, input:[...], output:[...]}]}.
void save_table_json(const std::string& path, const EmbeddingTable& table,
                     const EmbeddingConfig& config);
EmbeddingTable load_table_json(const std::string& path);

// Summary persistence: CSV "user,day,label,v0..v{D-1}", label 1/0 or empty,
// doubles written with shortest round-trip formatting.
void write_summaries_csv(const std::string& path, std::span<const DaySummary> summaries);
std::vector<DaySummary> read_summaries_csv(const std::string& path);

}  // namespace daywatch::embedding
