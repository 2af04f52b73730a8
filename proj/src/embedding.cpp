#include "daywatch/embedding.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "daywatch/csv.hpp"
#include "daywatch/hash.hpp"
#include "daywatch/numformat.hpp"
#include "json.hpp"

namespace daywatch::embedding {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log sigmoid(x) evaluated without overflow for large |x|.
double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

struct NoiseDistribution {
  std::vector<EventToken> tokens;
  std::vector<double> cumulative;  // unnormalized cumulative unigram^(3/4)

  EventToken sample(std::mt19937_64& rng, std::uniform_real_distribution<double>& unit) const {
    const double target = unit(rng) * cumulative.back();
    for (std::size_t i = 0; i < cumulative.size(); ++i) {
      if (cumulative[i] >= target) return tokens[i];
    }
    return tokens.back();
  }
};

}  // namespace

void EmbeddingConfig::validate() const {
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (negatives < 1) throw std::invalid_argument("negatives must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(learning_rate_min > 0.0) || learning_rate_min > learning_rate) {
    throw std::invalid_argument("learning_rate_min must be in (0, learning_rate]");
  }
}

double sgns_pair_loss(const Eigen::VectorXd& center_in, const Eigen::VectorXd& context_out,
                      std::span<const Eigen::VectorXd> negatives_out) {
  double loss = -log_sigmoid(context_out.dot(center_in));
  for (const Eigen::VectorXd& neg : negatives_out) {
    loss -= log_sigmoid(-neg.dot(center_in));
  }
  return loss;
}

SgnsPairGradients sgns_pair_gradients(const Eigen::VectorXd& center_in,
                                      const Eigen::VectorXd& context_out,
                                      std::span<const Eigen::VectorXd> negatives_out) {
  SgnsPairGradients g;
  const double pos = sigmoid(context_out.dot(center_in)) - 1.0;
  g.center = pos * context_out;
  g.context = pos * center_in;
  g.negatives.reserve(negatives_out.size());
  for (const Eigen::VectorXd& neg : negatives_out) {
    const double s = sigmoid(neg.dot(center_in));
    g.center += s * neg;
    g.negatives.push_back(s * center_in);
  }
  return g;
}

EmbeddingTable train_skipgram(std::span<const ingest::UserDaySequence> sequences,
                              const EmbeddingConfig& config) {
  config.validate();
  if (sequences.empty()) throw std::invalid_argument("empty corpus");
  const std::string& user = sequences.front().user_id;
  std::size_t total_tokens = 0;
  std::map<EventToken, std::size_t> counts;
  for (const auto& seq : sequences) {
    if (seq.user_id != user) {
      throw std::invalid_argument("train_skipgram got sequences for users \"" + user +
                                  "\" and \"" + seq.user_id + "\"");
    }
    for (EventToken t : seq.tokens) ++counts[t];
    total_tokens += seq.tokens.size();
  }
  if (total_tokens == 0) throw std::invalid_argument("empty corpus");

  NoiseDistribution noise;
  double acc = 0.0;
  for (const auto& [token, count] : counts) {
    acc += std::pow(static_cast<double>(count), 0.75);
    noise.tokens.push_back(token);
    noise.cumulative.push_back(acc);
  }

  std::mt19937_64 rng(splitmix64(config.seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  EmbeddingTable table;
  table.user_id = user;
  const double half = 0.5 / config.dim;
  std::uniform_real_distribution<double> init(-half, half);
  for (const auto& [token, count] : counts) {
    Eigen::VectorXd v(config.dim);
    for (int i = 0; i < config.dim; ++i) v[i] = init(rng);
    table.input_vectors.emplace(token, std::move(v));
    table.output_vectors.emplace(token, Eigen::VectorXd::Zero(config.dim));
  }

  // Hot loop works through dense per-token pointers and two scratch vectors;
  // the arithmetic is exactly "apply sgns_pair_gradients", materializing each
  // gradient before the subtraction the way the public API does.
  std::array<Eigen::VectorXd*, kVocabularySize> in_vec{};
  std::array<Eigen::VectorXd*, kVocabularySize> out_vec{};
  for (auto& [token, v] : table.input_vectors) in_vec[static_cast<std::size_t>(token)] = &v;
  for (auto& [token, v] : table.output_vectors) out_vec[static_cast<std::size_t>(token)] = &v;

  const double total_steps =
      static_cast<double>(config.epochs) * static_cast<double>(total_tokens);
  std::size_t step = 0;
  std::vector<Eigen::VectorXd*> neg_out(static_cast<std::size_t>(config.negatives));
  std::vector<double> neg_sig(static_cast<std::size_t>(config.negatives));
  Eigen::VectorXd grad_center(config.dim);
  Eigen::VectorXd grad_scratch(config.dim);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& seq : sequences) {
      const auto len = static_cast<int>(seq.tokens.size());
      for (int t = 0; t < len; ++t, ++step) {
        const double progress = static_cast<double>(step) / total_steps;
        const double alpha =
            std::max(config.learning_rate_min,
                     config.learning_rate - (config.learning_rate - config.learning_rate_min) * progress);
        const EventToken center = seq.tokens[static_cast<std::size_t>(t)];
        Eigen::VectorXd& v_center = *in_vec[static_cast<std::size_t>(center)];

        const int lo = std::max(0, t - config.window);
        const int hi = std::min(len - 1, t + config.window);
        for (int pos = lo; pos <= hi; ++pos) {
          if (pos == t) continue;
          const EventToken context = seq.tokens[static_cast<std::size_t>(pos)];

          std::size_t n_neg = 0;
          for (int i = 0; i < config.negatives; ++i) {
            EventToken drawn = context;
            for (int attempt = 0; attempt < 10 && drawn == context; ++attempt) {
              drawn = noise.sample(rng, unit);
            }
            if (drawn == context) continue;  // single-token vocabulary
            neg_out[n_neg++] = out_vec[static_cast<std::size_t>(drawn)];
          }

          Eigen::VectorXd& u_context = *out_vec[static_cast<std::size_t>(context)];
          const double pos_term = sigmoid(u_context.dot(v_center)) - 1.0;
          grad_center = pos_term * u_context;
          for (std::size_t i = 0; i < n_neg; ++i) {
            neg_sig[i] = sigmoid(neg_out[i]->dot(v_center));
            grad_center += neg_sig[i] * *neg_out[i];
          }

          grad_scratch = pos_term * v_center;
          u_context -= alpha * grad_scratch;
          for (std::size_t i = 0; i < n_neg; ++i) {
            grad_scratch = neg_sig[i] * v_center;
            *neg_out[i] -= alpha * grad_scratch;
          }
          v_center -= alpha * grad_center;
        }
      }
    }
  }

  for (const auto& [token, v] : table.input_vectors) {
    if (!v.allFinite() || !table.output_vectors.at(token).allFinite()) {
      throw std::runtime_error("skip-gram training diverged for user \"" + user + "\"");
    }
  }
  return table;
}

DaySummary summarize_day(const ingest::UserDaySequence& sequence, const EmbeddingTable& table) {
  DaySummary out;
  out.user_id = sequence.user_id;
  out.day = sequence.day;
  out.label = sequence.label;
  // Count-weighted sum in token order: bitwise identical for any
  // permutation of the same day.
  std::map<EventToken, int> counts;
  for (EventToken t : sequence.tokens) ++counts[t];
  out.vector = Eigen::VectorXd::Zero(table.dim());
  for (const auto& [t, count] : counts) {
    auto it = table.input_vectors.find(t);
    if (it == table.input_vectors.end()) {
      throw VocabularyError("token \"" + std::string(to_string(t)) +
                            "\" has no embedding in the table for user \"" + table.user_id + "\"");
    }
    out.vector += static_cast<double>(count) * it->second;
  }
  return out;
}

std::vector<DaySummary> summarize_all(std::span<const ingest::UserDaySequence> sequences,
                                      const EmbeddingTable& table) {
  std::vector<DaySummary> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) out.push_back(summarize_day(seq, table));
  return out;
}

Eigen::MatrixXd summary_matrix(std::span<const DaySummary> summaries) {
  if (summaries.empty()) throw std::invalid_argument("no summaries to stack");
  const Eigen::Index d = summaries.front().vector.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(summaries.size()), d);
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    if (summaries[i].vector.size() != d) {
      throw std::invalid_argument("summary dimensions disagree");
    }
    X.row(static_cast<Eigen::Index>(i)) = summaries[i].vector.transpose();
  }
  return X;
}

void save_table_json(const std::string& path, const EmbeddingTable& table,
                     const EmbeddingConfig& config) {
  nlohmann::json j;
  j["user"] = table.user_id;
  j["dim"] = table.dim();
  j["seed"] = config.seed;
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& [token, input] : table.input_vectors) {
    const Eigen::VectorXd& output = table.output_vectors.at(token);
    tokens.push_back({{"token", std::string(to_string(token))},
                      {"input", std::vector<double>(input.begin(), input.end())},
                      {"output", std::vector<double>(output.begin(), output.end())}});
  }
  j["tokens"] = std::move(tokens);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

EmbeddingTable load_table_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);

  EmbeddingTable table;
  table.user_id = j.at("user").get<std::string>();
  const int dim = j.at("dim").get<int>();
  for (const auto& tj : j.at("tokens")) {
    EventToken token = token_from_string(tj.at("token").get<std::string>());
    auto input = tj.at("input").get<std::vector<double>>();
    auto output = tj.at("output").get<std::vector<double>>();
    if (static_cast<int>(input.size()) != dim || static_cast<int>(output.size()) != dim) {
      throw std::runtime_error("vector length disagrees with dim in " + path);
    }
    table.input_vectors.emplace(
        token, Eigen::Map<Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size())));
    table.output_vectors.emplace(
        token,
        Eigen::Map<Eigen::VectorXd>(output.data(), static_cast<Eigen::Index>(output.size())));
  }
  return table;
}

void write_summaries_csv(const std::string& path, std::span<const DaySummary> summaries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);

  const int d = summaries.empty() ? 0 : static_cast<int>(summaries.front().vector.size());
  std::vector<std::string> row = {"user", "day", "label"};
  for (int i = 0; i < d; ++i) row.push_back("v" + std::to_string(i));
  csv::write_row(out, row);

  for (const auto& s : summaries) {
    row.clear();
    row.push_back(s.user_id);
    row.push_back(s.day.to_string());
    row.push_back(s.label.has_value() ? (*s.label ? "1" : "0") : "");
    for (Eigen::Index i = 0; i < s.vector.size(); ++i) row.push_back(format_double(s.vector[i]));
    csv::write_row(out, row);
  }
}

std::vector<DaySummary> read_summaries_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  csv::Reader reader(in);

  std::vector<std::string> header;
  if (!reader.next(header)) throw ingest::SchemaError("empty summary file: " + path);
  if (header.size() < 4 || header[0] != "user" || header[1] != "day" || header[2] != "label") {
    throw ingest::SchemaError("summary header must be user,day,label,v0..: " + path);
  }
  const std::size_t d = header.size() - 3;
  for (std::size_t i = 0; i < d; ++i) {
    if (header[3 + i] != "v" + std::to_string(i)) {
      throw ingest::SchemaError("summary header must be user,day,label,v0..: " + path);
    }
  }

  std::vector<DaySummary> out;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    const std::size_t line = reader.line();
    if (row.size() != header.size()) {
      throw ingest::RowError("row width disagrees with header (" + path + ":" +
                                 std::to_string(line) + ")",
                             line);
    }
    DaySummary s;
    s.user_id = row[0];
    try {
      s.day = Date::parse(row[1]);
      if (row[2] == "1") {
        s.label = true;
      } else if (row[2] == "0") {
        s.label = false;
      } else if (!row[2].empty()) {
        throw std::invalid_argument("label must be 1, 0 or empty");
      }
      s.vector.resize(static_cast<Eigen::Index>(d));
      for (std::size_t i = 0; i < d; ++i) {
        s.vector[static_cast<Eigen::Index>(i)] = parse_double(row[3 + i]);
      }
    } catch (const std::invalid_argument& e) {
      throw ingest::RowError(std::string(e.what()) + " (" + path + ":" + std::to_string(line) +
                                 ")",
                             line);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace daywatch::embedding
