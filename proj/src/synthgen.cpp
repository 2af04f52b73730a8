#include "daywatch/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "daywatch/csv.hpp"
#include "daywatch/hash.hpp"
#include "daywatch/tokens.hpp"
#include "json.hpp"

namespace daywatch::synthgen {

namespace {

constexpr CountVector kBaseCounts = {5.0, 3.0, 2.0, 1.0};

// Channel-space archetypes, pairwise at least unit distance apart so regimes
// end up >= separation sigmas from each other.
constexpr std::array<CountVector, 5> kArchetypes = {{
    {1.0, 0.0, 0.0, 0.0},
    {0.0, 1.0, 0.0, 0.0},
    {0.0, 0.0, 1.0, 0.0},
    {0.0, 0.0, 0.0, 1.0},
    {0.5, 0.5, 0.5, 0.5},
}};

// Chronic exfiltration profile: File leads, Email and removable-device
// traffic follow, web browsing stays ordinary.
constexpr CountVector kExfilShift = {0.0, 1.2, 1.5, 0.8};

std::string user_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U%04d", index + 1);
  return buf;
}

// First k of a partial Fisher-Yates over [0, n), returned sorted.
std::vector<int> sample_indices(int n, int k, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

int draw_count(double mean, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(mean, sigma);
  return std::max(0, static_cast<int>(std::lround(noise(rng))));
}

}  // namespace

void SynthConfig::validate() const {
  if (n_users < 1) throw std::invalid_argument("n_users must be at least 1");
  if (n_days < 1) throw std::invalid_argument("n_days must be at least 1");
  if (behaviors_per_user < 1 || behaviors_per_user > 5) {
    throw std::invalid_argument("behaviors_per_user must be in [1, 5]");
  }
  if (anomaly_users < 0 || anomaly_users > n_users) {
    throw std::invalid_argument("anomaly_users must be in [0, n_users]");
  }
  if (anomaly_days_per_user < 0 || anomaly_days_per_user > n_days) {
    throw std::invalid_argument("anomaly_days_per_user must be in [0, n_days]");
  }
  if (!(separation > 0.0)) throw std::invalid_argument("separation must be positive");
}

ingest::LabelSet OrgTruth::labels() const {
  ingest::LabelSet out;
  for (const UserTruth& u : users) {
    for (const DayTruth& d : u.days) {
      if (d.label) out.emplace(u.user_id, d.day);
    }
  }
  return out;
}

int OrgTruth::positive_days() const {
  int n = 0;
  for (const UserTruth& u : users) {
    for (const DayTruth& d : u.days) n += d.label ? 1 : 0;
  }
  return n;
}

OrgTruth draw_org(const SynthConfig& config) {
  config.validate();

  const Date start = Date::from_ymd(2020, 1, 6);  // a Monday
  std::vector<Date> active_days;
  for (int d = 0; d < config.n_days; ++d) {
    const Date day = start.plus_days(d);
    if (day.is_weekday()) active_days.push_back(day);
  }
  if (static_cast<int>(active_days.size()) < config.anomaly_days_per_user) {
    throw std::invalid_argument("only " + std::to_string(active_days.size()) +
                                " weekdays in the span, cannot inject " +
                                std::to_string(config.anomaly_days_per_user) + " days per user");
  }

  std::mt19937_64 org_rng(mix_seed(config.seed, fnv1a64("org")));
  const std::vector<int> bad_users =
      sample_indices(config.n_users, config.anomaly_users, org_rng);

  OrgTruth org;
  org.config = config;
  org.users.reserve(config.n_users);

  for (int ui = 0; ui < config.n_users; ++ui) {
    UserTruth user;
    user.user_id = user_name(ui);
    std::mt19937_64 rng(mix_seed(config.seed, fnv1a64(user.user_id)));

    const std::vector<int> archetypes =
        sample_indices(static_cast<int>(kArchetypes.size()), config.behaviors_per_user, rng);
    for (int a : archetypes) {
      CountVector mean;
      for (int c = 0; c < kChannels; ++c) {
        mean[c] = kBaseCounts[c] + config.separation * kCountSigma * kArchetypes[a][c];
      }
      user.regime_means.push_back(mean);
    }

    std::vector<int> bad_days;
    if (std::binary_search(bad_users.begin(), bad_users.end(), ui)) {
      bad_days = sample_indices(static_cast<int>(active_days.size()),
                                config.anomaly_days_per_user, rng);
    }

    std::uniform_int_distribution<int> regime_pick(0, config.behaviors_per_user - 1);
    for (std::size_t di = 0; di < active_days.size(); ++di) {
      DayTruth day;
      day.day = active_days[di];
      if (std::binary_search(bad_days.begin(), bad_days.end(), static_cast<int>(di))) {
        day.regime = -1;
        day.label = true;
        // Each injected day gets its own exfiltration intensity so the
        // anomalies do not form one tight far cluster a mixture component
        // could model densely; every intensity still keeps the day several
        // sigmas away from all normal regimes.
        const double intensity = std::uniform_real_distribution<double>(0.75, 1.75)(rng);
        for (int c = 0; c < kChannels; ++c) {
          const double mean =
              kBaseCounts[c] + config.separation * kCountSigma * kExfilShift[c] * intensity;
          day.counts[c] = draw_count(mean, 2.0 * kCountSigma, rng);
        }
      } else {
        day.regime = regime_pick(rng);
        const CountVector& mean = user.regime_means[day.regime];
        for (int c = 0; c < kChannels; ++c) {
          day.counts[c] = draw_count(mean[c], kCountSigma, rng);
        }
      }
      user.days.push_back(day);
    }
    org.users.push_back(std::move(user));
  }
  return org;
}

namespace {

struct DomainWriters {
  std::ofstream logon, device, http, email, file;
  std::uint64_t next_id = 1;

  std::string take_id() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08llu", static_cast<unsigned long long>(next_id++));
    return buf;
  }
};

void emit_event(DomainWriters& w, EventToken token, const DateTime& when,
                const std::string& user, const std::string& pc, std::mt19937_64& rng) {
  const std::string id = w.take_id();
  const std::string ts = when.to_string();
  switch (token) {
    case EventToken::Logon:
    case EventToken::Logoff:
      csv::write_row(w.logon, {id, ts, user, pc, std::string(to_string(token))});
      break;
    case EventToken::Connect:
    case EventToken::Disconnect:
      csv::write_row(w.device, {id, ts, user, pc, std::string(to_string(token))});
      break;
    case EventToken::Http: {
      std::uniform_int_distribution<int> site(1, 40);
      csv::write_row(w.http,
                     {id, ts, user, pc,
                      "http://site-" + std::to_string(site(rng)) + ".example.com/index.html"});
      break;
    }
    case EventToken::Email: {
      std::uniform_int_distribution<int> peer(1, 99);
      std::uniform_int_distribution<int> size(200, 40000);
      csv::write_row(w.email, {id, ts, user, pc,
                               "peer" + std::to_string(peer(rng)) + "@org.example",
                               std::to_string(size(rng))});
      break;
    }
    case EventToken::File: {
      std::uniform_int_distribution<int> doc(1, 500);
      csv::write_row(w.file,
                     {id, ts, user, pc, "doc-" + std::to_string(doc(rng)) + ".pdf"});
      break;
    }
  }
}

std::vector<EventToken> body_tokens(const std::array<int, kChannels>& counts) {
  std::vector<EventToken> body;
  body.insert(body.end(), counts[kHttp], EventToken::Http);
  body.insert(body.end(), counts[kEmail], EventToken::Email);
  body.insert(body.end(), counts[kFile], EventToken::File);
  body.insert(body.end(), counts[kDevicePairs], EventToken::Connect);
  body.insert(body.end(), counts[kDevicePairs], EventToken::Disconnect);
  return body;
}

// Injected days keep ordinary web traffic early and pack the File/Email/
// device burst late in the order; normal days are fully shuffled.
std::vector<EventToken> day_tokens(const DayTruth& day, std::mt19937_64& rng) {
  std::vector<EventToken> tokens;
  tokens.push_back(EventToken::Logon);
  if (day.regime >= 0) {
    std::vector<EventToken> body = body_tokens(day.counts);
    std::shuffle(body.begin(), body.end(), rng);
    tokens.insert(tokens.end(), body.begin(), body.end());
  } else {
    std::vector<EventToken> prefix(day.counts[kHttp], EventToken::Http);
    std::shuffle(prefix.begin(), prefix.end(), rng);
    std::array<int, kChannels> burst_counts = day.counts;
    burst_counts[kHttp] = 0;
    std::vector<EventToken> burst = body_tokens(burst_counts);
    std::shuffle(burst.begin(), burst.end(), rng);
    tokens.insert(tokens.end(), prefix.begin(), prefix.end());
    tokens.insert(tokens.end(), burst.begin(), burst.end());
  }
  tokens.push_back(EventToken::Logoff);
  return tokens;
}

}  // namespace

SynthManifest generate_org(const SynthConfig& config, const std::string& out_dir) {
  const OrgTruth org = draw_org(config);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());

  SynthManifest manifest;
  manifest.out_dir = out_dir;
  manifest.logon_csv = (fs::path(out_dir) / "logon.csv").string();
  manifest.device_csv = (fs::path(out_dir) / "device.csv").string();
  manifest.http_csv = (fs::path(out_dir) / "http.csv").string();
  manifest.email_csv = (fs::path(out_dir) / "email.csv").string();
  manifest.file_csv = (fs::path(out_dir) / "file.csv").string();
  manifest.label_sidecar = (fs::path(out_dir) / "labels.csv").string();
  manifest.ground_truth_json = (fs::path(out_dir) / "ground_truth.json").string();
  manifest.manifest_json = (fs::path(out_dir) / "manifest.json").string();

  DomainWriters w;
  auto open = [](std::ofstream& out, const std::string& path, const char* header) {
    out.open(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << header << '\n';
  };
  open(w.logon, manifest.logon_csv, "id,date,user,pc,activity");
  open(w.device, manifest.device_csv, "id,date,user,pc,activity");
  open(w.http, manifest.http_csv, "id,date,user,pc,url");
  open(w.email, manifest.email_csv, "id,date,user,pc,to,size");
  open(w.file, manifest.file_csv, "id,date,user,pc,filename");

  for (int ui = 0; ui < static_cast<int>(org.users.size()); ++ui) {
    const UserTruth& user = org.users[ui];
    std::mt19937_64 rng(mix_seed(config.seed, fnv1a64(user.user_id + "#render")));
    char pc_buf[16];
    std::snprintf(pc_buf, sizeof pc_buf, "PC-%04d", ui + 1);
    const std::string pc = pc_buf;

    for (const DayTruth& day : user.days) {
      const std::vector<EventToken> tokens = day_tokens(day, rng);
      DateTime when(day.day, 8 * 3600);
      std::uniform_int_distribution<int> gap(30, 150);
      std::uniform_int_distribution<int> tie(0, 5);
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (t > 0) when = when.plus_seconds(tie(rng) == 0 ? 0 : gap(rng));
        emit_event(w, tokens[t], when, user.user_id, pc, rng);
      }
    }
  }

  ingest::write_label_sidecar(manifest.label_sidecar, org.labels());
  write_ground_truth(manifest.ground_truth_json, org);

  nlohmann::json j;
  j["seed"] = config.seed;
  j["paths"] = {{"logon", manifest.logon_csv},       {"device", manifest.device_csv},
                {"http", manifest.http_csv},         {"email", manifest.email_csv},
                {"file", manifest.file_csv},         {"labels", manifest.label_sidecar},
                {"ground_truth", manifest.ground_truth_json}};
  std::ofstream out(manifest.manifest_json, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + manifest.manifest_json);
  out << j.dump(2) << '\n';

  return manifest;
}

namespace {

nlohmann::json config_to_json(const SynthConfig& c) {
  return {{"n_users", c.n_users},
          {"n_days", c.n_days},
          {"behaviors_per_user", c.behaviors_per_user},
          {"anomaly_users", c.anomaly_users},
          {"anomaly_days_per_user", c.anomaly_days_per_user},
          {"seed", c.seed},
          {"separation", c.separation}};
}

SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.n_users = j.at("n_users").get<int>();
  c.n_days = j.at("n_days").get<int>();
  c.behaviors_per_user = j.at("behaviors_per_user").get<int>();
  c.anomaly_users = j.at("anomaly_users").get<int>();
  c.anomaly_days_per_user = j.at("anomaly_days_per_user").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.separation = j.at("separation").get<double>();
  return c;
}

}  // namespace

void write_ground_truth(const std::string& path, const OrgTruth& truth) {
  nlohmann::json j;
  j["config"] = config_to_json(truth.config);
  nlohmann::json users = nlohmann::json::array();
  for (const UserTruth& u : truth.users) {
    nlohmann::json ju;
    ju["user"] = u.user_id;
    nlohmann::json regimes = nlohmann::json::array();
    for (const CountVector& m : u.regime_means) {
      regimes.push_back(std::vector<double>(m.begin(), m.end()));
    }
    ju["regime_means"] = std::move(regimes);
    nlohmann::json days = nlohmann::json::array();
    for (const DayTruth& d : u.days) {
      days.push_back({{"day", d.day.to_string()},
                      {"regime", d.regime},
                      {"counts", std::vector<int>(d.counts.begin(), d.counts.end())},
                      {"label", d.label}});
    }
    ju["days"] = std::move(days);
    users.push_back(std::move(ju));
  }
  j["users"] = std::move(users);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

OrgTruth read_ground_truth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);

  OrgTruth truth;
  truth.config = config_from_json(j.at("config"));
  for (const auto& ju : j.at("users")) {
    UserTruth u;
    u.user_id = ju.at("user").get<std::string>();
    for (const auto& jm : ju.at("regime_means")) {
      auto v = jm.get<std::vector<double>>();
      if (v.size() != kChannels) throw std::runtime_error("bad regime mean width in " + path);
      CountVector m;
      std::copy(v.begin(), v.end(), m.begin());
      u.regime_means.push_back(m);
    }
    for (const auto& jd : ju.at("days")) {
      DayTruth d;
      d.day = Date::parse(jd.at("day").get<std::string>());
      d.regime = jd.at("regime").get<int>();
      auto counts = jd.at("counts").get<std::vector<int>>();
      if (counts.size() != kChannels) throw std::runtime_error("bad count width in " + path);
      std::copy(counts.begin(), counts.end(), d.counts.begin());
      d.label = jd.at("label").get<bool>();
      u.days.push_back(d);
    }
    truth.users.push_back(std::move(u));
  }
  return truth;
}

SynthManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  const auto& p = j.at("paths");
  SynthManifest m;
  m.manifest_json = path;
  m.out_dir = std::filesystem::path(path).parent_path().string();
  m.logon_csv = p.at("logon").get<std::string>();
  m.device_csv = p.at("device").get<std::string>();
  m.http_csv = p.at("http").get<std::string>();
  m.email_csv = p.at("email").get<std::string>();
  m.file_csv = p.at("file").get<std::string>();
  m.label_sidecar = p.at("labels").get<std::string>();
  m.ground_truth_json = p.at("ground_truth").get<std::string>();
  return m;
}

std::vector<detection::ScoredDay> oracle_scores(const OrgTruth& truth) {
  std::vector<detection::ScoredDay> out;
  const double sigma2 = kCountSigma * kCountSigma;
  for (const UserTruth& u : truth.users) {
    std::vector<detection::ScoredDay> user_days;
    for (const DayTruth& d : u.days) {
      double best = -std::numeric_limits<double>::infinity();
      std::vector<double> comps;
      for (const CountVector& mean : u.regime_means) {
        double quad = 0.0;
        for (int c = 0; c < kChannels; ++c) {
          const double diff = static_cast<double>(d.counts[c]) - mean[c];
          quad += diff * diff / sigma2;
        }
        const double ll = -0.5 * (quad + kChannels * std::log(2.0 * M_PI * sigma2)) -
                          std::log(static_cast<double>(u.regime_means.size()));
        comps.push_back(ll);
        best = std::max(best, ll);
      }
      double sum = 0.0;
      for (double c : comps) sum += std::exp(c - best);
      detection::ScoredDay day;
      day.user_id = u.user_id;
      day.day = d.day;
      day.log_likelihood = best + std::log(sum);
      day.label = d.label;
      user_days.push_back(day);
    }
    user_days = detection::normalize_scores(std::move(user_days));
    out.insert(out.end(), user_days.begin(), user_days.end());
  }
  return out;
}

}  // namespace daywatch::synthgen
