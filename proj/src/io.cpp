#include "specpost/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "specpost/errors.hpp"

#ifndef SPECPOST_VERSION
#define SPECPOST_VERSION "0.0.0"
#endif

namespace specpost {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string tool_version() { return SPECPOST_VERSION; }

std::string CsvHeader::line() const {
  return fmt::format("# specpost {} config_hash={:016x} seed={}", tool_version(), config_hash, seed);
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError(fmt::format("{}: '{}' is not an integer", key, text));
  return v;
}

std::ofstream open_out(const fs::path& path, const CsvHeader& h) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << h.line() << '\n';
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  cfg.text_ = text;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(fmt::format("line {}: unterminated section header", lineno));
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (section.empty()) throw ConfigError(fmt::format("line {}: empty section name", lineno));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key = value", lineno));
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("line {}: missing key", lineno));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!cfg.values_.emplace(full, value).second) throw ConfigError(fmt::format("duplicate key {}", full));
  }
  return cfg;
}

Config Config::load(const fs::path& path) { return parse(read_text(path)); }

void Config::check_keys(const std::set<std::string>& allowed) const {
  std::vector<std::string> bad;
  for (const auto& [k, v] : values_) {
    if (!allowed.count(k)) bad.push_back(k);
  }
  if (bad.empty()) return;
  std::string list;
  for (const auto& k : bad) list += (list.empty() ? "" : ", ") + k;
  throw ConfigError(fmt::format("invalid config key(s): {}", list));
}

std::string Config::get_string(const std::string& key, const std::optional<std::string>& fallback) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  if (fallback) return *fallback;
  throw ConfigError(fmt::format("missing config key {}", key));
}

double Config::get_double(const std::string& key, const std::optional<double>& fallback) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return parse_double(key, it->second);
  if (fallback) return *fallback;
  throw ConfigError(fmt::format("missing config key {}", key));
}

long long Config::get_int(const std::string& key, const std::optional<long long>& fallback) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return parse_int(key, it->second);
  if (fallback) return *fallback;
  throw ConfigError(fmt::format("missing config key {}", key));
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError(fmt::format("{} is an empty list", key));
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split_list(get_string(key))) out.push_back(static_cast<int>(parse_int(key, item)));
  if (out.empty()) throw ConfigError(fmt::format("{} is an empty list", key));
  return out;
}

void write_spectrum_csv(const fs::path& path, const CsvHeader& h, const ComplexVector& v) {
  auto out = open_out(path, h);
  out << "index,re,im\n";
  for (Index i = 0; i < v.size(); ++i) {
    out << i << ',' << format_double(v[i].real()) << ',' << format_double(v[i].imag()) << '\n';
  }
}

void write_time_csv(const fs::path& path, const CsvHeader& h, const RealVector& v) {
  auto out = open_out(path, h);
  out << "index,value\n";
  for (Index i = 0; i < v.size(); ++i) out << i << ',' << format_double(v[i]) << '\n';
}

void write_schedule_csv(const fs::path& path, const CsvHeader& h, const Schedule& sched) {
  auto out = open_out(path, h);
  out << "s,alpha_bar\n";
  for (int s = 1; s <= sched.steps(); ++s) out << s << ',' << format_double(sched.alpha_bar(s)) << '\n';
}

void write_triple_csv(const fs::path& path, const CsvHeader& h, const TransferTriple& t) {
  auto out = open_out(path, h);
  out << "bin,d1_re,d1_im,d2_re,d2_im,d3_re,d3_im\n";
  for (Index i = 0; i < t.D1.size(); ++i) {
    out << i << ',' << format_double(t.D1[i].real()) << ',' << format_double(t.D1[i].imag()) << ','
        << format_double(t.D2[i].real()) << ',' << format_double(t.D2[i].imag()) << ','
        << format_double(t.D3[i].real()) << ',' << format_double(t.D3[i].imag()) << '\n';
  }
}

void write_losses_csv(const fs::path& path, const CsvHeader& h, const std::vector<LossRecord>& rows) {
  auto out = open_out(path, h);
  out << "sampler,S,K,loss,seed\n";
  for (const auto& r : rows) {
    out << r.sampler << ',' << r.steps << ',' << r.k << ',' << format_double(r.loss) << ',' << r.seed << '\n';
  }
}

void write_solution_csv(const fs::path& path, const CsvHeader& h, const WeightSchedule& w,
                        const std::vector<std::pair<std::string, std::string>>& meta) {
  auto out = open_out(path, h);
  for (const auto& [k, v] : meta) out << "# " << k << '=' << v << '\n';
  if (w.kind == SamplerKind::Dps) {
    out << "s,weight\n";
    for (int s = 1; s <= w.steps(); ++s) out << s << ',' << format_double(w.zeta[s - 1]) << '\n';
  } else {
    out << "s,g,r\n";
    for (int s = 1; s <= w.steps(); ++s) {
      out << s << ',' << format_double(w.g[s - 1]) << ',' << format_double(w.r[s - 1]) << '\n';
    }
  }
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<double> row;
    bool numeric = true;
    for (const auto& item : split_list(t)) {
      char* end = nullptr;
      const double v = std::strtod(item.c_str(), &end);
      if (end == item.c_str() || *end != '\0') {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty()) continue;  // column header
      throw ConfigError(fmt::format("{}: non-numeric row '{}'", path.string(), t));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError(fmt::format("{}: ragged rows", path.string()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(fmt::format("{}: no data rows", path.string()));
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return m;
}

WeightSchedule read_solution_csv(const fs::path& path) {
  const Eigen::MatrixXd m = read_matrix_csv(path);
  for (Index r = 0; r < m.rows(); ++r) {
    if (m(r, 0) != static_cast<double>(r + 1)) throw ConfigError(fmt::format("{}: steps must be 1..S", path.string()));
  }
  if (m.cols() == 2) return WeightSchedule::dps(m.col(1));
  if (m.cols() == 3) return WeightSchedule::pigdm(m.col(1), m.col(2));
  throw ConfigError(fmt::format("{}: expected columns s,weight or s,g,r", path.string()));
}

void write_weight_summary_csv(const fs::path& path, const CsvHeader& h, const std::vector<WeightSchedule>& runs) {
  if (runs.empty()) throw std::invalid_argument("no weight schedules to summarize");
  const Eigen::Index n = runs.front().params().size();
  Eigen::MatrixXd all(n, static_cast<Index>(runs.size()));
  for (std::size_t k = 0; k < runs.size(); ++k) all.col(static_cast<Index>(k)) = runs[k].params();
  const RealVector mean = all.rowwise().mean();
  RealVector sd = RealVector::Zero(n);
  if (runs.size() > 1) {
    sd = ((all.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(runs.size() - 1))
             .sqrt()
             .matrix();
  }
  auto out = open_out(path, h);
  const int S = runs.front().steps();
  if (runs.front().kind == SamplerKind::Dps) {
    out << "s,mean_weight,std_weight\n";
    for (int s = 1; s <= S; ++s) out << s << ',' << format_double(mean[s - 1]) << ',' << format_double(sd[s - 1]) << '\n';
  } else {
    out << "s,mean_g,std_g,mean_r,std_r\n";
    for (int s = 1; s <= S; ++s) {
      out << s << ',' << format_double(mean[s - 1]) << ',' << format_double(sd[s - 1]) << ','
          << format_double(mean[S + s - 1]) << ',' << format_double(sd[S + s - 1]) << '\n';
    }
  }
}

void write_profile_csv(const fs::path& path, const CsvHeader& h, const WeightProfile& p) {
  auto out = open_out(path, h);
  out << "step,mean_zeta,std_zeta\n";
  for (Index k = 0; k < p.mean.size(); ++k) {
    out << k + 1 << ',' << format_double(p.mean[k]) << ',' << format_double(p.std[k]) << '\n';
  }
}

void write_stats_csv(const fs::path& path, const CsvHeader& h, const RunStats& stats) {
  auto out = open_out(path, h);
  out << "bin,emp_mean_re,emp_mean_im,emp_var\n";
  for (Index i = 0; i < stats.emp_mean.size(); ++i) {
    out << i << ',' << format_double(stats.emp_mean[i].real()) << ',' << format_double(stats.emp_mean[i].imag()) << ','
        << format_double(stats.emp_var[i]) << '\n';
  }
}

void write_sweep_csv(const fs::path& path, const CsvHeader& h, const std::vector<SweepRow>& rows) {
  auto out = open_out(path, h);
  out << "method,S,realization,w2\n";
  for (const auto& r : rows) out << r.method << ',' << r.steps << ',' << r.realization << ',' << format_double(r.w2) << '\n';
}

SpectralPrior read_prior_file(const fs::path& path) {
  const Config cfg = Config::load(path);
  cfg.check_keys({"dim", "lambda0", "mu_const", "mu_f_re", "mu_f_im", "signal_length"});
  const long long d = cfg.get_int("dim");
  if (d < 1) throw ConfigError("prior file: dim must be >= 1");
  const std::vector<double> lambda = cfg.get_double_list("lambda0");
  if (static_cast<long long>(lambda.size()) != d) {
    throw ConfigError(fmt::format("prior file: lambda0 has {} entries, dim is {}", lambda.size(), d));
  }
  ComplexVector mu = ComplexVector::Zero(d);
  if (cfg.has("mu_const")) {
    if (cfg.has("mu_f_re") || cfg.has("mu_f_im")) throw ConfigError("prior file: give mu_const or mu_f_re/mu_f_im, not both");
    mu[0] = static_cast<double>(d) * cfg.get_double("mu_const");
  } else if (cfg.has("mu_f_re")) {
    const std::vector<double> re = cfg.get_double_list("mu_f_re");
    const std::vector<double> im = cfg.has("mu_f_im") ? cfg.get_double_list("mu_f_im") : std::vector<double>(re.size());
    if (static_cast<long long>(re.size()) != d || im.size() != re.size()) {
      throw ConfigError("prior file: mu_f_re/mu_f_im must have dim entries");
    }
    for (long long i = 0; i < d; ++i) mu[i] = Complex(re[static_cast<std::size_t>(i)], im[static_cast<std::size_t>(i)]);
  }
  RealVector lam = Eigen::Map<const RealVector>(lambda.data(), d);
  try {
    return SpectralPrior(std::move(mu), std::move(lam), cfg.get_int("signal_length", 0));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("prior file: {}", e.what()));
  }
}

void write_prior_file(const fs::path& path, const CsvHeader& h, const SpectralPrior& prior) {
  auto out = open_out(path, h);
  auto join = [](const auto& v, auto&& f) {
    std::string s;
    for (Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
    return s;
  };
  out << "dim = " << prior.dim() << '\n';
  if (prior.signal_length() != prior.dim()) out << "signal_length = " << prior.signal_length() << '\n';
  out << "lambda0 = " << join(prior.lambda0(), [](double v) { return format_double(v); }) << '\n';
  out << "mu_f_re = " << join(prior.mu_f(), [](Complex v) { return format_double(v.real()); }) << '\n';
  out << "mu_f_im = " << join(prior.mu_f(), [](Complex v) { return format_double(v.imag()); }) << '\n';
}

}  // namespace specpost
