#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "specpost/optimizer.hpp"
#include "specpost/simulator.hpp"
#include "specpost/spectral_model.hpp"
#include "specpost/transfer.hpp"

namespace specpost {

std::uint64_t fnv1a64(std::string_view bytes);
std::string tool_version();

/// Provenance written as the first line of every CSV.
struct CsvHeader {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string line() const;
};

/// Section-qualified `key = value` configuration. Keys are stored as
/// "section.key"; lines starting with '#' or ';' are comments.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  /// Throws ConfigError naming every key that is not in `allowed`.
  void check_keys(const std::set<std::string>& allowed) const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::optional<std::string>& fallback = {}) const;
  double get_double(const std::string& key, const std::optional<double>& fallback = {}) const;
  long long get_int(const std::string& key, const std::optional<long long>& fallback = {}) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  const std::string& text() const { return text_; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string text_;
};

void write_spectrum_csv(const std::filesystem::path& path, const CsvHeader& h, const ComplexVector& v);
void write_time_csv(const std::filesystem::path& path, const CsvHeader& h, const RealVector& v);
void write_schedule_csv(const std::filesystem::path& path, const CsvHeader& h, const Schedule& sched);
void write_triple_csv(const std::filesystem::path& path, const CsvHeader& h, const TransferTriple& t);

struct LossRecord {
  std::string sampler;
  int steps = 0;
  std::string k;  // number of observations, or "inf" for the analytic average
  double loss = 0.0;
  std::uint64_t seed = 0;
};
void write_losses_csv(const std::filesystem::path& path, const CsvHeader& h, const std::vector<LossRecord>& rows);

/// Weight schedule with metadata lines ("# key=value") after the header.
void write_solution_csv(const std::filesystem::path& path, const CsvHeader& h, const WeightSchedule& w,
                        const std::vector<std::pair<std::string, std::string>>& meta);
WeightSchedule read_solution_csv(const std::filesystem::path& path);

/// Per-step mean/std across several weight schedules of the same kind.
void write_weight_summary_csv(const std::filesystem::path& path, const CsvHeader& h,
                              const std::vector<WeightSchedule>& runs);

void write_profile_csv(const std::filesystem::path& path, const CsvHeader& h, const WeightProfile& p);
void write_stats_csv(const std::filesystem::path& path, const CsvHeader& h, const RunStats& stats);

struct SweepRow {
  std::string method;
  int steps = 0;
  int realization = 0;
  double w2 = 0.0;
};
void write_sweep_csv(const std::filesystem::path& path, const CsvHeader& h, const std::vector<SweepRow>& rows);

/// Prior file: `dim`, `lambda0` (comma list), and either `mu_const` or
/// `mu_f_re`/`mu_f_im` (comma lists).
SpectralPrior read_prior_file(const std::filesystem::path& path);
void write_prior_file(const std::filesystem::path& path, const CsvHeader& h, const SpectralPrior& prior);

/// Rows of a numeric CSV (comment lines and a non-numeric header are skipped).
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace specpost
