#pragma once

#include "icl/builders.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace icl {

// Malformed files, bad dimensions, non-finite weights, bad config values.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Line-oriented key=value; '#' starts a comment; blank lines ignored.
// Later keys override earlier ones.  Every typed getter marks the key as used
// so callers can reject typos with `check_all_used`.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  double num(const std::string& key) const;
  double num(const std::string& key, double fallback) const;
  long integer(const std::string& key) const;
  long integer(const std::string& key, long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  // Comma-separated numbers.
  std::vector<double> nums(const std::string& key) const;
  std::vector<double> nums(const std::string& key, const std::vector<double>& fallback) const;
  // Keys starting with `prefix`, prefix removed.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return kv_; }
  void check_all_used() const;

 private:
  std::map<std::string, std::string> kv_;
  mutable std::map<std::string, bool> used_;
  std::string origin_;
};

// Weight file: parameters plus everything needed to interpret them again.
struct WeightDoc {
  TransformerParams params;
  Layout layout;
  ConstructionReport report;
  std::map<std::string, std::string> config;  // the construct config, verbatim
};

std::string params_to_json(const TransformerParams& p, int indent = -1);
TransformerParams params_from_json(const std::string& text);

void save_weights(const std::string& path, const WeightDoc& doc);
WeightDoc load_weights(const std::string& path);
std::string report_to_json(const ConstructionReport& r, int indent = 2);

std::string instance_to_json(const IclInstance& inst);
IclInstance instance_from_json(const std::string& text);

std::string rep_to_json(const SumOfRelus& rep);
SumOfRelus rep_from_json(const std::string& text);

struct RiskRow {
  std::string task, method;
  Index N_used = 0;
  double risk_mean = 0, half_width = 0;
  Index n_mc = 0;
  std::uint64_t seed = 0;

  bool operator==(const RiskRow&) const = default;
};

struct RiskReport {
  std::vector<RiskRow> rows;
  void sort();
  bool operator==(const RiskReport&) const = default;
};

// Header row, '.' decimals, LF endings, rows sorted by (task, method).
std::string emit_csv(RiskReport report);
RiskReport parse_csv(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace icl
