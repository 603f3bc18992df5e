#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tta::config {

// Raised for malformed documents, unknown keys, and out-of-range values;
// callers map it to the usage/config exit code.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat experiment configuration; one section per subsystem. Unknown keys
// are rejected during parsing.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string out_dir = "runs/out";

  // [generator]
  long k = 10;
  long input_width = 32;
  double separation = 3.0;
  std::string sampler = "iid_uniform";
  long fixed_diversity = 1;

  // [scenario]
  std::string ordering = "continual";
  long corruptions = 15;
  long severity = 5;
  long samples_per_segment = 2000;

  // [corruption]
  double max_offset = 1.0;
  double max_scale = 0.3;

  // [model]
  long layers = 4;
  long source_sample = 50000;
  long truth_sample = 4000;
  bool relu = false;

  // [engine]
  std::vector<std::string> modes{"full"};
  double fixed_alpha = 0.5;
  double gamma = 0.5;
  double tau = 0.1;
  double norm_eps = 1e-5;
  double kl_eps = 1e-12;
  bool tema_init_from_first_batch = false;
  std::string kl_aggregate = "mean";

  // [momentum]
  long source_batch_size = 128;
  std::vector<double> grid{1.0, 0.1, 0.01, 0.001};
  double epsilon = 0.1;
  double lambda = 0.01;
  double momentum_override = 0.0;  // 0 selects automatically

  // [run]
  std::vector<long> batch_sizes{200};
  long replicates = 1;

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// TOML-style rendering; parse_config_text(config_to_text(c)) == c.
std::string config_to_text(const RunConfig& cfg);
std::string default_config_text();

void validate(const RunConfig& cfg);

}  // namespace tta::config
