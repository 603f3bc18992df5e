#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace tta::config {

namespace {

struct Value {
  enum class Kind { kInt, kFloat, kBool, kString, kArray };
  Kind kind;
  long i = 0;
  double f = 0.0;
  bool b = false;
  std::string s;
  std::vector<Value> items;
};

[[noreturn]] void fail(std::size_t line, const std::string& message) {
  throw ConfigError("config line " + std::to_string(line) + ": " + message);
}

std::string trim(std::string_view sv) {
  const auto begin = sv.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return "";
  const auto end = sv.find_last_not_of(" \t\r");
  return std::string(sv.substr(begin, end - begin + 1));
}

bool is_integer_literal(const std::string& text) {
  if (text.empty()) return false;
  std::size_t i = (text[0] == '+' || text[0] == '-') ? 1 : 0;
  if (i == text.size()) return false;
  return std::all_of(text.begin() + static_cast<long>(i), text.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

Value parse_scalar(const std::string& text, std::size_t line) {
  Value v;
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    v.kind = Value::Kind::kString;
    v.s = text.substr(1, text.size() - 2);
    return v;
  }
  if (text == "true" || text == "false") {
    v.kind = Value::Kind::kBool;
    v.b = text == "true";
    return v;
  }
  if (is_integer_literal(text)) {
    v.kind = Value::Kind::kInt;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v.i);
    if (ec != std::errc{} || ptr != text.data() + text.size())
      fail(line, "bad integer '" + text + "'");
    return v;
  }
  try {
    std::size_t consumed = 0;
    v.f = std::stod(text, &consumed);
    if (consumed != text.size()) fail(line, "bad value '" + text + "'");
  } catch (const std::logic_error&) {
    fail(line, "bad value '" + text + "'");
  }
  v.kind = Value::Kind::kFloat;
  return v;
}

Value parse_value(const std::string& text, std::size_t line) {
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') fail(line, "unterminated array");
    Value v;
    v.kind = Value::Kind::kArray;
    const std::string inner = trim(std::string_view(text).substr(1, text.size() - 2));
    if (inner.empty()) return v;
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ','))
      v.items.push_back(parse_scalar(trim(item), line));
    return v;
  }
  return parse_scalar(text, line);
}

double as_double(const Value& v, std::size_t line) {
  if (v.kind == Value::Kind::kFloat) return v.f;
  if (v.kind == Value::Kind::kInt) return static_cast<double>(v.i);
  fail(line, "expected a number");
}

long as_long(const Value& v, std::size_t line) {
  if (v.kind != Value::Kind::kInt) fail(line, "expected an integer");
  return v.i;
}

bool as_bool(const Value& v, std::size_t line) {
  if (v.kind != Value::Kind::kBool) fail(line, "expected true or false");
  return v.b;
}

std::string as_string(const Value& v, std::size_t line) {
  if (v.kind != Value::Kind::kString) fail(line, "expected a quoted string");
  return v.s;
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

std::string format_double(double v) {
  char buf[40];
  // Shortest representation that round-trips exactly.
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  std::string s(buf);
  // Keep the literal a float so the round-trip preserves the type.
  if (s.find_first_of(".eE") == std::string::npos &&
      s.find_first_of("n") == std::string::npos)
    s += ".0";
  return s;
}

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("config: " + message);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  using Setter = std::function<void(RunConfig&, const Value&, std::size_t)>;
  static const std::map<std::string, Setter> setters = {
      {".seed",
       [](RunConfig& c, const Value& v, std::size_t l) {
         c.seed = static_cast<std::uint64_t>(as_long(v, l));
       }},
      {".out_dir", [](RunConfig& c, const Value& v, std::size_t l) { c.out_dir = as_string(v, l); }},
      {"generator.k", [](RunConfig& c, const Value& v, std::size_t l) { c.k = as_long(v, l); }},
      {"generator.input_width",
       [](RunConfig& c, const Value& v, std::size_t l) { c.input_width = as_long(v, l); }},
      {"generator.separation",
       [](RunConfig& c, const Value& v, std::size_t l) { c.separation = as_double(v, l); }},
      {"generator.sampler",
       [](RunConfig& c, const Value& v, std::size_t l) { c.sampler = as_string(v, l); }},
      {"generator.fixed_diversity",
       [](RunConfig& c, const Value& v, std::size_t l) { c.fixed_diversity = as_long(v, l); }},
      {"scenario.ordering",
       [](RunConfig& c, const Value& v, std::size_t l) { c.ordering = as_string(v, l); }},
      {"scenario.corruptions",
       [](RunConfig& c, const Value& v, std::size_t l) { c.corruptions = as_long(v, l); }},
      {"scenario.severity",
       [](RunConfig& c, const Value& v, std::size_t l) { c.severity = as_long(v, l); }},
      {"scenario.samples_per_segment",
       [](RunConfig& c, const Value& v, std::size_t l) { c.samples_per_segment = as_long(v, l); }},
      {"corruption.max_offset",
       [](RunConfig& c, const Value& v, std::size_t l) { c.max_offset = as_double(v, l); }},
      {"corruption.max_scale",
       [](RunConfig& c, const Value& v, std::size_t l) { c.max_scale = as_double(v, l); }},
      {"model.layers", [](RunConfig& c, const Value& v, std::size_t l) { c.layers = as_long(v, l); }},
      {"model.source_sample",
       [](RunConfig& c, const Value& v, std::size_t l) { c.source_sample = as_long(v, l); }},
      {"model.truth_sample",
       [](RunConfig& c, const Value& v, std::size_t l) { c.truth_sample = as_long(v, l); }},
      {"model.relu", [](RunConfig& c, const Value& v, std::size_t l) { c.relu = as_bool(v, l); }},
      {"engine.modes",
       [](RunConfig& c, const Value& v, std::size_t l) {
         if (v.kind != Value::Kind::kArray) fail(l, "modes must be an array");
         c.modes.clear();
         for (const auto& item : v.items) c.modes.push_back(as_string(item, l));
       }},
      {"engine.fixed_alpha",
       [](RunConfig& c, const Value& v, std::size_t l) { c.fixed_alpha = as_double(v, l); }},
      {"engine.gamma", [](RunConfig& c, const Value& v, std::size_t l) { c.gamma = as_double(v, l); }},
      {"engine.tau", [](RunConfig& c, const Value& v, std::size_t l) { c.tau = as_double(v, l); }},
      {"engine.norm_eps",
       [](RunConfig& c, const Value& v, std::size_t l) { c.norm_eps = as_double(v, l); }},
      {"engine.kl_eps",
       [](RunConfig& c, const Value& v, std::size_t l) { c.kl_eps = as_double(v, l); }},
      {"engine.tema_init_from_first_batch",
       [](RunConfig& c, const Value& v, std::size_t l) {
         c.tema_init_from_first_batch = as_bool(v, l);
       }},
      {"engine.kl_aggregate",
       [](RunConfig& c, const Value& v, std::size_t l) { c.kl_aggregate = as_string(v, l); }},
      {"momentum.source_batch_size",
       [](RunConfig& c, const Value& v, std::size_t l) { c.source_batch_size = as_long(v, l); }},
      {"momentum.grid",
       [](RunConfig& c, const Value& v, std::size_t l) {
         if (v.kind != Value::Kind::kArray) fail(l, "grid must be an array");
         c.grid.clear();
         for (const auto& item : v.items) c.grid.push_back(as_double(item, l));
       }},
      {"momentum.epsilon",
       [](RunConfig& c, const Value& v, std::size_t l) { c.epsilon = as_double(v, l); }},
      {"momentum.lambda",
       [](RunConfig& c, const Value& v, std::size_t l) { c.lambda = as_double(v, l); }},
      {"momentum.override",
       [](RunConfig& c, const Value& v, std::size_t l) { c.momentum_override = as_double(v, l); }},
      {"run.batch_sizes",
       [](RunConfig& c, const Value& v, std::size_t l) {
         if (v.kind != Value::Kind::kArray) fail(l, "batch_sizes must be an array");
         c.batch_sizes.clear();
         for (const auto& item : v.items) c.batch_sizes.push_back(as_long(item, l));
       }},
      {"run.replicates",
       [](RunConfig& c, const Value& v, std::size_t l) { c.replicates = as_long(v, l); }},
  };

  static const std::vector<std::string> known_sections = {
      "", "generator", "scenario", "corruption", "model", "engine", "momentum", "run"};

  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (std::find(known_sections.begin(), known_sections.end(), section) ==
          known_sections.end())
        fail(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value_text = trim(std::string_view(line).substr(eq + 1));
    if (key.empty() || value_text.empty()) fail(line_no, "expected key = value");
    const auto it = setters.find(section + "." + key);
    if (it == setters.end())
      fail(line_no, "unknown key '" + key + "' in section [" + section + "]");
    it->second(cfg, parse_value(value_text, line_no), line_no);
  }
  validate(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "seed = " << cfg.seed << '\n';
  out << "out_dir = \"" << cfg.out_dir << "\"\n\n";
  out << "[generator]\n";
  out << "k = " << cfg.k << '\n';
  out << "input_width = " << cfg.input_width << '\n';
  out << "separation = " << format_double(cfg.separation) << '\n';
  out << "sampler = \"" << cfg.sampler << "\"\n";
  out << "fixed_diversity = " << cfg.fixed_diversity << "\n\n";
  out << "[scenario]\n";
  out << "ordering = \"" << cfg.ordering << "\"\n";
  out << "corruptions = " << cfg.corruptions << '\n';
  out << "severity = " << cfg.severity << '\n';
  out << "samples_per_segment = " << cfg.samples_per_segment << "\n\n";
  out << "[corruption]\n";
  out << "max_offset = " << format_double(cfg.max_offset) << '\n';
  out << "max_scale = " << format_double(cfg.max_scale) << "\n\n";
  out << "[model]\n";
  out << "layers = " << cfg.layers << '\n';
  out << "source_sample = " << cfg.source_sample << '\n';
  out << "truth_sample = " << cfg.truth_sample << '\n';
  out << "relu = " << (cfg.relu ? "true" : "false") << "\n\n";
  out << "[engine]\n";
  out << "modes = [";
  for (std::size_t i = 0; i < cfg.modes.size(); ++i)
    out << (i ? ", " : "") << '"' << cfg.modes[i] << '"';
  out << "]\n";
  out << "fixed_alpha = " << format_double(cfg.fixed_alpha) << '\n';
  out << "gamma = " << format_double(cfg.gamma) << '\n';
  out << "tau = " << format_double(cfg.tau) << '\n';
  out << "norm_eps = " << format_double(cfg.norm_eps) << '\n';
  out << "kl_eps = " << format_double(cfg.kl_eps) << '\n';
  out << "tema_init_from_first_batch = "
      << (cfg.tema_init_from_first_batch ? "true" : "false") << '\n';
  out << "kl_aggregate = \"" << cfg.kl_aggregate << "\"\n\n";
  out << "[momentum]\n";
  out << "source_batch_size = " << cfg.source_batch_size << '\n';
  out << "grid = [";
  for (std::size_t i = 0; i < cfg.grid.size(); ++i)
    out << (i ? ", " : "") << format_double(cfg.grid[i]);
  out << "]\n";
  out << "epsilon = " << format_double(cfg.epsilon) << '\n';
  out << "lambda = " << format_double(cfg.lambda) << '\n';
  out << "override = " << format_double(cfg.momentum_override) << "\n\n";
  out << "[run]\n";
  out << "batch_sizes = [";
  for (std::size_t i = 0; i < cfg.batch_sizes.size(); ++i)
    out << (i ? ", " : "") << cfg.batch_sizes[i];
  out << "]\n";
  out << "replicates = " << cfg.replicates << '\n';
  return out.str();
}

std::string default_config_text() { return config_to_text(RunConfig{}); }

void validate(const RunConfig& cfg) {
  check(cfg.k >= 1, "generator.k must be >= 1");
  check(cfg.input_width >= 1, "generator.input_width must be >= 1");
  check(cfg.separation >= 0.0, "generator.separation must be >= 0");
  check(cfg.sampler == "iid_uniform" || cfg.sampler == "uniform_multiset" ||
            cfg.sampler == "fixed_diversity",
        "unknown sampler '" + cfg.sampler + "'");
  check(cfg.fixed_diversity >= 1 && cfg.fixed_diversity <= cfg.k,
        "generator.fixed_diversity must be in [1, k]");
  check(cfg.ordering == "continual" || cfg.ordering == "mixed" ||
            cfg.ordering == "gradual",
        "unknown scenario ordering '" + cfg.ordering + "'");
  check(cfg.corruptions >= 1, "scenario.corruptions must be >= 1");
  check(cfg.severity >= 0 && cfg.severity <= 5, "scenario.severity must be in 0..5");
  check(cfg.samples_per_segment >= 1, "scenario.samples_per_segment must be >= 1");
  check(cfg.layers >= 1, "model.layers must be >= 1");
  check(cfg.source_sample >= 2, "model.source_sample must be >= 2");
  check(cfg.truth_sample >= 2, "model.truth_sample must be >= 2");
  check(!cfg.modes.empty(), "engine.modes must be nonempty");
  for (const auto& mode : cfg.modes)
    check(mode == "source_only" || mode == "tbn" || mode == "tema_only" ||
              mode == "fixed_alpha" || mode == "full",
          "unknown mode '" + mode + "'");
  check(cfg.fixed_alpha >= 0.0 && cfg.fixed_alpha <= 1.0,
        "engine.fixed_alpha must be in [0, 1]");
  check(cfg.gamma >= 0.0 && cfg.gamma <= 1.0, "engine.gamma must be in [0, 1]");
  check(cfg.tau >= 0.0 && cfg.tau <= 1.0, "engine.tau must be in [0, 1]");
  check(cfg.norm_eps > 0.0, "engine.norm_eps must be > 0");
  check(cfg.kl_eps > 0.0, "engine.kl_eps must be > 0");
  check(cfg.kl_aggregate == "mean" || cfg.kl_aggregate == "sum",
        "engine.kl_aggregate must be \"mean\" or \"sum\"");
  check(cfg.source_batch_size >= 1, "momentum.source_batch_size must be >= 1");
  check(!cfg.grid.empty(), "momentum.grid must be nonempty");
  for (double m : cfg.grid)
    check(m > 0.0 && m <= 1.0, "momentum grid values must be in (0, 1]");
  check(cfg.epsilon > 0.0 && cfg.epsilon < 1.0, "momentum.epsilon must be in (0, 1)");
  check(cfg.lambda >= 0.0, "momentum.lambda must be >= 0");
  check(cfg.momentum_override == 0.0 ||
            (cfg.momentum_override > 0.0 && cfg.momentum_override <= 1.0),
        "momentum.override must be 0 or in (0, 1]");
  check(!cfg.batch_sizes.empty(), "run.batch_sizes must be nonempty");
  for (long n : cfg.batch_sizes) check(n >= 1, "batch sizes must be >= 1");
  check(cfg.replicates >= 1, "run.replicates must be >= 1");
}

}  // namespace tta::config
