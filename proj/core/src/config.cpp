#include "tdmr/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tdmr {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::runtime_error("config line " + std::to_string(line) + ": " + what);
}

ConfigValue parse_value(const std::string& raw, int line) {
  const std::string v = trim(raw);
  if (v.empty()) fail(line, "empty value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') fail(line, "unterminated string");
    return {v.substr(1, v.size() - 2)};
  }
  if (v == "true") return {true};
  if (v == "false") return {false};
  if (v.front() == '[') {
    if (v.back() != ']') fail(line, "unterminated array");
    std::vector<double> items;
    std::string body = v.substr(1, v.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string it = trim(item);
      if (it.empty()) fail(line, "empty array element");
      try {
        std::size_t pos = 0;
        items.push_back(std::stod(it, &pos));
        if (pos != it.size()) fail(line, "bad array element '" + it + "'");
      } catch (const std::invalid_argument&) {
        fail(line, "bad array element '" + it + "'");
      }
    }
    return {items};
  }
  try {
    std::size_t pos = 0;
    const double num = std::stod(v, &pos);
    if (pos != v.size()) fail(line, "bad value '" + v + "'");
    return {num};
  } catch (const std::invalid_argument&) {
    fail(line, "bad value '" + v + "'");
  }
}

int as_int(const ConfigValue& v, const std::string& key) {
  const double d = v.number();
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) throw std::runtime_error("config: " + key + " must be integer");
  return i;
}

}  // namespace

double ConfigValue::number() const {
  if (const double* d = std::get_if<double>(&value)) return *d;
  throw std::runtime_error("config: expected a number");
}

std::string ConfigValue::str() const {
  if (const std::string* s = std::get_if<std::string>(&value)) return *s;
  throw std::runtime_error("config: expected a string");
}

bool ConfigValue::boolean() const {
  if (const bool* b = std::get_if<bool>(&value)) return *b;
  throw std::runtime_error("config: expected a boolean");
}

std::vector<double> ConfigValue::array() const {
  if (const auto* a = std::get_if<std::vector<double>>(&value)) return *a;
  throw std::runtime_error("config: expected an array");
}

ConfigTable parse_config_text(const std::string& text) {
  ConfigTable table;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail(line_no, "empty section name");
      table[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail(line_no, "empty key");
    if (section.empty()) fail(line_no, "key outside any section");
    if (table[section].contains(key)) fail(line_no, "duplicate key '" + key + "'");
    table[section][key] = parse_value(line.substr(eq + 1), line_no);
  }
  return table;
}

ExperimentConfig ExperimentConfig::defaults() { return {}; }

ExperimentConfig ExperimentConfig::from_table(const ConfigTable& table) {
  ExperimentConfig config;
  for (const auto& [section, entries] : table) {
    if (section == "channel") {
      for (const auto& [key, v] : entries) {
        if (key == "sectors") {
          config.channel.sectors = as_int(v, key);
        } else if (key == "bits") {
          config.channel.bits = as_int(v, key);
        } else if (key == "seed") {
          config.channel.seed = static_cast<std::uint64_t>(v.number());
        } else if (key == "cts_percent") {
          config.channel.cts_percent = v.number();
        } else if (key == "pw50_over_t") {
          config.channel.pw50_over_t = v.number();
        } else if (key == "jitter_sigma") {
          config.channel.jitter_sigma = v.number();
        } else if (key == "raw_ber_target") {
          config.channel.raw_ber_target = v.number();
        } else if (key == "awgn_sigma") {
          config.channel.awgn_sigma = v.number();
        } else if (key == "span_bits") {
          config.channel.span_bits = as_int(v, key);
        } else {
          throw std::runtime_error("config: unknown key channel." + key);
        }
      }
    } else if (section == "equalizer") {
      for (const auto& [key, v] : entries) {
        if (key == "layers") {
          config.spec.layer_sizes.clear();
          for (double d : v.array()) config.spec.layer_sizes.push_back(static_cast<int>(d));
        } else if (key == "activation") {
          const std::string a = v.str();
          if (a == "tanh") {
            config.spec.activation = Activation::Tanh;
          } else if (a == "relu") {
            config.spec.activation = Activation::Relu;
          } else {
            throw std::runtime_error("config: unknown activation '" + a + "'");
          }
        } else if (key == "target_mode") {
          const std::string m = v.str();
          if (m == "adaptive") {
            config.target_mode.adaptive = true;
          } else if (m == "fixed") {
            config.target_mode.adaptive = false;
          } else {
            throw std::runtime_error("config: unknown target_mode '" + m + "'");
          }
        } else if (key == "fixed_taps") {
          config.target_mode.fixed_taps = v.array();
        } else if (key == "target_len") {
          config.target_mode.adaptive_len = as_int(v, key);
        } else {
          throw std::runtime_error("config: unknown key equalizer." + key);
        }
      }
    } else if (section == "training") {
      for (const auto& [key, v] : entries) {
        if (key == "criterion") {
          const std::string c = v.str();
          if (c == "mse") {
            config.training.criterion = Criterion::Mse;
          } else if (c == "ce") {
            config.training.criterion = Criterion::Ce;
          } else {
            throw std::runtime_error("config: unknown criterion '" + c + "'");
          }
        } else if (key == "learning_rate") {
          config.training.learning_rate = v.number();
        } else if (key == "batch_size") {
          config.training.batch_size = as_int(v, key);
        } else if (key == "epochs") {
          config.training.epochs = as_int(v, key);
        } else if (key == "beta1") {
          config.training.beta1 = v.number();
        } else if (key == "beta2") {
          config.training.beta2 = v.number();
        } else if (key == "epsilon") {
          config.training.epsilon = v.number();
        } else if (key == "seed") {
          config.training.seed = static_cast<std::uint64_t>(v.number());
        } else if (key == "llr_clip") {
          config.training.llr_clip = v.number();
        } else if (key == "decision_delay") {
          config.training.decision_delay = as_int(v, key);
        } else if (key == "auto_delay") {
          config.training.auto_delay = v.boolean();
        } else {
          throw std::runtime_error("config: unknown key training." + key);
        }
      }
    } else if (section == "output") {
      for (const auto& [key, v] : entries) {
        if (key == "dir") {
          config.out_dir = v.str();
        } else if (key == "name") {
          config.name = v.str();
        } else {
          throw std::runtime_error("config: unknown key output." + key);
        }
      }
    } else {
      throw std::runtime_error("config: unknown section [" + section + "]");
    }
  }
  config.spec.validate();
  config.training.validate();
  return config;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("config: cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_table(parse_config_text(ss.str()));
}

std::string ExperimentConfig::render() const {
  char buf[256];
  std::string out;
  auto add = [&out, &buf](const char* fmt, auto... args) {
    if constexpr (sizeof...(args) == 0) {
      out += fmt;
    } else {
      std::snprintf(buf, sizeof(buf), fmt, args...);
      out += buf;
    }
  };
  add("[channel]\n");
  add("sectors = %d\nbits = %d\nseed = %llu\n", channel.sectors, channel.bits,
      static_cast<unsigned long long>(channel.seed));
  add("cts_percent = %.10g\npw50_over_t = %.10g\njitter_sigma = %.10g\n", channel.cts_percent,
      channel.pw50_over_t, channel.jitter_sigma);
  add("raw_ber_target = %.10g\nawgn_sigma = %.10g\nspan_bits = %d\n", channel.raw_ber_target,
      channel.awgn_sigma, channel.span_bits);
  add("\n[equalizer]\nlayers = [");
  for (std::size_t i = 0; i < spec.layer_sizes.size(); ++i) {
    add(i ? ", %d" : "%d", spec.layer_sizes[i]);
  }
  add("]\nactivation = \"%s\"\n", spec.activation == Activation::Tanh ? "tanh" : "relu");
  add("target_mode = \"%s\"\n", target_mode.adaptive ? "adaptive" : "fixed");
  if (target_mode.adaptive) {
    add("target_len = %d\n", target_mode.adaptive_len);
  } else {
    add("fixed_taps = [");
    for (std::size_t i = 0; i < target_mode.fixed_taps.size(); ++i) {
      add(i ? ", %.10g" : "%.10g", target_mode.fixed_taps[i]);
    }
    add("]\n");
  }
  add("\n[training]\ncriterion = \"%s\"\n",
      training.criterion == Criterion::Mse ? "mse" : "ce");
  add("learning_rate = %.10g\nbatch_size = %d\nepochs = %d\n", training.learning_rate,
      training.batch_size, training.epochs);
  add("beta1 = %.10g\nbeta2 = %.10g\nepsilon = %.10g\n", training.beta1, training.beta2,
      training.epsilon);
  add("seed = %llu\nllr_clip = %.10g\ndecision_delay = %d\nauto_delay = %s\n",
      static_cast<unsigned long long>(training.seed), training.llr_clip, training.decision_delay,
      training.auto_delay ? "true" : "false");
  add("\n[output]\ndir = \"%s\"\nname = \"%s\"\n", out_dir.string().c_str(), name.c_str());
  return out;
}

std::uint64_t ExperimentConfig::digest() const {
  const std::string text = render();
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace tdmr
