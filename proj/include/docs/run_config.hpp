#pragma once

// Run configuration: `key = value` lines with `#` comments. Every field has
// a default; the effective configuration is written back in the same format
// so a run can be reproduced from its echo.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "docs/error.hpp"
#include "docs/network.hpp"
#include "docs/optim.hpp"

namespace docs {

struct RunConfig {
  std::string topology = "toy";
  std::string fusion = "correlation";
  std::size_t input_size = 0;  // 0 keeps the topology preset's size
  bool corr_normalize = false;
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
  std::size_t batch_pairs = 10;
  std::size_t iterations = 5000;
  std::uint64_t seed = 1;
  double sigma = 0.5;
  std::string k = "all";  // "all" or a partner count
  bool augment = true;
  std::size_t checkpoint_every = 1000;
  std::size_t eval_every = 0;  // 0 disables periodic validation
  std::size_t log_every = 50;
  std::string data;
  std::string out;

  // Applies one key/value pair; unknown keys and bad values are rejected.
  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "topology") topology = to_string(parse_topology(value));
      else if (key == "fusion") fusion = to_string(parse_fusion(value));
      else if (key == "inputSize") input_size = std::stoul(value);
      else if (key == "corrNormalize") corr_normalize = parse_bool(value);
      else if (key == "lr") lr = std::stod(value);
      else if (key == "beta1") beta1 = std::stod(value);
      else if (key == "beta2") beta2 = std::stod(value);
      else if (key == "eps") eps = std::stod(value);
      else if (key == "weightDecay") weight_decay = std::stod(value);
      else if (key == "batchPairs") batch_pairs = std::stoul(value);
      else if (key == "iterations") iterations = std::stoul(value);
      else if (key == "seed") seed = std::stoull(value);
      else if (key == "sigma") sigma = std::stod(value);
      else if (key == "K") k = value == "all" ? value : std::to_string(std::stoul(value));
      else if (key == "augment") augment = parse_bool(value);
      else if (key == "checkpointEvery") checkpoint_every = std::stoul(value);
      else if (key == "evalEvery") eval_every = std::stoul(value);
      else if (key == "logEvery") log_every = std::stoul(value);
      else if (key == "data") data = value;
      else if (key == "out") out = value;
      else throw data_error("unknown config key '" + key + "'");
    } catch (const std::logic_error&) {
      throw data_error("bad value '" + value + "' for config key '" + key + "'");
    }
    if (batch_pairs == 0) throw data_error("batchPairs must be positive");
  }

  void parse(const std::string& text, const std::string& origin = "config") {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw data_error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      try {
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
      } catch (const data_error& e) {
        throw data_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    parse(ss.str(), path);
  }

  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "topology = " << topology << "\nfusion = " << fusion << "\ninputSize = " << input_size
       << "\ncorrNormalize = " << corr_normalize << "\nlr = " << lr << "\nbeta1 = " << beta1 << "\nbeta2 = " << beta2
       << "\neps = " << eps << "\nweightDecay = " << weight_decay << "\nbatchPairs = " << batch_pairs
       << "\niterations = " << iterations << "\nseed = " << seed << "\nsigma = " << sigma << "\nK = " << k
       << "\naugment = " << augment << "\ncheckpointEvery = " << checkpoint_every << "\nevalEvery = " << eval_every
       << "\nlogEvery = " << log_every << "\n";
    if (!data.empty()) os << "data = " << data << "\n";
    if (!out.empty()) os << "out = " << out << "\n";
    return os.str();
  }

  NetworkConfig network() const {
    NetworkConfig c = NetworkConfig::preset(parse_topology(topology));
    if (input_size != 0) c.input_size = input_size;
    c.fusion = parse_fusion(fusion);
    c.corr_normalize = corr_normalize;
    c.validate();
    return c;
  }

  AdamConfig adam() const { return AdamConfig{lr, beta1, beta2, eps, weight_decay}; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  static bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw data_error("expected a boolean, got '" + v + "'");
  }
};

}  // namespace docs
