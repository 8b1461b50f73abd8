#pragma once

// Plain-text run configuration: "key = value" lines, '#' starts a comment.
// Keys are namespaced net.*, train.* and data.*; a bare "seed" sets both the
// training and the data seed.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "glasskit/network.hpp"
#include "glasskit/synth.hpp"
#include "glasskit/trainer.hpp"

namespace glasskit {

struct RunConfig {
  nn::NetworkConfig net;
  TrainConfig train;
  SceneConfig data;

  void validate() const {
    net.validate();
    train.validate();
    data.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw InvalidInput("config key " + key + ": cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw InvalidInput("config key " + key + ": expected true/false, got '" + v + "'");
}

template <class N, std::size_t K>
std::array<N, K> parse_array(const std::string& key, const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != K) throw InvalidInput("config key " + key + ": expected " + std::to_string(K) + " values");
  std::array<N, K> out{};
  for (std::size_t i = 0; i < K; ++i) out[i] = parse_number<N>(key, parts[i]);
  return out;
}

template <class N>
std::string join(const N& values) {
  std::ostringstream os;
  bool first = true;
  for (const auto& v : values) {
    os << (first ? "" : ",") << v;
    first = false;
  }
  return os.str();
}

}  // namespace detail

inline void apply_config_value(RunConfig& rc, const std::string& key, const std::string& v) {
  using namespace detail;
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"seed", [](RunConfig& c, const std::string& s) { c.train.seed = c.data.seed = parse_number<std::uint64_t>("seed", s); }},
      {"net.input_size", [](RunConfig& c, const std::string& s) { c.net.input_size = parse_number<int>("net.input_size", s); }},
      {"net.encoder_channels", [](RunConfig& c, const std::string& s) { c.net.encoder_channels = parse_array<int, 5>("net.encoder_channels", s); }},
      {"net.decoder_width", [](RunConfig& c, const std::string& s) { c.net.decoder_width = parse_number<int>("net.decoder_width", s); }},
      {"net.dilation_rates", [](RunConfig& c, const std::string& s) {
         c.net.dilation_rates.clear();
         for (const auto& p : split_list(s)) c.net.dilation_rates.push_back(parse_number<int>("net.dilation_rates", p));
       }},
      {"net.se_reduction", [](RunConfig& c, const std::string& s) { c.net.se_reduction = parse_number<int>("net.se_reduction", s); }},
      {"net.enable_boundary_stream", [](RunConfig& c, const std::string& s) { c.net.enable_boundary_stream = parse_bool("net.enable_boundary_stream", s); }},
      {"net.enable_interior_stream", [](RunConfig& c, const std::string& s) { c.net.enable_interior_stream = parse_bool("net.enable_interior_stream", s); }},
      {"net.enable_bfm", [](RunConfig& c, const std::string& s) { c.net.enable_bfm = parse_bool("net.enable_bfm", s); }},
      {"net.enable_mid", [](RunConfig& c, const std::string& s) { c.net.enable_mid = parse_bool("net.enable_mid", s); }},
      {"train.base_lr", [](RunConfig& c, const std::string& s) { c.train.base_lr = parse_number<double>("train.base_lr", s); }},
      {"train.momentum", [](RunConfig& c, const std::string& s) { c.train.momentum = parse_number<double>("train.momentum", s); }},
      {"train.weight_decay", [](RunConfig& c, const std::string& s) { c.train.weight_decay = parse_number<double>("train.weight_decay", s); }},
      {"train.poly_power", [](RunConfig& c, const std::string& s) { c.train.poly_power = parse_number<double>("train.poly_power", s); }},
      {"train.batch_size", [](RunConfig& c, const std::string& s) { c.train.batch_size = parse_number<int>("train.batch_size", s); }},
      {"train.max_iters", [](RunConfig& c, const std::string& s) { c.train.max_iters = parse_number<int>("train.max_iters", s); }},
      {"train.eval_every", [](RunConfig& c, const std::string& s) { c.train.eval_every = parse_number<int>("train.eval_every", s); }},
      {"train.seed", [](RunConfig& c, const std::string& s) { c.train.seed = parse_number<std::uint64_t>("train.seed", s); }},
      {"train.augment", [](RunConfig& c, const std::string& s) { c.train.augment = parse_bool("train.augment", s); }},
      {"train.precision", [](RunConfig& c, const std::string& s) {
         if (s == "f32") c.train.precision = Precision::f32;
         else if (s == "f64") c.train.precision = Precision::f64;
         else throw InvalidInput("config key train.precision: expected f32 or f64");
       }},
      {"data.size", [](RunConfig& c, const std::string& s) { c.data.size = parse_number<int>("data.size", s); }},
      {"data.glass_count_range", [](RunConfig& c, const std::string& s) { c.data.glass_count_range = parse_array<int, 2>("data.glass_count_range", s); }},
      {"data.frame_width_range", [](RunConfig& c, const std::string& s) { c.data.frame_width_range = parse_array<int, 2>("data.frame_width_range", s); }},
      {"data.tint_alpha_range", [](RunConfig& c, const std::string& s) { c.data.tint_alpha_range = parse_array<double, 2>("data.tint_alpha_range", s); }},
      {"data.blur_radius_range", [](RunConfig& c, const std::string& s) { c.data.blur_radius_range = parse_array<int, 2>("data.blur_radius_range", s); }},
      {"data.highlight_probability", [](RunConfig& c, const std::string& s) { c.data.highlight_probability = parse_number<double>("data.highlight_probability", s); }},
      {"data.seed", [](RunConfig& c, const std::string& s) { c.data.seed = parse_number<std::uint64_t>("data.seed", s); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw InvalidInput("unknown config key: " + key);
  it->second(rc, v);
}

inline RunConfig parse_config(std::istream& is, const std::string& origin = "<config>") {
  RunConfig rc;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      apply_config_value(rc, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const InvalidInput& e) {
      throw InvalidInput(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  rc.validate();
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  return parse_config(is, path);
}

inline std::string format_config(const RunConfig& rc) {
  using detail::join;
  std::ostringstream os;
  os.precision(17);
  const auto& n = rc.net;
  const auto& t = rc.train;
  const auto& d = rc.data;
  auto flag = [](bool b) { return b ? "true" : "false"; };
  os << "net.input_size = " << n.input_size << '\n'
     << "net.encoder_channels = " << join(n.encoder_channels) << '\n'
     << "net.decoder_width = " << n.decoder_width << '\n'
     << "net.dilation_rates = " << join(n.dilation_rates) << '\n'
     << "net.se_reduction = " << n.se_reduction << '\n'
     << "net.enable_boundary_stream = " << flag(n.enable_boundary_stream) << '\n'
     << "net.enable_interior_stream = " << flag(n.enable_interior_stream) << '\n'
     << "net.enable_bfm = " << flag(n.enable_bfm) << '\n'
     << "net.enable_mid = " << flag(n.enable_mid) << '\n'
     << "train.base_lr = " << t.base_lr << '\n'
     << "train.momentum = " << t.momentum << '\n'
     << "train.weight_decay = " << t.weight_decay << '\n'
     << "train.poly_power = " << t.poly_power << '\n'
     << "train.batch_size = " << t.batch_size << '\n'
     << "train.max_iters = " << t.max_iters << '\n'
     << "train.eval_every = " << t.eval_every << '\n'
     << "train.seed = " << t.seed << '\n'
     << "train.precision = " << (t.precision == Precision::f64 ? "f64" : "f32") << '\n'
     << "train.augment = " << flag(t.augment) << '\n'
     << "data.size = " << d.size << '\n'
     << "data.glass_count_range = " << join(d.glass_count_range) << '\n'
     << "data.frame_width_range = " << join(d.frame_width_range) << '\n'
     << "data.tint_alpha_range = " << join(d.tint_alpha_range) << '\n'
     << "data.blur_radius_range = " << join(d.blur_radius_range) << '\n'
     << "data.highlight_probability = " << d.highlight_probability << '\n'
     << "data.seed = " << d.seed << '\n';
  return os.str();
}

}  // namespace glasskit
