#include "rg/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rg {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

// Parses "out=8 k=3 stride=2 pad=1 nms=2" (stride/pad/nms optional).
LayerConfig parse_layer(const std::string& value, int line) {
  LayerConfig c;
  c.k_h = c.k_w = -1;
  int pad = -1;
  std::istringstream in(value);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) fail(line, "expected key=value, got " + tok);
    const std::string key = tok.substr(0, eq);
    int v = 0;
    try {
      v = std::stoi(tok.substr(eq + 1));
    } catch (const std::exception&) {
      fail(line, "bad integer in " + tok);
    }
    if (key == "out")
      c.out_channels = v;
    else if (key == "k")
      c.k_h = c.k_w = v;
    else if (key == "stride")
      c.stride = v;
    else if (key == "pad")
      pad = v;
    else if (key == "nms")
      c.nms_group = v;
    else
      fail(line, "unknown layer field " + key);
  }
  if (c.out_channels <= 0) fail(line, "layer needs out=<channels>");
  if (c.k_h <= 0) fail(line, "layer needs k=<kernel>");
  c.pad_h = c.pad_w = pad >= 0 ? pad : c.k_h / 2;  // default: same padding
  return c;
}

}  // namespace

FullConfig parse_config(const std::string& text) {
  FullConfig cfg;
  cfg.layers.clear();
  bool saw_input = false;

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    try {
      if (key == "input") {
        int c, h, w;
        char x1, x2;
        std::istringstream v(value);
        if (!(v >> c >> x1 >> h >> x2 >> w) || x1 != 'x' || x2 != 'x')
          fail(line, "input must be CxHxW");
        cfg.input = {c, h, w};
        saw_input = true;
      } else if (key == "layer") {
        cfg.layers.push_back(parse_layer(value, line));
      } else if (key == "taps") {
        std::istringstream v(value);
        int t;
        cfg.tap_layers.clear();
        while (v >> t) cfg.tap_layers.push_back(t);
      } else if (key == "keypoints") {
        cfg.keypoints = std::stoi(value);
      } else if (key == "lr") {
        cfg.train.learning_rate = std::stod(value);
      } else if (key == "momentum") {
        cfg.train.momentum = std::stod(value);
      } else if (key == "weight_decay") {
        cfg.train.weight_decay = std::stod(value);
      } else if (key == "batch_size") {
        cfg.train.batch_size = std::stoi(value);
      } else if (key == "epochs") {
        cfg.train.epochs = std::stoi(value);
      } else if (key == "k") {
        cfg.train.k = std::stoi(value);
      } else if (key == "lr_decay_per_finer_scale") {
        cfg.train.lr_decay_per_finer_scale = std::stod(value);
      } else if (key == "positive_radius") {
        cfg.train.positive_radius = std::stod(value);
      } else if (key == "seed") {
        cfg.train.seed = std::stoull(value);
      } else {
        fail(line, "unknown key " + key);
      }
    } catch (const std::invalid_argument&) {
      fail(line, "bad value for " + key);
    } catch (const std::out_of_range&) {
      fail(line, "value out of range for " + key);
    }
  }
  if (!saw_input) throw std::runtime_error("config: missing input = CxHxW");
  if (cfg.layers.empty()) throw std::runtime_error("config: no layer entries");
  return cfg;
}

FullConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

Model build_model(const FullConfig& cfg) {
  // in_channels chains from the input through the layer stack.
  std::vector<LayerConfig> layers = cfg.layers;
  int below = cfg.input.channels;
  for (LayerConfig& c : layers) {
    c.in_channels = below;
    below = c.out_channels;
  }
  Model m;
  m.net = RGNetwork::build(cfg.input, layers);
  m.heads = HeadBank::build(m.net, cfg.keypoints, cfg.tap_layers);
  return m;
}

}  // namespace rg
