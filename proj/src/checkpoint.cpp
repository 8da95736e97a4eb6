#include "rg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rg {

namespace {

constexpr char kMagic[4] = {'R', 'G', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

class Reader {
 public:
  Reader(std::ifstream& f, std::string path) : f_(f), path_(std::move(path)) {}

  void read_raw(void* dst, std::size_t len, const char* what) {
    f_.read(static_cast<char*>(dst), static_cast<std::streamsize>(len));
    if (f_.gcount() != static_cast<std::streamsize>(len))
      throw std::runtime_error(path_ + ": truncated at offset " +
                               std::to_string(offset_ + f_.gcount()) +
                               " while reading " + what);
    offset_ += len;
  }
  template <typename T>
  T get(const char* what) {
    T v;
    read_raw(&v, sizeof(T), what);
    return v;
  }
  void get_doubles(std::vector<double>& dst, const char* what) {
    read_raw(dst.data(), dst.size() * sizeof(double), what);
  }

 private:
  std::ifstream& f_;
  std::string path_;
  std::size_t offset_ = 0;
};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_doubles(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

void write_param_blocks(std::ofstream& f, const RGNetwork& net,
                        const HeadBank& heads) {
  for (std::size_t l = 0; l < net.filters.size(); ++l) {
    put_doubles(f, net.filters[l].data);
    put_doubles(f, net.biases[l]);
  }
  put_doubles(f, heads.coarse_weights);
  put_doubles(f, heads.coarse_bias);
  for (const HeadBank::Tap& t : heads.taps) put_doubles(f, t.filter.data);
}

void read_param_blocks(Reader& r, RGNetwork& net, HeadBank& heads) {
  for (std::size_t l = 0; l < net.filters.size(); ++l) {
    r.get_doubles(net.filters[l].data, "filter parameters");
    r.get_doubles(net.biases[l], "bias parameters");
  }
  r.get_doubles(heads.coarse_weights, "coarse head weights");
  r.get_doubles(heads.coarse_bias, "coarse head bias");
  for (HeadBank::Tap& t : heads.taps)
    r.get_doubles(t.filter.data, "tap parameters");
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, 4);
  put(f, kVersion);
  put(f, static_cast<std::uint32_t>(ck.net.input_dims.channels));
  put(f, static_cast<std::uint32_t>(ck.net.input_dims.height));
  put(f, static_cast<std::uint32_t>(ck.net.input_dims.width));
  put(f, static_cast<std::uint32_t>(ck.net.num_layers()));
  for (const LayerConfig& c : ck.net.layers) {
    put(f, static_cast<std::uint32_t>(c.in_channels));
    put(f, static_cast<std::uint32_t>(c.out_channels));
    put(f, static_cast<std::uint32_t>(c.k_h));
    put(f, static_cast<std::uint32_t>(c.k_w));
    put(f, static_cast<std::uint32_t>(c.stride));
    put(f, static_cast<std::uint32_t>(c.pad_h));
    put(f, static_cast<std::uint32_t>(c.pad_w));
    put(f, static_cast<std::uint32_t>(c.nms_group));
  }
  put(f, static_cast<std::uint32_t>(ck.heads.num_keypoints));
  put(f, static_cast<std::uint32_t>(ck.heads.taps.size()));
  for (const HeadBank::Tap& t : ck.heads.taps)
    put(f, static_cast<std::uint32_t>(t.layer));
  write_param_blocks(f, ck.net, ck.heads);
  put(f, static_cast<std::uint8_t>(ck.state.has_value() ? 1 : 0));
  if (ck.state) {
    put(f, ck.state->stage);
    put(f, ck.state->epoch);
    for (std::size_t l = 0; l < ck.state->velocity.filters.size(); ++l) {
      put_doubles(f, ck.state->velocity.filters[l].data);
      put_doubles(f, ck.state->velocity.biases[l]);
    }
    put_doubles(f, ck.state->velocity.coarse_weights);
    put_doubles(f, ck.state->velocity.coarse_bias);
    for (const FilterBank& t : ck.state->velocity.taps) put_doubles(f, t.data);
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  Reader r(f, path);
  char magic[4];
  r.read_raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + ": bad magic, not an RGCK checkpoint");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kVersion) + ")");

  Dims input;
  input.channels = static_cast<int>(r.get<std::uint32_t>("input channels"));
  input.height = static_cast<int>(r.get<std::uint32_t>("input height"));
  input.width = static_cast<int>(r.get<std::uint32_t>("input width"));
  const auto n_layers = r.get<std::uint32_t>("layer count");
  std::vector<LayerConfig> cfgs;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerConfig c;
    c.in_channels = static_cast<int>(r.get<std::uint32_t>("in_channels"));
    c.out_channels = static_cast<int>(r.get<std::uint32_t>("out_channels"));
    c.k_h = static_cast<int>(r.get<std::uint32_t>("k_h"));
    c.k_w = static_cast<int>(r.get<std::uint32_t>("k_w"));
    c.stride = static_cast<int>(r.get<std::uint32_t>("stride"));
    c.pad_h = static_cast<int>(r.get<std::uint32_t>("pad_h"));
    c.pad_w = static_cast<int>(r.get<std::uint32_t>("pad_w"));
    c.nms_group = static_cast<int>(r.get<std::uint32_t>("nms_group"));
    cfgs.push_back(c);
  }
  Checkpoint ck;
  ck.net = RGNetwork::build(input, cfgs);
  const auto m = r.get<std::uint32_t>("keypoint count");
  const auto n_taps = r.get<std::uint32_t>("tap count");
  std::vector<int> tap_layers;
  for (std::uint32_t i = 0; i < n_taps; ++i)
    tap_layers.push_back(static_cast<int>(r.get<std::uint32_t>("tap layer")));
  ck.heads = HeadBank::build(ck.net, static_cast<int>(m), tap_layers);
  read_param_blocks(r, ck.net, ck.heads);

  const auto has_state = r.get<std::uint8_t>("training state flag");
  if (has_state == 1) {
    TrainState st;
    st.stage = r.get<std::uint32_t>("stage");
    st.epoch = r.get<std::uint32_t>("epoch");
    st.velocity = zero_grads(ck.net, ck.heads);
    for (std::size_t l = 0; l < st.velocity.filters.size(); ++l) {
      r.get_doubles(st.velocity.filters[l].data, "filter velocity");
      r.get_doubles(st.velocity.biases[l], "bias velocity");
    }
    r.get_doubles(st.velocity.coarse_weights, "coarse weight velocity");
    r.get_doubles(st.velocity.coarse_bias, "coarse bias velocity");
    for (FilterBank& t : st.velocity.taps)
      r.get_doubles(t.data, "tap velocity");
    ck.state = std::move(st);
  } else if (has_state != 0) {
    throw std::runtime_error(path + ": corrupt training state flag");
  }
  return ck;
}

std::string architecture_mismatch(const Checkpoint& ck, const RGNetwork& net,
                                  const HeadBank& heads) {
  if (ck.net.input_dims != net.input_dims) return "input dims differ";
  if (ck.net.num_layers() != net.num_layers())
    return "layer count differs (" + std::to_string(ck.net.num_layers()) +
           " vs " + std::to_string(net.num_layers()) + ")";
  for (int i = 0; i < net.num_layers(); ++i) {
    const LayerConfig& a = ck.net.layers[i];
    const LayerConfig& b = net.layers[i];
    if (a.in_channels != b.in_channels || a.out_channels != b.out_channels ||
        a.k_h != b.k_h || a.k_w != b.k_w || a.stride != b.stride ||
        a.pad_h != b.pad_h || a.pad_w != b.pad_w || a.nms_group != b.nms_group)
      return "layer " + std::to_string(i + 1) + " configuration differs";
  }
  if (ck.heads.num_keypoints != heads.num_keypoints)
    return "keypoint count differs";
  if (ck.heads.taps.size() != heads.taps.size()) return "tap count differs";
  for (std::size_t i = 0; i < heads.taps.size(); ++i)
    if (ck.heads.taps[i].layer != heads.taps[i].layer)
      return "tap " + std::to_string(i) + " layer differs";
  return "";
}

}  // namespace rg
