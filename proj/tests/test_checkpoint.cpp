#include <doctest.h>

#include <stdexcept>

#include <filesystem>
#include <fstream>
#include <vector>

#include "rg/checkpoint.hpp"
#include "rg/train.hpp"

using namespace rg;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Checkpoint make_checkpoint(std::uint64_t seed) {
  Checkpoint ck;
  ck.net = RGNetwork::build(
      {1, 8, 8},
      {{.in_channels = 1, .out_channels = 3, .k_h = 3, .k_w = 3, .stride = 2,
        .pad_h = 1, .pad_w = 1, .nms_group = 2},
       {.in_channels = 3, .out_channels = 2, .k_h = 3, .k_w = 3, .stride = 1,
        .pad_h = 1, .pad_w = 1}});
  const int taps[] = {1};
  ck.heads = HeadBank::build(ck.net, 2, taps);
  randomize_parameters(ck.net, ck.heads, seed);
  return ck;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const Checkpoint ck = make_checkpoint(11);
  const auto path = temp_file("rg_ck.rgck");
  save_checkpoint(ck, path.string());
  const Checkpoint back = load_checkpoint(path.string());

  CHECK(back.net.filters[0].data == ck.net.filters[0].data);
  CHECK(back.net.filters[1].data == ck.net.filters[1].data);
  CHECK(back.net.biases == ck.net.biases);
  CHECK(back.heads.coarse_weights == ck.heads.coarse_weights);
  CHECK(back.heads.coarse_bias == ck.heads.coarse_bias);
  CHECK(back.heads.taps[0].filter.data == ck.heads.taps[0].filter.data);
  CHECK_FALSE(back.state.has_value());

  const auto path2 = temp_file("rg_ck2.rgck");
  save_checkpoint(back, path2.string());
  CHECK(slurp(path) == slurp(path2));
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("training state round trips when present") {
  Checkpoint ck = make_checkpoint(12);
  TrainState st;
  st.stage = 2;
  st.epoch = 7;
  st.velocity = zero_grads(ck.net, ck.heads);
  st.velocity.filters[0].data[0] = -0.25;
  ck.state = st;

  const auto path = temp_file("rg_ck_state.rgck");
  save_checkpoint(ck, path.string());
  const Checkpoint back = load_checkpoint(path.string());
  REQUIRE(back.state.has_value());
  CHECK(back.state->stage == 2);
  CHECK(back.state->epoch == 7);
  CHECK(back.state->velocity.filters[0].data[0] == -0.25);
  std::filesystem::remove(path);
}

TEST_CASE("version bumps are refused naming both versions") {
  const Checkpoint ck = make_checkpoint(13);
  const auto path = temp_file("rg_ck_ver.rgck");
  save_checkpoint(ck, path.string());
  auto bytes = slurp(path);
  bytes[4] = 9;  // version field follows the 4-byte magic
  std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());

  bool threw = false;
  try {
    load_checkpoint(path.string());
  } catch (const std::runtime_error& e) {
    threw = true;
    const std::string msg = e.what();
    CHECK(msg.find("version") != std::string::npos);
    CHECK(msg.find("9") != std::string::npos);
    CHECK(msg.find("1") != std::string::npos);
  }
  CHECK(threw);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt and truncated files report offsets") {
  const Checkpoint ck = make_checkpoint(14);
  const auto path = temp_file("rg_ck_bad.rgck");
  save_checkpoint(ck, path.string());
  auto bytes = slurp(path);
  bytes.resize(bytes.size() - 17);
  std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());

  bool threw = false;
  try {
    load_checkpoint(path.string());
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  CHECK(threw);

  bytes[0] = 'Z';
  std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
  CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("architecture mismatch names the first differing layer") {
  const Checkpoint ck = make_checkpoint(15);
  CHECK(architecture_mismatch(ck, ck.net, ck.heads).empty());

  RGNetwork other = RGNetwork::build(
      {1, 8, 8},
      {{.in_channels = 1, .out_channels = 3, .k_h = 3, .k_w = 3, .stride = 2,
        .pad_h = 1, .pad_w = 1, .nms_group = 2},
       {.in_channels = 3, .out_channels = 4, .k_h = 3, .k_w = 3, .stride = 1,
        .pad_h = 1, .pad_w = 1}});
  const int taps[] = {1};
  const HeadBank other_heads = HeadBank::build(other, 2, taps);
  const std::string msg = architecture_mismatch(ck, other, other_heads);
  CHECK(msg.find("layer 2") != std::string::npos);

  const HeadBank more_kp = HeadBank::build(ck.net, 3, taps);
  CHECK(architecture_mismatch(ck, ck.net, more_kp).find("keypoint") !=
        std::string::npos);
}
