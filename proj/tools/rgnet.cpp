// Command-line driver: dataset generation, training, inference, evaluation,
// gradient checking, and the dense QP solvers.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rg/checkpoint.hpp"
#include "rg/config.hpp"
#include "rg/data.hpp"
#include "rg/eval.hpp"
#include "rg/heads.hpp"
#include "rg/infer.hpp"
#include "rg/model.hpp"
#include "rg/pgm.hpp"
#include "rg/train.hpp"

namespace {

// Thrown for bad invocations (missing files, schema errors): exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path))
    throw UsageError(std::string(what) + " not found: " + path);
}

rg::FullConfig load_config_or_usage(const std::string& path) {
  require_file(path, "config");
  try {
    return rg::load_config(path);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
}

struct Options {
  std::uint64_t seed = 0;
  bool seed_set = false;
  int k = 2;
  bool k_set = false;
  std::string config_path;
};

int cmd_gen_data(const Options& opt, std::uint32_t n, std::uint32_t size,
                 std::uint32_t keypoints, double occlusion, double ambiguity,
                 double noise, const std::string& out,
                 const std::string& manifest_dir) {
  rg::DatasetSpec spec;
  spec.n_samples = n;
  spec.image_size = size;
  spec.n_keypoints = keypoints;
  spec.occlusion_rate = occlusion;
  spec.ambiguity = ambiguity;
  spec.noise_std = noise;
  spec.seed = opt.seed;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const rg::Dataset d = rg::generate_dataset(spec);
  rg::write_dataset(d, out);
  std::cout << "wrote " << d.samples.size() << " samples to " << out << "\n";
  if (!manifest_dir.empty()) {
    std::filesystem::create_directories(manifest_dir);
    rg::write_manifest(d, manifest_dir);
    std::cout << "wrote manifest to " << manifest_dir << "\n";
  }
  return 0;
}

int cmd_train(const Options& opt, const std::string& data_path,
              const std::string& out) {
  if (opt.config_path.empty())
    throw UsageError("train requires --config <file>");
  rg::FullConfig cfg = load_config_or_usage(opt.config_path);
  require_file(data_path, "dataset");
  if (opt.seed_set) cfg.train.seed = opt.seed;
  if (opt.k_set) cfg.train.k = opt.k;
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const rg::Dataset data = rg::load_dataset(data_path);
  rg::Model m = rg::build_model(cfg);
  rg::randomize_parameters(m.net, m.heads, cfg.train.seed);
  rg::train(data, m.net, m.heads, cfg.train, &std::cout);

  rg::Checkpoint ck;
  ck.net = std::move(m.net);
  ck.heads = std::move(m.heads);
  rg::save_checkpoint(ck, out);
  std::cout << "wrote checkpoint " << out << "\n";
  return 0;
}

int cmd_infer(const Options& opt, const std::string& ck_path,
              const std::string& image_path, const std::string& data_path,
              int index, double threshold, const std::string& out_dir) {
  require_file(ck_path, "checkpoint");
  const rg::Checkpoint ck = rg::load_checkpoint(ck_path);

  rg::Tensor image(1, 1, 1);
  if (!image_path.empty()) {
    require_file(image_path, "image");
    image = rg::read_pgm(image_path);
  } else if (!data_path.empty()) {
    require_file(data_path, "dataset");
    const rg::Dataset data = rg::load_dataset(data_path);
    if (index < 0 || index >= static_cast<int>(data.samples.size()))
      throw UsageError("sample index out of range: " + std::to_string(index));
    image = data.samples[static_cast<std::size_t>(index)].image;
  } else {
    throw UsageError("infer requires --image or --data");
  }
  if (image.dims() != ck.net.input_dims)
    throw UsageError("input dims do not match the checkpoint architecture");

  const rg::InferenceTrace trace = rg::qp_k(ck.net, image, opt.k);
  const rg::Tensor logits = rg::predict_heads(ck.heads, ck.net, trace);

  std::filesystem::create_directories(out_dir);
  const auto preds =
      rg::extract_keypoints(logits, image.height, image.width);
  std::ofstream report(out_dir + "/report.txt");
  if (!report) throw std::runtime_error("cannot open " + out_dir + "/report.txt");
  for (int m = 0; m < logits.channels; ++m) {
    rg::Tensor heat(1, logits.height, logits.width);
    for (int y = 0; y < logits.height; ++y)
      for (int x = 0; x < logits.width; ++x)
        heat.at(0, y, x) = rg::sigmoid(logits.at(m, y, x));
    char name[64];
    std::snprintf(name, sizeof(name), "heatmap_%02d.pgm", m);
    rg::write_pgm(out_dir + "/" + name, heat);

    char line[160];
    std::snprintf(line, sizeof(line), "%d %.4f %.4f %.6f %d\n", m,
                  preds[m].x, preds[m].y, preds[m].confidence,
                  preds[m].confidence >= threshold ? 1 : 0);
    report << line;
  }
  std::cout << "wrote " << logits.channels << " heatmaps and report.txt to "
            << out_dir << "\n";
  return 0;
}

int cmd_eval(const Options& opt, const std::string& ck_path,
             const std::string& data_path, double alpha, bool pck_only) {
  require_file(ck_path, "checkpoint");
  require_file(data_path, "dataset");
  const rg::Checkpoint ck = rg::load_checkpoint(ck_path);
  const rg::Dataset data = rg::load_dataset(data_path);
  if (data.samples.empty()) throw UsageError("dataset is empty");
  const int M = ck.heads.num_keypoints;

  std::vector<double> pred_xy, gt_xy, confidences;
  std::vector<std::uint8_t> visible, labels;
  for (const rg::Sample& s : data.samples) {
    if (s.image.dims() != ck.net.input_dims)
      throw UsageError("sample dims do not match the checkpoint architecture");
    const rg::InferenceTrace trace = rg::qp_k(ck.net, s.image, opt.k);
    const rg::Tensor logits = rg::predict_heads(ck.heads, ck.net, trace);
    const auto preds =
        rg::extract_keypoints(logits, s.image.height, s.image.width);
    for (int m = 0; m < M; ++m) {
      pred_xy.push_back(preds[m].x);
      pred_xy.push_back(preds[m].y);
      gt_xy.push_back(s.keypoints[2 * m]);
      gt_xy.push_back(s.keypoints[2 * m + 1]);
      visible.push_back(s.visibility[m]);
      confidences.push_back(preds[m].confidence);
      labels.push_back(s.visibility[m]);
    }
  }

  const double ref = static_cast<double>(data.spec.image_size);
  char line[128];
  std::snprintf(line, sizeof(line), "pck@%.2f %.6f\n", alpha,
                rg::eval_pck(pred_xy, gt_xy, visible, alpha, ref));
  std::cout << line;
  for (int m = 0; m < M; ++m) {
    std::vector<double> p, g;
    std::vector<std::uint8_t> v;
    for (std::size_t i = m; i < visible.size(); i += M) {
      p.push_back(pred_xy[2 * i]);
      p.push_back(pred_xy[2 * i + 1]);
      g.push_back(gt_xy[2 * i]);
      g.push_back(gt_xy[2 * i + 1]);
      v.push_back(visible[i]);
    }
    std::snprintf(line, sizeof(line), "pck_keypoint_%d %.6f\n", m,
                  rg::eval_pck(p, g, v, alpha, ref));
    std::cout << line;
  }
  if (!pck_only) {
    const rg::EvalReport pr = rg::eval_visibility_pr(confidences, labels);
    std::snprintf(line, sizeof(line), "recall_at_p80 %.6f\n", pr.recall_at_p80);
    std::cout << line;
  }
  return 0;
}

int cmd_check_grad(const Options& opt) {
  rg::RGNetwork net = rg::RGNetwork::build(
      {1, 6, 6},
      {{.in_channels = 1, .out_channels = 2, .k_h = 3, .k_w = 3, .stride = 2,
        .pad_h = 1, .pad_w = 1},
       {.in_channels = 2, .out_channels = 2, .k_h = 3, .k_w = 3, .stride = 1,
        .pad_h = 1, .pad_w = 1}});
  const int taps[] = {1};
  rg::HeadBank heads = rg::HeadBank::build(net, 2, taps);

  std::mt19937_64 rng(opt.seed + 1);
  std::uniform_real_distribution<double> pos(0.05, 0.4), uni(-0.5, 0.5);
  for (rg::FilterBank& f : net.filters)
    for (double& v : f.data) v = pos(rng);
  for (auto& b : net.biases)
    for (double& v : b) v = pos(rng);
  for (double& v : heads.coarse_weights) v = uni(rng);
  for (double& v : heads.coarse_bias) v = uni(rng);
  for (double& v : heads.taps[0].filter.data) v = uni(rng);

  rg::Tensor image(1, 6, 6);
  for (double& v : image.data) v = pos(rng);
  const rg::Dims pd = rg::prediction_dims(heads, net, -1);
  rg::Tensor target(pd);
  for (double& v : target.data) v = (rng() % 2) ? 1.0 : 0.0;
  std::vector<rg::TrainingExample> batch{{&image, target, {1, 1}}};

  bool ok = true;
  for (int k : {1, 2, 3}) {
    const double err = rg::finite_diff_check(net, heads, batch, k, 1e-5);
    char line[64];
    std::snprintf(line, sizeof(line), "k=%d max_rel_error %.3e\n", k, err);
    std::cout << line;
    ok = ok && err < 1e-3;
  }
  std::cout << (ok ? "PASS\n" : "FAIL\n");
  return ok ? 0 : 1;
}

rg::DenseQP read_qp_file(const std::string& path) {
  require_file(path, "qp file");
  std::ifstream f(path);
  rg::DenseQP qp;
  std::string line;
  int row = 0;
  bool have_n = false;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string head;
    if (!(ss >> head) || head[0] == '#') continue;
    if (!have_n) {
      qp.n = std::stoi(head);
      if (qp.n <= 0) throw UsageError(path + ": n must be positive");
      qp.W.assign(static_cast<std::size_t>(qp.n) * qp.n, 0.0);
      have_n = true;
    } else if (head == "b") {
      qp.b.clear();
      double v;
      while (ss >> v) qp.b.push_back(v);
      if (static_cast<int>(qp.b.size()) != qp.n)
        throw UsageError(path + ": b needs " + std::to_string(qp.n) +
                         " entries");
    } else if (head == "group") {
      std::vector<int> g;
      int i;
      while (ss >> i) g.push_back(i);
      qp.groups.push_back(std::move(g));
    } else {
      if (row >= qp.n) throw UsageError(path + ": too many matrix rows");
      qp.w(row, 0) = std::stod(head);
      for (int j = 1; j < qp.n; ++j)
        if (!(ss >> qp.w(row, j)))
          throw UsageError(path + ": short matrix row " + std::to_string(row));
      ++row;
    }
  }
  if (!have_n || row != qp.n)
    throw UsageError(path + ": expected n then " + std::to_string(qp.n) +
                     " matrix rows");
  if (qp.b.empty()) qp.b.assign(qp.n, 0.0);
  return qp;
}

int cmd_solve_qp(const std::string& input, const std::string& method,
                 int resolution, double step, int iters, int sweeps,
                 double tol) {
  const rg::DenseQP qp = read_qp_file(input);
  char line[64];
  if (method == "cd") {
    const rg::DenseCDResult r = rg::dense_coordinate_descent(qp, sweeps, tol);
    std::cout << "sweeps " << r.sweeps << "\nconverged "
              << (r.converged ? 1 : 0) << "\ndiverged " << (r.diverged ? 1 : 0)
              << "\nz";
    for (double v : r.z) {
      std::snprintf(line, sizeof(line), " %.10g", v);
      std::cout << line;
    }
    std::cout << "\n";
    return r.diverged ? 1 : 0;
  }
  if (method == "pg") {
    const auto z = rg::projected_gradient(qp, step, iters);
    std::cout << "z";
    for (double v : z) {
      std::snprintf(line, sizeof(line), " %.10g", v);
      std::cout << line;
    }
    std::cout << "\n";
    return 0;
  }
  if (method == "copositive") {
    // checks -W, the normalizability condition for the energy
    std::vector<double> negW(qp.W.size());
    for (std::size_t i = 0; i < negW.size(); ++i) negW[i] = -qp.W[i];
    const rg::CopositiveVerdict v =
        rg::check_copositive_grid(qp.n, negW, resolution);
    if (v.copositive_on_grid) {
      std::cout << "copositive_on_grid resolution=" << resolution << "\n";
    } else {
      std::cout << "counterexample value " << v.value << " at";
      for (double c : v.counterexample) {
        std::snprintf(line, sizeof(line), " %.10g", c);
        std::cout << line;
      }
      std::cout << "\n";
    }
    return 0;
  }
  throw UsageError("unknown method " + method + " (cd, pg, copositive)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical rectified Gaussian keypoint models"};
  app.require_subcommand(1);

  Options opt;
  auto* seed_opt = app.add_option("--seed", opt.seed, "random seed");
  auto* k_opt = app.add_option("--k", opt.k, "coordinate-descent passes");
  app.add_option("--config", opt.config_path, "model/training config file");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::uint32_t n = 0, size = 56, keypoints = 5;
  double occlusion = 0.0, ambiguity = 1.0, noise = 0.0;
  std::string out, manifest_dir;
  gen->add_option("--n", n, "sample count")->required();
  gen->add_option("--size", size, "image side length");
  gen->add_option("--keypoints", keypoints, "keypoint count (1-5)");
  gen->add_option("--occlusion", occlusion, "per-keypoint occlusion rate");
  gen->add_option("--ambiguity", ambiguity, "mirrored-limb ambiguity rate");
  gen->add_option("--noise", noise, "pixel noise stddev");
  gen->add_option("--out", out, "output RGDS file")->required();
  gen->add_option("--manifest", manifest_dir, "also write PGMs + manifest");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string data_path, ck_out;
  train_cmd->add_option("--data", data_path, "training RGDS file")->required();
  train_cmd->add_option("--out", ck_out, "output checkpoint")->required();

  auto* infer = app.add_subcommand("infer", "heatmaps + keypoint report");
  std::string ck_path, image_path, infer_data, out_dir;
  int index = 0;
  double threshold = 0.5;
  infer->add_option("--checkpoint", ck_path, "model checkpoint")->required();
  infer->add_option("--image", image_path, "input PGM image");
  infer->add_option("--data", infer_data, "RGDS file to read a sample from");
  infer->add_option("--index", index, "sample index within --data");
  infer->add_option("--threshold", threshold, "visibility threshold");
  infer->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "PCK and visibility metrics");
  std::string eval_ck, eval_data;
  double alpha = 0.1;
  bool pck_only = false;
  eval->add_option("--checkpoint", eval_ck, "model checkpoint")->required();
  eval->add_option("--data", eval_data, "RGDS test set")->required();
  eval->add_option("--alpha", alpha, "PCK threshold fraction");
  eval->add_flag("--pck-only", pck_only, "skip visibility metrics");

  auto* grad = app.add_subcommand("check-grad", "finite-difference check");

  auto* solve = app.add_subcommand("solve-qp", "dense solvers / copositivity");
  std::string qp_input, method = "cd";
  int resolution = 4, iters = 1000, sweeps = 1000;
  double step = 0.1, tol = 1e-8;
  solve->add_option("--input", qp_input, "QP text file")->required();
  solve->add_option("--method", method, "cd | pg | copositive");
  solve->add_option("--resolution", resolution, "copositivity grid resolution");
  solve->add_option("--step", step, "projected-gradient step");
  solve->add_option("--iters", iters, "projected-gradient iterations");
  solve->add_option("--sweeps", sweeps, "coordinate-descent sweep limit");
  solve->add_option("--tol", tol, "convergence tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  opt.seed_set = seed_opt->count() > 0;
  opt.k_set = k_opt->count() > 0;
  if (opt.k < 1) {
    std::cerr << "error: --k must be >= 1\n";
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(opt, n, size, keypoints, occlusion, ambiguity, noise,
                          out, manifest_dir);
    if (train_cmd->parsed()) return cmd_train(opt, data_path, ck_out);
    if (infer->parsed())
      return cmd_infer(opt, ck_path, image_path, infer_data, index, threshold,
                       out_dir);
    if (eval->parsed()) return cmd_eval(opt, eval_ck, eval_data, alpha,
                                        pck_only);
    if (grad->parsed()) return cmd_check_grad(opt);
    if (solve->parsed())
      return cmd_solve_qp(qp_input, method, resolution, step, iters, sweeps,
                          tol);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
