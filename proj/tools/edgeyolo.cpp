#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "edgeyolo/analyzer/analyzer.hpp"
#include "edgeyolo/anchors/kmeans.hpp"
#include "edgeyolo/edgecloud/live.hpp"
#include "edgeyolo/edgecloud/sim.hpp"
#include "edgeyolo/image.hpp"
#include "edgeyolo/netdef/weights.hpp"
#include "edgeyolo/pipeline.hpp"
#include "edgeyolo/simd/kernels.hpp"
#include "edgeyolo/training/toy.hpp"

namespace fs = std::filesystem;
using namespace edgeyolo;

namespace {

struct ModelArgs {
  std::string config;
  std::string weights;
  std::string anchors;
};

void add_model_flags(CLI::App* cmd, ModelArgs& m, bool weights_required) {
  cmd->add_option("--config", m.config, "Network description file")->required()->check(CLI::ExistingFile);
  auto* w = cmd->add_option("--weights", m.weights, "Weights file (EYWT)");
  if (weights_required) w->required();
  cmd->add_option("--anchors", m.anchors,
                  "Anchor file, one \"w h\" pair per line (default: built-in 18 priors, or "
                  "<config stem>.anchors when present)");
}

/// Graph from the config, anchors from --anchors, a sibling .anchors file,
/// or the built-in set.
netdef::Model<float> load_model(const ModelArgs& a) {
  netdef::Graph g = netdef::load_config(a.config);
  const int scales = static_cast<int>(g.head_layers().size());
  fs::path anchors = a.anchors;
  if (anchors.empty()) {
    const fs::path sibling = fs::path(a.config).replace_extension(".anchors");
    if (fs::exists(sibling)) anchors = sibling;
  }
  g.anchors = anchors.empty() ? default_anchors() : load_anchors(anchors, scales);
  if (g.anchors.per_scale() != g.anchors_per_scale) {
    throw std::runtime_error("anchor file has " + std::to_string(g.anchors.per_scale()) +
                             " priors per scale, the network expects " +
                             std::to_string(g.anchors_per_scale));
  }
  netdef::Model<float> m(std::move(g));
  if (!a.weights.empty()) {
    if (!fs::exists(a.weights)) throw std::runtime_error("weights file not found: " + a.weights);
    netdef::load_weights(m, fs::path(a.weights));
  } else {
    m.init_zero();
  }
  return m;
}

std::vector<fs::path> expand_images(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void check_range(double v, double lo, double hi, const char* name) {
  if (!(v >= lo && v <= hi)) {
    throw std::runtime_error(std::string(name) + " must lie in [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "]");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge YOLO detector, analyzer, trainer and edge-cloud simulator"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // detect
  ModelArgs det_model;
  std::vector<std::string> det_images;
  std::string det_out = "detections.jsonl";
  std::string det_draw;
  post::SoftNmsConfig det_nms;
  auto* detect = app.add_subcommand("detect", "Detect objects in PPM images");
  add_model_flags(detect, det_model, true);
  detect->add_option("--images", det_images, "Image files or directories of .ppm files")->required();
  detect->add_option("--out", det_out, "Detection JSON-lines output");
  detect->add_option("--draw-dir", det_draw, "Write copies with box outlines here");
  detect->add_option("--conf", det_nms.score_floor, "Score floor for decoding and Soft-NMS");
  detect->add_option("--nms", det_nms.t_nms, "Soft-NMS IoU threshold");
  detect->add_option("--sigma", det_nms.sigma, "Soft-NMS Gaussian width");

  // bench
  ModelArgs bench_model;
  int bench_warmup = 3, bench_runs = 20;
  std::uint64_t bench_seed = 1;
  bool bench_toy = false;
  auto* bench = app.add_subcommand("bench", "Time forward passes");
  bench->add_option("--config", bench_model.config, "Network description file")->check(CLI::ExistingFile);
  bench->add_option("--weights", bench_model.weights, "Weights file (default: zero weights)");
  bench->add_option("--anchors", bench_model.anchors, "Anchor file");
  bench->add_flag("--toy", bench_toy, "Bench the reduced 64x64 toy network instead of --config");
  bench->add_option("--warmup", bench_warmup, "Untimed passes")->check(CLI::PositiveNumber);
  bench->add_option("--runs", bench_runs, "Timed passes")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed, "Seed of the random input");

  // analyze
  std::string an_config, an_golden, an_csv;
  auto* analyze = app.add_subcommand("analyze", "Per-layer shapes, parameters and BFLOPS");
  analyze->add_option("--config", an_config, "Network description file")->required()->check(CLI::ExistingFile);
  analyze->add_option("--golden", an_golden, "Golden CSV to diff against")->check(CLI::ExistingFile);
  analyze->add_option("--csv", an_csv, "Write the per-layer table as CSV");

  // anchors
  std::string anc_labels, anc_out = "anchors.txt";
  anchors::KMeansOptions anc_opts;
  int anc_scales = 3;
  std::string anc_metric = "euclidean";
  auto* anc = app.add_subcommand("anchors", "Fit anchor priors with k-means");
  anc->add_option("--labels", anc_labels, "Label CSV: image,class,cx,cy,w,h (pixels)")
      ->required()->check(CLI::ExistingFile);
  anc->add_option("--k", anc_opts.k, "Number of anchors")->check(CLI::PositiveNumber);
  anc->add_option("--seed", anc_opts.seed, "Seed for the initial centroids");
  anc->add_option("--max-iter", anc_opts.max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  anc->add_option("--metric", anc_metric, "Distance")->check(CLI::IsMember({"euclidean", "iou"}));
  anc->add_option("--input-size", anc_opts.norm_w, "Normalizing extent in pixels");
  anc->add_option("--scales", anc_scales, "Output scales sharing the anchors")->check(CLI::PositiveNumber);
  anc->add_option("--out", anc_out, "Anchor file to write");

  // train-toy
  training::ToyConfig toy;
  std::string toy_out = "toy.eywt", toy_history = "history.csv";
  auto* train = app.add_subcommand("train-toy", "Train the reduced detector on synthetic shapes");
  train->add_option("--seed", toy.seed, "Seed for init, anchors, data and evaluation");
  train->add_option("--steps", toy.steps, "SGD steps")->check(CLI::NonNegativeNumber);
  train->add_option("--batch", toy.batch, "Images per step")->check(CLI::PositiveNumber);
  train->add_option("--eta", toy.eta, "Learning rate");
  train->add_option("--eval-every", toy.eval_every, "Steps between held-out evaluations")
      ->check(CLI::PositiveNumber);
  train->add_option("--eval-images", toy.eval_images, "Held-out images")->check(CLI::PositiveNumber);
  train->add_option("--out", toy_out,
                    "Weights output; the network and anchors are written next to it as .net and .anchors");
  train->add_option("--history", toy_history, "Loss/mAP history CSV");

  // sim
  std::string sim_path = "ecc", sim_profile, sim_edge = "xavier", sim_trace, sim_sweep;
  edgecloud::Scenario sim;
  auto* simc = app.add_subcommand("sim", "Discrete-event edge-cloud latency simulation");
  simc->add_option("--path", sim_path, "Pipeline")->check(CLI::IsMember({"ecc", "cloud"}));
  simc->add_option("--frames", sim.n_frames, "Captured frames")->check(CLI::NonNegativeNumber);
  simc->add_option("--seed", sim.seed, "Seed for loss and jitter draws");
  simc->add_option("--edge", sim_edge, "Built-in edge profile")->check(CLI::IsMember({"xavier", "nano"}));
  simc->add_option("--net-profile", sim_profile, "Profile JSON (edge fields and a \"network\" block)")
      ->check(CLI::ExistingFile);
  simc->add_option("--loss-rate", sim.net.loss_rate, "Transfer loss probability");
  simc->add_option("--jitter", sim.net.jitter_s, "Maximum extra transfer delay (s)");
  simc->add_option("--retrain-every", sim.retrain_every, "Uploads per cloud retrain")->check(CLI::PositiveNumber);
  simc->add_option("--trace", sim_trace, "Event trace CSV");
  simc->add_option("--sweep", sim_sweep,
                   "Write mean delay for 1..frames uploaded pictures (cloud, xavier, nano) as CSV");

  // edge / cloud
  std::string host = "127.0.0.1";
  int port = 7878;
  edgecloud::EdgeConfig edge_cfg;
  std::string edge_weights;
  std::uint64_t live_seed = 1;
  auto* edge = app.add_subcommand("edge", "Live edge node: detect, queue, upload while idle");
  edge->add_option("--host", host, "Cloud host");
  edge->add_option("--port", port, "Cloud port");
  edge->add_option("--frames", edge_cfg.frames, "Synthetic frames to capture")->check(CLI::NonNegativeNumber);
  edge->add_option("--active-frames", edge_cfg.active_frames, "Frames per ACTIVE phase")
      ->check(CLI::PositiveNumber);
  edge->add_flag("--remote-detect", edge_cfg.remote_detect, "Also ask the cloud to detect every frame");
  edge->add_option("--model-seed", live_seed, "Toy network seed (must match the cloud)");
  edge->add_option("--weights", edge_weights, "Initial weights for the toy network");
  edge->add_option("--seed", edge_cfg.seed, "Seed of the synthetic camera");

  edgecloud::CloudConfig cloud_cfg;
  int cloud_connections = 1;
  std::string cloud_weights;
  auto* cloud = app.add_subcommand("cloud", "Live cloud node: store uploads, retrain, push weights");
  cloud->add_option("--host", host, "Listen address");
  cloud->add_option("--port", port, "Listen port (0 picks a free one)");
  cloud->add_option("--retrain-every", cloud_cfg.retrain_every, "New frames per retrain")
      ->check(CLI::PositiveNumber);
  cloud->add_option("--steps-per-retrain", cloud_cfg.steps_per_retrain, "SGD steps per retrain")
      ->check(CLI::PositiveNumber);
  cloud->add_option("--batch", cloud_cfg.batch, "Images per retrain step")->check(CLI::PositiveNumber);
  cloud->add_option("--eta", cloud_cfg.eta, "Retrain learning rate");
  cloud->add_option("--model-seed", live_seed, "Toy network seed (must match the edge)");
  cloud->add_option("--weights", cloud_weights, "Initial weights for the toy network");
  cloud->add_option("--connections", cloud_connections, "Connections to serve, 0 for no limit")
      ->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*detect) {
      check_range(det_nms.score_floor, 0.0, 1.0, "--conf");
      check_range(det_nms.t_nms, 0.0, 1.0, "--nms");
      if (!(det_nms.sigma > 0)) throw std::runtime_error("--sigma must be positive");
      const netdef::Model<float> model = load_model(det_model);
      const auto images = expand_images(det_images);
      auto out = open_out(det_out);
      int done = 0;
      for (const fs::path& p : images) {
        Image img;
        try {
          img = read_ppm(p);
        } catch (const ImageError& e) {
          std::cerr << "warning: skipping " << e.what() << '\n';
          continue;
        }
        const auto dets = detect_image(model, img, det_nms);
        post::write_jsonl(out, p.filename().string(), dets);
        if (!det_draw.empty()) {
          for (const auto& d : dets) draw_box(img, d.box, class_color(d.class_id));
          fs::create_directories(det_draw);
          write_ppm(img, fs::path(det_draw) / p.filename());
        }
        std::cout << p.filename().string() << ": " << dets.size() << " detections\n";
        ++done;
      }
      if (done == 0) throw std::runtime_error("no readable images");
      return 0;
    }

    if (*bench) {
      netdef::Model<float> model;
      if (bench_toy) {
        model = training::make_toy_model(training::ToyConfig{});
        model.init_random(bench_seed);
      } else if (!bench_model.config.empty()) {
        model = load_model(bench_model);
      } else {
        throw std::runtime_error("bench needs --config or --toy");
      }
      const BenchReport r = bench_forward(model, bench_warmup, bench_runs, bench_seed);
      std::printf("kernels %s, input %dx%d, %d runs after %d warmup\n",
                  std::string(simd::isa_name(simd::active_isa())).c_str(), model.graph().in_w,
                  model.graph().in_h, r.runs, bench_warmup);
      std::printf("mean %.6f s  median %.6f s", r.mean_s, r.median_s);
      if (r.stddev_s) std::printf("  stddev %.6f s  p95 %.6f s", *r.stddev_s, *r.p95_s);
      std::printf("  fps %.2f\n", r.fps);
      return 0;
    }

    if (*analyze) {
      const auto report = analyzer::analyze(netdef::load_config(an_config));
      std::cout << analyzer::format_text(report);
      if (!an_csv.empty()) open_out(an_csv) << analyzer::format_csv(report);
      if (!an_golden.empty()) {
        const auto diff = analyzer::diff_golden(report, analyzer::load_golden(an_golden));
        std::cout << analyzer::format_diff(diff);
        return diff.ok() ? 0 : 1;
      }
      return 0;
    }

    if (*anc) {
      anc_opts.norm_h = anc_opts.norm_w;
      anc_opts.metric = anc_metric == "iou" ? anchors::Metric::Iou : anchors::Metric::Euclidean;
      const auto r = anchors::kmeans_anchors(anchors::load_label_extents(anc_labels), anc_opts);
      const AnchorSet set = r.anchor_set(anc_scales);
      const std::string text = format_anchors(set);
      std::cout << text;
      std::printf("# %d iterations, %s, distortion %.9g\n", r.iterations,
                  r.converged ? "converged" : "iteration cap reached", r.history.back());
      open_out(anc_out) << text;
      return 0;
    }

    if (*train) {
      const auto result = training::train_toy(toy, [](const training::HistoryRow& row) {
        if (row.map) {
          std::printf("step %5d  loss %.4f  mAP@0.5 %.4f\n", row.step, row.loss.total, *row.map);
          std::fflush(stdout);
        }
      });
      if (!toy_history.empty()) {
        auto h = open_out(toy_history);
        training::write_history_csv(h, result.history);
      }
      const fs::path out(toy_out);
      netdef::save_weights(result.model, out);
      fs::path net = out;
      open_out(net.replace_extension(".net")) << netdef::canonical_text(result.model.graph());
      fs::path anchors = out;
      open_out(anchors.replace_extension(".anchors")) << format_anchors(result.model.graph().anchors);
      std::printf("initial loss %.4f  final loss %.4f (%.1f%%)  mAP@0.5 %.4f\n", result.initial_loss,
                  result.final_loss, 100.0 * result.final_loss / result.initial_loss, result.final_map);
      if (result.diverged) {
        std::cerr << "error: " << result.message << '\n';
        return 1;
      }
      return 0;
    }

    if (*simc) {
      if (!sim_profile.empty()) {
        const edgecloud::Profile p = edgecloud::load_profile(sim_profile);
        const auto loss = sim.net.loss_rate, jitter = sim.net.jitter_s;
        sim.edge = p.edge;
        sim.net = p.net;
        if (simc->count("--loss-rate")) sim.net.loss_rate = loss;
        if (simc->count("--jitter")) sim.net.jitter_s = jitter;
      } else {
        sim.edge = sim_edge == "nano" ? edgecloud::nano_profile() : edgecloud::xavier_profile();
      }
      sim.path = sim_path == "cloud" ? edgecloud::SimPath::Cloud : edgecloud::SimPath::Ecc;
      const edgecloud::SimTrace t = edgecloud::run_sim(sim);
      std::printf("%s path, edge %s, %d frames: mean delay %.6f s, p95 %.6f s, uploaded %d, edge weights v%d\n",
                  sim_path.c_str(), sim.edge.name.c_str(), sim.n_frames, t.mean_delay(), t.p95_delay(),
                  t.uploaded, t.edge_version);
      if (!sim_trace.empty()) {
        auto out = open_out(sim_trace);
        edgecloud::write_trace_csv(out, t);
      }
      if (!sim_sweep.empty()) {
        auto out = open_out(sim_sweep);
        out << "pictures,cloud_mean_s,ecc_xavier_mean_s,ecc_nano_mean_s\n";
        for (int n = 1; n <= sim.n_frames; ++n) {
          edgecloud::Scenario s = sim;
          s.n_frames = n;
          s.path = edgecloud::SimPath::Cloud;
          const double c = edgecloud::run_sim(s).mean_delay();
          s.path = edgecloud::SimPath::Ecc;
          s.edge = edgecloud::xavier_profile();
          const double x = edgecloud::run_sim(s).mean_delay();
          s.edge = edgecloud::nano_profile();
          const double nn = edgecloud::run_sim(s).mean_delay();
          char line[128];
          std::snprintf(line, sizeof line, "%d,%.9f,%.9f,%.9f\n", n, c, x, nn);
          out << line;
        }
      }
      return 0;
    }

    const auto live_model = [&](const std::string& weights) {
      training::ToyConfig cfg;
      cfg.seed = live_seed;
      netdef::Model<float> m = training::make_toy_model(cfg);
      if (!weights.empty()) netdef::load_weights(m, fs::path(weights));
      return m;
    };

    if (*edge) {
      edgecloud::EdgeNode node(live_model(edge_weights), edge_cfg);
      const auto stats = node.run([&] { return edgecloud::tcp_connect(host, static_cast<std::uint16_t>(port)); });
      for (const auto& line : node.log()) std::cout << line << '\n';
      std::printf("frames %d  acked %d  weights v%u (applied %d, stale %d, bad %d)  checksum errors %d  "
                  "reconnects %d  remote results %d\n",
                  stats.frames, stats.acked, node.version(), stats.applied, stats.stale_pushes,
                  stats.bad_pushes, stats.checksum_errors, stats.reconnects, stats.remote_results);
      return 0;
    }

    if (*cloud) {
      edgecloud::CloudNode node(live_model(cloud_weights), cloud_cfg);
      edgecloud::TcpListener listener(static_cast<std::uint16_t>(port), host);
      std::printf("listening on %s:%u\n", host.c_str(), listener.port());
      std::fflush(stdout);
      for (int served = 0; cloud_connections == 0 || served < cloud_connections; ++served) {
        node.serve(listener.accept());
      }
      const auto s = node.stats();
      std::printf("frames %d  duplicates %d  retrains %d (failed %d)  weights v%u  detections %d  "
                  "checksum errors %d\n",
                  s.frames, s.duplicates, s.retrains, s.failed_retrains, node.version(), s.detections,
                  s.checksum_errors);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
