// stqe: batch CLI for attribute quality enhancement of compressed dynamic
// point clouds. Subcommands: recolor, enhance, train, eval, analyze,
// knn-check, describe-checkpoint.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "stqe/analysis.hpp"
#include "stqe/checkpoint.hpp"
#include "stqe/kernels.hpp"
#include "stqe/metrics.hpp"
#include "stqe/pipeline.hpp"
#include "stqe/rmc.hpp"
#include "stqe/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stqe;

namespace {

json json_psnr(double v) {
  if (std::isinf(v)) return json("inf");
  return json(v);
}

PlyWriteOptions write_options(const std::string& encoding,
                              const std::string& color_mode) {
  PlyWriteOptions opts;
  if (encoding == "ascii") opts.encoding = PlyEncoding::ascii;
  else if (encoding == "binary") opts.encoding = PlyEncoding::binary_little_endian;
  else throw Error("unknown encoding '" + encoding + "' (ascii|binary)");
  if (color_mode == "ycbcr") opts.color_mode = PlyColorMode::ycbcr_float;
  else if (color_mode == "rgb8") opts.color_mode = PlyColorMode::rgb8;
  else throw Error("unknown color mode '" + color_mode + "' (ycbcr|rgb8)");
  return opts;
}

std::vector<PointCloud> read_frames(const std::string& dir) {
  std::vector<PointCloud> frames;
  for (const std::string& f : list_ply_files(dir)) frames.push_back(read_ply(f));
  if (frames.empty()) throw Error(dir + ": no .ply frames found");
  return frames;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(path + ": cannot open file for writing");
  out << j.dump(2) << "\n";
  if (!out) throw Error(path + ": I/O failure while writing");
}

// ----------------------------------------------------------- recolor ------

struct RecolorArgs {
  std::string current, reference, out, provenance;
  std::string encoding = "binary", color_mode = "ycbcr";
};

int cmd_recolor(const RecolorArgs& a) {
  const PointCloud cur = read_ply(a.current);
  const PointCloud ref = read_ply(a.reference);
  const VirtualReferenceFrame vref = recolor(cur, ref);
  write_ply(vref.cloud, a.out, write_options(a.encoding, a.color_mode));
  if (!a.provenance.empty()) {
    std::ofstream out(a.provenance);
    if (!out) throw Error(a.provenance + ": cannot open file for writing");
    for (uint32_t c : vref.provenance) out << c << "\n";
  }
  std::cout << "recolored " << ref.size() << " reference points onto "
            << cur.size() << " current points -> " << a.out << "\n";
  return 0;
}

// ----------------------------------------------------------- enhance ------

struct EnhanceArgs {
  std::string model, input_dir, prev, cur, next, out, log, component;
  std::size_t patch_size = 2048;
  std::string encoding = "binary", color_mode = "ycbcr";
};

int cmd_enhance(const EnhanceArgs& a) {
  ModelParams<float> params = load_checkpoint(a.model);
  if (!a.component.empty() &&
      component_from_name(a.component) != params.component)
    throw Error("checkpoint is for component " +
                std::string(component_name(params.component)) +
                ", requested " + a.component);
  const PlyWriteOptions wopts = write_options(a.encoding, a.color_mode);
  json log = json::array();

  if (!a.input_dir.empty()) {
    const std::vector<std::string> files = list_ply_files(a.input_dir);
    std::vector<PointCloud> frames;
    for (const std::string& f : files) frames.push_back(read_ply(f));
    if (frames.empty()) throw Error(a.input_dir + ": no .ply frames found");
    const std::vector<EnhancedFrame> enhanced =
        enhance_sequence(frames, params.component, params, a.patch_size);
    fs::create_directories(a.out);
    for (std::size_t t = 0; t < enhanced.size(); ++t) {
      const std::string name = fs::path(files[t]).filename().string();
      const std::string out_path = (fs::path(a.out) / name).string();
      write_ply(enhanced[t].cloud, out_path, wopts);
      double rmax = 0.0, rsum = 0.0;
      for (float r : enhanced[t].residual) {
        rmax = std::max(rmax, std::abs(double(r)));
        rsum += double(r);
      }
      log.push_back({{"frame", t},
                     {"file", name},
                     {"points", enhanced[t].cloud.size()},
                     {"residual_mean", rsum / double(enhanced[t].residual.size())},
                     {"residual_max_abs", rmax}});
      std::cout << "frame " << t << ": " << out_path << "\n";
    }
  } else {
    if (a.prev.empty() || a.cur.empty() || a.next.empty())
      throw Error("enhance: provide --input-dir or all of --prev/--cur/--next");
    FrameTriplet triplet;
    triplet.prev = read_ply(a.prev);
    triplet.cur = read_ply(a.cur);
    triplet.next = read_ply(a.next);
    const EnhancedFrame enhanced =
        enhance_triplet(triplet, params.component, params, a.patch_size);
    write_ply(enhanced.cloud, a.out, wopts);
    log.push_back({{"file", a.out}, {"points", enhanced.cloud.size()}});
    std::cout << "enhanced frame -> " << a.out << "\n";
  }
  if (!a.log.empty())
    write_json(a.log, {{"component", component_name(params.component)},
                       {"patch_size", a.patch_size},
                       {"frames", log}});
  return 0;
}

// ------------------------------------------------------------- train ------

struct TrainArgs {
  std::string manifest, config, out, log;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr, alpha;
  std::optional<std::size_t> patch_size;
  std::optional<uint64_t> seed;
};

void apply_json_config(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open config");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
  if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
  if (j.contains("beta1")) cfg.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) cfg.beta2 = j["beta2"].get<double>();
  if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
  if (j.contains("patch_size")) cfg.patch_size = j["patch_size"].get<std::size_t>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("network")) {
    const json& n = j["network"];
    NetworkConfig& net = cfg.network;
    if (n.contains("k")) net.k = n["k"].get<int>();
    if (n.contains("sigma2")) net.sigma2 = n["sigma2"].get<double>();
    if (n.contains("leaky_slope")) net.leaky_slope = n["leaky_slope"].get<double>();
    if (n.contains("squared_kernel")) net.squared_kernel = n["squared_kernel"].get<bool>();
    if (n.contains("shared_branch")) net.shared_branch = n["shared_branch"].get<bool>();
    if (n.contains("gnfa_width")) net.gnfa_width = n["gnfa_width"].get<int>();
    auto widths = [&](const char* key, auto& arr) {
      if (!n.contains(key)) return;
      const auto v = n[key].get<std::vector<int>>();
      if (v.size() != arr.size())
        throw Error(std::string(key) + " must have " + std::to_string(arr.size()) +
                    " entries");
      std::copy(v.begin(), v.end(), arr.begin());
    };
    widths("branch_widths", net.branch_widths);
    widths("merge_widths", net.merge_widths);
    widths("stf_widths", net.stf_widths);
  }
}

json effective_config(const TrainConfig& cfg, Component component) {
  return {{"component", component_name(component)},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"alpha", cfg.alpha},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon},
          {"patch_size", cfg.patch_size},
          {"seed", cfg.seed},
          {"network",
           {{"k", cfg.network.k},
            {"sigma2", cfg.network.sigma2},
            {"leaky_slope", cfg.network.leaky_slope},
            {"squared_kernel", cfg.network.squared_kernel},
            {"shared_branch", cfg.network.shared_branch},
            {"branch_widths", cfg.network.branch_widths},
            {"merge_widths", cfg.network.merge_widths},
            {"gnfa_width", cfg.network.gnfa_width},
            {"stf_widths", cfg.network.stf_widths}}}};
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) apply_json_config(cfg, a.config);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.alpha) cfg.alpha = *a.alpha;
  if (a.patch_size) cfg.patch_size = *a.patch_size;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  const Manifest manifest = load_manifest(a.manifest);
  const std::vector<TrainSample> samples = load_samples(manifest);
  std::cout << "training " << component_name(manifest.component) << " on "
            << samples.size() << " sample(s), kernel backend "
            << kernels::backend_name(kernels::active_backend()) << "\n";

  TrainResult result = train(samples, manifest.component, cfg);
  save_checkpoint(a.out, result.params);

  json history = json::array();
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    history.push_back({{"epoch", e + 1}, {"joint_loss", result.epoch_loss[e]}});
  const json log = {{"config", effective_config(cfg, manifest.component)},
                    {"patches", result.patch_count},
                    {"degenerate_pcc_patches", result.degenerate_patches},
                    {"parameters", result.params.parameter_count()},
                    {"history", history},
                    {"checkpoint", a.out}};
  if (!a.log.empty()) write_json(a.log, log);
  std::cout << "final joint loss " << result.epoch_loss.back() << " -> " << a.out
            << "\n";
  return 0;
}

// -------------------------------------------------------------- eval ------

struct EvalArgs {
  std::string enhanced, anchor, original, rates, out;
};

json frames_json(const SequenceEval& ev) {
  json frames = json::array();
  for (std::size_t f = 0; f < ev.frames.size(); ++f) {
    const FramePsnr& fp = ev.frames[f];
    frames.push_back(
        {{"frame", f},
         {"enhanced", {{"y", json_psnr(fp.enhanced[0])},
                       {"cb", json_psnr(fp.enhanced[1])},
                       {"cr", json_psnr(fp.enhanced[2])},
                       {"ycbcr", json_psnr(fp.enhanced_ycbcr)}}},
         {"anchor", {{"y", json_psnr(fp.anchor[0])},
                     {"cb", json_psnr(fp.anchor[1])},
                     {"cr", json_psnr(fp.anchor[2])},
                     {"ycbcr", json_psnr(fp.anchor_ycbcr)}}},
         {"delta", {{"y", json_psnr(fp.delta[0])},
                    {"cb", json_psnr(fp.delta[1])},
                    {"cr", json_psnr(fp.delta[2])},
                    {"ycbcr", json_psnr(fp.delta_ycbcr)}}}});
  }
  return frames;
}

json mean_json(const FramePsnr& m) {
  return {{"enhanced", {{"y", json_psnr(m.enhanced[0])},
                        {"cb", json_psnr(m.enhanced[1])},
                        {"cr", json_psnr(m.enhanced[2])},
                        {"ycbcr", json_psnr(m.enhanced_ycbcr)}}},
          {"anchor", {{"y", json_psnr(m.anchor[0])},
                      {"cb", json_psnr(m.anchor[1])},
                      {"cr", json_psnr(m.anchor[2])},
                      {"ycbcr", json_psnr(m.anchor_ycbcr)}}},
          {"delta", {{"y", json_psnr(m.delta[0])},
                     {"cb", json_psnr(m.delta[1])},
                     {"cr", json_psnr(m.delta[2])},
                     {"ycbcr", json_psnr(m.delta_ycbcr)}}}};
}

int cmd_eval(const EvalArgs& a) {
  const std::vector<PointCloud> original = read_frames(a.original);
  json report;

  if (a.rates.empty()) {
    const SequenceEval ev = evaluate_sequence(read_frames(a.enhanced),
                                              read_frames(a.anchor), original);
    report = {{"frames", frames_json(ev)}, {"mean", mean_json(ev.mean)}};
  } else {
    std::ifstream in(a.rates);
    if (!in) throw Error(a.rates + ": cannot open rates file");
    json jr;
    try {
      in >> jr;
    } catch (const json::exception& e) {
      throw Error(a.rates + ": invalid JSON: " + e.what());
    }
    if (!jr.contains("rates") || !jr["rates"].is_array())
      throw Error(a.rates + ": expected a 'rates' array");

    json rates = json::array();
    std::array<RateDistortionCurve, 4> anchor_curves, test_curves;
    for (const auto& r : jr["rates"]) {
      const std::string name = r.at("name").get<std::string>();
      const double bpip = r.at("bpip").get<double>();
      const std::string sub =
          r.contains("subdir") ? r["subdir"].get<std::string>() : name;
      const SequenceEval ev = evaluate_sequence(
          read_frames((fs::path(a.enhanced) / sub).string()),
          read_frames((fs::path(a.anchor) / sub).string()), original);
      rates.push_back({{"name", name},
                       {"bpip", bpip},
                       {"mean", mean_json(ev.mean)},
                       {"frames", frames_json(ev)}});
      const double anchor_psnrs[4] = {ev.mean.anchor[0], ev.mean.anchor[1],
                                      ev.mean.anchor[2], ev.mean.anchor_ycbcr};
      const double test_psnrs[4] = {ev.mean.enhanced[0], ev.mean.enhanced[1],
                                    ev.mean.enhanced[2], ev.mean.enhanced_ycbcr};
      for (int c = 0; c < 4; ++c) {
        anchor_curves[std::size_t(c)].points.push_back({bpip, anchor_psnrs[c]});
        test_curves[std::size_t(c)].points.push_back({bpip, test_psnrs[c]});
      }
    }
    report["rates"] = rates;
    if (anchor_curves[0].points.size() >= 4) {
      const char* names[4] = {"y", "cb", "cr", "ycbcr"};
      json bd;
      for (int c = 0; c < 4; ++c)
        bd[names[c]] =
            bd_rate(anchor_curves[std::size_t(c)], test_curves[std::size_t(c)]);
      report["bd_rate"] = bd;
    } else {
      report["bd_rate"] = nullptr;
    }
  }
  write_json(a.out, report);
  std::cout << "report -> " << a.out << "\n";
  return 0;
}

// ------------------------------------------------------------ analyze -----

struct AnalyzeArgs {
  std::string input, out, axes = "x,y,z";
  std::size_t g = 200;
  int runs = 3;
  uint64_t seed = 0;
  double bin_width = 0.5;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const PointCloud pc = read_ply(a.input);
  std::vector<Axis> axes;
  for (std::size_t pos = 0; pos < a.axes.size();) {
    const std::size_t comma = std::min(a.axes.find(',', pos), a.axes.size());
    const std::string name = a.axes.substr(pos, comma - pos);
    if (name == "x") axes.push_back(Axis::x);
    else if (name == "y") axes.push_back(Axis::y);
    else if (name == "z") axes.push_back(Axis::z);
    else throw Error("unknown axis '" + name + "'");
    pos = comma + 1;
  }
  const StudyReport report =
      run_experiment(pc, a.g, axes, a.runs, a.seed, a.bin_width);

  json jaxes = json::array();
  for (const AxisStudy& s : report.axes) {
    json runs = json::array();
    for (const auto& run : s.runs) {
      json pairs = json::array();
      for (const PairSample& p : run)
        pairs.push_back({{"d", p.d}, {"dy", p.dy}});
      runs.push_back(pairs);
    }
    json bins = json::array();
    for (const BinnedPair& b : s.pooled_bins)
      bins.push_back(
          {{"center", b.center}, {"mean_dy", b.mean_dy}, {"count", b.count}});
    jaxes.push_back({{"axis", axis_name(s.axis)},
                     {"seed_points", s.seed_points},
                     {"pairs", runs},
                     {"bins", bins},
                     {"fit",
                      {{"amplitude", s.fit.amplitude},
                       {"mean", s.fit.mean},
                       {"stddev", s.fit.stddev},
                       {"offset", s.fit.offset},
                       {"r_squared", s.fit.r_squared},
                       {"converged", s.fit.converged},
                       {"degenerate", s.fit.degenerate},
                       {"iterations", s.fit.iterations}}}});
    std::cout << "axis " << axis_name(s.axis) << ": R^2 = " << s.fit.r_squared
              << (s.fit.converged ? "" : " (not converged)") << "\n";
  }
  write_json(a.out, {{"input", a.input},
                     {"g", report.g},
                     {"runs", report.n_runs},
                     {"seed", report.seed},
                     {"bin_width", report.bin_width},
                     {"axes", jaxes}});
  std::cout << "study -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------- knn-check -----

struct KnnCheckArgs {
  std::string input;
  std::size_t k = 20;
  std::size_t max_queries = 1000;
  uint64_t seed = 1;
};

int cmd_knn_check(const KnnCheckArgs& a) {
  const PointCloud pc = read_ply(a.input);
  const std::size_t n = pc.size();
  if (a.k > n) throw Error("knn-check: k exceeds point count");

  std::vector<int32_t> queries;
  if (n <= a.max_queries) {
    queries = pc.geometry;
  } else {
    Rng rng = Rng::derive(a.seed, 0x6b6e6e);
    for (std::size_t q = 0; q < a.max_queries; ++q) {
      const std::size_t i = std::size_t(rng.below(n));
      queries.insert(queries.end(), pc.point(i), pc.point(i) + 3);
    }
  }
  const SpatialIndex index(pc.geometry);
  const NeighborIndex fast = query_knn(index, queries, a.k);
  const NeighborIndex slow = brute_force_knn(pc.geometry, queries, a.k);
  const bool equal =
      fast.indices == slow.indices && fast.distances == slow.distances;
  std::cout << "n=" << n << " k=" << a.k << " queries=" << queries.size() / 3
            << " tree==bruteforce: " << (equal ? "yes" : "NO") << "\n";
  if (!equal) throw Error("knn-check: tree search disagrees with the oracle");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute quality enhancement for compressed dynamic point clouds"};
  app.require_subcommand(1);

  RecolorArgs rc;
  CLI::App* recolor_cmd =
      app.add_subcommand("recolor", "remap reference colors onto a frame");
  recolor_cmd->add_option("--current", rc.current)->required();
  recolor_cmd->add_option("--reference", rc.reference)->required();
  recolor_cmd->add_option("--out", rc.out)->required();
  recolor_cmd->add_option("--provenance", rc.provenance);
  recolor_cmd->add_option("--encoding", rc.encoding);
  recolor_cmd->add_option("--color-mode", rc.color_mode);

  EnhanceArgs en;
  CLI::App* enhance_cmd =
      app.add_subcommand("enhance", "enhance a frame triplet or a sequence");
  enhance_cmd->add_option("--model", en.model)->required();
  enhance_cmd->add_option("--input-dir", en.input_dir);
  enhance_cmd->add_option("--prev", en.prev);
  enhance_cmd->add_option("--cur", en.cur);
  enhance_cmd->add_option("--next", en.next);
  enhance_cmd->add_option("--out", en.out)->required();
  enhance_cmd->add_option("--log", en.log);
  enhance_cmd->add_option("--component", en.component);
  enhance_cmd->add_option("--patch-size", en.patch_size);
  enhance_cmd->add_option("--encoding", en.encoding);
  enhance_cmd->add_option("--color-mode", en.color_mode);

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train an enhancement model");
  train_cmd->add_option("--manifest", tr.manifest)->required();
  train_cmd->add_option("--config", tr.config);
  train_cmd->add_option("--out", tr.out)->required();
  train_cmd->add_option("--log", tr.log);
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--learning-rate", tr.lr);
  train_cmd->add_option("--alpha", tr.alpha);
  train_cmd->add_option("--patch-size", tr.patch_size);
  train_cmd->add_option("--seed", tr.seed);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR/BD-rate evaluation");
  eval_cmd->add_option("--enhanced", ev.enhanced)->required();
  eval_cmd->add_option("--anchor", ev.anchor)->required();
  eval_cmd->add_option("--original", ev.original)->required();
  eval_cmd->add_option("--rates", ev.rates);
  eval_cmd->add_option("--out", ev.out)->required();

  AnalyzeArgs an;
  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "spatial-correlation study with Gaussian fit");
  analyze_cmd->add_option("--input", an.input)->required();
  analyze_cmd->add_option("--g", an.g);
  analyze_cmd->add_option("--runs", an.runs);
  analyze_cmd->add_option("--seed", an.seed);
  analyze_cmd->add_option("--bin-width", an.bin_width);
  analyze_cmd->add_option("--axes", an.axes);
  analyze_cmd->add_option("--out", an.out)->required();

  KnnCheckArgs kc;
  CLI::App* knn_cmd =
      app.add_subcommand("knn-check", "verify tree search against the oracle");
  knn_cmd->add_option("--input", kc.input)->required();
  knn_cmd->add_option("--k", kc.k);
  knn_cmd->add_option("--max-queries", kc.max_queries);
  knn_cmd->add_option("--seed", kc.seed);

  std::string describe_model;
  CLI::App* describe_cmd =
      app.add_subcommand("describe-checkpoint", "print checkpoint layout");
  describe_cmd->add_option("--model", describe_model)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (recolor_cmd->parsed()) return cmd_recolor(rc);
    if (enhance_cmd->parsed()) return cmd_enhance(en);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (analyze_cmd->parsed()) return cmd_analyze(an);
    if (knn_cmd->parsed()) return cmd_knn_check(kc);
    if (describe_cmd->parsed()) {
      describe_checkpoint(describe_model, std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
