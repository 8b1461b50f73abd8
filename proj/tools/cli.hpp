#pragma once

// Subcommand dispatch for the glasskit executable. Exit codes: 0 success,
// 1 usage, 2 I/O, 3 validation or check failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "glasskit/checkpoint.hpp"
#include "glasskit/config.hpp"
#include "glasskit/dataset.hpp"
#include "glasskit/gradcheck.hpp"
#include "glasskit/image_io.hpp"
#include "glasskit/labelkit.hpp"
#include "glasskit/metrics.hpp"
#include "glasskit/network.hpp"
#include "glasskit/report.hpp"
#include "glasskit/synth.hpp"
#include "glasskit/trainer.hpp"

namespace glasskit::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kCheck = 3 };

namespace fs = std::filesystem;

inline std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline int cmd_synth(const fs::path& out, std::size_t count, int size, std::uint64_t seed, std::ostream& os) {
  SceneConfig cfg;
  cfg.size = size;
  cfg.seed = seed;
  write_synthetic_dataset(out, count, cfg);
  os << "wrote " << count << " scenes to " << out.string() << '\n';
  return kOk;
}

inline int cmd_decouple(const fs::path& gt, const fs::path& out, std::ostream& os) {
  fs::create_directories(out);
  const auto files = png_files(gt);
  for (const auto& f : files) {
    const auto labels = decouple(load_mask(f.string()));
    const auto stem = (out / f.stem()).string();
    save_unit_map(stem + "_bl.png", labels.interior);
    save_unit_map(stem + "_dl.png", labels.boundary);
    write_gldt(stem + ".bl.gldt", labels.interior);
    write_gldt(stem + ".dl.gldt", labels.boundary);
  }
  os << "decoupled " << files.size() << " masks into " << out.string() << '\n';
  return kOk;
}

template <class T>
int train_with(const RunConfig& rc, const fs::path& data, const std::string& val, const fs::path& out,
               std::ostream& os) {
  auto train_set = std::make_shared<const std::vector<Sample>>(load_samples(read_manifest(data), rc.net.input_size));
  std::vector<Sample> val_set;
  if (!val.empty()) val_set = load_samples(read_manifest(val, "val"), rc.net.input_size);
  fs::create_directories(out);
  {
    std::ofstream cfg(out / "config.txt");
    if (!cfg) throw IoError("cannot write " + (out / "config.txt").string());
    cfg << format_config(rc);
  }
  nn::GlassNet<T> net(rc.net, derive_seed(rc.train.seed, "init"));
  const auto result = train(net, train_set, val.empty() ? nullptr : &val_set, rc.train, out, &os);
  os << "final checkpoint " << result.final_checkpoint.string() << '\n';
  if (!result.best_checkpoint.empty())
    os << "best checkpoint " << result.best_checkpoint.string() << " (iou " << result.best_iou << ")\n";
  return kOk;
}

inline int cmd_train(const fs::path& data, const std::string& config, const fs::path& out, const std::string& val,
                     std::ostream& os) {
  const auto rc = load_config(config);
  return rc.train.precision == Precision::f64 ? train_with<double>(rc, data, val, out, os)
                                              : train_with<float>(rc, data, val, out, os);
}

inline int cmd_eval(const fs::path& pred, const fs::path& gt, const std::string& report_path, std::ostream& os) {
  const auto files = png_files(gt);
  if (files.empty()) throw IoError("no PNG masks in " + gt.string());
  std::vector<std::pair<PredictionMap, BinaryMask>> pairs;
  std::vector<std::string> names;
  for (const auto& f : files) {
    const auto p = pred / f.filename();
    if (!fs::exists(p)) throw IoError("missing prediction " + p.string());
    auto map = load_unit_map(p.string());
    auto mask = load_mask(f.string());
    if (!map.same_shape(mask)) throw IoError("dimension mismatch for " + f.filename().string());
    pairs.emplace_back(std::move(map), std::move(mask));
    names.push_back(f.stem().string());
  }
  const auto report = evaluate_dataset(pairs, names);
  print_report_table(os, report);
  if (!report_path.empty()) write_report(report_path, report);
  return kOk;
}

inline int cmd_predict(const fs::path& ckpt, const std::string& image_path, const std::string& out,
                       const std::string& config, std::ostream& os) {
  RunConfig rc;
  const auto sibling = ckpt.parent_path() / "config.txt";
  if (!config.empty())
    rc = load_config(config);
  else if (fs::exists(sibling))
    rc = load_config(sibling.string());
  nn::GlassNet<float> net(rc.net, 0);
  nn::load_checkpoint(ckpt.string(), net.parameters());
  const auto image = load_image(image_path);
  const int s = rc.net.input_size;
  const auto resized = resize_image(image, s, s);
  nn::NoGradGuard guard;
  const auto input = nn::Tensor<float>::from({1, 3, s, s}, resized.values);
  const auto probs = nn::bilinear_resize(nn::sigmoid(net.forward(input, false).final_map), image.height, image.width);
  Grid<float> map(image.height, image.width);
  std::copy(probs.values().begin(), probs.values().end(), map.values.begin());
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_unit_map(out, map);
  os << "wrote " << out << '\n';
  return kOk;
}

inline int cmd_gradcheck(std::uint64_t seed, std::ostream& os) {
  const auto results = nn::run_gradcheck_suite(seed, &os);
  const bool ok = nn::all_passed(results);
  os << (ok ? "gradient check passed" : "gradient check FAILED") << '\n';
  if (!ok) throw CheckFailure("gradient check failed");
  return kOk;
}

/// Parses argv and runs one subcommand. Diagnostics go to `err` as a single line.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"glasskit: glass detection toolkit", "glasskit"};
  app.require_subcommand(1);

  std::string out_dir, gt_dir, pred_dir, data_dir, val_dir, config, report, ckpt, image;
  std::size_t count = 0;
  int size = 64;
  std::uint64_t seed = 0;

  auto* synth = app.add_subcommand("synth", "Render a synthetic glass-scene dataset");
  synth->add_option("--out", out_dir, "Output dataset directory")->required();
  synth->add_option("--count", count, "Number of scenes")->required()->check(CLI::PositiveNumber);
  synth->add_option("--size", size, "Scene size in pixels")->capture_default_str()->check(CLI::Range(8, 4096));
  synth->add_option("--seed", seed, "Generator seed")->capture_default_str();

  auto* dec = app.add_subcommand("decouple", "Write interior/boundary labels for a directory of masks");
  dec->add_option("--gt", gt_dir, "Directory of mask PNGs")->required();
  dec->add_option("--out", out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a network on a dataset");
  tr->add_option("--data", data_dir, "Training dataset directory")->required();
  tr->add_option("--config", config, "Run configuration file")->required();
  tr->add_option("--out", out_dir, "Output directory for checkpoints and history")->required();
  tr->add_option("--val", val_dir, "Validation dataset directory");

  auto* ev = app.add_subcommand("eval", "Score prediction PNGs against ground-truth masks");
  ev->add_option("--pred", pred_dir, "Directory of prediction PNGs")->required();
  ev->add_option("--gt", gt_dir, "Directory of mask PNGs with the same names")->required();
  ev->add_option("--report", report, "Report file (.json for JSON, flat text otherwise)");

  auto* pr = app.add_subcommand("predict", "Write the glass probability map for one image");
  pr->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  pr->add_option("--image", image, "Input RGB PNG")->required();
  pr->add_option("--out", out_dir, "Output PNG")->required();
  pr->add_option("--config", config, "Run configuration (default: config.txt beside the checkpoint)");

  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--seed", seed, "Seed for the random test tensors")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    err << "glasskit: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(out_dir, count, size, seed, out);
    if (*dec) return cmd_decouple(gt_dir, out_dir, out);
    if (*tr) return cmd_train(data_dir, config, out_dir, val_dir, out);
    if (*ev) return cmd_eval(pred_dir, gt_dir, report, out);
    if (*pr) return cmd_predict(ckpt, image, out_dir, config, out);
    if (*gc) return cmd_gradcheck(seed, out);
  } catch (const InvalidInput& e) {
    err << "glasskit: invalid input: " << e.what() << '\n';
    return kCheck;
  } catch (const IoError& e) {
    err << "glasskit: i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "glasskit: i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const CheckFailure& e) {
    err << "glasskit: check failed: " << e.what() << '\n';
    return kCheck;
  }
  return kUsage;
}

}  // namespace glasskit::cli
