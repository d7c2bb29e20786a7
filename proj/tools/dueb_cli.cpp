// dueb: train, ablate and dump-dataset front end.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dueb/harness.hpp"
#include "dueb/trainer.hpp"

namespace fs = std::filesystem;
using namespace dueb;

namespace {

std::vector<int> parse_fractions(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(LabeledFraction::parse(item).denominator());
  if (out.empty()) throw std::invalid_argument("--fractions: empty list");
  return out;
}

int cmd_train(const fs::path& config, const fs::path& out, const std::string& resume,
              const std::string& dump_fusion) {
  const TrainConfig cfg = load_config(config);
  fs::create_directories(out);
  std::ofstream(out / "config.txt") << to_text(cfg);
  Trainer t(cfg, out);
  if (!resume.empty()) t.resume(resume);
  if (!dump_fusion.empty()) t.set_fusion_dump(dump_fusion);
  const int start = t.state().iter;
  t.run();
  std::printf("trained %d steps (iter %d/%d), best val mIoU %.4f\n", t.state().iter - start,
              t.state().iter, cfg.max_iter, t.best_miou());
  return 0;
}

std::vector<int> parse_signs(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

int cmd_ablate(const fs::path& config, const std::string& fractions, int repeats, int jobs,
               const std::string& signs, const fs::path& out) {
  const TrainConfig base = load_config(config);
  GridOptions opts;
  opts.denominators = parse_fractions(fractions);
  opts.repeats = repeats;
  opts.out_dir = out;
  opts.jobs = jobs;
  opts.energy_signs = parse_signs(signs);
  fs::create_directories(out);
  std::ofstream(out / "grid.jsonl", std::ios::trunc);
  const auto cells = run_grid(base, opts);
  report(cells, out);
  std::cout << render_table(cells);
  int failed = 0;
  for (const auto& c : cells)
    if (!c.error.empty()) {
      ++failed;
      std::cerr << "cell 1/" << c.denominator << " " << combo_name(c.combo) << " r" << c.repeat
                << " sign " << c.energy_sign << " failed: " << c.error << "\n";
    }
  return failed == static_cast<int>(cells.size()) ? 1 : 0;
}

int cmd_dump_dataset(const fs::path& config, const fs::path& out) {
  const TrainConfig cfg = load_config(config);
  validate(cfg);
  const int den = cfg.labeled_denominator == 1 ? 2 : cfg.labeled_denominator;
  dump_dataset(cfg.scene, {LabeledFraction(den), cfg.train_images, cfg.partition_seed}, out);
  std::printf("wrote %d scenes to %s\n", cfg.train_images, out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-branch semi-supervised segmentation on synthetic scenes"};
  app.require_subcommand(1);

  std::string config, out, resume, dump_fusion, fractions = "1/4,1/8,1/16", signs;
  int repeats = 3, jobs = 1;

  auto* train = app.add_subcommand("train", "train both branches from a config");
  train->add_option("--config", config, "key = value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--dump-fusion", dump_fusion, "write fused pseudo-labels at each evaluation");

  auto* ablate = app.add_subcommand("ablate", "loss ablation grid over labeled fractions");
  ablate->add_option("--config", config, "base config")->required()->check(CLI::ExistingFile);
  ablate->add_option("--fractions", fractions, "comma separated, e.g. 1/4,1/8,1/16");
  ablate->add_option("--repeats", repeats, "seeds per cell")->check(CLI::PositiveNumber);
  ablate->add_option("--jobs", jobs, "cells trained concurrently")->check(CLI::PositiveNumber);
  ablate->add_option("--energy-signs", signs, "e.g. 1,-1; default: the config's energy_sign");
  ablate->add_option("--out", out, "output directory")->required();

  auto* dump = app.add_subcommand("dump-dataset", "write scenes, labels and manifest");
  dump->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  dump->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config, out, resume, dump_fusion);
    if (*ablate) return cmd_ablate(config, fractions, repeats, jobs, signs, out);
    if (*dump) return cmd_dump_dataset(config, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
