// Short runs of plain training and EBOMLC on synthetic blobs with half the
// noisy-side labels corrupted.
#include <cstdio>
#include <filesystem>

#include "ebomlc/experiment.hpp"

int main() {
  using namespace ebomlc;
  ExperimentConfig cfg;
  cfg.n_train = 2000;
  cfg.n_test = 500;
  cfg.clean_fraction = 0.05;
  cfg.epochs = 15;
  cfg.lr_milestones = {10, 13};
  cfg.noise_rate = 0.5;

  for (const char* algorithm : {"plain-noisy", "ebomlc"}) {
    cfg.algorithm = algorithm;
    cfg.output_dir = (std::filesystem::temp_directory_path() / "ebomlc_demo" / algorithm).string();
    std::printf("%s\n", algorithm);
    run_experiment(cfg, [](const EpochMetrics& m) {
      if (m.epoch % 5 == 0) std::printf("  epoch %2zu  F_clean %.4f  acc_test %.4f\n", m.epoch, m.f_clean, m.acc_test);
    });
    std::printf("  artifacts in %s\n", cfg.output_dir.c_str());
  }
}
