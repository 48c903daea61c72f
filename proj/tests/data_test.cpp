#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "ebomlc/data.hpp"
#include "ebomlc/models.hpp"
#include "ebomlc/optim.hpp"

using namespace ebomlc;

TEST(Blobs, BalancedAndSeeded) {
  const LabeledDataset a = generate_blobs(100, 10, 4, 0.5, 3);
  const LabeledDataset b = generate_blobs(100, 10, 4, 0.5, 3);
  EXPECT_EQ(a.features, b.features);
  std::vector<int> counts(10, 0);
  for (auto y : a.labels) ++counts[y];
  for (int c : counts) EXPECT_EQ(c, 10);
  EXPECT_THROW(generate_blobs(5, 10, 4, 0.5, 3), ConfigError);
  EXPECT_THROW(generate_blobs(50, 10, 1, 0.5, 3), ConfigError);
}

TEST(Blobs, ZeroSpreadPutsSamplesOnCenters) {
  const BlobGenerator gen(3, 2, 0.0, 9);
  const LabeledDataset ds = gen.sample(6, 1);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(ds.features.at(i, 0), gen.centers().at(ds.labels[i], 0));
    EXPECT_EQ(ds.features.at(i, 1), gen.centers().at(ds.labels[i], 1));
  }
}

TEST(Corruption, UniformExactCountAndNeverKeepsLabel) {
  Labels y(1000);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 10;
  const Corruption c = corrupt_uniform(y, 0.37, 10, 5);
  EXPECT_EQ(c.corrupted_count(), 370u);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(c.mask[i], c.labels[i] != y[i]);
  EXPECT_THROW(corrupt_uniform(y, 1.5, 10, 5), ConfigError);
  EXPECT_EQ(corrupt_uniform(y, 0.0, 10, 5).labels, y);
}

TEST(Corruption, UniformOtherClassFrequencies) {
  // Chi-square over the 9 wrong classes of each class; 81 cells combined.
  Labels y(50000);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 10;
  const Corruption c = corrupt_uniform(y, 0.4, 10, 17);
  std::map<std::pair<std::size_t, std::size_t>, int> cell;
  std::vector<int> per_class(10, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!c.mask[i]) continue;
    ++cell[{y[i], c.labels[i]}];
    ++per_class[y[i]];
  }
  double chi2 = 0.0;
  for (std::size_t a = 0; a < 10; ++a) {
    for (std::size_t b = 0; b < 10; ++b) {
      if (a == b) continue;
      const double expected = per_class[a] / 9.0;
      const double d = cell[{a, b}] - expected;
      chi2 += d * d / expected;
    }
  }
  // 90 cells, 80 degrees of freedom; the 0.999 quantile is about 124.8.
  EXPECT_LT(chi2, 124.8);
}

TEST(Corruption, FlipFollowsMappingPerClass) {
  Labels y(200);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 4;
  const Labels mapping{1, 2, 3, 0};
  const Corruption c = corrupt_flip(y, 0.3, mapping, 2);
  std::vector<int> flipped(4, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (c.mask[i]) {
      EXPECT_EQ(c.labels[i], mapping[y[i]]);
      ++flipped[y[i]];
    }
  }
  for (int f : flipped) EXPECT_EQ(f, 15);
  EXPECT_THROW(corrupt_flip(y, 0.3, {0, 2, 3, 1}, 2), ConfigError);
}

TEST(Split, StratifiedCleanShare) {
  const LabeledDataset ds = generate_blobs(5000, 10, 4, 1.0, 1);
  CorruptedDataset cd = split_clean_noisy(ds, 0.02, 4);
  const auto clean = cd.indices(Split::kClean);
  EXPECT_EQ(clean.size(), 100u);
  std::vector<int> counts(10, 0);
  for (auto i : clean) ++counts[ds.labels[i]];
  for (int c : counts) EXPECT_EQ(c, 10);
  EXPECT_THROW(split_clean_noisy(generate_blobs(100, 10, 4, 1.0, 1), 0.02, 4), ConfigError);
  EXPECT_THROW(split_clean_noisy(ds, 1.0, 4), ConfigError);
}

TEST(Split, NoiseTouchesOnlyTheNoisySide) {
  const LabeledDataset ds = generate_blobs(1000, 10, 4, 1.0, 1);
  CorruptedDataset cd = split_clean_noisy(ds, 0.1, 4);
  apply_noise(cd, NoiseKind::kUniform, 0.4, 8);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < cd.size(); ++i) {
    if (cd.split[i] == Split::kClean) {
      EXPECT_EQ(cd.corrupted_labels[i], ds.labels[i]);
      EXPECT_FALSE(cd.mask[i]);
    }
    flipped += cd.mask[i] ? 1 : 0;
  }
  EXPECT_EQ(flipped, 360u);
}

TEST(Standardizer, ZeroMeanUnitVarianceOnFitRows) {
  Tensor x = Tensor::matrix(4, 2, {1, 5, 3, 5, 5, 5, 7, 5});
  const auto s = Standardizer::fit(x, {0, 1, 2, 3});
  s.apply(x);
  EXPECT_NEAR(x.at(0, 0) + x.at(1, 0) + x.at(2, 0) + x.at(3, 0), 0.0, 1e-12);
  EXPECT_NEAR(x.at(0, 0), -3.0 / std::sqrt(5.0), 1e-12);
  EXPECT_EQ(x.at(2, 1), 0.0);
}

TEST(BatchIterator, DropsRemainderAndCoversDisjointly) {
  std::vector<std::size_t> side(103);
  for (std::size_t i = 0; i < side.size(); ++i) side[i] = 1000 + i;
  const BatchIterator it(side, 10, 3);
  const auto e0 = it.epoch(0);
  ASSERT_EQ(e0.size(), 10u);
  std::set<std::size_t> seen;
  for (const auto& b : e0) {
    EXPECT_EQ(b.size(), 10u);
    seen.insert(b.begin(), b.end());
  }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(it.epoch(0), e0);
  EXPECT_NE(it.epoch(1), e0);
  EXPECT_THROW(BatchIterator(side, 104, 3), ConfigError);
}

TEST(Cifar, ParsesRecordsAndRejectsBadInput) {
  std::vector<unsigned char> bytes(2 * kCifarRecordBytes, 0);
  bytes[0] = 3;
  bytes[1] = 255;
  bytes[kCifarRecordBytes] = 9;
  bytes[kCifarRecordBytes + 3072] = 51;
  const LabeledDataset ds = parse_cifar10_binary(bytes);
  EXPECT_EQ(ds.labels, (Labels{3, 9}));
  EXPECT_EQ(ds.features.at(0, 0), 1.0);
  EXPECT_EQ(ds.features.at(1, 3071), 0.2);

  EXPECT_THROW(parse_cifar10_binary({}), FormatError);
  std::vector<unsigned char> short_bytes(kCifarRecordBytes + 1, 0);
  EXPECT_THROW(parse_cifar10_binary(short_bytes), FormatError);
  bytes[0] = 10;
  EXPECT_THROW(parse_cifar10_binary(bytes), FormatError);
  EXPECT_THROW(load_cifar10_binary("/nonexistent/data_batch_1.bin"), FormatError);
}

TEST(Export, WritesCsvAndFeatures) {
  const LabeledDataset ds = generate_blobs(200, 10, 4, 1.0, 1);
  CorruptedDataset cd = split_clean_noisy(ds, 0.1, 4);
  apply_noise(cd, NoiseKind::kUniform, 0.5, 8);
  const auto dir = std::filesystem::temp_directory_path() / "ebomlc_export_test";
  std::filesystem::create_directories(dir);
  const std::string prefix = (dir / "noisy").string();
  export_side(cd, Split::kNoisy, prefix);
  std::ifstream csv(prefix + ".csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "index,split,clean_label,observed_label,corrupted");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 180u);
  EXPECT_EQ(load_bmps(prefix + "_features.bmps").at("features").shape(), (Shape{180, 4}));
  std::filesystem::remove_all(dir);
}

TEST(Corruption, FullRateWithTwoClassesSwapsEveryLabel) {
  const Labels y{0, 1, 1, 0, 1};
  const Corruption c = corrupt_uniform(y, 1.0, 2, 1);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(c.labels[i], 1 - y[i]);
}

TEST(Split, HalfCleanWithTwoPerClass) {
  const LabeledDataset ds = generate_blobs(6, 3, 2, 0.5, 1);
  const CorruptedDataset s = split_clean_noisy(ds, 0.5, 2);
  std::vector<int> clean(3, 0);
  for (std::size_t i : s.indices(Split::kClean)) ++clean[ds.labels[i]];
  for (int c : clean) EXPECT_EQ(c, 1);
}

TEST(Blobs, TightClustersAreLinearlySeparable) {
  const LabeledDataset ds = generate_blobs(400, 4, 16, 0.1, 8);
  const MainModel linear({16, 4});
  ParamSet w = linear.init(1);
  SgdMomentum opt(0.9, 0.0);
  const Tensor target = one_hot(ds.labels, 4);
  for (int epoch = 0; epoch < 200; ++epoch) {
    Tape tape;
    Var loss = soft_cross_entropy(linear.forward(bind(tape, w, "", true), tape.constant(ds.features)),
                                  tape.constant(target));
    opt.step(w, extract(backward(tape, loss), "", w), 0.1);
  }
  const auto pred = argmax_rows(linear.logits(w, ds.features));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == ds.labels[i] ? 1 : 0;
  EXPECT_EQ(hit, 400u);
}
