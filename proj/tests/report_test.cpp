#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ebomlc/report.hpp"

using namespace ebomlc;
namespace fs = std::filesystem;

namespace {
fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "ebomlc_report_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

const char* kCsv =
    "epoch,F_clean,Fbar,G_noisy,Q_mean,beta_mean,align_mean,acc_train_noisy,acc_test,acc_meta_correction,wall_secs\n"
    "1,2.0,2.1,2.2,0.1,0.3,0.0,0.2,0.25,0.5,0\n"
    "2,1.5,1.6,1.9,0.05,0.2,0.1,0.4,0.5,0.55,0\n"
    "3,1.0,1.1,1.7,0.02,0.1,0.2,0.5,0.75,0.6,0\n";
}  // namespace

TEST(Chart, DeterministicAndSpansX) {
  const ChartSeries s{"loss", {1, 2, 3, 4, 5}, {5, 4, 3, 2, 1}};
  const std::string a = render_line_chart("t", "epoch", "y", {s});
  EXPECT_EQ(a, render_line_chart("t", "epoch", "y", {s}));
  EXPECT_NE(a.find("<svg"), std::string::npos);
  EXPECT_NE(a.find("class=\"x-axis\" data-min=\"1\" data-max=\"5\""), std::string::npos);
}

TEST(Chart, NonFiniteBreaksLine) {
  const ChartSeries s{"y", {1, 2, 3, 4}, {1, NAN, 2, 3}};
  const std::string svg = render_line_chart("t", "x", "y", {s});
  std::size_t n = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++n;
  EXPECT_EQ(n, 2u);
}

TEST(Chart, EscapesText) {
  const std::string svg = render_line_chart("a<b & c", "x", "y", {ChartSeries{"s", {0, 1}, {0, 1}}});
  EXPECT_NE(svg.find("a&lt;b &amp; c"), std::string::npos);
}

TEST(MetricsCsv, ReadsColumns) {
  const fs::path d = fresh_dir("read");
  write(d / "metrics.csv", kCsv);
  const MetricsTable t = read_metrics_csv((d / "metrics.csv").string());
  EXPECT_EQ(t.columns.size(), 11u);
  EXPECT_EQ(t.values("acc_test"), (std::vector<double>{0.25, 0.5, 0.75}));
  EXPECT_THROW(t.column("nope"), FormatError);
}

TEST(MetricsCsv, Errors) {
  const fs::path d = fresh_dir("errors");
  EXPECT_THROW(read_metrics_csv((d / "missing.csv").string()), ConfigError);
  write(d / "empty.csv", "");
  EXPECT_THROW(read_metrics_csv((d / "empty.csv").string()), ConfigError);
  write(d / "header.csv", "epoch,F_clean\n");
  EXPECT_THROW(read_metrics_csv((d / "header.csv").string()), ConfigError);
  write(d / "text.csv", "epoch,F_clean\n1,abc\n");
  EXPECT_THROW(read_metrics_csv((d / "text.csv").string()), FormatError);
  write(d / "ragged.csv", "epoch,F_clean\n1,2,3\n");
  EXPECT_THROW(read_metrics_csv((d / "ragged.csv").string()), FormatError);
}

TEST(Report, EmitsChartsAndSummary) {
  const fs::path d = fresh_dir("emit");
  write(d / "metrics.csv", kCsv);
  const auto files = emit_report(d.string());
  ASSERT_EQ(files.size(), 4u);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(d / f)) << f;
  std::ifstream is(d / "accuracy.svg");
  const std::string svg((std::istreambuf_iterator<char>(is)), {});
  EXPECT_NE(svg.find("data-min=\"1\" data-max=\"3\""), std::string::npos);
  std::ifstream ss(d / "summary.txt");
  const std::string summary((std::istreambuf_iterator<char>(ss)), {});
  EXPECT_NE(summary.find("epochs 3"), std::string::npos);
  EXPECT_EQ(summary.find("wall_secs"), std::string::npos);
}

TEST(Report, MissingRunDirectory) {
  EXPECT_THROW(emit_report((fs::temp_directory_path() / "ebomlc_report_test" / "nowhere").string()), ConfigError);
}
