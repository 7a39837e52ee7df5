#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "dps/codec.hpp"
#include "dps/model.hpp"
#include "dps/pattern_store.hpp"

namespace dps {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome dps_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("dps_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("small.data", "kind = shapes\nnum_classes = 3\nsamples_per_class = 8\nimage_size = 8\n");
    write("small_test.data", "kind = shapes\nnum_classes = 3\nsamples_per_class = 4\nimage_size = 8\n");
    write("tiny.model", "channels = 4,4\nepochs = 3\n");
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  // gen-data, train and extract for both splits.
  void pipeline() {
    ASSERT_EQ(dps_cli({"gen-data", "--config", p("small.data"), "--out", p("train.dpsd"), "--seed", "1"}).code, 0);
    ASSERT_EQ(dps_cli({"gen-data", "--config", p("small_test.data"), "--out", p("test.dpsd"), "--seed", "2"}).code, 0);
    ASSERT_EQ(dps_cli({"train", "--data", p("train.dpsd"), "--model-config", p("tiny.model"), "--out", p("m.dpsm"),
                       "--seed", "1"})
                  .code,
              0);
    ASSERT_EQ(dps_cli({"extract", "--checkpoint", p("m.dpsm"), "--data", p("train.dpsd"), "--split", "train", "--out",
                       p("train.dps1")})
                  .code,
              0);
    ASSERT_EQ(dps_cli({"extract", "--checkpoint", p("m.dpsm"), "--data", p("test.dpsd"), "--out", p("test.dps1")}).code, 0);
  }

  fs::path dir_;
};

TEST_F(CliTest, GenDataWritesDatasetAndManifestDeterministically) {
  const auto a = dps_cli({"gen-data", "--config", p("small.data"), "--out", p("a.dpsd"), "--seed", "5"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("wrote 24 samples (1x8x8)"), std::string::npos) << a.out;
  ASSERT_EQ(dps_cli({"gen-data", "--config", p("small.data"), "--out", p("b.dpsd"), "--seed", "5"}).code, 0);
  const auto bytes = read_file(p("a.dpsd"));
  EXPECT_EQ(bytes.substr(0, 4), "DPSD");
  EXPECT_EQ(sha256_hex(bytes), sha256_file(p("b.dpsd")));
  const auto batch = decode_dataset(bytes);
  EXPECT_EQ(batch.size(), 24u);
  EXPECT_EQ(batch.sample_shape(), (MapShape{1, 8, 8}));
  const auto manifest = nlohmann::json::parse(read_file(p("a.dpsd.manifest.json")));
  EXPECT_EQ(manifest["seeds"]["data"], 5);
  EXPECT_FALSE(manifest["input_hashes"].empty());
}

TEST_F(CliTest, GenDataRejectsUnknownKeysAndHalfCorruption) {
  write("bad.data", "kind = shapes\nnum_classes = 3\nflavour = mint\n");
  const auto r = dps_cli({"gen-data", "--config", p("bad.data"), "--out", p("x.dpsd")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("config error"), std::string::npos) << r.err;
  write("half.data", "kind = shapes\nnum_classes = 3\ncorruption = blur\n");
  EXPECT_EQ(dps_cli({"gen-data", "--config", p("half.data"), "--out", p("x.dpsd")}).code, 1);
  EXPECT_FALSE(fs::exists(p("x.dpsd")));
}

TEST_F(CliTest, TrainIsReproducibleAndReportsAccuracyOfTheSavedModel) {
  ASSERT_EQ(dps_cli({"gen-data", "--config", p("small.data"), "--out", p("d.dpsd"), "--seed", "1"}).code, 0);
  const auto a = dps_cli({"train", "--data", p("d.dpsd"), "--model-config", p("tiny.model"), "--out", p("a.dpsm"), "--seed", "9"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(dps_cli({"train", "--data", p("d.dpsd"), "--model-config", p("tiny.model"), "--out", p("b.dpsm"), "--seed", "9"}).code, 0);
  EXPECT_EQ(read_file(p("a.dpsm")), read_file(p("b.dpsm")));
  const auto model = load_checkpoint(p("a.dpsm"));
  const auto data = load_dataset(p("d.dpsd"));
  const auto pos = a.out.find("train_accuracy=");
  ASSERT_NE(pos, std::string::npos) << a.out;
  EXPECT_DOUBLE_EQ(std::stod(a.out.substr(pos + 15)), accuracy(model, data));
}

TEST_F(CliTest, TrainRejectsTruncatedData) {
  ASSERT_EQ(dps_cli({"gen-data", "--config", p("small.data"), "--out", p("d.dpsd")}).code, 0);
  const auto bytes = read_file(p("d.dpsd"));
  write("cut.dpsd", bytes.substr(0, bytes.size() / 2));
  const auto r = dps_cli({"train", "--data", p("cut.dpsd"), "--model-config", p("tiny.model"), "--out", p("m.dpsm")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("format error"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(p("m.dpsm")));
}

TEST_F(CliTest, ExtractWritesOneRecordPerSample) {
  pipeline();
  const auto store = load_pattern_store(p("test.dps1"));
  EXPECT_EQ(store.patterns.size(), 12u);
  EXPECT_EQ(store.channels, 4u);
  const auto side = decode_sidecar(read_file(sidecar_path(p("test.dps1"))));
  EXPECT_EQ(side.checkpoint_hash, sha256_file(p("m.dpsm")));
  EXPECT_EQ(side.split, "test");
}

TEST_F(CliTest, ExtractRejectsIncompatibleData) {
  pipeline();
  write("five.data", "kind = shapes\nnum_classes = 5\nsamples_per_class = 2\nimage_size = 8\n");
  ASSERT_EQ(dps_cli({"gen-data", "--config", p("five.data"), "--out", p("five.dpsd")}).code, 0);
  const auto r = dps_cli({"extract", "--checkpoint", p("m.dpsm"), "--data", p("five.dpsd"), "--out", p("x.dps1")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("compatibility error"), std::string::npos) << r.err;
  write("big.data", "kind = shapes\nnum_classes = 3\nsamples_per_class = 2\nimage_size = 12\n");
  ASSERT_EQ(dps_cli({"gen-data", "--config", p("big.data"), "--out", p("big.dpsd")}).code, 0);
  EXPECT_EQ(dps_cli({"extract", "--checkpoint", p("m.dpsm"), "--data", p("big.dpsd"), "--out", p("x.dps1")}).code, 1);
}

TEST_F(CliTest, AnalyzeReportMatchesItsExports) {
  pipeline();
  const auto r = dps_cli({"analyze", "--train", p("train.dps1"), "--test", p("test.dps1"), "--out", p("report"), "--bins", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(read_file(p("report/report.json")));
  std::istringstream csv(read_file(p("report/samples.csv")));
  std::string line;
  std::getline(csv, line);
  long double sum = 0.0L;
  std::size_t n = 0;
  while (std::getline(csv, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    const auto c = line.find(',', b + 1);
    sum += std::stold(line.substr(b + 1, c - b - 1));
    ++n;
  }
  EXPECT_EQ(n, report["records"]["count"].get<std::size_t>());
  EXPECT_NEAR(static_cast<double>(sum / n), report["dataset"]["dps"].get<double>(), 1e-12);
  const auto manifest = nlohmann::json::parse(read_file(p("report/manifest.json")));
  EXPECT_TRUE(manifest["outputs"].contains("report.json"));
}

TEST_F(CliTest, AnalyzeRejectsMismatchedOrEmptyStores) {
  pipeline();
  PatternStore wide;
  wide.channels = 64;
  DecisionPattern dp;
  dp.pattern.assign(64, 1.0);
  dp.renormalize();
  wide.patterns.push_back(dp);
  save_pattern_store(wide, p("wide.dps1"));
  auto r = dps_cli({"analyze", "--train", p("train.dps1"), "--test", p("wide.dps1"), "--out", p("r1")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("compatibility error"), std::string::npos) << r.err;

  PatternStore empty;
  empty.channels = 4;
  save_pattern_store(empty, p("empty.dps1"));
  r = dps_cli({"analyze", "--train", p("train.dps1"), "--test", p("empty.dps1"), "--out", p("r2")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("empty-input error"), std::string::npos) << r.err;

  r = dps_cli({"analyze", "--train", p("train.dps1"), "--test", p("test.dps1"), "--out", p("r3"), "--reference", "some"});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, ScenarioRunsAndRecordsItsInputs) {
  write("s.scenario",
        "name = domain_shift\nseed = 2\nseverity = 1\ncorruption = noise\ndataset_config = small.data\n"
        "model_config = tiny.model\ndataset.test_samples_per_class = 4\nanalysis.bins = 10\n");
  const auto r = dps_cli({"scenario", "--spec", p("s.scenario"), "--out", p("run")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("scenario=domain_shift split=severity_1"), std::string::npos) << r.out;
  const auto manifest = nlohmann::json::parse(read_file(p("run/manifest.json")));
  EXPECT_EQ(manifest["input_hashes"]["spec"], sha256_file(p("s.scenario")));
  EXPECT_EQ(manifest["input_hashes"]["dataset_config"], sha256_file(p("small.data")));
  EXPECT_TRUE(fs::exists(p("run/report.json")));
  EXPECT_TRUE(fs::exists(p("run/samples.csv")));

  const auto o = dps_cli({"scenario", "--spec", p("s.scenario"), "--out", p("run2"), "--set", "name=ood", "--set",
                          "severity=", "--seed", "3"});
  EXPECT_EQ(o.code, 1);  // an empty value is not a valid severity
}

TEST_F(CliTest, ScenarioRejectsUnknownName) {
  write("u.scenario", "name = adversarial\nseed = 1\n");
  const auto r = dps_cli({"scenario", "--spec", p("u.scenario"), "--out", p("run")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("config error"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(p("run/report.json")));
}

TEST(CliUsage, MissingOrUnknownCommandIsUsageError) {
  EXPECT_EQ(dps_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(dps_cli({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(dps_cli({"train", "--data"}).code, cli::kExitUsage);
  EXPECT_EQ(dps_cli({"--version"}).code, cli::kExitOk);
  EXPECT_EQ(dps_cli({"--help"}).code, cli::kExitOk);
}

}  // namespace
}  // namespace dps
