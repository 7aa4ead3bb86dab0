#include <filesystem>
#include <fstream>
#include <sstream>

#include "aluthge/experiment.hpp"
#include "test_support.hpp"

using namespace aluthge::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aluthge_lab_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(ParseConfig, MinimalFileGetsDefaults) {
  const auto c = parseConfigText("[experiment]\nkind = aluthge-iterate\nseed = 3\n");
  EXPECT_EQ(c.kind, Kind::AluthgeIterate);
  EXPECT_EQ(c.name, "aluthge-iterate");
  EXPECT_EQ(*c.seed, 3u);
  EXPECT_EQ(c.source, Source::RandomMatrix);
  EXPECT_EQ(c.trials, 1);
  EXPECT_EQ(c.maxSteps, 500);
  EXPECT_EQ(c.tolerance(), 1e-8);
  EXPECT_EQ(c.traceCsv, "aluthge-iterate_trace.csv");
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(parseConfigText("[experiment]\nkind = crossed-limit\nseed = 1\n").source,
            Source::RandomPermutationWeight);
}

TEST(ParseConfig, CommentsAndLists) {
  const auto c = parseConfigText(
      "# header\n[experiment]\nkind = crossed-limit  # trailing\n\n[operator]\nsource = permutation-weight\n"
      "alpha = 1, 2, 0\nweights = 1 2 4\n");
  EXPECT_EQ(c.alpha, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(c.weights, (std::vector<double>{1, 2, 4}));
  EXPECT_NO_THROW(validate(c));
}

TEST(ParseConfig, DuplicateKeyNamesKeyAndPosition) {
  try {
    parseConfigText("[experiment]\nkind = bound-check\n  kind = bound-check\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'kind'"), std::string::npos);
    EXPECT_EQ(e.line, 3);
    EXPECT_EQ(e.column, 3);
  }
}

TEST(ParseConfig, Rejections) {
  EXPECT_THROW(parseConfigText("[experiment]\nkind = bound-check\n[parameters]\ntol = -1\n"), ConfigError);
  EXPECT_THROW(parseConfigText("[experiment]\nkind = nope\n"), ConfigError);
  EXPECT_THROW(parseConfigText("[experiment]\nname = x\n"), ConfigError);
  EXPECT_THROW(parseConfigText("[experiment]\nkind = bound-check\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parseConfigText("[nowhere]\n"), ConfigError);
  EXPECT_THROW(parseConfigText("kind = bound-check\n"), ConfigError);
  EXPECT_THROW(parseConfigText("[experiment]\nkind = bound-check\n[parameters]\neps = 0.1x\n"), ConfigError);
  EXPECT_THROW(parseConfigText("[experiment]\nkind = bound-check\n[parameters]\ntrials = 0\n"), ConfigError);
  try {
    parseConfigText("[experiment]\nkind = bound-check\n[parameters]\nmax_steps = 1.5\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line, 4);
    EXPECT_EQ(e.column, 13);
  }
}

TEST(Validate, CrossKeyConstraints) {
  EXPECT_THROW(validate(parseConfigText("[experiment]\nkind = bound-check\n")), ConfigError);
  EXPECT_NO_THROW(validate(parseConfigText("[experiment]\nkind = bound-check\n"), 5));
  EXPECT_THROW(validate(parseConfigText("[experiment]\nkind = bound-check\nseed = 1\n[operator]\n"
                                        "source = random-permutation-weight\n")),
               ConfigError);
  EXPECT_THROW(validate(parseConfigText("[experiment]\nkind = bound-check\nseed = 1\n[output]\n"
                                        "trace_csv = a\nsummary_json = a\n")),
               ConfigError);
  EXPECT_THROW(validate(parseConfigText("[experiment]\nkind = crossed-limit\n[operator]\n"
                                        "source = permutation-weight\nalpha = 1 0\nweights = 1\n")),
               ConfigError);
}

TEST(Run, ThreeCycleDemo) {
  const auto dir = scratch("three_cycle");
  const auto r = run(parseConfigText(demos().at("three-cycle")), {dir, 1, std::nullopt});
  EXPECT_EQ(r.exitCode, 0) << r.message;
  const auto summary = nlohmann::json::parse(slurp(dir / "three-cycle_summary.json"));
  EXPECT_EQ(summary["schema_version"], kSummarySchemaVersion);
  EXPECT_NEAR(summary["metrics"]["H_min"].get<double>(), 2.0, 1e-15);
  EXPECT_NEAR(summary["metrics"]["H_max"].get<double>(), 2.0, 1e-15);
  EXPECT_EQ(slurp(dir / "three-cycle_trace.csv").substr(0, 52),
            "step,traceNorm2,opNorm,normalityDefect,distToLimit\n0");
}

TEST(Run, FailingAssertionGivesExitOne) {
  const auto cfg = parseConfigText(
      "[experiment]\nkind = crossed-limit\nname = strict\n[operator]\nsource = permutation-weight\n"
      "alpha = 1 2 3 4 5 6 7 0\nweights = 1 5 1 1 1 1 1 1\n[parameters]\nmax_steps = 3\ntol = 1e-9\ndense_steps = 0\n");
  const auto r = run(cfg, {scratch("strict"), 1, std::nullopt});
  EXPECT_EQ(r.exitCode, 1);
  EXPECT_NE(r.message.find("limit_distance"), std::string::npos);
}

TEST(Run, NumericalFailureGivesExitThree) {
  // A surrogate tolerance far below what the degree cap can certify.
  const auto cfg = parseConfigText("[experiment]\nkind = bound-check\nseed = 1\n[parameters]\neps = 1e-9\n");
  const auto r = run(cfg, {scratch("numerical"), 1, std::nullopt});
  EXPECT_EQ(r.exitCode, 3);
  EXPECT_NE(r.message.find("polynomial_surrogate"), std::string::npos);
}

TEST(Run, ThreadCountDoesNotChangeOutput) {
  const std::string text =
      "[experiment]\nkind = brown-equality\nname = det\nseed = 8\n[operator]\nsource = random-permutation-weight\n"
      "dim = 12\nzero_prob = 0.1\n[parameters]\ntrials = 6\nm = 6\n";
  const auto a = scratch("det_a"), b = scratch("det_b");
  run(parseConfigText(text), {a, 1, std::nullopt});
  run(parseConfigText(text), {b, 4, std::nullopt});
  for (const auto& entry : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
}

TEST(MatrixFile, ReadsComplexEntries) {
  const auto dir = scratch("matrix_file");
  std::ofstream(dir / "m.txt") << "2\n1 0 0 1\n0 -1 2 0\n";
  const auto t = readMatrixFile((dir / "m.txt").string());
  EXPECT_EQ(t(0, 1), aluthge::Complex(0, 1));
  EXPECT_EQ(t(1, 0), aluthge::Complex(0, -1));
  std::ofstream(dir / "bad.txt") << "2\n1 0 0 1\n";
  EXPECT_THROW(readMatrixFile((dir / "bad.txt").string()), aluthge::InvalidInput);
}
