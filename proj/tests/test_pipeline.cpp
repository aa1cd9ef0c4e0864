#include <gtest/gtest.h>

#include <filesystem>

#include "caemb/pipeline.hpp"

using namespace caemb;
namespace fs = std::filesystem;

#ifndef CAEMB_TINY_DIR
#error "CAEMB_TINY_DIR must point at data/tiny"
#endif

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("caemb_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny_config(const fs::path& out) {
  auto cfg = load_config(std::string(CAEMB_TINY_DIR) + "/pipeline.conf");
  cfg.output = out.string();
  cfg.cache = (out / "cache").string();
  return cfg;
}

}  // namespace

TEST(Config, ParsesKeysAndResolvesPaths) {
  auto cfg = parse_config(
      "# comment\ncorpus = text.txt\nwindow = 5  # trailing\nweighting = uniform\n"
      "transforms = ROOTROOT-CA, PMI\nk_grid = 2, 50\np_grid = 0, 0.5\ndatasets = a.txt,/abs/b.txt\n"
      "segment_lines = yes\nquartiles = nearest-rank\n",
      "/base");
  EXPECT_EQ(cfg.corpus, "/base/text.txt");
  EXPECT_EQ(cfg.counting.window, 5u);
  EXPECT_EQ(cfg.counting.weighting, Weighting::uniform);
  ASSERT_EQ(cfg.transforms.size(), 2u);
  EXPECT_EQ(cfg.transforms[1].kind, TransformKind::pmi);
  EXPECT_EQ(cfg.k_grid, (std::vector<Eigen::Index>{2, 50}));
  EXPECT_EQ(cfg.p_grid, (std::vector<double>{0, 0.5}));
  EXPECT_EQ(cfg.datasets, (std::vector<std::string>{"/base/a.txt", "/abs/b.txt"}));
  EXPECT_TRUE(cfg.rules.segment_lines);
  EXPECT_EQ(cfg.quartiles, QuartileRule::nearest_rank);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("window = 2\nbogus = 1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_config("window\n"), ParseError);
  EXPECT_THROW(parse_config("gsvd = maybe\n"), ParseError);
  EXPECT_THROW(parse_config("transforms = FOO\n"), ParseError);
  EXPECT_THROW(parse_config("k_grid = 2, x\n"), ParseError);
}

TEST(Config, ValidationRejectsBadGrids) {
  auto out = scratch("validate");
  auto cfg = tiny_config(out);
  EXPECT_NO_THROW(cfg.validate());
  auto c = cfg;
  c.k_grid.clear();
  EXPECT_THROW(run_pipeline(c), ConfigError);
  EXPECT_FALSE(fs::exists(out / "manifest.tsv"));
  c = cfg;
  c.k_grid = {0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = cfg;
  c.corpus = (out / "missing.txt").string();
  EXPECT_THROW(c.validate(), ConfigError);
  c = cfg;
  c.datasets.push_back((out / "missing.tsv").string());
  EXPECT_THROW(c.validate(), ConfigError);
  c = cfg;
  c.transforms.clear();
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Summary, BestKPerBlockAndTotals) {
  std::vector<EvalReport> reps{
      {"ws", "A", 2, 0, 10, 0, 0.5},  {"ws", "A", 10, 0, 10, 0, 0.5}, {"ws", "A", 50, 0, 10, 0, 0.4},
      {"sl", "A", 2, 0, 10, 0, 0.1},  {"sl", "A", 10, 0, 10, 0, 0.2}, {"ws", "B", 2, 0, 10, 0, 0.3},
      {"ws", "A", 2, 0.5, 10, 0, 0.6}};
  auto s = emit_summary(reps);
  EXPECT_EQ(s,
            "block\tmethod\tp\tk\trho\n"
            "sl\tA\t0\t10\t0.20000000000000001\n"
            "ws\tA\t0\t2\t0.5\n"
            "ws\tA\t0.5\t2\t0.59999999999999998\n"
            "ws\tB\t0\t2\t0.29999999999999999\n"
            "Total\tA\t0\t\t0.69999999999999996\n"
            "Total\tA\t0.5\t\t0.59999999999999998\n"
            "Total\tB\t0\t\t0.29999999999999999\n");
}

TEST(Pipeline, TinyRunProducesAllArtifacts) {
  auto out = scratch("tiny");
  auto r = run_pipeline(tiny_config(out));
  ASSERT_EQ(r.reports.size(), 12u);
  for (const auto& e : r.manifest.entries) {
    ASSERT_TRUE(fs::exists(out / e.file)) << e.file;
    EXPECT_EQ(sha256_hex(read_file((out / e.file).string())), e.hash);
  }
  for (const char* f : {"vocab.tsv", "cooccur.tsv", "transform_TTEST.tsv", "factor_RAW-CA.sigma.tsv",
                        "factor_PMI-GSVD.U.tsv", "reports.tsv", "summary.tsv", "fences.tsv"})
    EXPECT_NE(r.manifest.find(f), nullptr) << f;
  EXPECT_TRUE(fs::exists(out / "manifest.tsv"));
  EXPECT_TRUE(r.cached_steps.empty());
  for (const auto& rep : r.reports) {
    EXPECT_EQ(rep.pairs_used, 60u);
    EXPECT_GT(rep.rho, 0.0) << rep.method << " k=" << rep.k;
  }
}

TEST(Pipeline, TinyRunGoldenValues) {
  auto out = scratch("golden");
  auto r = run_pipeline(tiny_config(out));
  auto rho = [&](const std::string& method, Eigen::Index k) {
    for (const auto& rep : r.reports)
      if (rep.method == method && rep.k == k) return rep.rho;
    ADD_FAILURE() << method << " k=" << k << " missing";
    return 0.0;
  };
  EXPECT_NEAR(rho("RAW-CA", 2), 0.36680955340484467, 1e-9);
  EXPECT_NEAR(rho("ROOT-CA", 10), 0.37994567701691501, 1e-9);
  EXPECT_NEAR(rho("ROOTROOT-CA", 2), 0.40914015512933399, 1e-9);
  EXPECT_NEAR(rho("ROOT-CCA", 2), 0.35069553736376691, 1e-9);
  EXPECT_NEAR(rho("PPMI-SVD", 2), 0.31223341271995086, 1e-9);
  EXPECT_NEAR(rho("PMI-GSVD", 10), 0.28420782696284325, 1e-9);
}

TEST(Pipeline, RerunHitsCacheWithIdenticalManifest) {
  auto out = scratch("rerun");
  auto cfg = tiny_config(out);
  auto first = run_pipeline(cfg);
  const auto m1 = read_file((out / "manifest.tsv").string());
  auto second = run_pipeline(cfg);
  EXPECT_EQ(read_file((out / "manifest.tsv").string()), m1);
  EXPECT_EQ(second.manifest.to_tsv(), first.manifest.to_tsv());
  EXPECT_EQ(second.cached_steps.size(), 15u);

  // A fresh output directory with a fresh cache reproduces the same bytes.
  auto other = scratch("rerun_fresh");
  auto cfg2 = tiny_config(other);
  run_pipeline(cfg2);
  EXPECT_EQ(read_file((other / "manifest.tsv").string()), m1);

  // A tampered artifact invalidates its cache record.
  write_file((out / "reports.tsv").string(), "tampered\n");
  auto third = run_pipeline(cfg);
  EXPECT_EQ(std::count(third.cached_steps.begin(), third.cached_steps.end(), "evaluate"), 0);
  EXPECT_EQ(read_file((out / "manifest.tsv").string()), m1);
}

TEST(Pipeline, ChangedParameterRecomputesDownstreamOnly) {
  auto out = scratch("change");
  auto cfg = tiny_config(out);
  run_pipeline(cfg);
  cfg.seed = 2;
  auto r = run_pipeline(cfg);
  for (const char* step : {"vocab", "cooccur", "transform"})
    EXPECT_GT(std::count(r.cached_steps.begin(), r.cached_steps.end(), step), 0) << step;
  EXPECT_EQ(std::count(r.cached_steps.begin(), r.cached_steps.end(), "factorize"), 0);
  for (const auto& e : r.manifest.entries)
    if (e.step == "factorize") {
      EXPECT_NE(e.params.find("seed=2"), std::string::npos);
    }
}

TEST(Pipeline, FailureCarriesStageAndPartialManifest) {
  auto out = scratch("fail");
  auto cfg = tiny_config(out);
  cfg.min_count = 1000000;  // empty vocabulary
  try {
    run_pipeline(cfg);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_NE(e.stage(), "vocab");
    EXPECT_NE(e.partial_manifest().find("vocab.tsv"), nullptr);
    EXPECT_EQ(e.partial_manifest().find("reports.tsv"), nullptr);
  }
}
