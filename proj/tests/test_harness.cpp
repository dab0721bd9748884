#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lqglab/lqglab.hpp"

using namespace lqglab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lqglab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig config(const std::string& text) {
  ExperimentConfig c;
  apply_config_text(c, text);
  return c;
}

}  // namespace

TEST(Config, ParsesFlatKeyValueText) {
  const auto c = config("experiment = dimension  # trailing comment\n\n d_gamma=4\nseeds = 1..3, 7\neps_list = 0.5,0.25,0.125\n");
  EXPECT_EQ(c.experiment, "dimension");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3, 7}));
  EXPECT_EQ(c.eps_list.size(), 3u);
  EXPECT_NEAR(c.resolved_xi(), std::sqrt(8.0 / 3.0) / 4.0, 1e-15);
  EXPECT_NO_THROW(validate(c));
  EXPECT_THROW(config("nonsense = 1"), ValidationError);
  EXPECT_THROW(config("just words"), ValidationError);
  EXPECT_THROW(config("n = -4"), ValidationError);
  EXPECT_THROW(config("seeds = 5..2"), ValidationError);
  EXPECT_THROW(config("gamma = abc"), ValidationError);
}

TEST(Config, ValidationFailures) {
  try {
    validate(config("experiment = banana\nseeds = 1"));
    FAIL() << "unknown experiment accepted";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    for (const auto& name : experiment_names()) EXPECT_NE(msg.find(name), std::string::npos) << name;
  }
  EXPECT_THROW(validate(config("experiment = dimension\nseeds = 1")), ValidationError);
  EXPECT_THROW(validate(config("experiment = dimension\nseeds = 1\nd_gamma = 4\nxi = 0.4")), ValidationError);
  EXPECT_THROW(validate(config("experiment = dimension\nseeds = 1\nd_gamma = 2")), ValidationError);
  EXPECT_THROW(validate(config("experiment = arcsine\nseeds = 1,1")), ValidationError);
  EXPECT_THROW(validate(config("experiment = arcsine")), ValidationError);
  EXPECT_THROW(validate(config("experiment = arcsine\nseeds = 1\ngamma = 2")), ValidationError);
  EXPECT_THROW(validate(config("experiment = arcsine\nseeds = 1\nfield = torus")), ValidationError);
  EXPECT_NO_THROW(validate(config("experiment = arcsine\nseeds = 1")));
}

TEST(Harness, RerunsAreBitwiseIdenticalAcrossWorkerCounts) {
  const auto dir = scratch("rerun");
  auto c = config("experiment = exp-functional\nxi = 0.5\nseeds = 1..6\ndt = 0.01");
  c.output_dir = (dir / "a").string();
  const auto a = run_experiment(c);
  c.output_dir = (dir / "b").string();
  c.parallelism = 3;
  const auto b = run_experiment(c);
  EXPECT_EQ(slurp(dir / "a" / "exp-functional_samples.csv"), slurp(dir / "b" / "exp-functional_samples.csv"));
  EXPECT_EQ(a.aggregate, b.aggregate);
  EXPECT_EQ(a.rows.size(), 6u);
  EXPECT_EQ(aggregate_rows(c, a.rows), a.aggregate);
  const auto rec = nlohmann::json::parse(slurp(dir / "a" / "exp-functional_aggregate.json"));
  EXPECT_EQ(rec.at("code_version"), kCodeVersion);
  EXPECT_EQ(rec.at("seeds").size(), 6u);
  EXPECT_TRUE(rec.contains("wall_clock_seconds"));
  EXPECT_EQ(rec.at("parameters").at("xi"), 0.5);
}

TEST(Harness, FieldCacheIsBitwiseAndRecoversFromCorruption) {
  const auto dir = scratch("cache");
  FieldCache cache((dir / "cache").string());
  const GridSpec s(32, 1.0 / 8);
  std::vector<std::string> warnings;
  const auto first = cache.get(FieldKind::WholePlaneGFF, s, 1.2, 5, &warnings);
  const auto path = cache.path_for(field_cache_key(FieldKind::WholePlaneGFF, s, 1.2, 5));
  ASSERT_TRUE(fs::exists(path));
  const auto again = cache.get(FieldKind::WholePlaneGFF, s, 1.2, 5, &warnings);
  EXPECT_EQ(again.values, first.values);
  EXPECT_TRUE(warnings.empty());
  EXPECT_EQ(first.values, sample_gff(s, 5).values);

  fs::resize_file(path, 100);
  const auto healed = cache.get(FieldKind::WholePlaneGFF, s, 1.2, 5, &warnings);
  EXPECT_EQ(healed.values, first.values);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("recomputing"), std::string::npos);
  EXPECT_EQ(fs::file_size(path), slurp(path).size());
  EXPECT_NO_THROW(io::load(path, io::read_field));
  EXPECT_NE(field_cache_key(FieldKind::WholePlaneGFF, s, 1.2, 5), field_cache_key(FieldKind::QuantumCone, s, 1.2, 5));
}

TEST(Harness, CachedExperimentMatchesUncached) {
  const auto dir = scratch("cached_run");
  auto c = config("experiment = weyl\nd_gamma = 4\nseeds = 1,2\nn = 32\ndelta = 0.125");
  c.output_dir = "";
  const auto plain = run_experiment(c);
  c.cache_dir = (dir / "cache").string();
  const auto cold = run_experiment(c);
  const auto warm = run_experiment(c);
  EXPECT_EQ(plain.rows, cold.rows);
  EXPECT_EQ(cold.rows, warm.rows);
  EXPECT_LT(plain.aggregate.at("max_distance_rel_err").get<double>(), 1e-12);
  EXPECT_LT(plain.aggregate.at("max_mass_rel_err").get<double>(), 1e-12);
}

TEST(Harness, FlatContentRatioHasNoSpread) {
  auto c = config("experiment = content-ratio\nfield = flat\nd_gamma = 4\nseeds = 1\neps_list = 0.5,0.25,0.125");
  c.output_dir = "";
  const auto r = run_experiment(c);
  EXPECT_EQ(r.rows.size(), 12u);
  for (const auto& level : r.aggregate.at("levels")) EXPECT_LE(level.at("cv").at("median").get<double>(), 1e-6);
}

TEST(Harness, PlotDataFiles) {
  const auto dir = scratch("plots");
  auto c = config("experiment = arcsine\nseeds = 1..20\nintervals = 16\ndt = 1e-3");
  c.output_dir = (dir / "out").string();
  const auto r = run_experiment(c);
  const auto files = emit_plot_data(r, (dir / "plots").string());
  ASSERT_EQ(files.size(), 1u);
  const std::string text = slurp(files[0]);
  EXPECT_EQ(text.rfind("# k empirical_p", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 17);
  EXPECT_EQ(r.aggregate.at("profile")[0].at("empirical").get<double>(), 1.0);
}

TEST(Harness, CovarianceRowsReproduceAggregate) {
  auto c = config("experiment = covariance\nn = 16\ndelta = 0.125\nseeds = 1..30");
  c.output_dir = "";
  const auto r = run_experiment(c);
  EXPECT_EQ(r.rows.size(), 30u);
  EXPECT_EQ(r.aggregate.at("pairs").get<std::size_t>(), 120u);
  EXPECT_EQ(aggregate_rows(c, r.rows), r.aggregate);
  EXPECT_THROW(run_experiment(config("experiment = covariance\nn = 128\ndelta = 0.03125\nseeds = 1")), ValidationError);
}
