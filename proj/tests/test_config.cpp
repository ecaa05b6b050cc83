#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "spoc/algorithm.hpp"
#include "spoc/artifacts.hpp"
#include "spoc/config.hpp"
#include "spoc/errors.hpp"

namespace spoc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_error_key(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

TEST(Presets, HeatBenchmarkHasReferenceParameters) {
  const RunConfig c = preset_config("heat_benchmark");
  EXPECT_EQ(c.L, 10.0);
  EXPECT_EQ(c.T, 1.0);
  EXPECT_EQ(c.dt, 0.01);
  EXPECT_EQ(c.n_elems, 400u);
  EXPECT_EQ(c.d, 5u);
  EXPECT_EQ(c.alpha, 0.001);
  EXPECT_EQ(c.n_SGD, 1000u);
  EXPECT_EQ(c.S, 200u);
  EXPECT_EQ(c.N_W, 50u);
  EXPECT_EQ(c.sigma_amplitude, 0.05);
  EXPECT_EQ(c.g_amplitude, 0.03);
  EXPECT_EQ(c.branch_interval, 0.05);
  EXPECT_EQ(c.n_steps(), 100u);
  EXPECT_EQ(c.branch_every(), 5u);
  EXPECT_EQ(c.hxp_mode, HxpMode::Adjoint);
  EXPECT_EQ(c.rollout_mode, RolloutMode::FreshBrownian);
  EXPECT_EQ(c.particle_select, ParticleSelect::Weighted);
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(parse_config_text("{}"), c);
}

TEST(Presets, AllNamedPresetsValidate) {
  for (const auto& name : preset_names()) {
    const RunConfig c = preset_config(name);
    EXPECT_EQ(c.preset, name);
    EXPECT_NO_THROW(validate(c)) << name;
    EXPECT_NO_THROW(make_problem(c)) << name;
  }
  EXPECT_EQ(preset_config("uncontrolled").n_SGD, 0u);
  EXPECT_EQ(config_error_key([] { preset_config("nope"); }), "preset");
}

TEST(Validation, TimeStepMustDivideHorizon) {
  RunConfig c = preset_config("heat_benchmark");
  apply_override(c, "dt=0.02");
  EXPECT_EQ(config_error_key([&] { validate(c); }), "branch_interval");
  apply_override(c, "branch_interval=0.1");
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(c.n_steps(), 50u);
  apply_override(c, "dt=0.03");
  EXPECT_EQ(config_error_key([&] { validate(c); }), "dt");
}

TEST(Validation, RejectsNonPositiveGeometry) {
  for (const char* bad : {"L=0", "L=-1", "dt=0", "n_elems=1", "S=0", "d=0", "N_W=400", "alpha=-1", "batch=0"}) {
    RunConfig c = preset_config("heat_benchmark");
    apply_override(c, bad);
    const std::string key(bad, std::string_view(bad).find('='));
    EXPECT_EQ(config_error_key([&] { validate(c); }), key) << bad;
  }
}

TEST(Validation, BranchIntervalMustBeMultipleOfStep) {
  RunConfig c = preset_config("heat_benchmark");
  apply_override(c, "branch_interval=0.015");
  EXPECT_EQ(config_error_key([&] { validate(c); }), "branch_interval");
}

TEST(Validation, ControlBoxNeedsBothOrderedBounds) {
  RunConfig c = preset_config("heat_benchmark");
  apply_override(c, "control_lower=-1");
  EXPECT_EQ(config_error_key([&] { validate(c); }), "control_lower");
  apply_override(c, "control_upper=-2");
  EXPECT_EQ(config_error_key([&] { validate(c); }), "control_lower");
  apply_override(c, "control_upper=2");
  EXPECT_NO_THROW(validate(c));
  EXPECT_FALSE(make_problem(c).spec.control_set.is_unconstrained());
}

TEST(Parsing, UnknownKeyIsNamed) {
  EXPECT_EQ(config_error_key([] { parse_config_text(R"({"bogus": 1})"); }), "bogus");
  RunConfig c;
  EXPECT_EQ(config_error_key([&] { apply_override(c, "n_sgd=3"); }), "n_sgd");
}

TEST(Parsing, IllTypedValueIsNamed) {
  EXPECT_EQ(config_error_key([] { parse_config_text(R"({"S": "many"})"); }), "S");
  EXPECT_EQ(config_error_key([] { parse_config_text(R"({"S": -3})"); }), "S");
  EXPECT_EQ(config_error_key([] { parse_config_text(R"({"hxp_mode": "sideways"})"); }), "hxp_mode");
  EXPECT_EQ(config_error_key([] { parse_config_text(R"({"warm_start": 2})"); }), "warm_start");
  EXPECT_EQ(config_error_key([] { parse_config_text(R"({"preset": 7})"); }), "preset");
  EXPECT_THROW(parse_config_text("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
}

TEST(Parsing, PresetKeySelectsDefaults) {
  const RunConfig c = parse_config_text(R"({"preset": "linear_gaussian_test", "S": 64})");
  RunConfig expected = preset_config("linear_gaussian_test");
  expected.S = 64;
  EXPECT_EQ(c, expected);
  EXPECT_EQ(parse_config_text(R"({"S": 64})", "uncontrolled").preset, "uncontrolled");
}

TEST(Overrides, AcceptJsonAndBareStrings) {
  RunConfig c;
  apply_override(c, "hxp_mode=pointwise");
  apply_override(c, "rollout_mode", "\"simulated_y\"");
  apply_override(c, "warm_start=false");
  apply_override(c, "seed=12345678901");
  apply_override(c, "alpha=0.25");
  EXPECT_EQ(c.hxp_mode, HxpMode::Pointwise);
  EXPECT_EQ(c.rollout_mode, RolloutMode::SimulatedY);
  EXPECT_FALSE(c.warm_start);
  EXPECT_EQ(c.seed, 12345678901ull);
  EXPECT_EQ(c.alpha, 0.25);
  EXPECT_THROW(apply_override(c, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(c, "=3"), ConfigError);
  EXPECT_EQ(config_error_key([&] { apply_override(c, "preset=uncontrolled"); }), "preset");
}

TEST(RoundTrip, EmitThenParseIsIdentity) {
  std::vector<RunConfig> configs;
  for (const auto& name : preset_names()) configs.push_back(preset_config(name));
  RunConfig odd = preset_config("heat_benchmark");
  for (const char* kv : {"hxp_mode=scalar_pairing", "z2_mode=raw", "z2_baseline=running_mean", "particle_select=uniform",
                         "learning_rate=inverse", "rollout_mode=simulated_y", "filter_mode=none", "control_lower=-0.5",
                         "control_upper=0.25", "alpha=0.1234567890123456789", "dt=0.005", "seed=18446744073709551615",
                         "threads=8", "dump_noise=true", "warm_start=false", "initial_modes=2", "initial_spread=0.1"}) {
    apply_override(odd, kv);
  }
  configs.push_back(odd);
  for (const RunConfig& c : configs) {
    const std::string text = config_to_json(c);
    EXPECT_EQ(parse_config_text(text), c) << text;
    EXPECT_EQ(config_to_json(parse_config_text(text)), text);
  }
}

const std::set<std::string> kNumericKeys = {
    "L", "T", "dt", "n_elems", "N_W", "d", "sigma_amplitude", "g_amplitude", "observation_gain", "sensor_width",
    "initial_modes", "initial_spread", "control_lower", "control_upper", "S", "branch_interval", "filter_mode",
    "alpha", "n_SGD", "batch", "learning_rate", "particle_select", "rollout_mode", "hxp_mode", "z2_mode",
    "z2_baseline", "warm_start", "cost_samples", "seed", "preset"};

TEST(Manifest, EveryNumericKeyIsEchoed) {
  RunConfig c = preset_config("heat_benchmark");
  apply_override(c, "control_lower=-1");
  apply_override(c, "control_upper=1");
  const json j = json::parse(config_to_json(c));
  for (const auto& key : kNumericKeys) EXPECT_TRUE(j.contains(key)) << key;
  // Every emitted key is also accepted back, one at a time.
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") continue;
    RunConfig d = preset_config("heat_benchmark");
    EXPECT_NO_THROW(apply_override(d, key, value.dump())) << key;
  }
}

RunConfig tiny_config(unsigned threads = 1) {
  RunConfig c = preset_config("heat_benchmark");
  for (const char* kv : {"n_elems=40", "N_W=20", "T=0.1", "S=16", "n_SGD=4", "cost_samples=4", "alpha=0.05"}) {
    apply_override(c, kv);
  }
  c.threads = threads;
  validate(c);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_root() { return fs::temp_directory_path() / ("spoc_test_config_" + std::to_string(::getpid())); }

class ScratchCleanup : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(scratch_root()); }
};
const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = scratch_root() / name;
  fs::remove_all(dir);
  return dir;
}

TEST(Artifacts, WritesAllFilesWithManifest) {
  const auto problem = make_problem(tiny_config());
  const auto report = run_algorithm1(problem);
  const fs::path dir = scratch_dir("artifacts");
  const auto files = write_artifacts(report, problem.ops, dir);
  std::set<std::string> names;
  for (const auto& f : files) names.insert(f.filename().string());
  EXPECT_EQ(names, (std::set<std::string>{"cost_trace.csv", "sgd_trace.csv", "filter_trace.csv", "control_final.csv",
                                          "state_snapshots.csv", "config.json", "manifest.json"}));
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  for (const char* key : {"config", "seed", "git_revision", "wall_seconds", "files", "realized_cost"}) {
    EXPECT_TRUE(manifest.contains(key)) << key;
  }
  for (const auto& key : kNumericKeys) EXPECT_TRUE(manifest["config"].contains(key)) << key;
  EXPECT_EQ(parse_config_text(slurp(dir / "config.json")), problem.config);

  // One CSV row per outer step, per SGD iteration, per node and step.
  auto lines = [&](const char* f) {
    const std::string s = slurp(dir / f);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
  };
  EXPECT_EQ(lines("cost_trace.csv"), 1u + 11u);
  EXPECT_EQ(lines("sgd_trace.csv"), 1u + 4u * 10u);
  EXPECT_EQ(lines("filter_trace.csv"), 1u + 11u);
  EXPECT_EQ(lines("control_final.csv"), 1u + 11u * 39u);
  EXPECT_EQ(lines("state_snapshots.csv"), 1u + 11u * 39u);
  EXPECT_EQ(slurp(dir / "cost_trace.csv").substr(0, 36), "outer_step,t,cost_mean,cost_stderr\n0");
}

TEST(Artifacts, NoiseDumpIsFlagGated) {
  RunConfig c = tiny_config();
  c.dump_noise = true;
  const auto problem = make_problem(c);
  const fs::path dir = scratch_dir("noise");
  write_artifacts(run_algorithm1(problem), problem.ops, dir);
  const std::string s = slurp(dir / "truth_noise.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), 1u + 10u * (20u + 5u));
}

TEST(Artifacts, UncontrolledBaselineIsLocked) {
  RunConfig c = preset_config("uncontrolled");
  for (const char* kv : {"n_elems=40", "N_W=20", "T=0.2", "S=16", "cost_samples=64"}) apply_override(c, kv);
  validate(c);
  const auto report = run_algorithm1(make_problem(c));
  std::vector<double> values;
  for (const auto& row : report.cost_trace) values.push_back(row.mean);
  values.push_back(report.realized_cost);
  testing::expect_golden("uncontrolled_cost_trace", values);
  // Nothing is optimized, so every applied control is zero.
  for (const Field& u : report.applied_controls) EXPECT_EQ(u, Field(u.size()));
}

#ifdef SPOC_CLI_PATH

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SPOC_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kTinyFlags =
    "--set n_elems=40 --set N_W=20 --set T=0.1 --set S=16 --set n_SGD=4 --set cost_samples=4 --set alpha=0.05 -q";

std::vector<std::string> csv_names() {
  return {"cost_trace.csv", "sgd_trace.csv", "filter_trace.csv", "control_final.csv", "state_snapshots.csv"};
}

TEST(Cli, ListsPresets) {
  const fs::path dir = scratch_dir("cli_list");
  fs::create_directories(dir);
  EXPECT_EQ(run_cli("--list-presets", dir / "log"), 0);
  const std::string out = slurp(dir / "log");
  for (const auto& name : preset_names()) EXPECT_NE(out.find(name), std::string::npos);
}

TEST(Cli, ReportsConfigurationErrorsWithExitCodeTwo) {
  const fs::path dir = scratch_dir("cli_errors");
  fs::create_directories(dir);
  EXPECT_EQ(run_cli("--preset nope --out " + (dir / "a").string(), dir / "log1"), 2);
  EXPECT_NE(slurp(dir / "log1").find("heat_benchmark"), std::string::npos);
  EXPECT_EQ(run_cli("--set dt=0.03 --out " + (dir / "b").string(), dir / "log2"), 2);
  EXPECT_NE(slurp(dir / "log2").find("'dt'"), std::string::npos);
  EXPECT_EQ(run_cli("--set frobnicate=1 --out " + (dir / "c").string(), dir / "log3"), 2);
  EXPECT_NE(slurp(dir / "log3").find("frobnicate"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "a"));
}

TEST(Cli, RunsAreByteIdenticalAcrossRepeatsAndThreads) {
  const fs::path dir = scratch_dir("cli_determinism");
  fs::create_directories(dir);
  const std::string flags = std::string(kTinyFlags) + " --seed 7";
  ASSERT_EQ(run_cli(flags + " --set threads=1 --out " + (dir / "a").string(), dir / "log_a"), 0) << slurp(dir / "log_a");
  ASSERT_EQ(run_cli(flags + " --set threads=1 --out " + (dir / "b").string(), dir / "log_b"), 0);
  ASSERT_EQ(run_cli(flags + " --set threads=8 --out " + (dir / "c").string(), dir / "log_c"), 0);
  for (const auto& name : csv_names()) {
    const std::string a = slurp(dir / "a" / name);
    EXPECT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, slurp(dir / "b" / name)) << name;
    EXPECT_EQ(a, slurp(dir / "c" / name)) << name;
  }
}

TEST(Cli, ConfigEchoReplaysTheRun) {
  const fs::path dir = scratch_dir("cli_replay");
  fs::create_directories(dir);
  ASSERT_EQ(run_cli(std::string(kTinyFlags) + " --seed 3 --out " + (dir / "a").string(), dir / "log_a"), 0);
  ASSERT_EQ(run_cli("-q --config " + (dir / "a" / "config.json").string() + " --out " + (dir / "b").string(),
                    dir / "log_b"),
            0)
      << slurp(dir / "log_b");
  for (const auto& name : csv_names()) EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
  const json manifest = json::parse(slurp(dir / "a" / "manifest.json"));
  EXPECT_EQ(manifest["seed"].get<std::uint64_t>(), 3u);
  EXPECT_EQ(manifest["config"]["n_elems"].get<std::size_t>(), 40u);
}

TEST(Cli, DifferentSeedsDiffer) {
  const fs::path dir = scratch_dir("cli_seeds");
  fs::create_directories(dir);
  ASSERT_EQ(run_cli(std::string(kTinyFlags) + " --seed 1 --out " + (dir / "a").string(), dir / "log_a"), 0);
  ASSERT_EQ(run_cli(std::string(kTinyFlags) + " --seed 2 --out " + (dir / "b").string(), dir / "log_b"), 0);
  EXPECT_NE(slurp(dir / "a" / "state_snapshots.csv"), slurp(dir / "b" / "state_snapshots.csv"));
}

#endif

}  // namespace
}  // namespace spoc
