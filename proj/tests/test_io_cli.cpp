#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "multistop/cli/run.hpp"
#include "multistop/io/serialize.hpp"

using namespace multistop;

namespace {

const std::string kSamples = MULTISTOP_SAMPLES_DIR;

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "multistop");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

// The installed binary, for exit statuses and the environment.
Outcome run_process(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(MULTISTOP_CLI_PATH) + "' " + args + " 2>/dev/null";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return {-1, "", ""};
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), p)) > 0) o.out.append(buf.data(), got);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string model(const std::string& name) { return kSamples + "/" + name; }

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("multistop_test_" + name)).string();
}

}  // namespace

TEST(Serialize, ExtendedNumbers) {
  EXPECT_EQ(io::ext(kMinusInf), "-inf");
  EXPECT_EQ(io::ext_value(io::ext(kMinusInf)), kMinusInf);
  EXPECT_EQ(io::ext_value(1.25), 1.25);
  EXPECT_THROW(io::ext_value(nlohmann::json::array()), ConfigError);
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::strtod(io::num(x).c_str(), nullptr), x);
  EXPECT_EQ(io::num(0.5), "0.5");
}

TEST(Serialize, CurveAndThresholdFamiliesRoundTrip) {
  SolveSpec spec;
  spec.seed_sensitivity = false;
  const auto fam = solve_curve_family(IntensityModel::frechet(3.0), 2, spec);
  const auto back = io::family_from_json(nlohmann::json::parse(io::to_json(fam).dump()));
  EXPECT_EQ(back.t_grid, fam.t_grid);
  EXPECT_EQ(back.x_grid, fam.x_grid);
  EXPECT_EQ(back.model_hash, fam.model_hash);
  for (int j = 1; j <= 2; ++j) {
    EXPECT_EQ(back.levels[j - 1].values, fam.levels[j - 1].values);
    EXPECT_EQ(back.levels[j - 1].free, fam.levels[j - 1].free);
  }
  const auto th = thresholds_from_family(fam);
  const auto th2 = io::thresholds_from_json(nlohmann::json::parse(io::to_json(th).dump()));
  EXPECT_EQ(th2.levels[1].values, th.levels[1].values);
  EXPECT_EQ(io::to_json(th2).dump(), io::to_json(th).dump());
  EXPECT_THROW(io::family_from_json(io::to_json(th)), ConfigError);
}

TEST(Serialize, GumbelFamilyKeepsItsInfiniteBoundary) {
  SolveSpec spec;
  spec.seed_sensitivity = false;
  const auto fam = solve_curve_family(IntensityModel::gumbel(), 1, spec);
  const auto j = io::to_json(fam);
  EXPECT_EQ(j.at("c"), "-inf");
  EXPECT_EQ(io::family_from_json(j).c, kMinusInf);
  const std::string csv = io::curves_csv(fam, 50, 20);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "level,t,x,u");
  EXPECT_NE(csv.find("1,0,-inf,"), std::string::npos);
}

TEST(Serialize, ThresholdTableRoundTrip) {
  const auto T = backward_thresholds(DiscreteModel(6, BaseDistribution::exponential(1.0)), 2);
  const auto back = io::table_from_json(nlohmann::json::parse(io::to_json(T).dump()));
  EXPECT_EQ(back.n, 6);
  EXPECT_EQ(back.m, 2);
  for (int j = 1; j <= 2; ++j)
    for (long i = 0; i <= 6 - j; ++i) {
      EXPECT_EQ(back.column(j, i).w, T.column(j, i).w);
      EXPECT_EQ(back.column(j, i).free, T.column(j, i).free);
    }
  EXPECT_EQ(back.W(2, 1, 0.7), T.W(2, 1, 0.7));
  const std::string csv = io::table_csv(T);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "j,i,x,W");
}

TEST(Serialize, ModelsRoundTripThroughJson) {
  for (const char* name : {"uniform01.json", "exponential.json", "pareto3.json", "discounted_exponential.json",
                           "dice.json"}) {
    const auto j = io::read_json_file(model(name));
    const auto m = DiscreteModel::from_json(j);
    const auto again = DiscreteModel::from_json(m.to_json());
    EXPECT_EQ(again.to_json(), m.to_json()) << name;
  }
  for (const char* name : {"gumbel_hom.json", "frechet2.json", "weibull1.json", "translation.json"}) {
    const auto m = IntensityModel::from_json(io::read_json_file(model(name)));
    EXPECT_EQ(IntensityModel::from_json(m.to_json()).to_json(), m.to_json()) << name;
  }
  EXPECT_THROW(io::read_json_file(temp_path("missing.json")), ConfigError);
}

TEST(Cli, DpValueOfThreeUniforms) {
  const auto o = run_cli({"dp", "--model", model("uniform01.json"), "--value"});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out, "0.6953125\n");
}

TEST(Cli, CsvOutputCarriesMetadataComment) {
  const auto o = run_cli({"dp", "--model", model("uniform01.json")});
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream in(o.out);
  std::string first, header;
  std::getline(in, first);
  std::getline(in, header);
  EXPECT_EQ(first.rfind("# multistop dp config_hash=", 0), 0u) << first;
  EXPECT_NE(first.find("model_hash="), std::string::npos);
  EXPECT_NE(first.find("seed=0"), std::string::npos);
  EXPECT_EQ(header, "j,i,x,W");
}

TEST(Cli, JsonOutputCarriesTheModelHash) {
  const auto o = run_cli({"curves", "--model", model("gumbel_hom.json"), "--m", "1", "--format", "json"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = nlohmann::json::parse(o.out);
  const auto fam = io::family_from_json(j);
  // The family hashes the normalized model, the metadata the file as given.
  const auto file = io::read_json_file(model("gumbel_hom.json"));
  EXPECT_EQ(fam.model_hash, config_hash(IntensityModel::from_json(file).to_json()));
  EXPECT_EQ(j.at("metadata").at("model_hash"), config_hash(file));
  EXPECT_EQ(j.at("metadata").at("subcommand"), "curves");
}

TEST(Cli, WritesToAFileAndReadsItBack) {
  const std::string path = temp_path("thresholds.json");
  const auto o = run_cli({"curves", "--model", model("frechet2.json"), "--m", "2", "--thresholds", "--format", "json",
                          "--out", path});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto th = io::thresholds_from_json(io::read_json_file(path));
  EXPECT_EQ(th.m(), 2);
  std::filesystem::remove(path);
}

TEST(Cli, ClosedFormRoots) {
  const auto o = run_cli({"closed-form", "--case", "3", "--m", "2", "--roots"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("0.458675145"), std::string::npos) << o.out;
}

TEST(Cli, SeedFlagAndEnvironmentAgree) {
  const auto a = run_cli({"simulate", "--model", model("uniform01.json"), "--reps", "500", "--seed", "5"});
  ASSERT_EQ(a.code, 0) << a.err;
  const std::string args = "simulate --model '" + model("uniform01.json") + "' --reps 500";
  const auto b = run_process(args, "MULTISTOP_SEED=5");
  ASSERT_EQ(b.code, 0);
  const auto rows = [](const std::string& s) { return s.substr(s.find('\n', s.find('\n') + 1)); };
  EXPECT_EQ(rows(a.out), rows(b.out));
  EXPECT_NE(b.out.find("seed=5"), std::string::npos);
  const auto c = run_process(args, "MULTISTOP_SEED=6");
  EXPECT_NE(rows(c.out), rows(a.out));
}

TEST(Cli, RerunsAreByteIdentical) {
  const std::string args = "simulate --model '" + model("exponential.json") + "' --n 50 --m 2 --reps 2000 --seed 9";
  const auto a = run_process(args);
  const auto b = run_process(args + " --threads 3");
  ASSERT_EQ(a.code, 0);
  EXPECT_FALSE(a.out.empty());
  const auto c = run_process(args);
  EXPECT_EQ(a.out, c.out);
  // The thread count is part of the configuration hash but not of the numbers.
  EXPECT_EQ(a.out.substr(a.out.find('\n')), b.out.substr(b.out.find('\n')));
}

TEST(Cli, ExitStatuses) {
  EXPECT_EQ(run_process("check").code, 0);
  EXPECT_EQ(run_process("dp --model /nonexistent/model.json").code, 2);
  EXPECT_EQ(run_process("dp --model '" + model("uniform01.json") + "' --m 5").code, 2);
  EXPECT_EQ(run_process("simulate --model '" + model("uniform01.json") + "' --reps 10", "MULTISTOP_SEED=abc").code, 2);
  EXPECT_EQ(run_process("no-such-command").code, 2);
  // Unreachable quadrature tolerance is an engine failure, not a configuration error.
  EXPECT_EQ(run_process("dp --model '" + model("exponential.json") + "' --n 40 --m 2 --nodes 4 --tolerance 1e-15").code,
            1);
  const std::string bad = temp_path("bad.json");
  {
    std::ofstream f(bad);
    f << "{ not json";
  }
  EXPECT_EQ(run_process("curves --model '" + bad + "'").code, 2);
  std::filesystem::remove(bad);
}
