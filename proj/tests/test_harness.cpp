#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "masclucb/cli.hpp"

using namespace masclucb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("masclucb_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "masclucb");
  std::ostringstream out, err;
  const int code = cli_entry(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  FAIL("missing column " << name);
  return 0;
}

const std::string kSmall =
    "experiment = single\nT = 300\nN = 10\ntopology = ring\nn_seeds = 2\nseed = 5\n";

}  // namespace

TEST_CASE("defaults match the experimental setup") {
  const auto c = parse_config("");
  REQUIRE(c.d == 2);
  REQUIRE(c.T == 20000);
  REQUIRE(c.R == 0.01);
  REQUIRE(c.S == 1.0);
  REQUIRE(c.lambda == 0.1);
  REQUIRE(c.delta == 0.01);
  REQUIRE(c.L == 1.0);
  REQUIRE(c.n_seeds == 50);
  REQUIRE(c.alpha == 0.2);
  REQUIRE(c.N == 100);
  REQUIRE_NOTHROW(validate(c));
}

TEST_CASE("config text round trip") {
  const auto c = parse_config(
      "experiment = connectivity_sweep # comment\nN = 100\nT = 500\nalpha = 0.3\n\n[sweep]\nk = 4, 16, 64, 99\n");
  REQUIRE(c.experiment == ExperimentKind::connectivity_sweep);
  REQUIRE(c.sweep_values == std::vector<double>{4, 16, 64, 99});
  const auto back = parse_config(to_text(c));
  REQUIRE(to_text(back) == to_text(c));
  const auto specs = expand(c);
  REQUIRE(specs.size() == 4);
  REQUIRE(specs[3].topology == TopologyKind::k_regular);
  REQUIRE(specs[3].k == 99u);
  REQUIRE(specs[2].instance.alpha == 0.3);
}

TEST_CASE("config errors name the constraint") {
  auto message = [](const std::string& text) {
    try {
      validate(parse_config(text));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  REQUIRE_THAT(message("alpha = 1.5\n"), Catch::Matchers::ContainsSubstring("alpha must lie in (0,1)"));
  REQUIRE_THAT(message("experiment = connectivity_sweep\n[sweep]\nk = 4, 100\n"),
               Catch::Matchers::ContainsSubstring("[1, N-1] = [1, 99]"));
  REQUIRE_THAT(message("experiment = alpha_sweep\n[sweep]\nalpha = 0.1, 1.2\n"),
               Catch::Matchers::ContainsSubstring("(0,1)"));
  REQUIRE_THAT(message("experiment = n_scaling\n[sweep]\nN = 0\n"),
               Catch::Matchers::ContainsSubstring("positive integers"));
  REQUIRE_THAT(message("experiment = alpha_sweep\n"), Catch::Matchers::ContainsSubstring("requires [sweep]"));
  REQUIRE_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config("T = ten\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config("experiment = alpha_sweep\n[sweep]\nk = 4\n"), ConfigError);
}

TEST_CASE("cli validate rejects alpha 1.5 with exit 2") {
  const auto dir = scratch("validate");
  const auto cfg = write_file(dir / "bad.cfg", "alpha = 1.5\n");
  const auto r = cli({"validate", cfg.string()});
  REQUIRE(r.code == 2);
  REQUIRE_THAT(r.err, Catch::Matchers::ContainsSubstring("alpha must lie in (0,1)"));
  const auto ok = cli({"validate", (fs::path(MASCLUCB_SOURCE_DIR) / "configs" / "default.cfg").string()});
  REQUIRE(ok.code == 0);
}

TEST_CASE("cli usage errors exit 2 with usage text") {
  const auto unknown = cli({"run", "x.cfg", "--frobnicate"});
  REQUIRE(unknown.code == 2);
  REQUIRE_THAT(unknown.err, Catch::Matchers::ContainsSubstring("Usage"));
  const auto missing_arg = cli({"run"});
  REQUIRE(missing_arg.code == 2);
  REQUIRE_THAT(missing_arg.err, Catch::Matchers::ContainsSubstring("Usage"));
  REQUIRE(cli({}).code == 2);
  REQUIRE(cli({"validate", "/nonexistent/config.cfg"}).code == 2);
}

TEST_CASE("cli bounds prints rho and h1 on the default config") {
  const auto r = cli({"bounds", (fs::path(MASCLUCB_SOURCE_DIR) / "configs" / "default.cfg").string()});
  REQUIRE(r.code == 0);
  REQUIRE_THAT(r.out, Catch::Matchers::ContainsSubstring("rho = 0.05\n"));
  REQUIRE_THAT(r.out, Catch::Matchers::ContainsSubstring("h1 = 0.1\n"));
  REQUIRE_THAT(r.out, Catch::Matchers::ContainsSubstring("regret_bound = "));
}

TEST_CASE("run --seeds 3 writes 3 raw CSVs and 1 aggregate") {
  const auto dir = scratch("files");
  const auto cfg = write_file(dir / "small.cfg", kSmall);
  const auto r = cli({"run", cfg.string(), "--seeds", "3", "--out", (dir / "out").string(), "--quiet"});
  REQUIRE(r.code == 0);
  std::size_t raw = 0;
  for (const auto& e : fs::directory_iterator(dir / "out" / "raw")) raw += e.path().extension() == ".csv";
  REQUIRE(raw == 3);
  REQUIRE(fs::exists(dir / "out" / "aggregate.csv"));
  REQUIRE(fs::exists(dir / "out" / "summary.csv"));
  const auto summary = read_csv(dir / "out" / "summary.csv");
  REQUIRE(summary.size() == 2);
  REQUIRE(summary[1][column(summary[0], "n_seeds")] == "3");
}

TEST_CASE("single seed, T = 10: one row per round") {
  const auto dir = scratch("rows");
  ExperimentConfig c;
  c.T = 10;
  c.n_seeds = 1;
  c.output_dir = (dir / "out").string();
  const auto res = run_experiment(c);
  const auto raw = read_csv(dir / "out" / "raw" / raw_csv_name(0, c.seed));
  REQUIRE(raw.size() == 11);
  REQUIRE(raw[0].size() == 10);
  const auto agg = read_csv(dir / "out" / "aggregate.csv");
  REQUIRE(agg.size() == 11);
  REQUIRE(agg[0][0] == "config_id");
  REQUIRE(res.configs[0].runs.size() == 1);
}

TEST_CASE("outputs are byte-identical across repeats and thread counts") {
  const auto dir = scratch("determinism");
  const auto cfg = write_file(dir / "sweep.cfg",
                              "experiment = alpha_sweep\nT = 400\nN = 8\ntopology = ring\nn_seeds = 3\n"
                              "[sweep]\nalpha = 0.1, 0.3\n");
  REQUIRE(cli({"run", cfg.string(), "--out", (dir / "a").string(), "--jobs", "1", "--quiet"}).code == 0);
  REQUIRE(cli({"run", cfg.string(), "--out", (dir / "b").string(), "--jobs", "4", "--quiet"}).code == 0);
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    REQUIRE(slurp(e.path()) == slurp(dir / "b" / rel));
  }
  REQUIRE(fnv1a(slurp(dir / "a" / "aggregate.csv")) == fnv1a(slurp(dir / "b" / "aggregate.csv")));
  REQUIRE(cli({"run", cfg.string(), "--out", (dir / "c").string(), "--seed", "2", "--quiet"}).code == 0);
  REQUIRE(slurp(dir / "a" / "aggregate.csv") != slurp(dir / "c" / "aggregate.csv"));
}

TEST_CASE("aggregate means equal an independent recomputation from raw CSVs") {
  const auto dir = scratch("crosscheck");
  auto c = parse_config(kSmall);
  c.n_seeds = 4;
  c.output_dir = (dir / "out").string();
  RunOptions opt;
  opt.jobs = 3;
  run_experiment(c, opt);
  const auto agg = read_csv(dir / "out" / "aggregate.csv");
  const std::vector<std::string> metrics{"inst_regret", "cum_regret", "expected_reward", "safety_threshold",
                                         "est_error"};
  std::vector<std::vector<std::vector<std::string>>> raws;
  for (std::size_t i = 0; i < 4; ++i) raws.push_back(read_csv(dir / "out" / "raw" / raw_csv_name(0, run_seed(c.seed, i))));
  REQUIRE(agg.size() == 301);
  for (std::size_t row = 1; row < agg.size(); ++row) {
    REQUIRE(agg[row][column(agg[0], "n_seeds")] == "4");
    for (const auto& m : metrics) {
      double sum = 0.0, sq = 0.0;
      for (const auto& raw : raws) {
        const double v = std::stod(raw[row][column(raw[0], m)]);
        sum += v;
        sq += v * v;
      }
      const double mean = sum / 4.0;
      const double se = std::sqrt(std::max(0.0, (sq - 4.0 * mean * mean) / 3.0) / 4.0);
      const double got = std::stod(agg[row][column(agg[0], "mean_" + m)]);
      const double got_se = std::stod(agg[row][column(agg[0], "stderr_" + m)]);
      REQUIRE(std::abs(got - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
      REQUIRE(std::abs(got_se - se) <= 1e-6 * std::max(1e-6, se));
    }
  }
}

TEST_CASE("raw CSV rows follow the schema") {
  const auto dir = scratch("schema");
  auto c = parse_config(kSmall);
  c.n_seeds = 1;
  c.output_dir = (dir / "out").string();
  run_experiment(c);
  const auto raw = read_csv(dir / "out" / "raw" / raw_csv_name(0, c.seed));
  REQUIRE(raw[0] == std::vector<std::string>{"round", "episode", "phase", "episode_type", "action", "inst_regret",
                                             "cum_regret", "expected_reward", "safety_threshold", "est_error"});
  for (std::size_t r = 1; r < raw.size(); ++r) {
    REQUIRE(raw[r].size() == 10);
    REQUIRE(std::stoul(raw[r][0]) == r);
    REQUIRE((raw[r][2] == "action" || raw[r][2] == "communication"));
    REQUIRE((raw[r][3] == "ucb" || raw[r][3] == "conservative"));
    if (raw[r][3] == "conservative") REQUIRE(raw[r][4].rfind("mix(", 0) == 0);
  }
}

TEST_CASE("parallel_for rethrows the first failure") {
  std::vector<int> hits(10, 0);
  REQUIRE_THROWS_WITH(parallel_for(10, 4,
                                   [&](std::size_t i) {
                                     hits[i] = 1;
                                     if (i == 3 || i == 7) throw std::runtime_error("item " + std::to_string(i));
                                   }),
                      "item 3");
  for (int h : hits) REQUIRE(h == 1);
}

TEST_CASE("episode plan matches a simulated run") {
  InstanceOptions opt;
  opt.horizon = 5000;
  opt.n_agents = 16;
  const auto inst = generate_instance(opt, 1);
  const auto g = build_topology(TopologyKind::k_regular, 16, 4);
  SimulationConfig sc;
  sc.horizon = 5000;
  sc.record_rounds = false;
  const auto trace = run(sc, inst, g, 1);
  const auto plan = plan_episodes(5000, 16, g.lambda2_abs());
  REQUIRE(plan.completed == trace.episodes_completed);
  REQUIRE(plan.last_comm_rounds == trace.comm_rounds_final);
}
