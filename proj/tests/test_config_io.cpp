#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "voi/csv.hpp"
#include "voi/engine.hpp"

using namespace voi;
namespace fs = std::filesystem;

namespace {

const char* kMinimalSingle = R"({
  "experiment": "single",
  "episode": {
    "horizon": 20,
    "process": {"a": 0.6, "sigma2": 1.0},
    "filter": {"K": 0.2},
    "sources": [{"id": 1, "sigma2_s": 0.5, "arrival_rate": 0.4}],
    "channel": {"p": 0.7}
  }
})";

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("voi_test_") + tag);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("minimal single config parses with documented defaults") {
  const ExperimentSpec spec = parse_config(kMinimalSingle);
  CHECK(spec.kind == ExperimentKind::single);
  CHECK(spec.seed == 1);
  CHECK(spec.reps == 100);
  CHECK(spec.mode == IndexMode::paper);
  CHECK(spec.arrival_lag == 0);
  REQUIRE(spec.policies.size() == 1);
  CHECK(spec.policies[0] == PolicyKind::index_voi);
  REQUIRE(spec.episode.has_value());
  CHECK(spec.episode->block.e0 == 0.0);
  CHECK(spec.episode->block.noise_history == 64);
  CHECK(spec.episode->block.filter.a_c == Catch::Approx(0.48));
}

TEST_CASE("gain above the stability bound is rejected by name") {
  std::string text = kMinimalSingle;
  const auto pos = text.find("\"a\": 0.6");
  text.replace(pos, 8, "\"a\": 0.9");
  const auto kpos = text.find("\"K\": 0.2");
  text.replace(kpos, 8, "\"K\": 0.5");
  try {
    parse_config(text);
    FAIL("expected a config error");
  } catch (const ConfigError& err) {
    CHECK(err.code() == ConfigError::Code::assumption);
    CHECK(std::string(err.what()).find("Assumption 1") != std::string::npos);
    CHECK(std::string(err.what()).find("0.234") != std::string::npos);
  }
}

TEST_CASE("off-simplex access vector is a simplex error") {
  const char* text = R"({
    "experiment": "multiproc",
    "multi": {
      "horizon": 10,
      "channel": {"p": 0.8},
      "access": [0.6, 0.5],
      "processes": [
        {"process": {"a": 0.6, "sigma2": 1.0}, "filter": {"K": 0.2},
         "sources": [{"id": 1, "sigma2_s": 0.5, "arrival_rate": 0.3}]},
        {"process": {"a": 0.6, "sigma2": 1.0}, "filter": {"K": 0.2},
         "sources": [{"id": 1, "sigma2_s": 0.5, "arrival_rate": 0.3}]}
      ]
    }
  })";
  try {
    parse_config(text);
    FAIL("expected a config error");
  } catch (const ConfigError& err) {
    CHECK(err.code() == ConfigError::Code::simplex);
    CHECK(std::string(err.what()).find("sum") != std::string::npos);
  }
}

TEST_CASE("schema violations carry the offending path") {
  SECTION("unknown key") {
    std::string text = kMinimalSingle;
    text.insert(text.find("\"episode\""), "\"unexpected\": 1, ");
    try {
      parse_config(text);
      FAIL("expected a config error");
    } catch (const ConfigError& err) {
      CHECK(err.code() == ConfigError::Code::schema);
      CHECK(std::string(err.what()).find("unexpected") != std::string::npos);
    }
  }
  SECTION("syntax error reports the line") {
    try {
      parse_config("{\n  \"experiment\": \"single\",\n  oops\n}");
      FAIL("expected a config error");
    } catch (const ConfigError& err) {
      CHECK(err.code() == ConfigError::Code::schema);
      CHECK(std::string(err.what()).find("line 3") != std::string::npos);
    }
  }
  SECTION("zero process noise is out of range for configs") {
    std::string text = kMinimalSingle;
    const auto pos = text.find("\"sigma2\": 1.0");
    text.replace(pos, 13, "\"sigma2\": 0.0");
    CHECK_THROWS_AS(parse_config(text), ConfigError);
  }
}

TEST_CASE("config round-trips through emit and parse") {
  const char* text = R"({
    "experiment": "compare",
    "seed": 42,
    "reps": 250,
    "mode": "exact",
    "arrival_lag": 1,
    "policies": ["index-voi", "freshest-first", "fifo"],
    "episode": {
      "horizon": 50,
      "process": {"a": -0.4, "sigma2": 0.7},
      "filter": {"K": 0.3},
      "sources": [{"id": 1, "sigma2_s": 0.1, "arrival_rate": 0.5},
                  {"id": 2, "sigma2_s": 2.0, "arrival_rate": 0.25}],
      "channel": {"p": 0.6},
      "e0": 1.5,
      "initial_queue": [{"t_gen": 1, "sigma2_s": 0.4, "source_id": 0}],
      "noise_history": 32
    }
  })";
  const ExperimentSpec spec = parse_config(text);
  const json emitted = emit_config(spec);
  const ExperimentSpec reparsed = parse_config_json(emitted);
  CHECK(emit_config(reparsed) == emitted);
}

TEST_CASE("trajectory csv: header-only when empty, byte-identical on rewrite") {
  const fs::path dir = temp_dir("csv");
  const std::string path = (dir / "t.csv").string();
  write_trajectories_csv(path, {});
  CHECK(read_all(path) ==
        "experiment,policy,replication,slot,e2,decision_packet,delivered\n");

  EpisodeConfig cfg;
  cfg.horizon = 15;
  cfg.block.process = ProcessParams{0.6, 1.0};
  cfg.block.filter = make_filter_params(0.2, cfg.block.process);
  cfg.block.sources = {SourceProfile{1, 0.5, 0.5}};
  cfg.channel.p = 0.7;
  cfg.seed = 3;
  std::vector<TrajectoryRow> rows;
  for (std::uint64_t r = 0; r < 5; ++r)
    append_episode_rows(rows, "single", "index-voi", r,
                        run_episode(cfg, PolicyKind::index_voi, r));
  const std::string p1 = (dir / "a.csv").string(), p2 = (dir / "b.csv").string();
  write_trajectories_csv(p1, rows);
  write_trajectories_csv(p2, rows);
  CHECK(read_all(p1) == read_all(p2));
  CHECK(read_all(p1).find("single,index-voi,0,1,") != std::string::npos);
}

TEST_CASE("17-digit floats round-trip exactly") {
  RandomStream rng(55);
  for (int i = 0; i < 500; ++i) {
    const double v = (rng.uniform01() - 0.5) * std::pow(10.0, rng.uniform(-12, 12));
    const std::string s = format_g17(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
}

TEST_CASE("summary matches a recomputation from the trajectory rows") {
  EpisodeConfig cfg;
  cfg.horizon = 30;
  cfg.block.process = ProcessParams{0.6, 1.0};
  cfg.block.filter = make_filter_params(0.2, cfg.block.process);
  cfg.block.sources = {SourceProfile{1, 0.1, 0.5}, SourceProfile{2, 2.0, 0.5}};
  cfg.channel.p = 0.7;
  cfg.seed = 9;
  const std::size_t reps = 50;

  std::vector<TrajectoryRow> rows;
  double mean = 0.0;
  for (std::uint64_t r = 0; r < reps; ++r) {
    const EpisodeResult res = run_episode(cfg, PolicyKind::index_voi, r);
    append_episode_rows(rows, "compare", "index-voi", r, res);
    mean += res.cumulative_cost;
  }
  mean /= static_cast<double>(reps);

  const fs::path dir = temp_dir("summary");
  const std::string tpath = (dir / "trajectories.csv").string();
  write_trajectories_csv(tpath, rows);

  // recompute the mean cumulative cost from the written file
  std::ifstream in(tpath);
  std::string line;
  std::getline(in, line);  // header
  double total = 0.0;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    std::size_t pos = 0;
    for (int comma = 0; comma < 4; ++comma) pos = line.find(',', pos) + 1;
    const std::size_t end = line.find(',', pos);
    total += std::strtod(line.substr(pos, end - pos).c_str(), nullptr);
    ++count;
  }
  CHECK(count == reps * static_cast<std::size_t>(cfg.horizon));
  const double recomputed = total / static_cast<double>(reps);
  CHECK(std::abs(recomputed - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
}

TEST_CASE("metadata sidecar records config, seed, version and mode") {
  const ExperimentSpec spec = parse_config(kMinimalSingle);
  const fs::path dir = temp_dir("meta");
  const std::string path = (dir / "metadata.json").string();
  write_metadata(path, spec);
  const json meta = json::parse(read_all(path));
  CHECK(meta["seed"] == 1);
  CHECK(meta["mode"] == "paper");
  CHECK(meta.contains("version"));
  CHECK(meta["config"]["experiment"] == "single");
  // the sidecar config reproduces the spec exactly
  CHECK(emit_config(parse_config_json(meta["config"])) == emit_config(spec));
}
