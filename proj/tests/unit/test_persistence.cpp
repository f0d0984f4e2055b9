#include "doctest.h"
#include "gen.hpp"

#include "json.hpp"
#include "psd/artifacts.hpp"
#include "psd/checkpoint.hpp"
#include "psd/errors.hpp"
#include "psd/run.hpp"
#include "psd/verify.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace psd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("psd_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("archive encode/decode round trip") {
  ckpt::Archive a;
  a.arrays.push_back({"w", {2, 3}, {1, 2, 3, 4, 5, 6.5}});
  a.arrays.push_back({"b", {1}, {-0.0}});
  a.metadata = R"({"x":1})";
  const std::string bytes = ckpt::encode_archive(a);
  CHECK(bytes.substr(0, 8) == "PSDCKPT1");
  const ckpt::Archive b = ckpt::decode_archive(bytes);
  REQUIRE(b.arrays.size() == 2);
  CHECK(b.arrays[0].dims == std::vector<std::uint32_t>{2, 3});
  CHECK(b.arrays[0].data == a.arrays[0].data);
  CHECK(std::signbit(b.arrays[1].data[0]));
  CHECK(b.metadata == a.metadata);
}

TEST_CASE("corrupt archives raise DataError") {
  ckpt::Archive a;
  a.arrays.push_back({"w", {4}, {1, 2, 3, 4}});
  const std::string bytes = ckpt::encode_archive(a);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(ckpt::decode_archive(bad), DataError);
  CHECK_THROWS_AS(ckpt::decode_archive(bytes.substr(0, bytes.size() - 3)), DataError);
  std::string version = bytes;
  version[8] = 9;
  CHECK_THROWS_AS(ckpt::decode_archive(version), DataError);
}

TEST_CASE("trainer checkpoint round trip is bitwise and resumes identically") {
  RunConfig cfg = verify::tiny_config(3);
  train::TrainerState st = train::make_trainer(cfg);
  train::run_epoch(st);
  train::run_epoch(st);
  const std::string bytes = ckpt::serialize(st);
  train::TrainerState back = ckpt::deserialize(bytes);
  CHECK(ckpt::serialize(back) == bytes);
  const auto m1 = train::run_epoch(st);
  const auto m2 = train::run_epoch(back);
  CHECK(io::metrics_line(m1) == io::metrics_line(m2));
  CHECK(st.agent.policy == back.agent.policy);
}

TEST_CASE("checkpoint files are written atomically and load back") {
  const fs::path dir = scratch_dir("ckpt");
  train::TrainerState st = train::make_trainer(verify::tiny_config(1));
  ckpt::save(st, dir / "c.bin");
  CHECK(fs::exists(dir / "c.bin"));
  CHECK_FALSE(fs::exists(dir / "c.bin.tmp"));
  CHECK(ckpt::serialize(ckpt::load(dir / "c.bin")) == ckpt::serialize(st));
  CHECK_THROWS(ckpt::load(dir / "missing.bin"));
}

TEST_CASE("metrics lines carry the schema keys") {
  train::EpochMetrics m;
  m.epoch = 4;
  m.L_min = 5;
  m.L_max = 20;
  m.encoder_loss = -1.5;
  const auto j = nlohmann::json::parse(io::metrics_line(m));
  for (const char* k : {"epoch", "L_min", "L_max", "mean_return_psd", "mean_return_ext",
                        "encoder_loss", "actor_loss", "critic_loss", "alpha"}) {
    CHECK(j.contains(k));
  }
  CHECK(j["critic_loss"].is_null());
  CHECK_FALSE(j.contains("lambda_m"));
  m.lambda_m = 30.0;
  CHECK(nlohmann::json::parse(io::metrics_line(m)).contains("lambda_m"));
}

TEST_CASE("trajectory CSV round trip is exact") {
  auto g = gen::rng(1);
  SkillTrajectory tr;
  tr.L = 12;
  tr.z = gen::vector(g, 2);
  tr.states = gen::matrix(g, 21, 3);
  tr.actions = gen::matrix(g, 20, 1);
  tr.v_x = gen::vector(g, 20);
  tr.r_psd = gen::vector(g, 20);
  tr.r_ext = gen::vector(g, 20);
  std::stringstream ss;
  io::write_trajectory_csv(ss, tr);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header == "t,L,z_0,z_1,obs_0,obs_1,obs_2,act_0,r_psd,r_ext");
  const io::TrajectoryTable t = io::read_trajectory_csv(ss);
  CHECK(t.L == 12);
  CHECK(t.z == tr.z);
  CHECK(t.obs == tr.states.topRows(20));
  CHECK(t.act == tr.actions);
  CHECK(t.r_psd == tr.r_psd);
}

TEST_CASE("malformed trajectory CSV names the row") {
  std::stringstream ss("t,L,obs_0,act_0,r_psd,r_ext\n0,5,1,0.5,1,0\n1,5,abc,0.5,1,0\n");
  try {
    io::read_trajectory_csv(ss);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  std::stringstream short_row("t,L,obs_0,act_0,r_psd,r_ext\n0,5,1\n");
  CHECK_THROWS_AS(io::read_trajectory_csv(short_row), DataError);
}

TEST_CASE("spectrum rows and CSV schema") {
  Vector x(200);
  for (int t = 0; t < 200; ++t) x(t) = std::sin(0.05 * 2 * 3.141592653589793 * t);
  const auto rows = io::spectrum_rows(3, 10, analysis::spectrum(x, 4));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rank == 1);
  CHECK(rows[0].freq == doctest::Approx(0.05));
  std::stringstream ss;
  io::write_spectrum_csv(ss, rows);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "skill_id,L,freq,amp,rank");
}

TEST_CASE("geometry JSON has the relative error fields") {
  const Vector one = Vector::Constant(4, encoder::optimal_chord(10));
  const Vector ls = Vector::Constant(4, 10.0);
  const auto j = nlohmann::json::parse(io::geometry_json(
      analysis::geometry_from_distances(10, one, ls, Vector::Zero(4))));
  CHECK(j["L"] == 10);
  CHECK(j["rel_err_onestep"].get<double>() < 1e-12);
  CHECK(j.contains("rel_err_Lstep"));
}

TEST_CASE("number formatting is shortest round trip") {
  CHECK(io::format_number(0.1) == "0.1");
  CHECK(io::format_number(1e-5) == "1e-05");
  CHECK(std::stod(io::format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("dump periods keep the requested count") {
  const auto p = run::dump_periods(5, 20, 16);
  CHECK(p.size() == 16);
  CHECK(p.front() == 5);
  CHECK(p.back() == 20);
  CHECK(run::dump_periods(10, 10, 4) == std::vector<int>{10, 10, 10, 10});
}

TEST_CASE("training run writes its artifacts and resumes without gaps") {
  const fs::path dir = scratch_dir("run");
  RunConfig cfg = verify::tiny_config(2);
  cfg.out_dir = dir.string();
  cfg.dump_skills = 4;
  cfg.epochs = 2;
  run::RunResult r = run::train(cfg);
  for (const char* f : {"metrics.jsonl", "checkpoint.bin", "traj/skill_00.csv", "traj/latent_00.csv",
                        "pca.csv", "spectrum.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  train::TrainerState st = ckpt::load(dir / "checkpoint.bin");
  CHECK(st.epoch == 2);
  st.cfg.epochs = 4;
  run::continue_training(std::move(st), {nullptr, false, false});
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  int expect = 1;
  while (std::getline(in, line)) CHECK(nlohmann::json::parse(line)["epoch"] == expect++);
  CHECK(expect == 5);
  const std::string first = slurp(dir / "metrics.jsonl");

  // Uninterrupted four-epoch run with the same seed gives the same stream.
  const fs::path dir2 = scratch_dir("run2");
  cfg.out_dir = dir2.string();
  cfg.epochs = 4;
  run::train(cfg, {nullptr, false, false});
  CHECK(slurp(dir2 / "metrics.jsonl") == first);
}

TEST_CASE("verify suites pass") {
  CHECK(verify::gradcheck().pass());
  const verify::Report inv = verify::invariants();
  for (const auto& f : inv.failures()) MESSAGE(f);
  CHECK(inv.pass());
}
