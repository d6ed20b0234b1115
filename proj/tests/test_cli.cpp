#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "sgnn/io.hpp"

using namespace sgnn;
namespace fs = std::filesystem;

namespace {

const std::string kCli = SGNN_CLI_PATH;
const std::string kData = SGNN_TEST_DATA;

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("sgnn_cli_" + std::to_string(::getpid()));
  Scratch() { fs::create_directories(dir); }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

// Runs the CLI with stdout/stderr captured to files; returns the exit status.
int run(const std::string& args, const fs::path& out_dir, std::string* stdout_text = nullptr) {
  const auto out = out_dir / "stdout.txt", err = out_dir / "stderr.txt";
  const std::string cmd = "'" + kCli + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  if (stdout_text) {
    std::ifstream in(out);
    std::ostringstream ss;
    ss << in.rdbuf();
    *stdout_text = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny_args() { return "--data '" + kData + "/tiny' --config '" + kData + "/tiny.conf'"; }

Json read_json(const fs::path& f) {
  std::ifstream in(f);
  return Json::parse(in);
}

}  // namespace

TEST_CASE("version prints JSON") {
  Scratch s;
  std::string text;
  REQUIRE(run("--version", s.dir, &text) == 0);
  const Json j = Json::parse(text);
  CHECK(j.at("checkpoint_version") == kCheckpointVersion);
  CHECK(j.at("report_schema_version") == kReportSchemaVersion);
}

TEST_CASE("train on the tiny bundle writes a valid report, log and checkpoint") {
  Scratch s;
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run("train " + tiny_args() + " --lambda 0.3 --epochs 60 --bounds --out '" +
                           (s.dir / "report.json").string() + "' --log '" + (s.dir / "log.jsonl").string() +
                           "' --checkpoint '" + (s.dir / "ck.json").string() + "'",
                       s.dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(code == 0);
  CHECK(secs < 10.0);

  const Json rep = read_json(s.dir / "report.json");
  CHECK_NOTHROW(validate_run_report(rep));
  CHECK(rep.at("dataset").at("nodes") == 60);
  CHECK(rep.contains("bounds"));

  std::ifstream log(s.dir / "log.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line); ++lines) CHECK(Json::accept(line));
  CHECK(lines == rep.at("epochs_run").get<std::size_t>());

  const Checkpoint ck = load_checkpoint(s.dir / "ck.json");
  CHECK(config_hash(ck.config) == rep.at("config_hash").get<std::string>());

  std::string text;
  REQUIRE(run("bounds --checkpoint '" + (s.dir / "ck.json").string() + "' --data '" + kData + "/tiny'", s.dir,
              &text) == 0);
  CHECK(Json::parse(text).contains("bounds"));
  REQUIRE(run("diagnose-energy --checkpoint '" + (s.dir / "ck.json").string() + "' --data '" + kData + "/tiny'",
              s.dir, &text) == 0);
  CHECK(Json::accept(text));
}

TEST_CASE("csv commands emit headers") {
  Scratch s;
  std::string text;
  REQUIRE(run("sweep-lambda " + tiny_args() + " --grid 0,0.5 --seeds 1 --epochs 10", s.dir, &text) == 0);
  CHECK(text.rfind("lambda,", 0) == 0);
  REQUIRE(run("sweep-edges " + tiny_args() + " --fractions 0.5,1 --seeds 1 --epochs 10", s.dir, &text) == 0);
  CHECK(text.rfind("fraction,", 0) == 0);
}

TEST_CASE("exit codes") {
  Scratch s;
  CHECK(run("train --bogus", s.dir) == 1);
  CHECK(run("no-such-command", s.dir) == 1);
  CHECK(run("train --data '" + (s.dir / "missing").string() + "'", s.dir) == 2);
  CHECK(run("train " + tiny_args() + " --set no_such_key=1", s.dir) == 1);
  CHECK(run("train " + tiny_args() + " --set lr=1e300 --epochs 5", s.dir) == 3);
}

TEST_CASE("train is deterministic under a fixed seed") {
  Scratch s;
  std::string a, b;
  const std::string args = "train " + tiny_args() + " --model gat --lambda 0.2 --seed 7 --epochs 30";
  REQUIRE(run(args, s.dir, &a) == 0);
  REQUIRE(run(args, s.dir, &b) == 0);
  CHECK(a == b);
  std::string c;
  REQUIRE(run("train " + tiny_args() + " --model gat --lambda 0.2 --seed 8 --epochs 30", s.dir, &c) == 0);
  CHECK(Json::parse(c).at("config").at("seed") == 8);
}
