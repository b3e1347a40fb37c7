#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = SUNPROBIT_CLI_PATH;

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() /
          ("sunprobit_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  fs::path file(const std::string& name) const { return dir / name; }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args) {
  const int status = std::system((kCli + " " + args + " 2>/dev/null").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kCsv =
    "y,x1,x2\n"
    "1,0.5,-1.2\n"
    "2,1.1,0.3\n"
    "3,-0.7,0.8\n"
    "1,0.2,-0.5\n"
    "2,0.9,1.5\n";

json base_config() {
  return {{"family", "sequential"}, {"L", 3},      {"method", "exact"},
          {"draws", 200},           {"seed", 7},   {"evidence", true}};
}

}  // namespace

TEST_CASE("fit runs are byte-identical across repeats and thread settings") {
  Scratch s;
  write_file(s.file("d.csv"), kCsv);
  write_file(s.file("cfg.json"), base_config().dump());
  for (const char* method : {"exact", "pfm", "mf"}) {
    json cfg = base_config();
    cfg["method"] = method;
    if (std::string(method) != "exact") cfg["evidence"] = false;
    write_file(s.file("cfg.json"), cfg.dump());
    const std::string common = "fit --config " + s.file("cfg.json").string() +
                               " --data " + s.file("d.csv").string();
    REQUIRE(run(common + " --out " + s.file("a.json").string()) == 0);
    REQUIRE(run(common + " --out " + s.file("b.json").string()) == 0);
    REQUIRE(run(common + " --threads 8 --out " + s.file("c.json").string()) ==
            0);
    const std::string a = read_file(s.file("a.json"));
    CHECK(a == read_file(s.file("b.json")));
    CHECK(a == read_file(s.file("c.json")));
    CHECK(!a.empty());
  }
}

TEST_CASE("fit artifact feeds predict and reproduces in-process prediction") {
  Scratch s;
  write_file(s.file("d.csv"), kCsv);
  json cfg = base_config();
  cfg["holdout"] = {5};
  write_file(s.file("cfg.json"), cfg.dump());
  REQUIRE(run("fit --config " + s.file("cfg.json").string() + " --data " +
              s.file("d.csv").string() + " --out " +
              s.file("fit.json").string()) == 0);
  const json fit = json::parse(read_file(s.file("fit.json")));
  REQUIRE(fit.contains("holdout"));

  write_file(s.file("new.csv"), "x1,x2\n0.9,1.5\n");
  REQUIRE(run("predict --artifact " + s.file("fit.json").string() +
              " --newdata " + s.file("new.csv").string() + " --out " +
              s.file("pred.json").string()) == 0);
  const json pred = json::parse(read_file(s.file("pred.json")));
  const auto& via_artifact = pred.at("rows").at(0).at("probabilities");
  const auto& via_fit = fit.at("holdout").at("rows").at(0).at("probabilities");
  for (int l = 0; l < 3; ++l)
    CHECK(via_artifact.at(l).get<double>() ==
          doctest::Approx(via_fit.at(l).get<double>()).epsilon(1e-12));
}

TEST_CASE("evidence reproduces the symmetric binary closed form") {
  Scratch s;
  write_file(s.file("d.csv"), "y,x\n1,1.0\n");
  const json cfg = {{"family", "sequential"},
                    {"L", 2},
                    {"standardize", false},
                    {"intercept", false},
                    {"prior", {{"type", "gaussian"}, {"omega_scale", 1.0}}}};
  write_file(s.file("cfg.json"), cfg.dump());
  REQUIRE(run("evidence --config " + s.file("cfg.json").string() + " --data " +
              s.file("d.csv").string() + " --out " +
              s.file("ev.json").string()) == 0);
  const json ev = json::parse(read_file(s.file("ev.json")));
  CHECK(std::exp(ev.at("log_evidence").get<double>()) ==
        doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("string labels map in first-appearance order") {
  Scratch s;
  write_file(s.file("d.csv"), "y,x\nb,0.4\na,1.0\nb,-0.2\n");
  const json cfg = {{"family", "sequential"}, {"L", 2}, {"method", "exact"},
                    {"draws", 50},            {"seed", 1}};
  write_file(s.file("cfg.json"), cfg.dump());
  REQUIRE(run("fit --config " + s.file("cfg.json").string() + " --data " +
              s.file("d.csv").string() + " --out " +
              s.file("fit.json").string()) == 0);
  const json fit = json::parse(read_file(s.file("fit.json")));
  const auto labels = fit.at("preprocessing").at("labels");
  REQUIRE(labels.size() == 2);
  CHECK(labels.at(0) == "b");
  CHECK(labels.at(1) == "a");
}

TEST_CASE("constant-zero predictor columns are dropped and reported") {
  Scratch s;
  write_file(s.file("d.csv"), "y,x1,zero\n1,0.5,0\n2,1.0,0\n1,-0.3,0\n");
  const json cfg = {{"family", "sequential"}, {"L", 2}, {"method", "exact"},
                    {"draws", 50},            {"seed", 2}};
  write_file(s.file("cfg.json"), cfg.dump());
  REQUIRE(run("fit --config " + s.file("cfg.json").string() + " --data " +
              s.file("d.csv").string() + " --out " +
              s.file("fit.json").string()) == 0);
  const json fit = json::parse(read_file(s.file("fit.json")));
  const auto dropped = fit.at("preprocessing").at("dropped");
  REQUIRE(dropped.size() == 1);
  CHECK(dropped.at(0) == "zero");
}

TEST_CASE("error conditions map to documented exit codes") {
  Scratch s;
  write_file(s.file("d.csv"), kCsv);
  write_file(s.file("cfg.json"), base_config().dump());

  // 2: unreadable or invalid configuration.
  CHECK(run("fit --config " + s.file("missing.json").string() + " --data " +
            s.file("d.csv").string()) == 2);
  write_file(s.file("bad.json"), "{not json");
  CHECK(run("fit --config " + s.file("bad.json").string() + " --data " +
            s.file("d.csv").string()) == 2);
  json bad_method = base_config();
  bad_method["method"] = "magic";
  write_file(s.file("badm.json"), bad_method.dump());
  CHECK(run("fit --config " + s.file("badm.json").string() + " --data " +
            s.file("d.csv").string()) == 2);

  // 2: missing required arguments.
  CHECK(run("fit --data " + s.file("d.csv").string()) == 2);

  // 3: malformed data.
  write_file(s.file("ragged.csv"), "y,x\n1,0.5\n2\n");
  CHECK(run("fit --config " + s.file("cfg.json").string() + " --data " +
            s.file("ragged.csv").string()) == 3);
  write_file(s.file("text.csv"), "y,x\n1,abc\n");
  CHECK(run("fit --config " + s.file("cfg.json").string() + " --data " +
            s.file("text.csv").string()) == 3);

  // 5: exact method over the configured cap.
  json capped = base_config();
  capped["caps"] = {{"sampler", 2}, {"cdf", 2}};
  write_file(s.file("cap.json"), capped.dump());
  CHECK(run("fit --config " + s.file("cap.json").string() + " --data " +
            s.file("d.csv").string()) == 5);
}
