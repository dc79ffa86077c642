#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("SPHEREFD_CLI");
  REQUIRE(env != nullptr);
  return env;
}

int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  fs::create_directories(dir);
  const fs::path path = dir / "config.txt";
  std::ofstream out(path);
  out << body;
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

const char* kCircleConfig = R"(
dim = 1
operator = { kappa = 1, alpha = 1.0 }
kernel = { family = "wendland", param = 3, eps = 0.5 }
nodes = { type = "fibonacci", n = 64 }
atlas = { nu_star = 10, lebesgue_samples = 32 }
solution = [ { l = 2, m = 0, coeff = 1.0 } ]
solver = { method = "dense-qr" }
n_list = [ 32, 64 ]
)";

}  // namespace

TEST_CASE("cli converge happy path writes csv and results", "[cli]") {
  const fs::path dir = fs::temp_directory_path() / "spherefd_cli_converge";
  fs::remove_all(dir);
  const fs::path config = write_config(dir, kCircleConfig);
  const int code =
      run_cli("converge --config " + config.string() + " --out " + (dir / "out").string());
  CHECK(code == 0);
  REQUIRE(fs::exists(dir / "out" / "convergence.csv"));
  REQUIRE(fs::exists(dir / "out" / "results.json"));
  const std::string csv = slurp(dir / "out" / "convergence.csv");
  CHECK(csv.rfind("n,h_A,max_err,rms_err,residual,est_order,theory_order\n", 0) == 0);
}

TEST_CASE("cli converge is byte-identical across runs", "[cli]") {
  const fs::path dir = fs::temp_directory_path() / "spherefd_cli_repeat";
  fs::remove_all(dir);
  const fs::path config = write_config(dir, kCircleConfig);
  REQUIRE(run_cli("converge --config " + config.string() + " --out " +
                  (dir / "a").string()) == 0);
  REQUIRE(run_cli("converge --config " + config.string() + " --out " +
                  (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "convergence.csv") == slurp(dir / "b" / "convergence.csv"));
}

TEST_CASE("cli solve and diagnose run the circle fixture", "[cli]") {
  const fs::path dir = fs::temp_directory_path() / "spherefd_cli_solve";
  fs::remove_all(dir);
  const fs::path config = write_config(dir, kCircleConfig);
  CHECK(run_cli("solve --config " + config.string() + " --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "results.json"));
  CHECK(run_cli("diagnose --config " + config.string() + " --out " +
                (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "diagnostics.json"));
}

TEST_CASE("cli exit codes distinguish usage from runtime errors", "[cli]") {
  const fs::path dir = fs::temp_directory_path() / "spherefd_cli_errors";
  fs::remove_all(dir);
  fs::create_directories(dir);

  //

  CHECK(run_cli("solve --config " + (dir / "missing.txt").string()) == 2);
  CHECK(run_cli("frobnicate") == 2);

  const fs::path bad_key = write_config(dir / "badkey", "dim = 2\nbogus = 1\n");
  CHECK(run_cli("solve --config " + bad_key.string()) == 2);

  // kappa = 2 exceeds the depth of Wendland ell = 2: a kernel smoothness
  // error from the pipeline, not a usage error.
  const fs::path depth = write_config(dir / "depth",
                                      "dim = 2\n"
                                      "operator = { kappa = 2 }\n"
                                      "kernel = { family = \"wendland\", param = 2 }\n"
                                      "nodes = { n = 120 }\n"
                                      "solution = [ { l = 1, m = 0 } ]\n");
  CHECK(run_cli("solve --config " + depth.string()) == 1);
}

TEST_CASE("cli print-config round trips", "[cli]") {
  const fs::path dir = fs::temp_directory_path() / "spherefd_cli_print";
  fs::remove_all(dir);
  const fs::path config = write_config(dir, kCircleConfig);
  const std::string cmd = cli_path() + " solve --config " + config.string() +
                          " --print-config > " + (dir / "printed.txt").string();
  REQUIRE(std::system(cmd.c_str()) == 0);
  const std::string printed = slurp(dir / "printed.txt");
  CHECK(printed.find("kernel = { family = \"wendland\", param = 3, eps = 0.5 }") !=
        std::string::npos);
  CHECK(printed.find("nu_star = 10") != std::string::npos);
}
