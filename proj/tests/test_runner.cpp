#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mfcoulomb/io.hpp"
#include "mfcoulomb/runner.hpp"

using namespace mfc;
using namespace mfc::runner;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfc_test_runner_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string small_config(const std::string& extra = "") {
  return "schema_version = 1\nexperiment = simulate\nN = 8\nepsilon = 0.1\nT = 0.01\noutputs = 4\nseeds = 0-2\n" + extra;
}

std::map<std::string, std::string> data_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name != "manifest.json") out[name] = io::read_file(e.path());
  }
  return out;
}

int code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return exit_code(e);
  }
  return 0;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(small_config("# comment\nrho0 = uniform_ball:2\nkernel = tree  # trailing\n"));
  CHECK(cfg.experiment == Experiment::simulate);
  CHECK(cfg.n_ladder == std::vector<std::size_t>{8});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(cfg.method == kernel::SumMethod::tree);
  CHECK(cfg.theta == 0.15);
  CHECK(cfg.t_end == 0.01);
  CHECK_NOTHROW(validate(cfg));
  CHECK(effective_dt(cfg) == doctest::Approx(kPi * 1e-3));

  const auto ladder = parse_config("schema_version=1\nN = 64, 256\nepsilon=0.1,0.05\nseeds=3,5,9-10\n");
  CHECK(ladder.n_ladder == std::vector<std::size_t>{64, 256});
  CHECK(ladder.eps_ladder == std::vector<double>{0.1, 0.05});
  CHECK(ladder.seeds == std::vector<std::uint64_t>{3, 5, 9, 10});
  CHECK(effective_dt(ladder) == doctest::Approx(kPi * 0.05 * 0.05 * 0.05));

  CHECK_THROWS_AS(parse_config("N = 8\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(small_config("bogus = 1\n")), ConfigError);
  CHECK_THROWS_AS(parse_config(small_config("N = 9\n")), ConfigError);
  CHECK_THROWS_AS(parse_config(small_config("kernel = fmm\n")), ConfigError);
  CHECK_THROWS_AS(parse_config(small_config("T = abc\n")), ConfigError);
  CHECK_THROWS_AS(parse_config("schema_version = 1\nnot a pair\n"), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("schema_version = 2\n")), ConfigError);
  CHECK_THROWS_AS(validate(parse_config(small_config("rho0 = cauchy:1\n"))), ConfigError);
  CHECK_THROWS_AS(validate(parse_config(small_config("rho0 = table:/nonexistent/table.csv\n"))), InputError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.cfg"), ConfigError);

  // output_dir does not enter the hash.
  CHECK(parse_config(small_config("output_dir = a\n")).canonical_text == parse_config(small_config()).canonical_text);
  CHECK(parse_config(small_config("theta = 0.2\n")).canonical_text != parse_config(small_config()).canonical_text);
}

TEST_CASE("step rule is enforced before any compute") {
  const auto cfg = parse_config(small_config("dt = 0.01\n"));
  try {
    validate(cfg);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("dt <= pi*eps^3") != std::string::npos);
    CHECK(exit_code(e) == 2);
  }
  const fs::path out = scratch("dtrule");
  CHECK(code_of([&] { run(cfg, RunOptions{out, 1, 0}); }) == 2);
  CHECK(fs::is_empty(out));
  CHECK_NOTHROW(validate(parse_config(small_config("dt = 0.003\n"))));
  CHECK_THROWS_AS(validate(parse_config(small_config("experiment = chaos_scan\n"))), ConfigError);
}

TEST_CASE("exit codes") {
  CHECK(exit_code(ConfigError("x")) == 2);
  CHECK(exit_code(InputError("x")) == 2);
  CHECK(exit_code(IoError("x")) == 4);
  CHECK(exit_code(StepSizeError("x")) == 3);
  CHECK(exit_code(std::runtime_error("x")) == 3);
}

TEST_CASE("simulate run, determinism and report") {
  const auto cfg = parse_config(small_config());
  const fs::path a = scratch("sim_a"), b = scratch("sim_b");
  const auto sa = run(cfg, RunOptions{a, 1, 0});
  run(cfg, RunOptions{b, 3, 0});
  CHECK(sa.directory == a);
  CHECK(fs::exists(a / "diag_N8_eps0.1_seed0.csv"));
  CHECK(fs::exists(a / "diag_N8_eps0.1_seed2.csv"));
  CHECK(data_files(a) == data_files(b));

  const auto manifest = nlohmann::json::parse(io::read_file(a / "manifest.json"));
  CHECK(manifest.at("schema_version") == 1);
  CHECK(manifest.at("experiment") == "simulate");
  CHECK(manifest.at("files").size() == 3);
  CHECK(manifest.contains("config_hash"));
  CHECK(manifest.contains("code_version"));

  const fs::path c = scratch("sim_c");
  run(cfg, RunOptions{c, 1, 10});
  CHECK(fs::exists(c / "diag_N8_eps0.1_seed12.csv"));
  CHECK(io::read_file(c / "diag_N8_eps0.1_seed10.csv") != io::read_file(a / "diag_N8_eps0.1_seed0.csv"));

  std::ostringstream os;
  report(a, os);
  CHECK(os.str().find("N8_eps0.1") != std::string::npos);
  CHECK(fs::exists(a / "summary_N8_eps0.1.csv"));

  // A single seed gives a degenerate band at the seed's own values.
  const fs::path one = scratch("sim_one");
  run(parse_config(small_config().replace(small_config().find("seeds = 0-2"), 11, "seeds = 4")), RunOptions{one, 1, 0});
  std::ostringstream os1;
  report(one, os1);
  const auto lines = io::read_file(one / "summary_N8_eps0.1.csv");
  const auto diag = io::read_file(one / "diag_N8_eps0.1_seed4.csv");
  const auto row = stats::diagnostics_from_csv(diag.substr(diag.find('\n') + 1, diag.find('\n', diag.find('\n') + 1) - diag.find('\n') - 1));
  const std::string e = io::format_double(row.energy);
  CHECK(lines.find("," + e + "," + e + "," + e + ",") != std::string::npos);
}

TEST_CASE("report on known medians") {
  const fs::path d = scratch("bands");
  for (int s = 0; s < 3; ++s) {
    stats::DiagnosticsRow r;
    r.t = 0.0;
    r.energy = 1.0 + s;
    r.energy_mollified = 10.0 * (s + 1);
    io::write_file(d / ("diag_N4_eps0.5_seed" + std::to_string(s) + ".csv"),
                   stats::diagnostics_header() + "\n" + stats::to_csv(r) + "\n");
  }
  std::ostringstream os;
  report(d, os);
  const auto text = io::read_file(d / "summary_N4_eps0.5.csv");
  CHECK(text.find("\n0,2,1.5,2.5,20,15,25,") != std::string::npos);

  CHECK_THROWS_AS(report(scratch("empty"), os), ConfigError);
  CHECK_THROWS_AS(report("/nonexistent/results", os), ConfigError);

  const auto b = band({4.0, 1.0, 3.0, 2.0});
  CHECK(b.median == 2.5);
  CHECK(b.lo == 1.75);
  CHECK(b.hi == 3.25);
  CHECK(b.mean == 2.5);
}

TEST_CASE("acceptance table") {
  const fs::path d = scratch("accept");
  Criterion c{1, "kernel bound", 0.5, 1.0, "<=", true, "note"};
  io::write_file(d / "acceptance.jsonl", c.to_json() + "\n" + Criterion{2, "other", NAN, 1.0, ">=", false, ""}.to_json() + "\n");
  const auto back = Criterion::from_json(c.to_json());
  CHECK(back.name == "kernel bound");
  CHECK(back.measured == 0.5);
  CHECK(back.pass);
  std::ostringstream os;
  report(d, os);
  CHECK(os.str().find("PASS") != std::string::npos);
  CHECK(os.str().find("FAIL") != std::string::npos);
  CHECK(fs::exists(d / "acceptance_table.csv"));
}

TEST_CASE("other experiments run end to end") {
  const fs::path p = scratch("pde");
  run(parse_config("schema_version=1\nexperiment=pde_solve\nT=0.05\noutputs=4\npde_cells=128\n"), RunOptions{p, 1, 0});
  CHECK(fs::exists(p / "pde_series.csv"));
  CHECK(fs::exists(p / "pde.jsonl"));

  const fs::path w = scratch("weak");
  run(parse_config("schema_version=1\nexperiment=weakform_scan\nN=8,16\nepsilon=0.2\nT=0.02\noutputs=2\nseeds=0-1\n"
                   "gap_epsilons=0.1\nentropy=false\nfisher=false\n"),
      RunOptions{w, 1, 0});
  CHECK(fs::exists(w / "weakform.jsonl"));

  const fs::path c = scratch("chaos");
  run(parse_config("schema_version=1\nexperiment=chaos_scan\nN=16\nepsilon=0.2\nT=0.02\noutputs=2\nseeds=0-7\n"
                   "pde_cells=128\ndirections=4\n"),
      RunOptions{c, 2, 0});
  CHECK(fs::exists(c / "chaos.jsonl"));

  const fs::path n = scratch("noncoll");
  run(parse_config("schema_version=1\nexperiment=noncollision_scan\nN=4\nepsilon=0.2,0.1\nT=0.02\noutputs=2\nseeds=0-3\n"),
      RunOptions{n, 1, 0});
  CHECK(fs::exists(n / "noncollision.jsonl"));

  std::ostringstream os;
  for (const auto& dir : {p, w, c, n}) CHECK_NOTHROW(report(dir, os));
}

TEST_CASE("parallel_for") {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t k) { hits[k] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  std::atomic<int> count{0};
  CHECK_THROWS_AS(parallel_for(50, 3,
                               [&](std::size_t k) {
                                 ++count;
                                 if (k == 7) throw InputError("boom");
                               }),
                  InputError);
  parallel_for(0, 4, [&](std::size_t) { FAIL("not called"); });
}
