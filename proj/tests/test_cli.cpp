#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dagtf/cli.hpp"
#include "dagtf/randapprox.hpp"

namespace fs = std::filesystem;
using dagtf::cli::run_cli;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dagtf_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string s(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"gen", "--task", "sorting"}).code == 2);
  CHECK(cli({"count", "--bogus"}).code == 2);
  CHECK(cli({"bench", "--mode", "cot,tree"}).code == 2);
  CHECK(cli({"run"}).code == 2);
  const auto help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("compile") != std::string::npos);
}

TEST_CASE("compile and run") {
  const auto d = scratch("compile");
  write_file(d / "and.g", "alphabet 0 1\ninput a\ninput b\nnode c and a b\noutput c\n");
  write_file(d / "id.g", "alphabet 0 1\ninput a\noutput a\n");

  for (std::string mode : {"cot", "loop"}) {
    const auto w = s(d / (mode + ".w"));
    const auto c = cli({"compile", "--graph", s(d / "and.g"), "--mode", mode, "--out", w});
    REQUIRE(c.code == 0);
    CHECK(fs::exists(w + ".schedule"));
    CHECK(cli({"run", "--weights", w, "--input", "11"}).out == "1\n");
    CHECK(cli({"run", "--weights", w, "--input", "1 0"}).out == "0\n");
    CHECK(cli({"run", "--weights", w, "--input", "1,1"}).out == "1\n");
    const auto id = cli({"compile", "--graph", s(d / "id.g"), "--mode", mode, "--out", s(d / "id.w")});
    CHECK(id.code == 0);
    CHECK(cli({"run", "--weights", s(d / "id.w"), "--input", "0"}).out == "0\n");
  }
  // Sidecar depth matches the graph depth.
  const auto loop = cli({"compile", "--graph", s(d / "and.g"), "--mode", "loop", "--out", s(d / "l.w")});
  CHECK(loop.out.find("loops: 1\n") != std::string::npos);
  CHECK(loop.out.find("depth: 1\n") != std::string::npos);
  CHECK(slurp(d / "l.w.schedule").find("depth 1\n") != std::string::npos);

  // Trace file has one record per decoded step.
  const auto r = cli({"run", "--weights", s(d / "cot.w"), "--input", "11", "--trace", s(d / "t.csv")});
  CHECK(r.code == 0);
  const auto trace = slurp(d / "t.csv");
  CHECK(trace.rfind("# schema: dagtf-trace v1\nstep,token,state_digest,saturated\n1,1,", 0) == 0);
  CHECK(trace.find("\n2,1,") != std::string::npos);

  // Budget below the schedule: warning and undecided output.
  const auto early = cli({"run", "--weights", s(d / "loop.w"), "--input", "11", "--budget", "0"});
  CHECK(early.code == 0);
  CHECK(early.out == "?\n");
  CHECK(early.err.find("warning: budget 0") != std::string::npos);

  // Validation failures exit 3, missing files 4.
  write_file(d / "bad.g", "alphabet 0 1\ninput a\nnode c frob a\noutput c\n");
  CHECK(cli({"compile", "--graph", s(d / "bad.g"), "--out", s(d / "x.w")}).code == 3);
  const auto fan = cli({"compile", "--graph", s(d / "and.g"), "--max-fan-in", "1", "--out", s(d / "x.w")});
  CHECK(fan.code == 3);
  CHECK(fan.err.find("fan-in 2 exceeds") != std::string::npos);
  CHECK(cli({"compile", "--graph", s(d / "and.g"), "--mode", "loop", "--precision", "4:0", "--out",
             s(d / "x.w")})
            .code == 3);
  CHECK(cli({"run", "--weights", s(d / "cot.w"), "--input", "12"}).code == 3);
  // Compiled logits are one-hot, so sampling from them is refused.
  CHECK(cli({"run", "--weights", s(d / "cot.w"), "--input", "11", "--decode", "multinomial"}).code == 3);
  CHECK(cli({"run", "--weights", s(d / "missing.w"), "--input", "1"}).code == 4);
}

TEST_CASE("gen writes reproducible corpora") {
  const auto d = scratch("gen");
  const auto a = cli({"gen", "--task", "word", "--sizes", "8", "--count", "100", "--seed", "5", "--out", s(d / "a")});
  const auto b = cli({"gen", "--task", "word", "--sizes", "8", "--count", "100", "--seed", "5", "--out", s(d / "b")});
  REQUIRE(a.code == 0);
  CHECK(a.out.find("instances: 100\n") != std::string::npos);
  CHECK(slurp(d / "a" / "corpus.txt") == slurp(d / "b" / "corpus.txt"));
  CHECK(slurp(d / "a" / "manifest.txt") == slurp(d / "b" / "manifest.txt"));
  const auto c = cli({"gen", "--task", "word", "--sizes", "8", "--count", "100", "--seed", "6", "--out", s(d / "c")});
  CHECK(slurp(d / "a" / "corpus.txt") != slurp(d / "c" / "corpus.txt"));

  const auto conn = cli({"gen", "--task", "connectivity", "--sizes", "64", "--count", "40", "--seed", "1", "--out",
                         s(d / "conn")});
  CHECK(conn.out.find("label_fraction: ") != std::string::npos);
}

TEST_CASE("bench golden rows") {
  const auto d = scratch("bench");
  const auto r = cli({"bench", "--task", "word", "--sizes", "8", "--count", "2", "--seed", "3", "--out",
                      s(d / "b.csv")});
  CHECK(r.code == 0);
  CHECK(slurp(d / "b.csv") ==
        "# schema: dagtf-bench v1\n"
        "task,n,mode,budget,accuracy,wall_ms,seed,status\n"
        "word,8,cot,15,1.0000,NA,3,ok\n"
        "word,8,loop,3,1.0000,NA,3,ok\n");
  const auto timed = cli({"bench", "--task", "arith", "--sizes", "3", "--count", "2", "--mode", "loop", "--timing",
                          "--out", s(d / "t.csv")});
  CHECK(timed.code == 0);
  CHECK(slurp(d / "t.csv").find(",NA,1,ok") == std::string::npos);
}

TEST_CASE("count and sample") {
  const auto d = scratch("count");
  const auto c = cli({"count", "--random", "5,10,3", "--seed", "2", "--out", s(d / "c.csv")});
  REQUIRE(c.code == 0);
  CHECK(c.out ==
        "formula: n=5 m=10\n"
        "estimator: karp-luby trials=8988 epsilon=0.1 delta=0.1 seed=2\n"
        "estimate: 6770/321 (21.090343)\n"
        "exact: 21\n"
        "relative_error: 0.004302\n"
        "wrote: " + s(d / "c.csv") + "\n");
  CHECK(slurp(d / "c.csv") ==
        "# schema: dagtf-count v1\n"
        "estimator,n,m,epsilon,delta,trials,estimate,exact,rel_error,seed\n"
        "karp-luby,5,10,0.1,0.1,8988,21.090343,21,0.004302,2\n");

  write_file(d / "f.dnf", "p dnf 4 2\n1 2 0\n-3 4 0\n");
  const auto formula = dagtf::approx::load_dnf(s(d / "f.dnf"));
  const auto cov = cli({"count", "--formula", s(d / "f.dnf"), "--estimator", "coverage", "--out", s(d / "v.csv")});
  CHECK(cov.out.find("exact: 7\n") != std::string::npos);

  const auto sw = cli({"count", "--sweep", "100,1000", "--repeats", "5", "--out", s(d / "s.csv")});
  CHECK(sw.code == 0);
  CHECK(slurp(d / "s.csv").rfind("# schema: dagtf-sweep v1\n", 0) == 0);

  for (std::string mode : {"exact", "estimated"}) {
    const auto out = s(d / ("samples_" + mode + ".csv"));
    const auto r = cli({"sample", "--formula", s(d / "f.dnf"), "--counts", mode, "--count", "300", "--out", out});
    REQUIRE(r.code == 0);
    std::istringstream in(slurp(out));
    std::string line;
    std::getline(in, line);
    CHECK(line == "# schema: dagtf-sample v1");
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      std::istringstream ls(line);
      std::string idx, bits, attempts, accepted;
      std::getline(ls, idx, ',');
      std::getline(ls, bits, ',');
      std::getline(ls, attempts, ',');
      std::getline(ls, accepted, ',');
      if (accepted != "1") continue;
      dagtf::approx::Assignment a = 0;
      for (std::size_t v = 0; v < bits.size(); ++v) a |= static_cast<dagtf::approx::Assignment>(bits[v] == '1') << v;
      CHECK(bits.size() == 4);
      CHECK(formula.satisfied_by(a));
    }
    CHECK(rows == 300);
  }
  CHECK(cli({"count", "--random", "5,10"}).code == 3);
  CHECK(cli({"count", "--eps", "1.5", "--out", s(d / "rejected.csv")}).code == 3);
  CHECK(cli({"sample", "--eps", "0", "--out", s(d / "rejected.csv")}).code == 3);
  CHECK_FALSE(fs::exists(d / "rejected.csv"));
  CHECK(cli({"sample", "--formula", s(d / "missing.dnf")}).code == 3);
}

TEST_CASE("output directory override") {
  const auto d = scratch("env");
  setenv("DAGTF_OUT_DIR", s(d / "art").c_str(), 1);
  CHECK(dagtf::cli::default_out_dir() == s(d / "art"));
  const auto r = cli({"count", "--seed", "1"});
  unsetenv("DAGTF_OUT_DIR");
  CHECK(r.code == 0);
  CHECK(fs::exists(d / "art" / "count.csv"));
  CHECK(dagtf::cli::default_out_dir() == "dagtf_out");
}

TEST_CASE("identical flags give identical bytes") {
  const auto d = scratch("determinism");
  write_file(d / "and.g", "alphabet 0 1\ninput a\ninput b\nnode c and a b\noutput c\n");
  auto both = [&](std::vector<std::string> args, const std::string& artifact) {
    std::vector<std::string> outs, files;
    for (const std::string run : {"1", "2"}) {
      auto a = args;
      const auto path = s(d / (run + artifact));
      a.push_back("--out");
      a.push_back(path);
      const auto r = cli(a);
      CHECK(r.code == 0);
      std::string text = r.out;
      // Paths differ by construction; compare the rest.
      if (const auto pos = text.find(path); pos != std::string::npos) text.erase(pos, path.size());
      outs.push_back(text);
      files.push_back(fs::is_directory(path) ? slurp(fs::path(path) / "corpus.txt") + slurp(fs::path(path) / "manifest.txt")
                                             : slurp(path));
    }
    CHECK(outs[0] == outs[1]);
    CHECK(files[0] == files[1]);
  };
  both({"gen", "--task", "edit", "--sizes", "5,6", "--count", "4", "--seed", "9"}, "gen");
  both({"compile", "--graph", s(d / "and.g"), "--mode", "cot"}, "cot.w");
  both({"bench", "--task", "connectivity", "--sizes", "5", "--count", "2", "--seed", "9"}, "bench.csv");
  both({"count", "--seed", "9", "--estimator", "coverage"}, "count.csv");
  both({"sample", "--seed", "9", "--count", "50"}, "sample.csv");
  both({"sample", "--seed", "9", "--count", "50", "--counts", "exact"}, "sample_exact.csv");
}
