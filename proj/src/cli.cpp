#include "dagtf/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "dagtf/cot_compiler.hpp"
#include "dagtf/loop_compiler.hpp"
#include "dagtf/randapprox.hpp"
#include "dagtf/rng.hpp"
#include "dagtf/taskgen.hpp"

namespace dagtf::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kBenchSchema = "# schema: dagtf-bench v1";

std::string fixed(double v, int digits = 6) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// An explicit path is used as given; otherwise the default directory.
std::string resolve_out(const std::string& given, const std::string& fallback) {
  const fs::path p = given.empty() ? fs::path(default_out_dir()) / fallback : fs::path(given);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p.string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

// Whitespace or comma separated; a lone unknown token splits into characters.
std::vector<int> tokenize_input(const tfm::TfWeights& w, const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<std::string> toks;
  for (std::string s; in >> s;) toks.push_back(s);
  if (toks.size() == 1 && w.token_index(toks[0]) < 0) {
    const std::string word = toks[0];
    toks.clear();
    for (char c : word) toks.emplace_back(1, c);
  }
  std::vector<int> ids;
  for (const auto& s : toks) {
    const int id = w.token_index(s);
    if (id < 0) throw ValidationError("input token '" + s + "' is not in the vocabulary");
    ids.push_back(id);
  }
  return ids;
}

approx::DnfFormula formula_from(const std::string& path, const std::vector<int>& random_spec, std::uint64_t seed) {
  if (!path.empty()) return approx::load_dnf(path);
  if (random_spec.size() != 3) throw ValidationError("--random expects n,m,w");
  auto rng = make_stream(seed, "formula");
  return approx::random_dnf(random_spec[0], random_spec[1], random_spec[2], rng);
}

// ------------------------------------------------------------------ gen

struct GenArgs {
  std::string task = "word";
  std::vector<int> sizes{8};
  int count = 10;
  std::uint64_t seed = 1;
  std::string group = "S3";
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  task::CorpusManifest m;
  const auto corpus = task::generate_corpus(a.task, a.sizes, a.count, a.seed, a.group, &m);
  const fs::path dir = resolve_out(a.out, "corpus");
  fs::create_directories(dir);
  {
    auto f = open_out((dir / "corpus.txt").string());
    for (const auto& inst : corpus) task::write_instance(f, inst);
  }
  {
    auto f = open_out((dir / "manifest.txt").string());
    task::write_manifest(f, m);
  }
  out << "instances: " << m.instances << '\n';
  if (m.positives >= 0) out << "label_fraction: " << fixed(static_cast<double>(m.positives) / m.instances) << '\n';
  out << "config_hash: " << hex(m.config_hash) << '\n';
  out << "content_hash: " << hex(m.content_hash) << '\n';
  out << "wrote: " << (dir / "corpus.txt").string() << '\n';
  return kOk;
}

// -------------------------------------------------------------- compile

struct CompileArgs {
  std::string graph;
  std::string mode = "cot";
  std::string precision;
  std::optional<int> code_bits;
  std::optional<int> max_fan_in;
  std::string out;
};

int cmd_compile(const CompileArgs& a, std::ostream& out) {
  const auto g = graph::load_graph(a.graph);
  const auto met = graph::metrics(g);
  const std::string path = resolve_out(a.out, "model.weights");
  const std::string sidecar = path + ".schedule";
  if (a.mode == "cot") {
    cot::CotConfig cfg;
    cfg.code_bits = a.code_bits;
    cfg.max_fan_in = a.max_fan_in;
    std::optional<fxp::PrecisionSpec> want;
    if (!a.precision.empty()) {
      want = fxp::PrecisionSpec::parse(a.precision);
      if (!cfg.code_bits) cfg.code_bits = want->frac_bits;
    }
    const auto c = cot::compile_cot(g, cfg);
    if (want && !(*want == c.schedule.precision))
      throw ValidationError("cot precision follows the code bits: requested " + want->to_string() +
                            ", construction needs " + c.schedule.precision.to_string());
    tfm::save_weights(c.weights, path);
    cot::save_schedule(c.schedule, sidecar);
    out << "mode: cot\n";
    out << "steps: " << c.schedule.steps << '\n';
    out << "precision: " << c.schedule.precision.to_string() << '\n';
    out << "embed_dim: " << c.schedule.embed_dim << '\n';
    out << "parameters: " << c.schedule.parameters << " (bound " << c.schedule.parameter_bound << ")\n";
  } else {
    loop::LoopConfig cfg;
    if (!a.precision.empty()) cfg.precision = fxp::PrecisionSpec::parse(a.precision);
    const auto c = loop::compile_loop(g, cfg);
    tfm::save_weights(c.weights, path);
    loop::save_layout(c.layout, sidecar);
    out << "mode: loop\n";
    out << "loops: " << c.layout.depth << '\n';
    out << "precision: " << c.layout.precision.to_string() << '\n';
    out << "embed_dim: " << c.layout.embed_dim << '\n';
    out << "parameters: " << c.weights.parameter_count(false) << '\n';
  }
  out << "size: " << met.size << '\n';
  out << "depth: " << met.depth << '\n';
  out << "wrote: " << path << '\n';
  return kOk;
}

// ------------------------------------------------------------------ run

struct RunArgs {
  std::string weights;
  std::string input;
  std::optional<int> budget;
  std::string trace;
  std::string decode = "argmax";
  std::uint64_t seed = 1;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  const auto w = tfm::load_weights(a.weights);
  const auto x = tokenize_input(w, a.input);
  const int budget = a.budget.value_or(w.budget);
  if (budget < 0) throw ValidationError("budget must be nonnegative");
  if (budget < w.budget)
    err << "warning: budget " << budget << " is below the compiled budget " << w.budget << '\n';
  tfm::RunResult r;
  if (w.mode == tfm::RunMode::Cot) {
    auto rng = make_stream(a.seed, "run/decode");
    const auto decode = a.decode == "multinomial" ? tfm::Decode::Multinomial : tfm::Decode::Argmax;
    r = tfm::run_cot(w, x, budget, decode, rng, std::min(w.output_len, budget));
  } else {
    r = tfm::run_loop(w, x, budget, w.output_len);
  }
  std::vector<std::string> toks;
  for (int t : r.output) toks.push_back(w.vocab.at(t));
  out << join(toks, " ") << '\n';
  if (!a.trace.empty()) {
    auto f = open_out(resolve_out(a.trace, "trace.csv"));
    f << "# schema: dagtf-trace v1\n";
    f << "step,token,state_digest,saturated\n";
    for (std::size_t k = 0; k < r.trace.steps.size(); ++k) {
      const auto& s = r.trace.steps[k];
      f << k + 1 << ',' << (s.token >= 0 ? w.vocab.at(s.token) : "") << ',' << hex(s.state_digest) << ','
        << s.saturated << '\n';
    }
  }
  return kOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string task = "word";
  std::vector<int> sizes{8, 16};
  std::vector<std::string> modes{"cot", "loop"};
  int count = 5;
  std::uint64_t seed = 1;
  std::string group = "S3";
  std::string out;
  bool timing = false;
};

struct Model {
  tfm::TfWeights weights;
  int budget = 0;
};

Model compile_for(const graph::CompGraph& g, const std::string& mode) {
  if (mode == "cot") {
    auto c = cot::compile_cot(g);
    return {std::move(c.weights), c.schedule.steps};
  }
  auto c = loop::compile_loop(g);
  return {std::move(c.weights), c.layout.depth};
}

std::vector<int> run_model(const Model& m, const std::vector<int>& input, const std::string& mode) {
  if (mode == "cot") {
    std::mt19937_64 unused(0);
    return tfm::run_cot(m.weights, input, m.budget, tfm::Decode::Argmax, unused, m.weights.output_len).output;
  }
  return loop::decode_output(tfm::run_loop(m.weights, loop::encode_input(input), m.budget, m.weights.output_len).output);
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const std::string path = resolve_out(a.out, "bench.csv");
  auto f = open_out(path);
  f << kBenchSchema << '\n';
  f << "task,n,mode,budget,accuracy,wall_ms,seed,status\n";
  int errors = 0;
  for (int n : a.sizes)
    for (const auto& mode : a.modes) {
      const auto t0 = std::chrono::steady_clock::now();
      std::string budget = "NA", accuracy = "NA", status = "ok";
      try {
        std::map<std::string, Model> cache;
        int max_budget = 0, correct = 0;
        for (int i = 0; i < a.count; ++i) {
          const auto label = "bench/" + a.task + "/" + std::to_string(n) + "/" + std::to_string(i);
          const auto inst = task::generate(a.task, n, derive_seed(a.seed, label), a.group);
          const auto tg =
              task::to_graph(inst, mode == "cot" ? task::WordShape::Chain : task::WordShape::Balanced);
          const auto key = graph::print_graph(tg.graph);
          auto it = cache.find(key);
          if (it == cache.end()) it = cache.emplace(key, compile_for(tg.graph, mode)).first;
          max_budget = std::max(max_budget, it->second.budget);
          correct += run_model(it->second, tg.input, mode) == tg.expect;
        }
        budget = std::to_string(max_budget);
        accuracy = fixed(static_cast<double>(correct) / a.count, 4);
      } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        status = "error: " + msg;
        ++errors;
      }
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const std::string row = a.task + "," + std::to_string(n) + "," + mode + "," + budget + "," + accuracy + "," +
                              (a.timing ? fixed(ms, 1) : "NA") + "," + std::to_string(a.seed) + "," + status;
      f << row << '\n';
      out << row << '\n';
    }
  out << "wrote: " << path << '\n';
  return errors ? kRuntime : kOk;
}

// ---------------------------------------------------------------- count

struct CountArgs {
  std::string formula;
  std::vector<int> random{5, 10, 3};
  double eps = 0.1;
  double delta = 0.1;
  std::string estimator = "karp-luby";
  std::optional<std::int64_t> trials;
  std::vector<std::int64_t> sweep;
  int repeats = 20;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_count(const CountArgs& a, std::ostream& out) {
  const auto f = formula_from(a.formula, a.random, a.seed);
  const auto kind = a.estimator == "coverage" ? approx::Estimator::Coverage : approx::Estimator::KarpLuby;
  const bool exact_known = f.var_count() <= approx::kExactVarLimit;
  const std::uint64_t exact = exact_known ? approx::exact_count(f) : 0;
  auto rel_error = [&](const approx::Rational& est) -> std::string {
    if (!exact_known) return "NA";
    if (exact == 0) return est == 0 ? fixed(0) : "inf";
    return fixed(std::abs(approx::to_double(est) / static_cast<double>(exact) - 1));
  };
  if (!(a.eps > 0 && a.eps < 1) || !(a.delta > 0 && a.delta < 1))
    throw ValidationError("--eps and --delta must lie in (0, 1)");
  if (!a.sweep.empty()) {
    if (!exact_known) throw ValidationError("a sweep needs the exact count (at most 24 variables)");
    if (a.repeats < 1) throw ValidationError("--repeats must be positive");
  }
  const std::string path = resolve_out(a.out, a.sweep.empty() ? "count.csv" : "sweep.csv");
  auto csv = open_out(path);
  out << "formula: n=" << f.var_count() << " m=" << f.clause_count() << '\n';
  if (a.sweep.empty()) {
    auto rng = make_stream(a.seed, "count/trials");
    const auto rep = approx::fpras_count(f, a.eps, a.delta, rng, kind, a.trials);
    out << "estimator: " << approx::to_string(kind) << " trials=" << rep.trials << " epsilon=" << a.eps
        << " delta=" << a.delta << " seed=" << a.seed << '\n';
    out << "estimate: " << approx::to_string(rep.estimate) << " (" << fixed(approx::to_double(rep.estimate)) << ")\n";
    if (exact_known) out << "exact: " << exact << "\nrelative_error: " << rel_error(rep.estimate) << '\n';
    csv << "# schema: dagtf-count v1\n";
    csv << "estimator,n,m,epsilon,delta,trials,estimate,exact,rel_error,seed\n";
    csv << approx::to_string(kind) << ',' << f.var_count() << ',' << f.clause_count() << ',' << a.eps << ','
        << a.delta << ',' << rep.trials << ',' << fixed(approx::to_double(rep.estimate)) << ','
        << (exact_known ? std::to_string(exact) : "NA") << ',' << rel_error(rep.estimate) << ',' << a.seed << '\n';
  } else {
    csv << "# schema: dagtf-sweep v1\n";
    csv << "estimator,trials,repeats,mean_rel_error,max_rel_error,exact,seed\n";
    for (std::int64_t t : a.sweep) {
      double sum = 0, worst = 0;
      for (int r = 0; r < a.repeats; ++r) {
        auto rng = make_stream(a.seed, "count/sweep/" + std::to_string(t) + "/" + std::to_string(r));
        const auto rep = approx::fpras_count(f, a.eps, a.delta, rng, kind, t);
        const double e = std::abs(approx::to_double(rep.estimate) / static_cast<double>(exact) - 1);
        sum += e;
        worst = std::max(worst, e);
      }
      const std::string row = approx::to_string(kind) + "," + std::to_string(t) + "," + std::to_string(a.repeats) +
                              "," + fixed(sum / a.repeats) + "," + fixed(worst) + "," + std::to_string(exact) +
                              "," + std::to_string(a.seed);
      csv << row << '\n';
      out << "trials " << t << ": mean_rel_error " << fixed(sum / a.repeats) << '\n';
    }
  }
  out << "wrote: " << path << '\n';
  return kOk;
}

// --------------------------------------------------------------- sample

struct SampleArgs {
  std::string formula;
  std::vector<int> random{5, 10, 3};
  double eps = 0.1;
  int count = 100;
  std::string counts = "estimated";
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const auto f = formula_from(a.formula, a.random, a.seed);
  if (a.count < 1) throw ValidationError("--count must be positive");
  if (!(a.eps > 0 && a.eps < 1)) throw ValidationError("--eps must lie in (0, 1)");
  std::unique_ptr<approx::ConditionalModel> model;
  if (a.counts == "exact") {
    model = std::make_unique<approx::ExactModel>(f);
  } else {
    const int n = f.var_count();
    model = std::make_unique<approx::EstimatedModel>(f, approx::EstimatedModel::step_epsilon(n), a.eps / (2.0 * n),
                                                     derive_seed(a.seed, "sample/model"));
  }
  auto rng = make_stream(a.seed, "sample/draws");
  const std::string path = resolve_out(a.out, "samples.csv");
  auto csv = open_out(path);
  csv << "# schema: dagtf-sample v1\n";
  csv << "index,assignment,attempts,accepted\n";
  int accepted = 0;
  long attempts = 0;
  std::map<approx::Assignment, int> freq;
  for (int i = 0; i < a.count; ++i) {
    const auto r = approx::fpaus_sample(f, *model, a.eps, rng);
    attempts += r.attempts;
    std::string bits;
    if (r.accepted) {
      ++accepted;
      ++freq[r.sample];
      for (int v = 0; v < f.var_count(); ++v) bits += (r.sample >> v) & 1 ? '1' : '0';
    }
    csv << i << ',' << bits << ',' << r.attempts << ',' << (r.accepted ? 1 : 0) << '\n';
  }
  out << "formula: n=" << f.var_count() << " m=" << f.clause_count() << '\n';
  out << "counts: " << a.counts << " epsilon=" << a.eps << " seed=" << a.seed << '\n';
  out << "samples: " << a.count << " accepted: " << accepted << " attempts: " << attempts << '\n';
  out << "acceptance_rate: " << fixed(static_cast<double>(accepted) / static_cast<double>(attempts)) << '\n';
  if (f.var_count() <= approx::kExactVarLimit && accepted > 0) {
    const auto sat = approx::satisfying_assignments(f);
    double tv = 0;
    for (auto s : sat) tv += std::abs(freq[s] / static_cast<double>(accepted) - 1.0 / sat.size());
    out << "solutions: " << sat.size() << '\n';
    out << "tv_uniform: " << fixed(tv / 2) << '\n';
  }
  out << "wrote: " << path << '\n';
  return kOk;
}

}  // namespace

std::string default_out_dir() {
  const char* env = std::getenv("DAGTF_OUT_DIR");
  return env && *env ? env : "dagtf_out";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compile computation graphs into transformers, run them, and benchmark counting and sampling."};
  app.name("dagtf");
  app.require_subcommand(1);
  const std::vector<std::string> tasks{"word", "connectivity", "arith", "edit"};

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a task corpus and manifest");
  g->add_option("--task", gen.task, "Task name")->check(CLI::IsMember(tasks));
  g->add_option("--sizes", gen.sizes, "Comma-separated sizes")->delimiter(',');
  g->add_option("--count", gen.count, "Instances per size")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Root seed");
  g->add_option("--group", gen.group, "Group for the word task");
  g->add_option("--out", gen.out, "Output directory");

  CompileArgs comp;
  auto* c = app.add_subcommand("compile", "Compile a graph file into weights");
  c->add_option("--graph", comp.graph, "Graph file")->required();
  c->add_option("--mode", comp.mode, "cot or loop")->check(CLI::IsMember({"cot", "loop"}));
  c->add_option("--precision", comp.precision, "int_bits:frac_bits");
  c->add_option("--code-bits", comp.code_bits, "Position code bits (cot)");
  c->add_option("--max-fan-in", comp.max_fan_in, "Fan-in cap (cot)");
  c->add_option("--out", comp.out, "Weight file");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run compiled weights on an input");
  r->add_option("--weights", run.weights, "Weight file")->required();
  r->add_option("--input", run.input, "Input tokens")->required();
  r->add_option("--budget", run.budget, "Steps (cot) or loops (loop)");
  r->add_option("--trace", run.trace, "Per-step trace CSV");
  r->add_option("--decode", run.decode, "argmax or multinomial")->check(CLI::IsMember({"argmax", "multinomial"}));
  r->add_option("--seed", run.seed, "Seed for multinomial decoding");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Compile and run task corpora, one CSV row per size and mode");
  b->add_option("--task", bench.task, "Task name")->check(CLI::IsMember(tasks));
  b->add_option("--sizes", bench.sizes, "Comma-separated sizes")->delimiter(',');
  b->add_option("--mode", bench.modes, "Comma-separated modes")->delimiter(',')->check(CLI::IsMember({"cot", "loop"}));
  b->add_option("--count", bench.count, "Instances per size")->check(CLI::PositiveNumber);
  b->add_option("--seed", bench.seed, "Root seed");
  b->add_option("--group", bench.group, "Group for the word task");
  b->add_option("--out", bench.out, "CSV path");
  b->add_flag("--timing", bench.timing, "Record wall time (breaks byte-identical reruns)");

  CountArgs count;
  auto* n = app.add_subcommand("count", "Estimate the number of satisfying assignments of a DNF");
  n->add_option("--formula", count.formula, "DNF file");
  n->add_option("--random", count.random, "Random formula n,m,w")->delimiter(',');
  n->add_option("--eps", count.eps, "Relative accuracy");
  n->add_option("--delta", count.delta, "Failure probability");
  n->add_option("--estimator", count.estimator, "karp-luby or coverage")
      ->check(CLI::IsMember({"karp-luby", "coverage"}));
  n->add_option("--trials", count.trials, "Override the trial count");
  n->add_option("--sweep", count.sweep, "Comma-separated trial budgets")->delimiter(',');
  n->add_option("--repeats", count.repeats, "Estimates per sweep budget");
  n->add_option("--seed", count.seed, "Root seed");
  n->add_option("--out", count.out, "CSV path");

  SampleArgs sample;
  auto* s = app.add_subcommand("sample", "Draw almost-uniform satisfying assignments of a DNF");
  s->add_option("--formula", sample.formula, "DNF file");
  s->add_option("--random", sample.random, "Random formula n,m,w")->delimiter(',');
  s->add_option("--eps", sample.eps, "Target distance");
  s->add_option("--count", sample.count, "Samples");
  s->add_option("--counts", sample.counts, "exact or estimated")->check(CLI::IsMember({"exact", "estimated"}));
  s->add_option("--seed", sample.seed, "Root seed");
  s->add_option("--out", sample.out, "CSV path");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (c->parsed()) return cmd_compile(comp, out);
    if (r->parsed()) return cmd_run(run, out, err);
    if (b->parsed()) return cmd_bench(bench, out);
    if (n->parsed()) return cmd_count(count, out);
    if (s->parsed()) return cmd_sample(sample, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace dagtf::cli
