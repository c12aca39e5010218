// hemet: experiment driver.  Exit codes: 0 ok, 2 audit failure, 1 error.
#include "config.hpp"

#include "hemet/solver.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <gmp.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <thread>

namespace fs = std::filesystem;
using namespace hemet;
using hemet::cli::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kOutEnv = "HEMET_OUT_DIR";

struct RunContext {
  json cfg;
  fs::path out;
  int threads = 1;
  std::map<std::string, std::string> csv;  // file name -> contents
};

struct CommandResult {
  json results;
  bool audit_pass = true;
};

// Index-parallel loop; results are written by index so the output is thread-count independent.
template <class F>
void parallel_for(int n, int threads, F&& f) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errs(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = next++; i < n; i = next++) f(i);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

double num(real x) { return static_cast<double>(x); }

BundleSpec bundle_of(const json& cfg) { return BundleSpec(cfg["bundle"].get<std::vector<int>>()); }

QuadratureRule rule_of(const json& cfg) {
  return build_quadrature(cfg["quadrature"]["n_colat"].get<int>(), cfg["quadrature"]["n_angle"].get<int>());
}

Mat random_unit_hermitian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cx(nd(rng), nd(rng));
  a = hermitian_part(a);
  return a / op_norm_herm(a);
}

PositiveForm random_form(const SectionBasis& b, std::mt19937_64& rng, real scale) {
  return standard_form(b).conjugated(random_unit_hermitian(b.size(), rng) * scale);
}

std::string rat(const mpq_class& q) { return cli::rational_string(q); }

json filtration_json(const FiltrationReport& f) {
  json levels = json::array();
  for (const auto& lv : f.levels)
    levels.push_back({{"w", rat(lv.w)}, {"wbar", lv.wbar.get_str()}, {"rank", lv.rank}, {"degree", lv.degree}, {"slope", rat(lv.slope)}});
  return {{"mna", rat(f.mna)}, {"jna", rat(f.jna)}, {"j", f.j.get_str()}, {"levels", levels}, {"graded_ranks", f.graded_ranks}};
}

std::vector<int> k_list(const json& block, const json& cfg) {
  if (block.contains("k_list")) return block["k_list"].get<std::vector<int>>();
  return {cfg["k"].get<int>()};
}

CommandResult run_mna(RunContext& ctx) {
  BundleSpec spec = bundle_of(ctx.cfg);
  WeightSpec z = cli::weight_spec(ctx.cfg);
  json r = filtration_json(filtration(spec, z));
  r["stability"] = to_string(stability_classify(spec));
  return {r, true};
}

CommandResult run_bergman(RunContext& ctx) {
  const json& blk = ctx.cfg["bergman"];
  BundleSpec spec = bundle_of(ctx.cfg);
  auto rule = rule_of(ctx.cfg);
  MetricPtr h;
  if (blk["metric"] == "standard") {
    h = standard_metric(spec, std::max(0, regularity(spec)));
  } else {
    std::mt19937_64 rng(ctx.cfg["seed"].get<std::uint64_t>());
    SectionBasis b(spec, blk["level"].get<int>());
    h = fs_metric(b, random_form(b, rng, blk["scale"].get<double>()));
  }
  auto ks = k_list(blk, ctx.cfg);
  std::vector<BergmanReport> reps(ks.size());
  parallel_for(static_cast<int>(ks.size()), ctx.threads, [&](int i) { reps[i] = bergman_kernel(h, ks[i], rule); });
  json rows = json::array();
  std::string csv = "k,sup_dev,raw_min,raw_max\n";
  for (std::size_t i = 0; i < ks.size(); ++i) {
    rows.push_back({{"k", ks[i]}, {"sup_dev", num(reps[i].sup_dev)}, {"raw_min", num(reps[i].raw_min)}, {"raw_max", num(reps[i].raw_max)},
                    {"normalization", num(reps[i].normalization)}});
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", ks[i], num(reps[i].sup_dev), num(reps[i].raw_min), num(reps[i].raw_max));
    csv += line;
  }
  ctx.csv["bergman.csv"] = csv;
  json r = {{"rows", rows}};
  if (ks.size() >= 3) {
    real n = 0, d = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      n += reps[i].sup_dev / ks[i];
      d += real(1) / (real(ks[i]) * ks[i]);
    }
    real c = n / d, rss = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) rss += std::pow(reps[i].sup_dev - c / ks[i], 2);
    r["fit_c_over_k"] = {{"c", num(c)}, {"rms_residual", num(std::sqrt(rss / real(ks.size())))}};
  }
  return {r, true};
}

PathSpec path_of(const std::string& s) {
  if (s == "bergman") return {PathSpec::Kind::bergman, 16};
  if (s == "pointwise_exponential") return {PathSpec::Kind::pointwise_exponential, 16};
  return {};
}

CommandResult run_mdon(RunContext& ctx) {
  const json& blk = ctx.cfg["mdon"];
  BundleSpec spec = bundle_of(ctx.cfg);
  SectionBasis b(spec, ctx.cfg["k"].get<int>());
  auto rule = rule_of(ctx.cfg);
  const PathSpec path = path_of(blk["path"]);
  const int n = blk["triples"].get<int>();
  std::mt19937_64 rng(ctx.cfg["seed"].get<std::uint64_t>());
  std::vector<std::array<FsPtr, 3>> triples;
  for (int i = 0; i < n; ++i) {
    std::array<FsPtr, 3> t;
    for (auto& h : t) h = fs_metric(b, random_form(b, rng, blk["scale"].get<double>()));
    triples.push_back(t);
  }
  std::vector<std::array<real, 3>> m(n);
  parallel_for(n, ctx.threads, [&](int i) {
    auto& t = triples[i];
    m[i] = {donaldson(t[1], t[0], path, rule), donaldson(t[2], t[1], path, rule), donaldson(t[2], t[0], path, rule)};
  });
  json rows = json::array();
  std::string csv = "triple,m10,m21,m20,defect\n";
  bool pass = true;
  for (int i = 0; i < n; ++i) {
    real defect = std::abs(m[i][2] - m[i][1] - m[i][0]);
    real bound = real(1e-6) * (1 + std::max({std::abs(m[i][0]), std::abs(m[i][1]), std::abs(m[i][2])}));
    pass = pass && defect < bound;
    rows.push_back({{"m10", num(m[i][0])}, {"m21", num(m[i][1])}, {"m20", num(m[i][2])}, {"cocycle_defect", num(defect)}});
    char line[200];
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", i, num(m[i][0]), num(m[i][1]), num(m[i][2]), num(defect));
    csv += line;
  }
  json scaling = json::array();
  if (n > 0) {
    for (double c : blk["scale_factors"].get<std::vector<double>>()) {
      real v = donaldson(scaled(triples[0][0], std::exp(real(c))), triples[0][0], path, rule);
      pass = pass && std::abs(v) < real(1e-8);
      scaling.push_back({{"c", c}, {"mdon", num(v)}});
    }
  }
  ctx.csv["mdon.csv"] = csv;
  return {{{"triples", rows}, {"scale_invariance", scaling}, {"pass", pass}}, pass};
}

CommandResult run_slope(RunContext& ctx) {
  const json& blk = ctx.cfg["slope_test"];
  BundleSpec spec = bundle_of(ctx.cfg);
  WeightSpec z = cli::weight_spec(ctx.cfg);
  SectionBasis b(spec, z.k);
  auto ray = ray_from_weights(b, standard_form(b), z);
  auto rep = slope_estimate(ray, z, blk["t_max"].get<double>(), blk["n_t"].get<int>(), rule_of(ctx.cfg));
  std::string csv = "t,mdon\n";
  for (std::size_t i = 0; i < rep.t_grid.size(); ++i) {
    char line[100];
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", num(rep.t_grid[i]), num(rep.mdon_values[i]));
    csv += line;
  }
  ctx.csv["slope.csv"] = csv;
  bool pass = rep.relative_gap < real(blk["tolerance"].get<double>());
  return {{{"mna_exact", rat(rep.mna_exact)},
           {"generator_scale", rat(*ray.exact_scale)},
           {"fitted_slope", num(rep.fitted_slope)},
           {"intercept", num(rep.intercept)},
           {"relative_gap", num(rep.relative_gap)},
           {"sup_lower_bound_defect", num(rep.c_offset)},
           {"saturated", rep.saturated},
           {"pass", pass}},
          pass};
}

CommandResult run_solve(RunContext& ctx) {
  const json& blk = ctx.cfg["solve"];
  BundleSpec spec = bundle_of(ctx.cfg);
  SolveOptions opt;
  opt.k = ctx.cfg["k"].get<int>();
  opt.max_iter = blk["max_iter"].get<int>();
  opt.grad_tol = blk["grad_tol"].get<double>();
  opt.he_tol = blk["he_tol"].get<double>();
  opt.armijo = blk["armijo"].get<double>();
  opt.step0 = blk["step0"].get<double>();
  opt.shrink = blk["shrink"].get<double>();
  opt.max_backtracks = blk["max_backtracks"].get<int>();
  opt.max_log_step = blk["max_log_step"].get<double>();
  opt.memory = blk["memory"].get<int>();
  opt.divergence_norm = blk["divergence_norm"].get<double>();
  opt.divergence_mdon = blk["divergence_mdon"].get<double>();
  opt.n_colat = ctx.cfg["quadrature"]["n_colat"].get<int>();
  opt.n_angle = ctx.cfg["quadrature"]["n_angle"].get<int>();
  auto ref = standard_metric(spec, opt.k);
  std::optional<PositiveForm> init;
  if (blk["init"] == "random") {
    std::mt19937_64 rng(ctx.cfg["seed"].get<std::uint64_t>());
    SectionBasis b(spec, opt.k);
    init = random_form(b, rng, blk["init_scale"].get<double>());
  }
  SolveResult res = minimize(spec, opt, ref, init);
  std::string csv = "iter,mdon,he_residual,zeta_norm,grad_norm,step\n";
  for (const auto& t : res.history) {
    char line[200];
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", t.iter, num(t.mdon), num(t.he_residual), num(t.zeta_norm),
                  num(t.grad_norm), num(t.step));
    csv += line;
  }
  ctx.csv["solve.csv"] = csv;
  json r = {{"status", to_string(res.status)},
            {"iterations", res.history.empty() ? 0 : res.history.back().iter},
            {"he_residual_sup", num(res.he_residual_sup)},
            {"final_mdon", res.history.empty() ? 0.0 : num(res.history.back().mdon)},
            {"final_zeta_norm", res.history.empty() ? 0.0 : num(res.history.back().zeta_norm)}};
  if (!res.note.empty()) r["note"] = res.note;
  if (res.status == SolveStatus::diverging) {
    json ev = json::array();
    RVec e = herm_eig(res.zeta_limit).values;
    for (Eigen::Index i = e.size(); i-- > 0;) ev.push_back(num(e(i)));
    r["zeta_limit_eigenvalues"] = ev;
    try {
      Destabilizer d = destabilizer_extract(res, spec, opt.k, blk["rounding_tol"].get<double>());
      json w = json::array();
      for (const auto& b : d.weights.blocks) w.push_back({{"w", rat(b.w)}, {"dimension", b.vectors.size()}});
      r["destabilizer"] = {{"rank", d.top_rank},       {"degree", d.top_degree},
                           {"slope", rat(d.top_slope)}, {"weights", w},
                           {"rounding_error", num(d.rounding_error)}, {"filtration", filtration_json(d.filtration)}};
    } catch (const std::exception& e) {
      r["destabilizer_error"] = e.what();
    }
  }
  return {r, res.status != SolveStatus::maxiter};
}

CommandResult run_delta(RunContext& ctx) {
  const json& blk = ctx.cfg["audit_deltabound"];
  BundleSpec spec = bundle_of(ctx.cfg);
  SectionBasis b(spec, ctx.cfg["k"].get<int>());
  auto rule = rule_of(ctx.cfg);
  auto h0 = standard_metric(spec, b.level());
  const bool allow = blk["allow_reducible"].get<bool>();
  if (h0->rank() >= 2 && !allow)
    throw argument_error("the lower bound assumes an irreducible bundle; set audit_deltabound.allow_reducible to audit a split bundle");
  auto ref = reference_constants(h0, rule);
  const int n = blk["samples"].get<int>();
  std::mt19937_64 rng(ctx.cfg["seed"].get<std::uint64_t>());
  std::uniform_real_distribution<double> u(blk["min_scale"].get<double>(), blk["max_scale"].get<double>());
  std::vector<FsPtr> hs;
  for (int i = 0; i < n; ++i) {
    double s = u(rng);
    hs.push_back(fs_metric(b, random_form(b, rng, s)));
  }
  std::vector<DeltaBoundReport> reps(n);
  parallel_for(n, ctx.threads, [&](int i) { reps[i] = delta_lower_bound_audit(hs[i], h0, rule, ref, allow); });
  json rows = json::array();
  std::string csv = "sample,delta,c_delta,mdon,bound,pass\n";
  int fails = 0;
  for (int i = 0; i < n; ++i) {
    const auto& r = reps[i];
    if (!r.pass) ++fails;
    rows.push_back({{"delta", num(r.delta)}, {"c_delta", num(r.c_delta)}, {"mdon", num(r.mdon)}, {"bound", num(r.bound)}, {"pass", r.pass}});
    char line[200];
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%d\n", i, num(r.delta), num(r.c_delta), num(r.mdon), num(r.bound), r.pass ? 1 : 0);
    csv += line;
  }
  ctx.csv["deltabound.csv"] = csv;
  json out = {{"he_defect", num(ref.he_defect)}, {"poincare", num(ref.poincare)}, {"poincare_stable", ref.poincare_stable},
              {"samples", rows},             {"failures", fails}};
  if (n > 0 && !reps[0].note.empty()) out["note"] = reps[0].note;
  return {out, fails == 0};
}

CommandResult run_probe(RunContext& ctx) {
  const json& blk = ctx.cfg["probe_coercivity"];
  BundleSpec spec = bundle_of(ctx.cfg);
  auto rule = rule_of(ctx.cfg);
  auto ks = k_list(blk, ctx.cfg);
  const std::uint64_t seed = ctx.cfg["seed"].get<std::uint64_t>();
  std::vector<CoercivityRow> rows(ks.size());
  parallel_for(static_cast<int>(ks.size()), ctx.threads, [&](int i) {
    rows[i] = coercivity_probe(spec, {ks[i]}, blk["samples"].get<int>(), blk["t_max"].get<double>(), blk["n_t"].get<int>(), rule,
                               seed + 1000003ULL * static_cast<std::uint64_t>(ks[i]))
                  .front();
  });
  json out = json::array();
  std::string csv = "k,sample,c\n";
  bool pass = true;
  const bool semistable = stability_classify(spec) != Stability::unstable;
  for (const auto& r : rows) {
    json ps = json::array();
    for (std::size_t s = 0; s < r.per_sample.size(); ++s) {
      ps.push_back(num(r.per_sample[s]));
      char line[100];
      std::snprintf(line, sizeof line, "%d,%zu,%.17g\n", r.k, s, num(r.per_sample[s]));
      csv += line;
    }
    if (semistable && r.min_mna < 0) pass = false;
    out.push_back({{"k", r.k}, {"samples", r.samples}, {"c_k", num(r.c_k)}, {"min_mna", num(r.min_mna)}, {"rejected_unsaturated", r.rejected},
                   {"rejected_unresolved", r.unresolved}, {"per_sample", ps}});
  }
  ctx.csv["coercivity.csv"] = csv;
  return {{{"rows", out}}, pass};
}

CommandResult run_convexity(RunContext& ctx) {
  const json& blk = ctx.cfg["convexity_audit"];
  BundleSpec spec = bundle_of(ctx.cfg);
  SectionBasis b(spec, ctx.cfg["k"].get<int>());
  auto rule = rule_of(ctx.cfg);
  const int n = blk["geodesics"].get<int>();
  const auto svals = blk["s_values"].get<std::vector<double>>();
  std::mt19937_64 rng(ctx.cfg["seed"].get<std::uint64_t>());
  std::vector<std::pair<FsPtr, FsPtr>> ends;
  for (int i = 0; i < n; ++i) {
    auto h0 = fs_metric(b, random_form(b, rng, blk["scale"].get<double>()));
    ends.push_back({h0, fs_metric(b, random_form(b, rng, blk["scale"].get<double>()))});
  }
  std::vector<std::vector<SecondDerivative>> sd(n);
  parallel_for(n, ctx.threads, [&](int i) {
    for (double s : svals) sd[i].push_back(second_derivative_geodesic(ends[i].first, ends[i].second, s, rule));
  });
  json rows = json::array();
  std::string csv = "geodesic,s,fd,formula\n";
  bool pass = true;
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < svals.size(); ++j) {
      const auto& x = sd[i][j];
      real rel = std::abs(x.fd - x.formula) / std::max<real>(1, std::abs(x.formula));
      pass = pass && x.fd >= real(-1e-8) && rel < real(1e-4);
      rows.push_back({{"geodesic", i}, {"s", svals[j]}, {"fd", num(x.fd)}, {"formula", num(x.formula)}, {"relative_mismatch", num(rel)}});
      char line[120];
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", i, svals[j], num(x.fd), num(x.formula));
      csv += line;
    }
  ctx.csv["convexity.csv"] = csv;
  return {{{"rows", rows}, {"pass", pass}}, pass};
}

CommandResult dispatch(const std::string& command, RunContext& ctx) {
  if (command == "mna") return run_mna(ctx);
  if (command == "bergman") return run_bergman(ctx);
  if (command == "mdon") return run_mdon(ctx);
  if (command == "slope-test") return run_slope(ctx);
  if (command == "solve") return run_solve(ctx);
  if (command == "audit-deltabound") return run_delta(ctx);
  if (command == "probe-coercivity") return run_probe(ctx);
  if (command == "convexity-audit") return run_convexity(ctx);
  throw argument_error("unknown command " + command);
}

json versions() {
  return {{"hemet", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"gmp", gmp_version},
          {"compiler", __VERSION__}};
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

fs::path resolve_out(const std::string& flag, const json& cfg) {
  if (!flag.empty()) return flag;
  if (cfg.contains("output_dir") && !cfg["output_dir"].get<std::string>().empty()) return cfg["output_dir"].get<std::string>();
  if (const char* env = std::getenv(kOutEnv)) return env;
  return "hemet_out";
}

int run_command(const std::string& command, const std::string& config_path, const std::string& out_flag, std::optional<long> seed, int threads) {
  auto t0 = std::chrono::steady_clock::now();
  RunContext ctx;
  json raw;
  {
    std::ifstream f(config_path);
    if (!f) throw cli::ConfigError({"cannot read " + config_path});
    std::stringstream ss;
    ss << f.rdbuf();
    try {
      raw = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw cli::ConfigError({std::string("parse error at byte ") + std::to_string(e.byte) + ": " + e.what()});
    }
  }
  if (seed && raw.is_object()) raw["seed"] = *seed;
  ctx.cfg = cli::validate_config(raw);
  ctx.out = resolve_out(out_flag, ctx.cfg);
  ctx.threads = threads;
  CommandResult res = dispatch(command, ctx);
  fs::create_directories(ctx.out);
  json report = {{"command", command}, {"config", ctx.cfg}, {"results", res.results}, {"audit_pass", res.audit_pass}, {"versions", versions()}};
  const std::string text = cli::emit(report);
  write_file(ctx.out / "report.json", text);
  for (const auto& [name, body] : ctx.csv) write_file(ctx.out / name, body);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(ctx.out / "timing.json", cli::emit(json{{"command", command}, {"wall_time", secs}}));
  std::cout << text;
  return res.audit_pass ? 0 : 2;
}

// The TRIVIAL examples, end to end.
int self_test(const std::string& out_flag) {
  struct Check {
    std::string name;
    std::function<bool()> run;
  };
  auto expect_config_error = [](const std::string& text, const std::string& needle) {
    try {
      cli::parse_config_text(text);
    } catch (const cli::ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  std::vector<Check> checks = {
      {"M^NA on O(1)+O(-1) is -8, J^NA 4, reversed +8",
       [] {
         BundleSpec e({1, -1}), r({-1, 1});
         auto f = filtration(e, summand_weight_spec(e, 1, {mpq_class(1), mpq_class(-3)}));
         return f.mna == -8 && f.jna == 4 && mna(r, summand_weight_spec(r, 1, {mpq_class(1), mpq_class(-3)})) == 8;
       }},
      {"scalar generator has M^NA = J^NA = 0",
       [] {
         BundleSpec e({2, 2});
         auto z = summand_weight_spec(e, 2, {mpq_class(1), mpq_class(0)});
         z.blocks[0].vectors.insert(z.blocks[0].vectors.end(), z.blocks[1].vectors.begin(), z.blocks[1].vectors.end());
         z.blocks.pop_back();
         auto f = filtration(e, z);
         return f.mna == 0 && f.jna == 0;
       }},
      {"trivial O(0) Bergman kernel at k = 5 is balanced",
       [] {
         auto rep = bergman_kernel(standard_metric(BundleSpec({0}), 0), 5, build_quadrature(24, 24));
         return rep.sup_dev < real(1e-8) && std::abs(rep.raw_min - 6) < real(1e-8);
       }},
      {"FS(cG) = c FS(G)",
       [] {
         SectionBasis b(BundleSpec({1, 2}), 1);
         auto p = SpherePoint::from_z(cx(0.3, -0.8));
         Mat a = fs_metric(b, standard_form(b).scaled(3))->value(p), c = fs_metric(b, standard_form(b))->value(p) * real(3);
         return (a - c).norm() < real(1e-14) * c.norm();
       }},
      {"M(e^c h, h) = 0",
       [] {
         auto h = standard_metric(BundleSpec({1, -1}), 1);
         auto rule = build_quadrature(16, 16);
         for (real c : {real(-5), real(5)})
           if (std::abs(donaldson(scaled(h, std::exp(c)), h, {}, rule)) > real(1e-8)) return false;
         return true;
       }},
      {"c_delta(1) = 1/2 and c_delta(1/e) = 1/e",
       [] { return std::abs(c_delta(1) - real(0.5)) < real(1e-15) && std::abs(c_delta(std::exp(real(-1))) - std::exp(real(-1))) < real(1e-15); }},
      {"config round-trip is canonical",
       [] {
         auto c = cli::parse_config_text(R"({"bundle": [1, -1], "k": 1, "zeta": {"summand_weights": ["1", "-3"]}})");
         return cli::emit(cli::validate_config(json::parse(cli::emit(c)))) == cli::emit(c);
       }},
      {"missing bundle is named", [=] { return expect_config_error(R"({"k": 1})", "bundle: missing required field"); }},
      {"all unknown keys are listed",
       [=] { return expect_config_error(R"({"bundle": [0], "colour": 1, "solve": {"speed": 2}})", "colour: unknown key") &&
                    expect_config_error(R"({"bundle": [0], "colour": 1, "solve": {"speed": 2}})", "solve.speed: unknown key"); }},
      {"k below regularity cites the minimum",
       [=] { return expect_config_error(R"({"bundle": [-3], "k": 1})", "minimum admissible k is 3"); }},
  };
  json rows = json::array();
  int failed = 0;
  for (const auto& c : checks) {
    bool ok = false;
    std::string err;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      err = e.what();
    }
    if (!ok) ++failed;
    std::cout << (ok ? "PASS " : "FAIL ") << c.name << (err.empty() ? "" : " (" + err + ")") << "\n";
    rows.push_back({{"check", c.name}, {"pass", ok}});
  }
  fs::path out = resolve_out(out_flag, json::object());
  fs::create_directories(out);
  write_file(out / "report.json", cli::emit(json{{"command", "self-test"}, {"results", rows}, {"audit_pass", failed == 0}, {"versions", versions()}}));
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hermitian-Einstein metrics on split bundles over P^1: experiments and audits"};
  app.set_version_flag("--version", kVersion);
  std::string config, out;
  long seed = 0;
  int threads = 1;
  bool selftest = false;
  app.add_flag("--self-test", selftest, "run the built-in example checks");
  app.add_option("--out", out, std::string("output directory (default: config output_dir, then $") + kOutEnv + ", then ./hemet_out)");
  app.add_option("--threads", threads, "worker threads for independent samples")->check(CLI::PositiveNumber);
  std::string command;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : cli::commands()) {
    auto* s = app.add_subcommand(c, "run " + c);
    s->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out, "output directory");
    s->add_option("--seed", seed, "overrides the config seed");
    s->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    s->callback([&command, c] { command = c; });
    subs[c] = s;
  }
  app.require_subcommand(0, 1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (selftest) return self_test(out);
    if (command.empty()) {
      std::cerr << app.help();
      return 1;
    }
    std::optional<long> seed_override;
    if (subs[command]->count("--seed")) seed_override = seed;
    return run_command(command, config, out, seed_override, threads);
  } catch (const cli::ConfigError& e) {
    std::cerr << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}
