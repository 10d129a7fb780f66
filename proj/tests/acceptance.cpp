// Acceptance suite. Prints one PASS/FAIL line per criterion; `--only N` runs a
// single criterion. Exit status is nonzero if any selected criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "tsvarsel/tsvarsel.hpp"

using namespace tsvarsel;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

constexpr std::uint64_t kExperimentSeed = 1;
constexpr int kRealizations = 3;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const ExperimentRow& row_of(const ExperimentResult& res, MethodId m, int bucket) {
  for (const auto& r : res.rows)
    if (r.method == m && r.bucket == bucket) return r;
  throw std::logic_error("missing experiment row");
}

std::size_t method_index(const ExperimentResult& res, MethodId m) {
  return static_cast<std::size_t>(std::find(res.methods.begin(), res.methods.end(), m) - res.methods.begin());
}

const SelectionResult& cell(const ExperimentResult& res, MethodId m, int realization, int bucket) {
  return res.runs[method_index(res, m)][static_cast<std::size_t>(realization)].per_bucket[static_cast<std::size_t>(bucket - 1)];
}

int count_small_p(const ExperimentResult& res, MethodId m, int bucket) {
  int k = 0;
  for (int r = 0; r < res.repeats; ++r) k += cell(res, m, r, bucket).p_value <= 0.05;
  return k;
}

std::string p_values(const ExperimentResult& res, MethodId m, int bucket) {
  std::string s = std::string(to_string(m)) + " b" + std::to_string(bucket) + " p=[";
  for (int r = 0; r < res.repeats; ++r) s += (r ? "," : "") + fmt("%.3g", cell(res, m, r, bucket).p_value);
  return s + "]";
}

ExperimentResult experiment(Setting s, int buckets, std::vector<MethodId> methods) {
  return run_experiment(s, buckets, methods, kRealizations, kExperimentSeed);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size(2, 25), dim(1, 5);
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = size(rng), m = size(rng), D = dim(rng);
    const Matrix X = oracle::gaussian(n, D, rng), Y = oracle::gaussian(m, D, rng, 0.3);
    Vector a(D), gamma(D);
    for (int d = 0; d < D; ++d) {
      a[d] = unif(rng);
      gamma[d] = unif(rng);
    }
    const auto g = gram_matrices(ArdKernelParams(a, gamma), X, Y);
    worst = std::max(worst, std::abs(mmd2_unbiased(g.xx, g.yy, g.xy) - oracle::mmd2(a, gamma, X, Y)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 5.0, "max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> unif(0.3, 2.0);
  std::uniform_int_distribution<int> dim(2, 5);
  const double h = 1e-5;
  int checked = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 500 && checked < 20; ++rep) {
    const int D = dim(rng);
    const Matrix X = oracle::gaussian(12, D, rng), Y = oracle::gaussian(12, D, rng, 0.5);
    const ArdModel model(X, Y, dimensionwise_length_scales(X, Y));
    Vector a(D);
    for (int d = 0; d < D; ++d) a[d] = unif(rng);
    const double lambda = rep % 2 ? 0.05 : 0.0;
    const auto r = objective_and_gradient(model, a, lambda);
    if (std::abs(r.stats.ratio) <= 1e-3) continue;
    Vector fd(D);
    for (int d = 0; d < D; ++d) {
      Vector up = a, down = a;
      up[d] += h;
      down[d] -= h;
      fd[d] = (objective_and_gradient(model, up, lambda).objective - objective_and_gradient(model, down, lambda).objective) /
              (2.0 * h);
    }
    worst = std::max(worst, (r.gradient - fd).norm() / std::max(fd.norm(), 1e-12));
    ++checked;
  }
  const double secs = seconds_since(t0);
  return {checked == 20 && worst <= 1e-4 && secs < 10.0,
          std::to_string(checked) + " points, max rel err " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> size(1, 40);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::uniform_int_distribution<int> small(-3, 3);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> u(size(rng)), v(size(rng));
    for (auto* s : {&u, &v})
      for (auto& x : *s) x = rep % 3 == 0 ? small(rng) : nd(rng);
    worst = std::max(worst, std::abs(wasserstein1_1d(u, v) - oracle::wasserstein1(u, v)));
  }
  const Matrix X = oracle::gaussian(200, 2, rng);
  Matrix Y = oracle::gaussian(200, 2, rng);
  Y.col(0).array() += 1.0;
  const double sw = sliced_wasserstein(X, Y, 10000, 7);
  Matrix Ys = X;
  Ys.col(0).array() += 1.0;
  const double sw_paired = sliced_wasserstein(X, Ys, 10000, 7);
  const double secs = seconds_since(t0);
  const double target = 2.0 / std::numbers::pi;
  return {worst <= 1e-9 && std::abs(sw_paired - target) <= 0.02 && secs < 30.0,
          "W1 max |diff| " + fmt("%.3g", worst) + "; SW(shifted copy) " + fmt("%.4f", sw_paired) +
              ", SW(independent draws) " + fmt("%.4f", sw) + ", 2/pi " + fmt("%.4f", target) + ", " +
              fmt("%.2f", secs) + " s"};
}

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  int tests = 0, rejections = 0;
  for (std::uint64_t r = 0; tests < 200; ++r) {
    std::mt19937_64 rng(derive_seed(404, "calibration", {r}));
    const Matrix x = oracle::gaussian(5, 1000, rng), y = oracle::gaussian(5, 1000, rng);
    const auto plan = make_equal_bucket_plan(1000, 10, 0.8, r);
    for (int b = 1; b <= 10 && tests < 200; ++b) {
      const auto split = split_bucket(plan, b);
      PermutationTestConfig cfg;
      cfg.seed = derive_seed(plan.seed(), "bucket-test", {std::uint64_t(b)});
      const double p = permutation_test(samples_at(x, split.test), samples_at(y, split.test), {1, 2, 3, 4, 5}, cfg);
      rejections += p <= 0.05;
      ++tests;
    }
  }
  const double rate = static_cast<double>(rejections) / tests;
  const double secs = seconds_since(t0);
  return {rate >= 0.01 && rate <= 0.12 && secs < 120.0,
          "rejection rate " + fmt("%.3f", rate) + " over " + std::to_string(tests) + " tests, " + fmt("%.1f", secs) + " s"};
}

Outcome criterion5() {
  std::mt19937_64 rng(505);
  const Matrix x = oracle::gaussian(5, 100, rng);
  const TimeSeriesPair pair(x, x);
  const auto plan = make_equal_bucket_plan(100, 2, 0.8, 5);
  bool ok = true;
  std::string detail;
  for (auto m : {MethodId::MmdVanilla, MethodId::MmdSelection, MethodId::MmdCvAgg}) {
    PipelineConfig cfg;
    cfg.method = m;
    const auto a = run_pipeline(pair, plan, cfg);
    const auto b = run_pipeline(pair, plan, cfg);
    bool method_ok = a == b;
    for (const auto& br : a.per_bucket) method_ok = method_ok && br.selected.empty() && br.p_value == 1.0;
    ok = ok && method_ok;
    detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(m)) + (method_ok ? " ok" : " violated");
  }
  return {ok, detail};
}

Outcome criterion6() {
  const auto res = experiment(Setting::One, 10, {MethodId::MmdSelection, MethodId::MmdCvAgg, MethodId::Wasserstein});
  bool ok = true;
  std::string detail;
  for (auto m : {MethodId::MmdSelection, MethodId::MmdCvAgg}) {
    double prec = 0.0;
    int cells = 0;
    for (int b : {4, 5}) {
      ok = ok && count_small_p(res, m, b) >= 2;
      for (int r = 0; r < res.repeats; ++r) {
        const auto& c = cell(res, m, r, b);
        const auto pr = precision_recall(c.selected, res.truth.changed_variables);
        if (c.p_value <= 0.05) ok = ok && pr.recall == 1.0;
        prec += pr.precision;
        ++cells;
      }
      detail += p_values(res, m, b) + " ";
    }
    prec /= cells;
    ok = ok && prec >= 0.5;
    detail += std::string(to_string(m)) + " mean precision " + fmt("%.3f", prec) + "; ";
  }
  double prec = 0.0;
  bool recall_ok = true;
  for (int b : {4, 5})
    for (int r = 0; r < res.repeats; ++r) {
      const auto pr = precision_recall(cell(res, MethodId::Wasserstein, r, b).selected, res.truth.changed_variables);
      recall_ok = recall_ok && pr.recall == 1.0;
      prec += pr.precision;
    }
  prec /= 2.0 * res.repeats;
  ok = ok && recall_ok && prec >= 0.2;
  detail += "wasserstein recall " + std::string(recall_ok ? "1" : "<1") + ", mean precision " + fmt("%.3f", prec);
  return {ok, detail};
}

Outcome criterion7() {
  const auto res = experiment(Setting::Two, 10, {MethodId::MmdSelection, MethodId::MmdCvAgg, MethodId::Wasserstein});
  bool ok = true;
  std::string detail;
  for (auto m : res.methods) {
    for (int b : {3, 5}) ok = ok && count_small_p(res, m, b) >= 2;
    for (int b : {3, 4, 5}) detail += p_values(res, m, b) + " ";
  }
  return {ok, detail};
}

Outcome criterion8() {
  const auto res = experiment(Setting::Two, 2, {MethodId::MmdSelection, MethodId::MmdCvAgg, MethodId::Wasserstein});
  bool ok = 3 - count_small_p(res, MethodId::Wasserstein, 1) >= 2;
  std::string detail = p_values(res, MethodId::Wasserstein, 1);
  for (auto m : {MethodId::MmdSelection, MethodId::MmdCvAgg}) {
    const auto& row = row_of(res, m, 1);
    const double half = 1.96 * row.precision_std / std::sqrt(static_cast<double>(res.repeats));
    ok = ok && row.precision_mean >= 0.3;
    detail += "; " + std::string(to_string(m)) + " b1 precision " + fmt("%.3f", row.precision_mean) + " (95% CI +-" +
              fmt("%.3f", half) + ") " + p_values(res, m, 1);
  }
  return {ok, detail};
}

Outcome criterion9() {
  const auto res = experiment(Setting::One, 10, {MethodId::MmdSelection});
  int large = 0, cells = 0;
  std::string detail;
  for (int b : {1, 2, 6, 7, 8, 9, 10}) {
    for (int r = 0; r < res.repeats; ++r) {
      large += cell(res, MethodId::MmdSelection, r, b).p_value > 0.05;
      ++cells;
    }
    detail += p_values(res, MethodId::MmdSelection, b) + " ";
  }
  const double frac = static_cast<double>(large) / cells;
  return {frac >= 0.8, std::to_string(large) + "/" + std::to_string(cells) + " cells with p > 0.05; " + detail};
}

Outcome criterion10() {
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> uf(1, 8);
  std::vector<PointRecord> pts(5000);
  std::vector<int> per_frame(8, 0);
  for (auto& p : pts) {
    p = {uf(rng), u(rng), u(rng)};
    ++per_frame[static_cast<std::size_t>(p.frame - 1)];
  }
  pts.push_back({3, 1.0, 1.0});
  ++per_frame[2];
  const Matrix c = rasterize_points(pts, 8, 16, {});
  bool ok = c.rows() == 256;
  for (int f = 0; f < 8; ++f) ok = ok && c.col(f).sum() == per_frame[static_cast<std::size_t>(f)];
  ok = ok && (c.array() >= 0.0).all() && (c.array() == c.array().floor()).all();
  return {ok, "D = " + std::to_string(c.rows()) + ", " + std::to_string(pts.size()) + " points over 8 frames"};
}

Outcome criterion11() {
#ifdef TSVARSEL_CLI_PATH
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "tsvarsel_acceptance_11";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = TSVARSEL_CLI_PATH;
  auto sh = [](const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const std::string x = (dir / "x.csv").string(), y = (dir / "y.csv").string();
  if (sh(cli + " synth --setting 1 --seed 11 --out-x " + x + " --out-y " + y) != 0) return {false, "synth failed"};
  std::string bytes[2];
  for (int i = 0; i < 2; ++i) {
    const std::string out = (dir / ("r" + std::to_string(i) + ".json")).string();
    if (sh(cli + " run --x " + x + " --y " + y + " --buckets 10 --seed 11 --out " + out) != 0) return {false, "run failed"};
    std::ifstream in(out, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes[i] = ss.str();
  }
  fs::remove_all(dir);
  const bool same = !bytes[0].empty() && bytes[0] == bytes[1];
  return {same, std::to_string(bytes[0].size()) + " bytes, " + (same ? "identical" : "different")};
#else
  return {false, "CLI not built"};
#endif
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                        criterion5, criterion6, criterion7, criterion8,
                                                        criterion9, criterion10, criterion11};
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "criterion must be in 1..%zu\n", criteria.size());
    return 2;
  }
  int failures = 0;
  for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) {
    if (only && k != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(k - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s (%s) [%.1f s]\n", k, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
