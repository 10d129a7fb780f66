#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "tsvarsel/tsvarsel.hpp"

namespace {

using namespace tsvarsel;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_splits(const std::string& s) {
  std::vector<int> v;
  for (const auto& item : split_list(s)) {
    double d = 0.0;
    if (!detail::try_parse_double(item, d) || d != std::floor(d)) throw InputError("bad split point: " + item);
    v.push_back(static_cast<int>(d));
  }
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] <= v[i - 1]) throw InputError("split points must be strictly increasing");
  return v;
}

std::optional<int> parse_projections(const std::string& s) {
  if (s == "auto") return std::nullopt;
  double d = 0.0;
  if (!detail::try_parse_double(s, d) || d < 1 || d != std::floor(d))
    throw InputError("--projections must be a positive integer or 'auto'");
  return static_cast<int>(d);
}

GridBounds parse_bounds(const std::string& s) {
  const auto items = split_list(s);
  if (items.size() != 4) throw InputError("--bounds needs xmin,xmax,ymin,ymax");
  double v[4];
  for (int i = 0; i < 4; ++i)
    if (!detail::try_parse_double(items[static_cast<std::size_t>(i)], v[i])) throw InputError("bad bound: " + items[static_cast<std::size_t>(i)]);
  return {v[0], v[1], v[2], v[3]};
}

BucketPlan make_plan(int length, int buckets, const std::string& splits, double ratio, std::uint64_t seed) {
  if (splits.empty()) return make_equal_bucket_plan(length, buckets, ratio, seed);
  auto points = parse_splits(splits);
  if (points.empty() || points.back() != length)
    throw InputError("last split point must equal the series length " + std::to_string(length));
  return BucketPlan(std::move(points), ratio, seed);
}

struct Common {
  int buckets = 10;
  std::string splits;
  double train_ratio = 0.8;
  int permutations = 500;
  std::string projections = "100";
  std::uint64_t seed = 0;
  std::string out;
  std::string heatmap;
  bool keep_going = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--buckets", c.buckets, "Number of equal-length buckets")->check(CLI::PositiveNumber);
  cmd->add_option("--splits", c.splits, "Comma-separated split points t_1,...,t_B (overrides --buckets)");
  cmd->add_option("--train-ratio", c.train_ratio, "Fraction of each bucket used for selection")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--permutations", c.permutations, "Permutations for the bucket test")->check(CLI::PositiveNumber);
  cmd->add_option("--projections", c.projections, "Sliced-Wasserstein projections, or 'auto'");
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--out", c.out, "Report JSON path")->required();
  cmd->add_option("--heatmap", c.heatmap, "Optional heatmap CSV path");
  cmd->add_flag("--keep-going", c.keep_going, "Continue past failing buckets");
}

void emit(const RunReport& report, const Common& c) {
  write_report(report, c.out);
  if (!c.heatmap.empty()) write_heatmap_csv(report, c.heatmap);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-sliced variable selection for pairs of multivariate time series"};
  app.require_subcommand(1);

  // run
  Common run_c;
  std::string run_x, run_y, run_method = "mmd-selection", run_gamma = "per-bucket", run_heur = "auto";
  bool run_no_header = false;
  int run_k_top = 1, run_inner_perm = 100, run_max_epochs = 9999;
  auto* run = app.add_subcommand("run", "Select variables per bucket and test them");
  run->add_option("--x", run_x, "CSV of the first series")->required();
  run->add_option("--y", run_y, "CSV of the second series")->required();
  run->add_option("--method", run_method, "mmd-selection|mmd-cv-agg|mmd-vanilla|wasserstein|mskernel-lite");
  run->add_option("--gamma", run_gamma, "Length-scale scope: per-bucket|global");
  run->add_option("--heuristic", run_heur, "Length-scale heuristic: median|mean|auto");
  run->add_option("--k-top", run_k_top, "Variables kept by mskernel-lite")->check(CLI::PositiveNumber);
  run->add_option("--inner-permutations", run_inner_perm, "Permutations inside the lambda search")->check(CLI::PositiveNumber);
  run->add_option("--max-epochs", run_max_epochs, "Optimizer epoch cap")->check(CLI::PositiveNumber);
  run->add_flag("--no-header", run_no_header, "Input CSVs have no header row");
  add_common(run, run_c);

  // synth
  int synth_setting = 1;
  std::uint64_t synth_seed = 0;
  std::string synth_x, synth_y;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic pair with a known change");
  synth->add_option("--setting", synth_setting, "1 (constant shift) or 2 (drifting shift)")->check(CLI::IsMember({1, 2}));
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--out-x", synth_x, "Output CSV for x")->required();
  synth->add_option("--out-y", synth_y, "Output CSV for y")->required();

  // experiment
  int exp_setting = 1, exp_buckets = 10, exp_repeats = 3, exp_perm = 500;
  std::uint64_t exp_seed = 0;
  std::string exp_methods = "mmd-selection,mmd-cv-agg,wasserstein", exp_out;
  auto* experiment = app.add_subcommand("experiment", "Repeat the pipeline on synthetic realizations");
  experiment->add_option("--setting", exp_setting, "1 or 2")->check(CLI::IsMember({1, 2}));
  experiment->add_option("--buckets", exp_buckets, "Number of buckets")->check(CLI::PositiveNumber);
  experiment->add_option("--repeats", exp_repeats, "Number of realizations")->check(CLI::PositiveNumber);
  experiment->add_option("--methods", exp_methods, "Comma-separated methods");
  experiment->add_option("--permutations", exp_perm, "Permutations for the bucket test")->check(CLI::PositiveNumber);
  experiment->add_option("--seed", exp_seed, "Random seed");
  experiment->add_option("--out", exp_out, "Output table CSV")->required();

  // rasterize
  std::string ras_points, ras_bounds, ras_out;
  int ras_grid = 16, ras_frames = 0;
  bool ras_clip = false;
  auto* rasterize = app.add_subcommand("rasterize", "Count particles per grid cell and frame");
  rasterize->add_option("--points", ras_points, "CSV with frame,x,y rows")->required();
  rasterize->add_option("--grid", ras_grid, "Cells per side")->check(CLI::PositiveNumber);
  rasterize->add_option("--bounds", ras_bounds, "xmin,xmax,ymin,ymax")->required();
  rasterize->add_option("--frames", ras_frames, "Number of frames (default: largest frame index)");
  rasterize->add_flag("--clip", ras_clip, "Drop points outside the bounds");
  rasterize->add_option("--out", ras_out, "Output counts CSV")->required();

  // trajectory
  Common traj_c;
  traj_c.projections = "auto";
  std::string traj_x, traj_y, traj_method = "sliced-wasserstein", traj_sel_proj = "auto";
  double traj_lambda = 0.01;
  auto* trajectory = app.add_subcommand("trajectory", "Select agents whose motion differs per bucket");
  trajectory->add_option("--x", traj_x, "Trajectory CSV (agent,t,c1,c2[,c3])")->required();
  trajectory->add_option("--y", traj_y, "Trajectory CSV (agent,t,c1,c2[,c3])")->required();
  trajectory->add_option("--method", traj_method, "mmd|sliced-wasserstein");
  trajectory->add_option("--lambda", traj_lambda, "L1 penalty for the mmd method")->check(CLI::NonNegativeNumber);
  trajectory->add_option("--selector-projections", traj_sel_proj, "Projections for agent weights, or 'auto'");
  add_common(trajectory, traj_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const TimeSeriesPair pair = read_timeseries_pair(run_x, run_y, !run_no_header);
      PipelineConfig cfg;
      cfg.method = parse_method(run_method);
      if (cfg.method == MethodId::TrajectoryMmd || cfg.method == MethodId::TrajectorySlicedWasserstein)
        throw InputError("use the trajectory subcommand for " + run_method);
      cfg.gamma_mode = parse_gamma_mode(run_gamma);
      cfg.heuristic = parse_heuristic(run_heur);
      cfg.k_top = run_k_top;
      cfg.inner_permutations = run_inner_perm;
      cfg.optimize.max_epochs = run_max_epochs;
      cfg.test.n_permutations = run_c.permutations;
      cfg.test.n_projections = parse_projections(run_c.projections);
      cfg.keep_going = run_c.keep_going;
      const BucketPlan plan = make_plan(pair.length(), run_c.buckets, run_c.splits, run_c.train_ratio, run_c.seed);
      emit(run_pipeline(pair, plan, cfg), run_c);
    } else if (*synth) {
      const auto [pair, truth] = generate_setting(static_cast<Setting>(synth_setting), synth_seed);
      write_timeseries_csv(synth_x, pair.x(), pair.labels());
      write_timeseries_csv(synth_y, pair.y(), pair.labels());
    } else if (*experiment) {
      std::vector<MethodId> methods;
      for (const auto& m : split_list(exp_methods)) methods.push_back(parse_method(m));
      PipelineConfig base;
      base.test.n_permutations = exp_perm;
      const auto res =
          run_experiment(static_cast<Setting>(exp_setting), exp_buckets, methods, exp_repeats, exp_seed, base);
      write_experiment_csv(res, exp_out);
    } else if (*rasterize) {
      const auto points = read_points_csv(ras_points);
      int frames = ras_frames;
      if (frames == 0)
        for (const auto& p : points) frames = std::max(frames, p.frame);
      const Matrix counts = rasterize_points(points, frames, ras_grid, parse_bounds(ras_bounds), ras_clip);
      write_timeseries_csv(ras_out, counts);
    } else if (*trajectory) {
      const TrajectoryPair pair(read_trajectory_csv(traj_x), read_trajectory_csv(traj_y));
      TrajectoryConfig cfg;
      if (traj_method == "mmd")
        cfg.method = MethodId::TrajectoryMmd;
      else if (traj_method == "sliced-wasserstein")
        cfg.method = MethodId::TrajectorySlicedWasserstein;
      else
        throw InputError("unknown trajectory method: " + traj_method);
      cfg.lambda = traj_lambda;
      cfg.selector_projections = parse_projections(traj_sel_proj);
      cfg.test.n_permutations = traj_c.permutations;
      cfg.test.n_projections = parse_projections(traj_c.projections);
      cfg.keep_going = traj_c.keep_going;
      const BucketPlan plan =
          make_plan(pair.x.steps() - 1, traj_c.buckets, traj_c.splits, traj_c.train_ratio, traj_c.seed);
      emit(run_trajectory_pipeline(pair, plan, cfg), traj_c);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure";
    if (e.bucket() > 0) std::cerr << " in bucket " << e.bucket();
    std::cerr << ": " << e.what() << '\n';
    return 3;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
