// Command-line front end: run, sweep, eval and gen.

#include "motodom/pipeline.hpp"
#include "motodom/text_io.hpp"

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace motodom;

namespace {

// Options shared by run and sweep. Flags given on the command line win over
// the config file, which wins over defaults.
struct RunOptions {
  std::string config_path;
  std::vector<std::function<void(RunConfig&)>> overrides;
  std::vector<CLI::Option*> options;

  template <typename T>
  void add(CLI::App& app, const std::string& flag, const std::string& help,
           std::function<void(RunConfig&, const T&)> apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app.add_option(flag, *value, help);
    options.push_back(opt);
    overrides.push_back([opt, value, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
  }

  void attach(CLI::App& app, bool with_mode) {
    app.add_option("--config", config_path, "YAML run configuration")->check(CLI::ExistingFile);
    add<std::string>(app, "--scenario,-s", "fixture name or scenario YAML",
                     [](RunConfig& c, const std::string& v) { c.scenario = v; });
    if (with_mode)
      add<std::string>(app, "--mode,-m", "odom-only | allfilt | dynafilt | joint",
                       [](RunConfig& c, const std::string& v) { c.mode = parse_mode(v); });
    add<int>(app, "--window", "sliding window size", [](RunConfig& c, const int& v) {
      c.window = v;
    });
    add<double>(app, "--alpha", "matching score scale", [](RunConfig& c, const double& v) {
      c.alpha = v;
    });
    add<double>(app, "--d-thres", "association gate (m)", [](RunConfig& c, const double& v) {
      c.d_thres = v;
    });
    add<double>(app, "--v-thres", "dynamic speed threshold (m/s)",
                [](RunConfig& c, const double& v) { c.v_thres = v; });
    add<double>(app, "--margin", "box inflation (m)", [](RunConfig& c, const double& v) {
      c.margin = v;
    });
    add<double>(app, "--odometry-sigma-t", "odometry factor sigma, translation (m)", [](RunConfig& c, const double& v) {
      c.noise.odometry_t = v;
    });
    add<double>(app, "--odometry-sigma-r", "odometry factor sigma, rotation (rad)", [](RunConfig& c, const double& v) {
      c.noise.odometry_r = v;
    });
    add<double>(app, "--observation-sigma-t", "observation factor sigma, translation (m)", [](RunConfig& c, const double& v) {
      c.noise.observation_t = v;
    });
    add<double>(app, "--observation-sigma-r", "observation factor sigma, rotation (rad)", [](RunConfig& c, const double& v) {
      c.noise.observation_r = v;
    });
    add<double>(app, "--motion-sigma-t", "motion factor sigma, translation (m)", [](RunConfig& c, const double& v) {
      c.noise.motion_t = v;
    });
    add<double>(app, "--motion-sigma-r", "motion factor sigma, rotation (rad)", [](RunConfig& c, const double& v) {
      c.noise.motion_r = v;
    });
    add<double>(app, "--smooth-sigma-t", "smooth factor sigma, translation (m)", [](RunConfig& c, const double& v) {
      c.noise.smooth_t = v;
    });
    add<double>(app, "--smooth-sigma-r", "smooth factor sigma, rotation (rad)", [](RunConfig& c, const double& v) {
      c.noise.smooth_r = v;
    });
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path.empty()) load(config_path, c);
    for (const auto& apply : overrides) apply(c);
    return c;
  }

  static void load(const std::string& path, RunConfig& c) {
    YAML::Node n = YAML::LoadFile(path);
    static const std::set<std::string> known{
        "scenario", "mode",  "window", "alpha", "d_thres", "v_thres",
        "margin",   "seed",  "output", "noise", "solver"};
    for (const auto& kv : n) {
      const std::string key = kv.first.as<std::string>();
      if (known.count(key) == 0) throw std::runtime_error(path + ": unknown key '" + key + "'");
    }
    if (n["scenario"]) c.scenario = n["scenario"].as<std::string>();
    if (n["mode"]) c.mode = parse_mode(n["mode"].as<std::string>());
    if (n["window"]) c.window = n["window"].as<int>();
    if (n["alpha"]) c.alpha = n["alpha"].as<double>();
    if (n["d_thres"]) c.d_thres = n["d_thres"].as<double>();
    if (n["v_thres"]) c.v_thres = n["v_thres"].as<double>();
    if (n["margin"]) c.margin = n["margin"].as<double>();
    if (n["seed"]) c.seed = n["seed"].as<std::uint64_t>();
    if (n["output"]) c.output_dir = n["output"].as<std::string>();
    if (const YAML::Node z = n["noise"]) {
      auto opt = [&](const char* k, std::optional<double>& dst) {
        if (z[k]) dst = z[k].as<double>();
      };
      opt("odometry_sigma_t", c.noise.odometry_t);
      opt("odometry_sigma_r", c.noise.odometry_r);
      opt("observation_sigma_t", c.noise.observation_t);
      opt("observation_sigma_r", c.noise.observation_r);
      opt("motion_sigma_t", c.noise.motion_t);
      opt("motion_sigma_r", c.noise.motion_r);
      opt("smooth_sigma_t", c.noise.smooth_t);
      opt("smooth_sigma_r", c.noise.smooth_r);
    }
    if (const YAML::Node s = n["solver"]) {
      if (s["max_iterations"]) c.solver.max_iterations = s["max_iterations"].as<int>();
      if (s["relative_decrease"]) c.solver.relative_decrease = s["relative_decrease"].as<double>();
    }
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      out.push_back(std::stoull(part));
    } else {
      const std::uint64_t a = std::stoull(part.substr(0, dash));
      const std::uint64_t b = std::stoull(part.substr(dash + 1));
      if (b < a) throw std::invalid_argument("bad seed range '" + part + "'");
      for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
    }
  }
  if (out.empty()) throw std::invalid_argument("no seeds given");
  return out;
}

std::string csv_num(std::optional<double> v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", *v);
  return buf;
}

int cmd_run(const RunOptions& opts, const std::string& out, std::optional<std::uint64_t> seed) {
  RunConfig cfg = opts.resolve();
  if (seed) cfg.seed = seed;
  if (!out.empty()) cfg.output_dir = out;
  const RunResult r = run_pipeline(cfg);
  if (!cfg.output_dir.empty()) write_outputs(r, cfg.output_dir);
  std::cout << format_metrics(r);
  return 0;
}

int cmd_sweep(const RunOptions& opts, const std::string& out, const std::string& seeds,
              const std::vector<std::string>& modes, bool keep) {
  const RunConfig base = opts.resolve();
  std::vector<Mode> parsed;
  for (const std::string& m : modes) parsed.push_back(parse_mode(m));
  if (parsed.empty()) parsed.push_back(base.mode);
  const Scenario scenario = resolve_scenario(base.scenario);

  std::ostringstream csv;
  csv << "seed,mode,ego_ate_t,ego_ate_r,object_ate_t,raw_object_ate_t,motp,tp,"
         "moving_removed,static_retained\n";
  for (std::uint64_t s : parse_seeds(seeds)) {
    for (Mode m : parsed) {
      RunConfig cfg = base;
      cfg.seed = s;
      cfg.mode = m;
      const RunResult r = run_pipeline(scenario, cfg);
      if (keep && !out.empty())
        write_outputs(r, (fs::path(out) / (std::string(to_string(m)) + "_" + std::to_string(s)))
                             .string());
      csv << s << ',' << to_string(m) << ',' << csv_num(r.ego_ate.ate_t) << ','
          << csv_num(r.ego_ate.ate_r) << ','
          << csv_num(r.object_ate ? std::optional(r.object_ate->ate_t) : std::nullopt) << ','
          << csv_num(r.raw_object_ate ? std::optional(r.raw_object_ate->ate_t) : std::nullopt)
          << ',' << csv_num(r.objects.motp) << ',' << csv_num(r.objects.tp) << ','
          << csv_num(r.filter.moving_removed_ratio()) << ','
          << csv_num(r.filter.static_retained_ratio()) << '\n';
    }
  }
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "summary.csv");
    f << csv.str();
  }
  std::cout << csv.str();
  return 0;
}

int cmd_eval(const std::string& est, const std::string& gt, const std::string& align) {
  Alignment a;
  if (align == "se3")
    a = Alignment::Se3;
  else if (align == "none")
    a = Alignment::None;
  else
    throw std::invalid_argument("--align must be 'none' or 'se3'");
  const AteResult r = ate(load_trajectory(est), load_trajectory(gt), a);
  std::printf("ate_t = %.9g\nate_r = %.9g\nmatched = %d\n", r.ate_t, r.ate_r, r.matched);
  return 0;
}

int cmd_gen(const std::string& name, std::optional<std::uint64_t> seed, const std::string& out,
            bool clouds) {
  Scenario s = resolve_scenario(name);
  if (seed) s.seed = *seed;
  const std::vector<FrameBundle> bundles = generate(s);
  const fs::path root(out);
  fs::create_directories(root);
  std::ofstream(root / "scenario.yaml") << scenario_to_yaml(s);

  Trajectory ego;
  for (const FrameBundle& b : bundles) ego.push_back({b.timestamp, b.ego.pose});
  save_trajectory((root / "ego_gt.txt").string(), ego);

  std::ofstream odo(root / "odometry.txt");
  std::ofstream imu(root / "imu.txt");
  std::ofstream dets(root / "detections.txt");
  std::ofstream objs(root / "objects_gt.txt");
  odo << "# t tx ty tz qw qx qy qz (relative to the previous frame)\n";
  imu << "# t_end dt gx gy gz ax ay az\n";
  dets << "# t id tx ty tz qw qx qy qz l w h class score\n";
  objs << "# t id tx ty tz qw qx qy qz visible\n";
  if (clouds) fs::create_directories(root / "clouds");
  for (const FrameBundle& b : bundles) {
    if (b.frame > 0) {
      odo << csv_num(b.timestamp) << ' ' << format_pose(b.odometry) << '\n';
      double t = bundles[static_cast<size_t>(b.frame - 1)].timestamp;
      for (const ImuSample& m : b.imu) {
        t += m.dt;
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", t, m.dt,
                      m.gyro.x(), m.gyro.y(), m.gyro.z(), m.accel.x(), m.accel.y(), m.accel.z());
        imu << buf;
      }
    }
    write_detections(dets, b.detections);
    for (const ObjectTruth& o : b.objects) {
      if (!o.present) continue;
      objs << csv_num(b.timestamp) << ' ' << o.id << ' ' << format_pose(o.pose) << ' '
           << (o.visible ? 1 : 0) << '\n';
    }
    if (clouds) {
      char name_buf[32];
      std::snprintf(name_buf, sizeof(name_buf), "%06d.txt", b.frame);
      std::ofstream c(root / "clouds" / name_buf);
      write_cloud(c, b.cloud);
    }
  }
  std::cout << "wrote " << bundles.size() << " frames to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint ego/object sliding-window estimation on simulated scenarios"};
  app.require_subcommand(1);

  RunOptions run_opts;
  std::string run_out;
  std::optional<std::uint64_t> run_seed;
  CLI::App* run = app.add_subcommand("run", "run one scenario and write trajectories/metrics");
  run_opts.attach(*run, true);
  run->add_option("--seed", run_seed, "random seed (overrides the scenario)");
  run->add_option("--out,-o", run_out, "output directory");

  RunOptions sweep_opts;
  std::string sweep_out, seeds = "1-20";
  std::vector<std::string> modes;
  bool keep = false;
  CLI::App* sweep = app.add_subcommand("sweep", "run many seeds and modes, write summary.csv");
  sweep_opts.attach(*sweep, false);
  sweep->add_option("--seeds", seeds, "list or ranges, e.g. 1-20 or 3,5,8")->capture_default_str();
  sweep->add_option("--modes", modes, "modes to run (default: joint)")->delimiter(',');
  sweep->add_option("--out,-o", sweep_out, "output directory");
  sweep->add_flag("--keep-runs", keep, "also write every run's outputs");

  std::string est, gt, align = "se3";
  CLI::App* eval = app.add_subcommand("eval", "ATE between two trajectory files");
  eval->add_option("--est", est, "estimated trajectory")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "ground-truth trajectory")->required()->check(CLI::ExistingFile);
  eval->add_option("--align", align, "none | se3")->capture_default_str();

  std::string gen_scenario = "s1", gen_out;
  std::optional<std::uint64_t> gen_seed;
  bool gen_clouds = false;
  CLI::App* gen = app.add_subcommand("gen", "dump a scenario's simulated measurements");
  gen->add_option("--scenario,-s", gen_scenario, "fixture name or scenario YAML")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out,-o", gen_out, "output directory")->required();
  gen->add_flag("--clouds", gen_clouds, "also write per-frame point clouds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) return cmd_run(run_opts, run_out, run_seed);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, sweep_out, seeds, modes, keep);
    if (eval->parsed()) return cmd_eval(est, gt, align);
    if (gen->parsed()) return cmd_gen(gen_scenario, gen_seed, gen_out, gen_clouds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
