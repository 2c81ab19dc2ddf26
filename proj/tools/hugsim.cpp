#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hugsim/assets/library.hpp"
#include "hugsim/bridge/server.hpp"
#include "hugsim/core/error.hpp"
#include "hugsim/metrics/driving.hpp"
#include "hugsim/recon/optimize.hpp"
#include "hugsim/recon/track_fit.hpp"
#include "hugsim/render/image_io.hpp"
#include "hugsim/render/rasterizer.hpp"
#include "hugsim/scene/compose.hpp"
#include "hugsim/scene/scene_io.hpp"
#include "hugsim/scene/synthetic.hpp"
#include "hugsim/sim/environment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hugsim;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

/// Scenario with the HUGSIM_SEED override applied.
sim::ScenarioConfig load_scenario(const fs::path& path) {
  auto config = sim::ScenarioConfig::load(path);
  if (const auto seed = sim::seed_override_from_env()) config.seed = *seed;
  return config;
}

/// Camera from its stored form or from {fx, fy, cx, cy, width, height,
/// position, forward[, down]}.
scene::Camera camera_from_json(const json& j) {
  if (!j.contains("position")) return scene::Camera::from_json(j);
  auto vec = [&](const char* key, Vec3 fallback) {
    if (!j.contains(key)) return fallback;
    const auto& a = j.at(key);
    require(a.is_array() && a.size() == 3, ErrorCode::kConfig, std::string("camera: '") + key + "' needs 3 numbers");
    return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  };
  const auto base = scene::Camera::from_json(j);
  return scene::Camera::look_along(base.intrinsics, base.width, base.height, vec("position", Vec3::Zero()),
                                   vec("forward", Vec3(0, 0, 1)), vec("down", Vec3(0, 1, 0)));
}

void write_render(const render::RenderOutput& out, const fs::path& dir, const std::string& stem) {
  render::write_ppm(out.color, dir / (stem + ".ppm"));
  if (out.depth.channels > 0 && !out.depth.data.empty()) render::write_pfm(out.depth, dir / (stem + "_depth.pfm"));
  if (out.semantic.channels > 0 && !out.semantic.data.empty()) {
    render::write_label_pgm(out.semantic, dir / (stem + "_semantic.pgm"), &out.alpha);
  }
}

// ---------------------------------------------------------------- serve

std::atomic<bridge::Server*> g_server{nullptr};

void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const fs::path& scenario, const std::string& listen, const fs::path& trace_dir, int max_sessions) {
  auto ctx = bridge::ServerContext::from_config(load_scenario(scenario));
  ctx.trace_dir = trace_dir;
  bridge::Server server(std::make_shared<const bridge::ServerContext>(std::move(ctx)), {listen, max_sessions});
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on " << server.address() << std::endl;
  server.run();
  g_server = nullptr;
  return 0;
}

// ---------------------------------------------------------------- simulate

/// Ego-frame waypoints straight ahead along the current heading.
sim::Action straight_action(const sim::EgoState& ego, double cruise) {
  sim::Action a;
  const double v = std::max(ego.v, cruise);
  for (int i = 1; i <= 6; ++i) a.waypoints.push_back({v * 0.5 * i, 0.0, 0.5 * i});
  return a;
}

std::vector<sim::Control> read_controls(const fs::path& path) {
  const json j = read_json(path);
  const json& list = j.is_object() ? j.at("controls") : j;
  require(list.is_array(), ErrorCode::kConfig, path.string() + ": expected a list of [steer, accel]");
  std::vector<sim::Control> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& c = list[i];
    require(c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number(), ErrorCode::kShapeMismatch,
            path.string() + ": controls[" + std::to_string(i) + "] must be [steer, accel]");
    out.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return out;
}

int cmd_simulate(const fs::path& scenario, const std::vector<std::string>& policy, const fs::path& out_path,
                 const fs::path& report_path, const fs::path& frames_dir, bool no_render) {
  require(!policy.empty(), ErrorCode::kConfig, "--policy needs a value");
  std::vector<sim::Control> controls;
  const bool straight = policy[0] == "straight";
  if (straight) {
    require(policy.size() == 1, ErrorCode::kConfig, "--policy straight takes no file");
  } else {
    require(policy[0] == "replay-controls" && policy.size() == 2, ErrorCode::kConfig,
            "--policy must be 'straight' or 'replay-controls <file>'");
    controls = read_controls(policy[1]);
  }

  auto config = load_scenario(scenario);
  require(!(no_render && !frames_dir.empty()), ErrorCode::kConfig, "--frames needs rendering");
  if (no_render) config.render = false;
  const double cruise = config.ego_start.v;
  sim::Environment env(config);

  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write '" + out_path.string() + "'");
  out << env.trace_header().dump() << '\n';

  auto dump_frames = [&](const sim::StepResult& r) {
    if (frames_dir.empty()) return;
    fs::create_directories(frames_dir);
    for (std::size_t c = 0; c < r.observations.size(); ++c) {
      char stem[96];
      std::snprintf(stem, sizeof(stem), "step%05d_%s", r.step, config.cameras[c].name.c_str());
      render::write_ppm(r.observations[c].color, frames_dir / (std::string(stem) + ".ppm"));
    }
  };

  auto r = env.reset();
  out << r.to_trace_json().dump() << '\n';
  dump_frames(r);
  std::size_t k = 0;
  while (!r.done) {
    sim::Action a;
    if (straight) {
      a = straight_action(r.ego, cruise);
    } else {
      a.controls.push_back(k < controls.size() ? controls[k] : sim::Control{});
    }
    ++k;
    r = env.step(a);
    out << r.to_trace_json().dump() << '\n';
    dump_frames(r);
  }
  const auto report = env.score_report();
  if (!report_path.empty()) write_json(report, report_path);
  std::cerr << "steps " << report.at("steps").get<int>() << "  reason " << r.reason << "  R_c "
            << report.at("R_c").get<double>() << "  HD-Score " << report.at("hd_score").get<double>() << '\n';
  return 0;
}

// ---------------------------------------------------------------- score

json score_trace_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::string line;
  int line_no = 0;
  json header;
  metrics::ScoreTrace trace;
  std::vector<Vec2> path_points;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfig, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const auto type = rec.value("type", std::string());
    try {
      if (type == "header") {
        header = rec;
        trace.weights = {rec.at("weights").at("TTC").get<double>(), rec.at("weights").at("COM").get<double>()};
      } else if (type == "step") {
        trace.steps.push_back(metrics::SubScores::from_json(rec.at("scores")));
        path_points.emplace_back(rec.at("ego").at("x").get<double>(), rec.at("ego").at("z").get<double>());
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfig, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  require(header.is_object(), ErrorCode::kConfig, path.string() + ": missing header record");
  std::vector<Vec2> route;
  for (const auto& p : header.at("route")) route.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  trace.route_completion = metrics::route_completion(path_points, sim::Polyline(route));
  return metrics::score_report(trace);
}

// ---------------------------------------------------------------- fit

std::vector<recon::Observation> read_observations(const fs::path& manifest_path) {
  const json m = read_json(manifest_path);
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_relative() ? base / p : fs::path(p); };
  std::vector<recon::Observation> obs;
  for (const auto& o : m.at("observations")) {
    recon::Observation ob;
    ob.camera = camera_from_json(o.at("camera"));
    ob.time = o.value("time", 0.0);
    ob.color = render::read_ppm(resolve(o.at("image").get<std::string>()));
    require(ob.color.width == ob.camera.width && ob.color.height == ob.camera.height, ErrorCode::kShapeMismatch,
            "observation image size differs from its camera");
    int w = 0, h = 0;
    if (o.contains("labels")) {
      const auto px = render::read_pgm(resolve(o.at("labels").get<std::string>()), w, h);
      require(w == ob.color.width && h == ob.color.height, ErrorCode::kShapeMismatch, "label map size mismatch");
      ob.labels.assign(px.begin(), px.end());
    }
    if (o.contains("mask")) {
      const auto px = render::read_pgm(resolve(o.at("mask").get<std::string>()), w, h);
      require(w == ob.color.width && h == ob.color.height, ErrorCode::kShapeMismatch, "mask size mismatch");
      ob.mask = Image(w, h, 1);
      for (std::size_t i = 0; i < px.size(); ++i) ob.mask.data[i] = px[i] / 255.0;
    }
    obs.push_back(std::move(ob));
  }
  require(!obs.empty(), ErrorCode::kConfig, manifest_path.string() + ": no observations");
  return obs;
}

int cmd_fit_scene(const fs::path& init, const fs::path& manifest, const fs::path& config_path,
                  const fs::path& out_path, const fs::path& log_path) {
  json cfg = config_path.empty() ? json::object() : read_json(config_path);
  const auto fit = recon::FitConfig::from_json(cfg.value("fit", json::object()));
  const auto weights = recon::LossWeights::from_json(cfg.value("weights", json::object()));
  const auto scene = scene::load_scene(init);
  const auto observations = read_observations(manifest);
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    require(log.good(), ErrorCode::kIo, "cannot write '" + log_path.string() + "'");
  }
  const auto result = recon::optimize_scene(scene, observations, weights, fit, log_path.empty() ? nullptr : &log);
  scene::save_scene(result.scene, out_path);
  double psnr = 0.0;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto r = recon::render_observation(result.scene, observations[i].camera, observations[i].time);
    psnr += recon::psnr(render::apply_exposure(r.color, result.exposures[i]), observations[i].color);
  }
  std::cerr << "fitted " << observations.size() << " views  mean PSNR " << psnr / observations.size()
            << " dB  densify events " << result.densify_events << '\n';
  return 0;
}

int cmd_fit_track(const fs::path& boxes_path, const fs::path& config_path, const fs::path& out_path) {
  const json j = read_json(boxes_path);
  std::vector<double> times;
  std::vector<recon::UnicycleState> boxes;
  try {
    times = j.at("times").get<std::vector<double>>();
    for (const auto& b : j.at("boxes")) {
      require(b.is_array() && b.size() == 3, ErrorCode::kShapeMismatch, "boxes: each entry is [x, z, theta]");
      boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, boxes_path.string() + ": " + e.what());
  }
  require(times.size() == boxes.size(), ErrorCode::kShapeMismatch, "times and boxes differ in length");
  json cfg = config_path.empty() ? json::object() : read_json(config_path);
  const auto track = recon::TrackFitConfig::from_json(cfg.value("track", json::object()));
  const auto weights = recon::LossWeights::from_json(cfg.value("weights", json::object()));
  const auto traj = recon::fit_unicycle(times, boxes, weights, track);
  write_json(traj.to_json(), out_path);
  return 0;
}

// ---------------------------------------------------------------- render

int cmd_render(const fs::path& scene_path, const fs::path& camera_path, const fs::path& out_dir, double time,
               const fs::path& assets_dir) {
  fs::create_directories(out_dir);
  if (scene_path.extension() == ".json") {
    // Scenario: the ego rig at reset, exactly as served in the first OBS.
    auto config = load_scenario(scene_path);
    require(camera_path.empty(), ErrorCode::kConfig, "--camera is not used with a scenario; the rig is rendered");
    sim::Environment env(config);
    const auto r = env.reset();
    for (std::size_t c = 0; c < r.observations.size(); ++c) write_render(r.observations[c], out_dir, config.cameras[c].name);
    std::cerr << "rendered " << r.observations.size() << " rig cameras\n";
    return 0;
  }
  require(!camera_path.empty(), ErrorCode::kConfig, "--camera is required for a scene container");
  const auto graph = scene::load_scene(scene_path);
  std::unique_ptr<assets::AssetLibrary> library;
  if (!assets_dir.empty()) library = std::make_unique<assets::AssetLibrary>(assets_dir);
  const auto composed = scene::compose_scene(graph, time, library ? library->lookup() : scene::AssetLookup{});
  const json cj = read_json(camera_path);
  const json list = cj.is_array() ? cj : json::array({cj});
  for (std::size_t i = 0; i < list.size(); ++i) {
    render::RenderOptions options;
    options.modes.depth = true;
    options.modes.semantic = true;
    const auto out = render::rasterize(composed.gaussians, camera_from_json(list[i]), options);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "view%03zu", i);
    write_render(out, out_dir, stem);
  }
  std::cerr << "rendered " << list.size() << " views of " << composed.gaussians.size() << " Gaussians\n";
  return 0;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const fs::path& spec_path, const fs::path& out_path) {
  const auto spec = spec_path.empty() ? scene::SyntheticSceneSpec{}
                                      : scene::SyntheticSceneSpec::from_json(read_json(spec_path));
  const auto graph = scene::build_synthetic_scene(spec);
  scene::save_scene(graph, out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop driving simulator on Gaussian-splat scenes"};
  app.require_subcommand(1);

  fs::path scenario, trace_dir, out, report, frames, trace, init, manifest, config, log, boxes, scene, camera,
      assets, spec;
  std::string listen = "127.0.0.1:7450";
  int max_sessions = 0;
  std::vector<std::string> policy{"straight"};
  double time = 0.0;

  auto* serve = app.add_subcommand("serve", "Serve a scenario over the wire protocol");
  serve->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--listen", listen, "host:port or pipe:/path")->capture_default_str();
  serve->add_option("--trace-dir", trace_dir, "Write one JSONL trace per episode");
  serve->add_option("--max-sessions", max_sessions, "Exit after this many sessions (0 = never)");

  auto* simulate = app.add_subcommand("simulate", "Run one episode with a built-in policy");
  simulate->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--policy", policy, "straight | replay-controls <file>")->expected(1, 2);
  simulate->add_option("--out", out, "Trace output (JSONL)")->required();
  simulate->add_option("--report", report, "Also write the score report");
  simulate->add_option("--frames", frames, "Write rig images per step (PPM)");
  bool no_render = false;
  simulate->add_flag("--no-render", no_render, "Skip rendering; records carry no observation hashes");

  auto* score = app.add_subcommand("score", "Recompute the score report of a trace");
  score->add_option("--trace", trace, "Trace JSONL")->required()->check(CLI::ExistingFile);
  score->add_option("--out", out, "Report path (default stdout)");

  auto* fit = app.add_subcommand("fit", "Reconstruction");
  fit->require_subcommand(1);
  auto* fit_scene = fit->add_subcommand("scene", "Optimize a scene against posed images");
  fit_scene->add_option("--init", init, "Initial scene container")->required()->check(CLI::ExistingFile);
  fit_scene->add_option("--observations", manifest, "Observation manifest JSON")->required()->check(CLI::ExistingFile);
  fit_scene->add_option("--config", config, "{\"fit\": {...}, \"weights\": {...}}")->check(CLI::ExistingFile);
  fit_scene->add_option("--out", out, "Fitted scene container")->required();
  fit_scene->add_option("--log", log, "Per-iteration JSONL log");
  auto* fit_track = fit->add_subcommand("track", "Fit a unicycle trajectory to noisy boxes");
  fit_track->add_option("--boxes", boxes, "{\"times\": [...], \"boxes\": [[x, z, theta], ...]}")
      ->required()
      ->check(CLI::ExistingFile);
  fit_track->add_option("--config", config, "{\"track\": {...}, \"weights\": {...}}")->check(CLI::ExistingFile);
  fit_track->add_option("--out", out, "Trajectory JSON (default stdout)");

  auto* rend = app.add_subcommand("render", "Render images, depth and semantics");
  rend->add_option("--scene", scene, "Scene container, or a scenario JSON to render its rig at reset")
      ->required()
      ->check(CLI::ExistingFile);
  rend->add_option("--camera", camera, "Camera JSON (object or list)")->check(CLI::ExistingFile);
  rend->add_option("--out", out, "Output directory")->required();
  rend->add_option("--time", time, "Scene time in seconds");
  rend->add_option("--assets", assets, "Asset library directory for inserted actors");

  auto* synth = app.add_subcommand("synth", "Write a procedural scene container");
  synth->add_option("--spec", spec, "Synthetic scene spec JSON")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Scene container")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(scenario, listen, trace_dir, max_sessions);
    if (*simulate) return cmd_simulate(scenario, policy, out, report, frames, no_render);
    if (*score) {
      write_json(score_trace_file(trace), out);
      return 0;
    }
    if (*fit_scene) return cmd_fit_scene(init, manifest, config, out, log);
    if (*fit_track) return cmd_fit_track(boxes, config, out);
    if (*rend) return cmd_render(scene, camera, out, time, assets);
    if (*synth) return cmd_synth(spec, out);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
