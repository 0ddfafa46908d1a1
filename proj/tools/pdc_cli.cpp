#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "pdc/config.hpp"
#include "pdc/pdc.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  std::string from_manifest;
};

fs::path output_dir(const Common& c) {
  fs::path dir;
  if (!c.out.empty()) dir = c.out;
  else if (const char* env = std::getenv("PDC_OUT_DIR"); env && *env) dir = env;
  else dir = "pdc_out";
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(p, mode | std::ios::trunc);
  if (!os) throw pdc::config_error("cannot write '" + p.string() + "'");
  return os;
}

pdc::RunConfig resolve_config(const Common& c) {
  pdc::RunConfig cfg;
  if (!c.from_manifest.empty()) {
    std::ifstream in(c.from_manifest);
    if (!in) throw pdc::config_error("cannot open manifest '" + c.from_manifest + "'");
    json m;
    try {
      in >> m;
      cfg = pdc::parse_config_string(m.at("config").get<std::string>());
      cfg.experiment.seed = m.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw pdc::config_error("manifest '" + c.from_manifest + "': " + e.what());
    }
  } else if (!c.config.empty()) {
    cfg = pdc::load_config(c.config);
  }
  if (c.seed) cfg.experiment.seed = *c.seed;
  cfg.experiment.threads = c.threads;
  return cfg;
}

void write_manifest(const fs::path& dir, const std::string& command, const pdc::RunConfig& cfg, double wall,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["tool_version"] = pdc::kToolVersion;
  m["seed"] = cfg.experiment.seed;
  m["config_hash"] = pdc::config_hash(cfg);
  m["config"] = pdc::canonical_config(cfg);
  m["wall_time_seconds"] = wall;
  m["outputs"] = outputs;
  open_out(dir / "manifest.json") << m.dump(2) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_simulate(const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  if (c.config.empty() && c.from_manifest.empty()) throw pdc::config_error("simulate: --config or --from-manifest is required");
  const pdc::RunConfig cfg = resolve_config(c);
  const fs::path dir = output_dir(c);
  const pdc::ExperimentResult res = pdc::run_experiment(cfg.experiment);

  const std::string name = "cdf_" + cfg.scenario + ".csv";
  {
    auto os = open_out(dir / name);
    pdc::io::write_cdf_csv(os, res.cdf);
  }
  const double med_c = pdc::median(res.pooled(false));
  const double med_d = pdc::median(res.pooled(true));
  std::cout << "scenario " << cfg.scenario << ": median sum rate contaminated " << med_c << ", decontaminated " << med_d
            << " bits/s/Hz (" << res.failed_trials() << " failed trials)\n";
  write_manifest(dir, "simulate", cfg, seconds_since(t0), {name});
  return kExitOk;
}

pdc::AngleDelayGrid grid_for(const pdc::RunConfig& cfg, int num_antennas, int num_subcarriers) {
  pdc::ArrayConfig arr = cfg.experiment.array;
  pdc::OfdmConfig ofdm = cfg.experiment.ofdm;
  arr.num_antennas = num_antennas;
  ofdm.num_subcarriers = num_subcarriers;
  try {
    return pdc::AngleDelayGrid(arr, ofdm, cfg.experiment.angle_oversampling, cfg.experiment.delay_oversampling);
  } catch (const std::logic_error& e) {
    throw pdc::config_error(std::string("grid: ") + e.what());
  }
}

pdc::io::SketchFile load_sketches(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pdc::config_error("cannot open sketch file '" + path + "'");
  return pdc::io::read_sketches(in);
}

void print_peak(const pdc::Psf& psf) {
  Eigen::Index l = 0;
  psf.weights.maxCoeff(&l);
  std::cout << "peak angle_index=" << l % psf.angle_size << " delay_index=" << l / psf.angle_size << '\n';
}

int cmd_estimate_psf(const Common& c, const std::string& sketch_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const pdc::RunConfig cfg = resolve_config(c);
  const auto file = load_sketches(sketch_path);
  const pdc::Dictionary dict(grid_for(cfg, file.num_antennas, file.num_subcarriers));
  const pdc::PsfSolution sol = pdc::solve_psf(file.window, dict, cfg.experiment.solver);
  const fs::path dir = output_dir(c);
  {
    auto os = open_out(dir / "psf.csv");
    pdc::io::write_psf_csv(os, sol.psf, dict.grid());
  }
  {
    auto os = open_out(dir / "trace.csv");
    pdc::io::write_trace_csv(os, sol);
  }
  print_peak(sol.psf);
  std::cout << "iterations=" << sol.iterations << " converged=" << (sol.converged ? "true" : "false") << '\n';
  write_manifest(dir, "estimate-psf", cfg, seconds_since(t0), {"psf.csv", "trace.csv"});
  return kExitOk;
}

int cmd_decontaminate(const Common& c, const std::string& sketch_path, int slot) {
  const auto t0 = std::chrono::steady_clock::now();
  const pdc::RunConfig cfg = resolve_config(c);
  const auto file = load_sketches(sketch_path);
  const pdc::Dictionary dict(grid_for(cfg, file.num_antennas, file.num_subcarriers));
  const long w = file.window.width();
  if (slot < 0) slot = static_cast<int>(w - 1);
  if (slot >= w) throw pdc::config_error("decontaminate: slot " + std::to_string(slot) + " not in the file");

  const pdc::PsfSolution sol = pdc::solve_psf(file.window, dict, cfg.experiment.solver);
  const pdc::MaskPair masks = pdc::cluster_by_delay(sol.psf, dict.grid(), cfg.experiment.delay_threshold());
  const auto& pattern = file.window.patterns[slot];
  const pdc::AdmmResult est = pdc::admm_interpolate(pdc::sketch_matrix(file.window.data.col(slot), pattern), pattern,
                                                    masks, dict, cfg.experiment.admm);
  const fs::path dir = output_dir(c);
  {
    auto os = open_out(dir / "masks.csv");
    pdc::io::write_mask_csv(os, masks);
  }
  {
    auto os = open_out(dir / "estimate.bin", std::ios::binary);
    pdc::io::write_channels(os, {est.p, est.q});
  }
  std::cout << "admm iterations=" << est.iterations << " converged=" << (est.converged ? "true" : "false") << '\n';
  write_manifest(dir, "decontaminate", cfg, seconds_since(t0), {"masks.csv", "estimate.bin"});
  return kExitOk;
}

int cmd_bench(const Common& c, const std::string& component, int lo, int hi, double min_seconds) {
  pdc::BenchComponent comp;
  if (component == "solver") comp = pdc::BenchComponent::solver;
  else if (component == "admm") comp = pdc::BenchComponent::admm;
  else if (component == "dictionary") comp = pdc::BenchComponent::dictionary;
  else throw pdc::config_error("bench: unknown component '" + component + "'");
  if (lo < 4 || hi < lo || hi > 22) throw pdc::config_error("bench: need 4 <= --log2-min <= --log2-max <= 22");

  const auto points = pdc::bench_sweep(comp, lo, hi, min_seconds);
  std::ostringstream csv;
  csv << "G,seconds_per_iteration\n";
  for (const auto& p : points) csv << p.grid_size << ',' << pdc::io::format_double(p.seconds_per_iteration) << '\n';
  std::cout << csv.str();
  if (!c.out.empty() || std::getenv("PDC_OUT_DIR")) open_out(output_dir(c) / ("bench_" + component + ".csv")) << csv.str();
  if (points.size() >= 2) std::cout << "slope " << pdc::io::format_double(pdc::loglog_slope(points)) << '\n';
  if (comp == pdc::BenchComponent::dictionary) {
    pdc::ArrayConfig arr;
    arr.num_antennas = 8;
    pdc::OfdmConfig ofdm;
    ofdm.num_subcarriers = 8;
    const double dev = pdc::dictionary_agreement(pdc::AngleDelayGrid(arr, ofdm));
    std::cout << "dense vs transform at M=N=8: max relative deviation " << dev << (dev < 1e-10 ? " (agree)" : " (MISMATCH)")
              << '\n';
  }
  return kExitOk;
}

/// Synthetic on-grid sketches: `mpcs` paths at random grid points within the
/// sector and delay range, fresh gains per slot, hopping pilots.
int cmd_synth(const Common& c, int mpcs, double snr_db) {
  const auto t0 = std::chrono::steady_clock::now();
  const pdc::RunConfig cfg = resolve_config(c);
  const auto& e = cfg.experiment;
  const pdc::AngleDelayGrid grid(e.array, e.ofdm, e.angle_oversampling, e.delay_oversampling);
  if (mpcs < 1) throw pdc::config_error("synth-sketches: --mpcs must be >= 1");

  pdc::Rng rng = pdc::make_rng(e.seed, {0x73796e7468ULL});
  const int max_delay_index =
      std::max(1, static_cast<int>(std::floor(e.ofdm.max_delay / grid.delay_period() * grid.delay_size())));
  std::vector<pdc::MultipathComponent> paths;
  std::vector<long> truth;
  const double power = pdc::db_to_linear(snr_db) / mpcs;
  while (static_cast<int>(paths.size()) < mpcs) {
    // Skip the i = 0 endpoint u = -1, which sits exactly on the span edge.
    const int i = 1 + static_cast<int>(pdc::uniform_index(rng, grid.angle_size() - 1));
    const int j = static_cast<int>(pdc::uniform_index(rng, max_delay_index));
    const long l = grid.flat_index(i, j);
    if (std::find(truth.begin(), truth.end(), l) != truth.end()) continue;
    truth.push_back(l);
    paths.push_back({grid.angle_points()[i], grid.delay_points()[j], power});
  }

  pdc::io::SketchFile file{e.array.num_antennas, e.ofdm.num_subcarriers, {}};
  const int m = e.sampled_antennas();
  const int n = e.ofdm.num_subcarriers / e.ofdm.coherence_block_subcarriers;
  file.window.data.resize(static_cast<long>(m) * n, e.window);
  for (int s = 0; s < e.window; ++s) {
    pdc::SamplingPattern p;
    p.slot = s;
    p.antenna_indices = pdc::antenna_subset(e.array.num_antennas, m, rng);
    p.subcarrier_indices = pdc::pilot_pattern(e.ofdm, 0, pdc::PilotMode::hopping, rng());
    const pdc::CMat h = pdc::realize_channel(paths, e.array, e.ofdm, rng, s).matrix;
    file.window.data.col(s) = pdc::sketch(h, p, 1.0, rng);
    file.window.patterns.push_back(std::move(p));
  }
  const fs::path dir = output_dir(c);
  {
    auto os = open_out(dir / "sketches.bin", std::ios::binary);
    pdc::io::write_sketches(os, file);
  }
  {
    auto os = open_out(dir / "truth.csv");
    os << "angle_index,delay_index,power\n";
    for (std::size_t k = 0; k < truth.size(); ++k)
      os << grid.angle_index(truth[k]) << ',' << grid.delay_index(truth[k]) << ',' << pdc::io::format_double(power)
         << '\n';
  }
  std::cout << "truth angle_index=" << grid.angle_index(truth.front()) << " delay_index=" << grid.delay_index(truth.front())
            << '\n';
  write_manifest(dir, "synth-sketches", cfg, seconds_since(t0), {"sketches.bin", "truth.csv"});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pilot decontamination toolkit: PSF learning, ADMM decontamination, multi-cell simulation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool config_flags) {
    if (config_flags) {
      sub->add_option("--config", common.config, "INI experiment config");
      sub->add_option("--from-manifest", common.from_manifest, "re-run with the config and seed of a manifest.json");
      sub->add_option("--seed", common.seed, "master seed (overrides the config)");
    }
    sub->add_option("--out", common.out, "output directory (default $PDC_OUT_DIR, else ./pdc_out)");
    sub->add_option("--threads", common.threads, "worker threads for trial parallelism")->check(CLI::Range(1, 256));
  };

  auto* simulate = app.add_subcommand("simulate", "run a multi-cell experiment and write the rate CDFs");
  add_common(simulate, true);

  std::string sketch_path;
  auto* estimate = app.add_subcommand("estimate-psf", "learn an angle-delay PSF from a recorded sketch file");
  add_common(estimate, true);
  estimate->add_option("--sketches", sketch_path, "PDCS sketch file")->required();

  int slot = -1;
  auto* decon = app.add_subcommand("decontaminate", "learn masks from a sketch file and decontaminate one slot");
  add_common(decon, true);
  decon->add_option("--sketches", sketch_path, "PDCS sketch file")->required();
  decon->add_option("--slot", slot, "column to decontaminate (default: last)");

  std::string component;
  int log2_min = 10, log2_max = 16;
  double min_seconds = 0.05;
  auto* bench = app.add_subcommand("bench", "time one iteration of a kernel over grid sizes G = 2^k");
  add_common(bench, false);
  bench->add_option("component", component, "solver | admm | dictionary")->required();
  bench->add_option("--log2-min", log2_min, "smallest log2 G");
  bench->add_option("--log2-max", log2_max, "largest log2 G");
  bench->add_option("--min-seconds", min_seconds, "timing budget per repetition");

  int mpcs = 1;
  double snr_db = 20.0;
  auto* synth = app.add_subcommand("synth-sketches", "write a synthetic on-grid sketch file with its truth");
  add_common(synth, true);
  synth->add_option("--mpcs", mpcs, "number of on-grid paths");
  synth->add_option("--snr-db", snr_db, "total path power over noise [dB]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(common);
    if (*estimate) return cmd_estimate_psf(common, sketch_path);
    if (*decon) return cmd_decontaminate(common, sketch_path, slot);
    if (*bench) return cmd_bench(common, component, log2_min, log2_max, min_seconds);
    if (*synth) return cmd_synth(common, mpcs, snr_db);
  } catch (const pdc::numerical_failure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const pdc::config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const pdc::geometry_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
