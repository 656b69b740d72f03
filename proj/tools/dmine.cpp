#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dmine/benchmark.hpp"
#include "dmine/external.hpp"
#include "dmine/geometry.hpp"
#include "dmine/insert_design.hpp"
#include "dmine/landscape.hpp"
#include "dmine/mining.hpp"
#include "dmine/stats.hpp"
#include "dmine/worked_example.hpp"

using namespace dmine;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { ok = 0, failure = 1, validation = 2, io = 3, protocol = 4 };

struct Globals {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::size_t workers = 1;
  std::string log_level = "info";
};

// Stable 64-bit FNV-1a, for the config hash in command manifests.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// Records what was run. `argv` replays the command; the hash covers argv
// and resolved config but not the timestamp.
void write_command_manifest(const fs::path& dir, const std::string& name, const std::vector<std::string>& argv,
                            const json& config) {
  json hashed{{"argv", argv}, {"config", config}, {"prf", kPrfId}, {"version", kVersion}};
  json doc = hashed;
  doc["config_hash"] = hex(fnv1a(hashed.dump()));
  doc["created_utc"] = utc_now();
  write_json(dir / ("dmine-" + name + ".manifest.json"), doc);
}

void write_file(const fs::path& path, const std::string& text) {
  try {
    write_text(path, text);
  } catch (const fs::filesystem_error& e) {
    throw IoError(e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

Topology parse_topology(const std::string& name, std::size_t species) {
  if (name == "chain") return Topology::chain(species);
  throw ValidationError("unknown topology '" + name + "' (known: chain)");
}

Strategy parse_strategy_label(std::string label) {
  Strategy s;
  if (label.starts_with("50P-")) {
    s.population = PopulationMode::expanding;
    label = label.substr(4);
  }
  s.kind = parse_kind(label);
  return s;
}

json strategy_json(const Strategy& s) {
  return {{"kind", kind_name(s.kind)},
          {"population", mode_name(s.population)},
          {"rerun_champion", s.rerun_champion},
          {"champion_counts", s.champion_counts}};
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  if (text == "none") return out;
  for (const auto& item : split(text, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError("species list: '" + item + "' is not an index");
    }
  }
  return out;
}

// ---- landscape ----

struct LandscapeArgs {
  std::size_t n = 20, k = 2, c = 2, s = 4;
  std::string topology = "chain";
  std::optional<std::uint64_t> seed;
  std::string fixture;
  std::string file;
  std::vector<std::string> genomes;
  std::string output;
};

LandscapeParams landscape_params(const LandscapeArgs& a, const Globals& g) {
  LandscapeParams p;
  p.n = a.n;
  p.k = a.k;
  p.c = a.c;
  p.topology = parse_topology(a.topology, a.s);
  p.seed = a.seed.value_or(g.seed);
  p.validate();
  return p;
}

json cmd_landscape_gen(const LandscapeArgs& a, const Globals& g) {
  const LandscapeParams p = landscape_params(a, g);
  json doc = to_json(p);
  doc["topology_kind"] = a.topology;
  doc["prf"] = kPrfId;
  const std::string text = doc.dump(2) + "\n";
  if (a.output.empty())
    std::cout << text;
  else
    write_file(fs::path(g.out_dir) / a.output, text);
  return doc;
}

json cmd_landscape_probe(const LandscapeArgs& a, const Globals& g) {
  std::optional<Landscape> land;
  json source;
  if (!a.fixture.empty()) {
    if (a.fixture != "worked-example") throw ValidationError("unknown fixture '" + a.fixture + "'");
    land.emplace(worked_example_landscape());
    source = {{"fixture", a.fixture}};
  } else if (!a.file.empty()) {
    const LandscapeParams p = landscape_params_from_json(read_json(a.file));
    land.emplace(Landscape::generate(p));
    source = to_json(p);
  } else {
    const LandscapeParams p = landscape_params(a, g);
    land.emplace(Landscape::generate(p));
    source = to_json(p);
  }
  const auto& params = land->params();
  if (a.genomes.size() != params.species_count())
    throw ValidationError("probe needs one genome per species: expected " + std::to_string(params.species_count()) +
                          ", got " + std::to_string(a.genomes.size()));
  CascadeConfig cfg;
  for (std::size_t s = 0; s < a.genomes.size(); ++s) {
    try {
      cfg.push_back(BitGenome::parse(a.genomes[s], params.n));
    } catch (const ValidationError& e) {
      throw ValidationError("species " + std::to_string(s) + ": " + e.what());
    }
  }
  std::cout.setf(std::ios::fixed);
  std::cout.precision(6);
  for (std::size_t s = 0; s < cfg.size(); ++s)
    std::cout << "species " << s << " fitness " << land->species_fitness(s, cfg) << "\n";
  std::cout << "cascade fitness " << land->cascade_fitness(cfg) << "\n";
  return {{"landscape", source}, {"genomes", a.genomes}};
}

// ---- run ----

struct RunArgs {
  std::string strategy = "1p4";
  std::string population = "fixed";
  std::size_t n = 20, k = 2, c = 2, s = 4;
  std::uint64_t budget = 2000;
  std::optional<std::uint64_t> landscape_seed;
  double mutation_rate = 0.05;
  bool rerun_champion = false;
  std::string trajectory = "run_trajectory.csv";
  std::string summary = "run_summary.json";
};

json cmd_run(const RunArgs& a, const Globals& g) {
  Strategy st;
  st.kind = parse_kind(a.strategy);
  st.population = parse_mode(a.population);
  st.rerun_champion = a.rerun_champion;
  LandscapeParams p;
  p.n = a.n;
  p.k = a.k;
  p.c = a.c;
  p.topology = Topology::chain(a.s);
  p.seed = a.landscape_seed.value_or(g.seed);
  p.validate();
  const Landscape land = Landscape::generate(p);
  SimulatedEvaluator ev(land);
  GeneticConfig<BinaryEncoding> genetic;
  genetic.encoding = BinaryEncoding{a.n, a.mutation_rate};
  spdlog::info("run {} ({}) k={} c={} budget={}", a.strategy, a.population, a.k, a.c, a.budget);
  const auto out = run(ev, st, genetic, a.budget, g.seed);

  std::ostringstream csv;
  csv.precision(17);
  csv << "evaluation,best_fitness\n";
  for (std::size_t e = 0; e < out.trajectory.size(); ++e) csv << (e + 1) << ',' << out.trajectory[e] << '\n';
  const fs::path dir(g.out_dir);
  write_file(dir / a.trajectory, csv.str());

  json cascade = json::array();
  for (const auto& genome : out.state.best_cascade) cascade.push_back(genome.str());
  json config{{"landscape", to_json(p)}, {"strategy", strategy_json(st)}, {"budget", a.budget},
              {"mutation_rate", a.mutation_rate}, {"run_seed", g.seed}};
  json summary = config;
  summary["evaluations"] = out.state.evaluations_used;
  summary["best_fitness"] = out.state.best_fitness;
  summary["best_cascade"] = cascade;
  write_file(dir / a.summary, summary.dump(2) + "\n");
  std::cout << "best fitness " << out.state.best_fitness << " after " << out.state.evaluations_used
            << " evaluations\n";
  return config;
}

// ---- bench ----

struct BenchArgs {
  bool defaults = false;
  std::string grid;
  std::string strategies;
  std::optional<std::size_t> landscapes, runs;
  std::optional<std::uint64_t> budget;
  std::string checkpoints;
  double alpha = 0.05;
  bool per_landscape = false;
  bool resume = false;
};

json cmd_bench(const BenchArgs& a, const Globals& g) {
  BenchmarkPlan plan = BenchmarkPlan::defaults();
  plan.base_seed = g.seed;
  plan.workers = g.workers;
  if (!a.grid.empty()) {
    plan.grid.clear();
    for (const auto& cell : split(a.grid, ',')) {
      const auto parts = split(cell, 'x');
      if (parts.size() != 2) throw ValidationError("grid cell '" + cell + "' is not KxC");
      try {
        plan.grid.emplace_back(std::stoul(parts[0]), std::stoul(parts[1]));
      } catch (const std::logic_error&) {
        throw ValidationError("grid cell '" + cell + "' is not KxC");
      }
    }
  }
  if (!a.strategies.empty()) {
    plan.strategies.clear();
    for (const auto& label : split(a.strategies, ',')) plan.strategies.push_back(parse_strategy_label(label));
  }
  if (a.landscapes) plan.landscapes_per_config = *a.landscapes;
  if (a.runs) plan.runs_per_landscape = *a.runs;
  if (a.budget) plan.budget = *a.budget;
  if (!a.checkpoints.empty()) {
    plan.checkpoints.clear();
    for (const auto& cp : split(a.checkpoints, ',')) {
      try {
        plan.checkpoints.push_back(std::stoull(cp));
      } catch (const std::logic_error&) {
        throw ValidationError("checkpoint '" + cp + "' is not a number");
      }
    }
  }
  const fs::path dir(g.out_dir);
  if (a.resume) plan.resume_dir = dir / "bench_groups";
  plan.validate();

  json config{{"grid", plan.grid}, {"landscapes", plan.landscapes_per_config}, {"runs", plan.runs_per_landscape},
              {"budget", plan.budget}, {"checkpoints", plan.checkpoints}, {"base_seed", plan.base_seed},
              {"n", plan.n}, {"species", plan.species}, {"mutation_rate", plan.mutation_rate},
              {"alpha", a.alpha}, {"per_landscape", a.per_landscape}};
  config["strategies"] = json::array();
  for (const auto& s : plan.strategies) config["strategies"].push_back(strategy_label(s));

  const auto result = run_benchmark(plan, [](const GroupResult& gr, bool resumed) {
    spdlog::info("k={} c={} {} {}", gr.k, gr.c, gr.label, resumed ? "(resumed)" : "done");
  });
  write_file(dir / "bench_results.csv", results_csv(result));
  write_file(dir / "bench_trajectories.csv", trajectory_csv(result));
  const auto has = [&](const std::string& label) {
    return std::any_of(plan.strategies.begin(), plan.strategies.end(),
                       [&](const Strategy& s) { return strategy_label(s) == label; });
  };
  std::string summary;
  if (has("1p4")) {
    summary = summary_csv(significance_table(result, versus_one_plus_four, a.alpha, a.per_landscape));
  } else {
    summary = summary_csv(significance_table(result, [](const std::string& l) { return l; }, a.alpha));
  }
  write_file(dir / "bench_summary.csv", summary);
  bool paired = false;
  for (const auto& s : plan.strategies)
    if (s.population == PopulationMode::expanding && has(versus_fixed(strategy_label(s)))) paired = true;
  if (paired)
    write_file(dir / "bench_summary_vs_fixed.csv",
               summary_csv(significance_table(result, versus_fixed, a.alpha, a.per_landscape)));
  std::cout << summary;
  return config;
}

// ---- stats ----

struct StatsArgs {
  std::string base, other;
  std::string base_strategy, other_strategy;
  double alpha = 0.05;
  bool per_landscape = false;
  std::string output;
};

BenchmarkResult load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return parse_results_csv(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

const GroupResult& pick(const BenchmarkResult& r, std::size_t k, std::size_t c, const std::string& label,
                        const std::string& file) {
  const GroupResult* found = nullptr;
  for (const auto& g : r.groups) {
    if (g.k != k || g.c != c || (!label.empty() && g.label != label)) continue;
    if (found) throw ValidationError(file + " holds several strategies for k=" + std::to_string(k) + " c=" +
                                     std::to_string(c) + "; choose one with --base-strategy/--other-strategy");
    found = &g;
  }
  if (!found) throw ValidationError(file + " has no " + (label.empty() ? "" : label + " ") + "results for k=" +
                                    std::to_string(k) + " c=" + std::to_string(c));
  return *found;
}

json cmd_stats(const StatsArgs& a, const Globals&) {
  const BenchmarkResult base = load_results(a.base);
  const BenchmarkResult other = load_results(a.other);
  if (base.checkpoints != other.checkpoints) throw ValidationError("the two files use different checkpoints");

  // One merged result so the comparison goes through significance_table.
  BenchmarkResult merged;
  merged.checkpoints = base.checkpoints;
  std::set<std::pair<std::size_t, std::size_t>> cells;
  for (const auto& g : other.groups)
    if (a.other_strategy.empty() || g.label == a.other_strategy) cells.insert({g.k, g.c});
  if (cells.empty()) throw ValidationError(a.other + " has no matching results");
  for (const auto& [k, c] : cells) {
    GroupResult b = pick(base, k, c, a.base_strategy, a.base);
    GroupResult o = pick(other, k, c, a.other_strategy, a.other);
    b.label = "base:" + b.label;
    o.label = "other:" + o.label;
    merged.groups.push_back(std::move(b));
    merged.groups.push_back(std::move(o));
  }
  std::map<std::pair<std::size_t, std::size_t>, std::string> base_label;
  for (const auto& g : merged.groups)
    if (g.label.starts_with("base:")) base_label[{g.k, g.c}] = g.label;
  std::vector<SignificanceRow> rows;
  for (std::size_t i = 0; i < merged.groups.size(); i += 2) {
    BenchmarkResult cell;
    cell.checkpoints = merged.checkpoints;
    cell.groups = {merged.groups[i], merged.groups[i + 1]};
    const std::string bl = merged.groups[i].label;
    for (auto& row : significance_table(cell, [&](const std::string&) { return bl; }, a.alpha, a.per_landscape))
      if (row.strategy.starts_with("other:")) rows.push_back(row);
  }
  std::ostringstream csv;
  csv << "k,c,strategy,baseline,checkpoint,mean,baseline_mean,p_value,significant\n";
  for (const auto& row : rows) {
    double bmean = 0.0;
    for (const auto& g : merged.groups)
      if (g.k == row.k && g.c == row.c && g.label == row.baseline) {
        const std::size_t ci = merged.checkpoint_index(row.checkpoint);
        bmean = mean(a.per_landscape ? landscape_means(g, ci) : g.values_at(ci));
      }
    csv << row.k << ',' << row.c << ',' << row.strategy.substr(6) << ',' << row.baseline.substr(5) << ','
        << row.checkpoint << ',' << std::fixed << std::setprecision(6) << row.mean << ',' << bmean << ','
        << std::setprecision(6) << row.p_value << ',' << (row.significant ? "true" : "false") << '\n';
    csv.unsetf(std::ios::fixed);
  }
  std::cout << csv.str();
  if (!a.output.empty()) write_file(a.output, csv.str());
  return {{"base", a.base}, {"other", a.other}, {"alpha", a.alpha}, {"per_landscape", a.per_landscape}};
}

// ---- insert ----

struct InsertArgs {
  std::string genome;
  double voxel = 0.1;
  std::string output;
  std::string genomes_file;
};

json cmd_insert_decode(const InsertArgs& a) {
  const InsertSpec spec = decode(InsertGenome::parse(a.genome));
  std::cout << design_document(spec).dump(2) << "\n";
  return {{"genome", a.genome}};
}

json cmd_insert_metrics(const InsertArgs& a) {
  const InsertSpec spec = decode(InsertGenome::parse(a.genome));
  check_resolution(a.voxel);
  std::cout << design_document(spec, metrics(spec, a.voxel)).dump(2) << "\n";
  return {{"genome", a.genome}, {"voxel", a.voxel}};
}

json cmd_insert_export(const InsertArgs& a, const Globals& g) {
  const InsertGenome genome = InsertGenome::parse(a.genome);
  check_resolution(a.voxel);
  std::string name = a.output;
  if (name.empty()) {
    name = "insert_" + genome.str() + ".stl";
    std::replace(name.begin(), name.end(), ',', '-');
  }
  const fs::path path = fs::path(g.out_dir) / name;
  std::size_t tris = 0;
  try {
    tris = export_mesh(decode(genome), path, a.voxel);
  } catch (const fs::filesystem_error& e) {
    throw IoError(e.what());
  }
  std::cout << path.string() << ": " << tris << " triangles\n";
  return {{"genome", a.genome}, {"voxel", a.voxel}, {"output", path.string()}};
}

json cmd_insert_sweep(const InsertArgs& a, const Globals& g) {
  check_resolution(a.voxel);
  std::vector<InsertGenome> genomes;
  std::istringstream in(read_file(a.genomes_file));
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); }),
               line.end());
    if (line.empty()) continue;
    try {
      genomes.push_back(InsertGenome::parse(line));
    } catch (const ValidationError& e) {
      throw ValidationError(a.genomes_file + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<GeometryMetrics> out(genomes.size());
  detail::parallel_for(genomes.size(), g.workers, [&](std::size_t i) { out[i] = metrics(decode(genomes[i]), a.voxel); });
  std::ostringstream csv;
  csv << std::fixed << std::setprecision(6);
  csv << "genome,solid_volume_ml,anolyte_volume_ml,surface_area_cm2,voxel_resolution_mm\n";
  for (std::size_t i = 0; i < genomes.size(); ++i)
    csv << '"' << genomes[i].str() << "\"," << out[i].solid_volume << ',' << out[i].anolyte_volume << ','
        << out[i].surface_area << ',' << out[i].voxel_resolution << '\n';
  const std::string name = a.output.empty() ? "sweep.csv" : a.output;
  write_file(fs::path(g.out_dir) / name, csv.str());
  spdlog::info("{} designs written to {}", genomes.size(), (fs::path(g.out_dir) / name).string());
  return {{"genomes_file", a.genomes_file}, {"voxel", a.voxel}, {"output", name}};
}

// ---- mine ----

struct MineArgs {
  std::string dir;
  std::string encoding = "insert";
  std::size_t species = 4;
  std::size_t n = 20;
  double mutation_rate = 0.05;
  std::string strategy;
  std::string population = "fixed";
  std::size_t duplicates = 2;
  std::string baselines;
  std::uint64_t budget = 0;
  double mesh_resolution = 0.5;
  bool no_meshes = false;
  bool no_champion = false;
  std::string freeze;
  std::string results;
};

fs::path mine_dir(const MineArgs& a, const Globals& g) { return a.dir.empty() ? fs::path(g.out_dir) : fs::path(a.dir); }

template <class Fn>
auto with_session(const fs::path& dir, Fn&& fn) {
  const MiningConfig cfg = read_session_config(dir);
  if (cfg.encoding == "binary") {
    auto s = MiningSession<BinaryEncoding>::load(dir, BinaryEncoding{cfg.n, cfg.mutation_rate});
    return fn(s);
  }
  auto s = MiningSession<InsertEncoding>::load(dir, InsertEncoding{});
  return fn(s);
}

template <class S>
void reconfigure(S& session, const MineArgs& a) {
  if (!a.freeze.empty()) session.set_frozen(parse_index_list(a.freeze));
  if (!a.strategy.empty()) session.set_strategy(parse_kind(a.strategy));
}

template <class S>
void print_status(const S& session) {
  std::cout << session.status().dump(2) << "\n";
}

json cmd_mine_init(const MineArgs& a, const Globals& g) {
  MiningConfig c;
  c.encoding = a.encoding;
  c.species = a.species;
  c.n = a.n;
  c.mutation_rate = a.mutation_rate;
  if (!a.strategy.empty()) c.strategy.kind = parse_kind(a.strategy);
  c.strategy.population = parse_mode(a.population);
  if (a.no_champion) c.strategy.rerun_champion = c.strategy.champion_counts = false;
  c.seed = g.seed;
  c.duplicates = a.duplicates;
  if (!a.baselines.empty()) {
    c.baseline.mode = Normalization::divide_by_baseline;
    for (const auto& v : split(a.baselines, ',')) {
      try {
        c.baseline.unit_baselines.push_back(std::stod(v));
      } catch (const std::logic_error&) {
        throw ValidationError("baseline '" + v + "' is not a number");
      }
    }
  }
  c.budget = a.budget;
  c.write_meshes = !a.no_meshes;
  c.mesh_resolution = a.mesh_resolution;
  const fs::path dir = mine_dir(a, g);
  if (c.encoding == "binary") {
    auto s = MiningSession<BinaryEncoding>::init(dir, c, BinaryEncoding{c.n, c.mutation_rate});
    print_status(s);
  } else {
    c.validate();
    auto s = MiningSession<InsertEncoding>::init(dir, c, InsertEncoding{});
    print_status(s);
  }
  spdlog::info("session initialised in {}", dir.string());
  return config_to_json(c);
}

json cmd_mine_status(const MineArgs& a, const Globals& g) {
  with_session(mine_dir(a, g), [&](auto& s) {
    reconfigure(s, a);
    print_status(s);
    return 0;
  });
  return {{"dir", mine_dir(a, g).string()}, {"freeze", a.freeze}, {"strategy", a.strategy}};
}

json cmd_mine_step(const MineArgs& a, const Globals& g) {
  with_session(mine_dir(a, g), [&](auto& s) {
    reconfigure(s, a);
    if (s.finished()) {
      spdlog::info("budget exhausted; nothing pending");
    } else if (s.step()) {
      spdlog::info("recorded batch; next pending {}", s.pending() ? std::to_string(s.pending()->batch_id) : "none");
    } else {
      spdlog::info("waiting for {}", result_path(mine_dir(a, g), s.pending()->batch_id).string());
    }
    print_status(s);
    return 0;
  });
  return {{"dir", mine_dir(a, g).string()}, {"freeze", a.freeze}, {"strategy", a.strategy}};
}

json cmd_mine_record(const MineArgs& a, const Globals& g) {
  with_session(mine_dir(a, g), [&](auto& s) {
    reconfigure(s, a);
    s.record_file(a.results);
    print_status(s);
    return 0;
  });
  return {{"dir", mine_dir(a, g).string()}, {"results", a.results}, {"freeze", a.freeze}, {"strategy", a.strategy}};
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::validation: return validation;
    case Error::Category::io: return io;
    case Error::Category::protocol: return protocol;
  }
  return failure;
}

int run_cli(std::vector<std::string> args);

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"dmine: NKCS coevolution and insert design mining"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("dmine ") + kVersion + " (prf " + std::string(kPrfId) + ")");

  Globals g;
  if (const char* v = std::getenv("DMINE_OUT_DIR")) g.out_dir = v;
  if (const char* v = std::getenv("DMINE_WORKERS")) {
    try {
      g.workers = std::stoul(v);
    } catch (const std::logic_error&) {
      throw ValidationError(std::string("DMINE_WORKERS='") + v + "' is not a count");
    }
  }
  app.add_option("--seed", g.seed, "Base seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Output directory (env DMINE_OUT_DIR)")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads for bench and sweep (env DMINE_WORKERS)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  std::string command;
  std::function<json()> action;
  auto bind = [&](CLI::App* sub, std::string name, std::function<json()> fn) {
    sub->callback([&command, &action, name = std::move(name), fn = std::move(fn)] {
      command = name;
      action = fn;
    });
  };

  // landscape
  LandscapeArgs la;
  auto* land = app.add_subcommand("landscape", "Generate or probe NKCS landscapes");
  land->require_subcommand(1);
  auto* gen = land->add_subcommand("gen", "Print a landscape document");
  auto* probe = land->add_subcommand("probe", "Species and cascade fitness of a configuration");
  for (auto* sub : {gen, probe}) {
    sub->add_option("--n", la.n, "Genes per species")->capture_default_str();
    sub->add_option("--k", la.k, "Local links per gene")->capture_default_str();
    sub->add_option("--c", la.c, "External links per partner")->capture_default_str();
    sub->add_option("--s", la.s, "Species")->capture_default_str();
    sub->add_option("--topology", la.topology)->capture_default_str();
    sub->add_option("--landscape-seed", la.seed, "Landscape seed (default: --seed)");
  }
  gen->add_option("--output", la.output, "Write to this file under --out-dir instead of stdout");
  probe->add_option("--fixture", la.fixture, "Built-in landscape: worked-example");
  probe->add_option("--landscape", la.file, "Landscape document from 'landscape gen'");
  probe->add_option("--genome", la.genomes, "Binary genome, one per species in order")->required();
  bind(gen, "landscape-gen", [&] { return cmd_landscape_gen(la, g); });
  bind(probe, "landscape-probe", [&] { return cmd_landscape_probe(la, g); });

  // run
  RunArgs ra;
  auto* runc = app.add_subcommand("run", "One coevolution run on a generated landscape");
  runc->add_option("--strategy", ra.strategy, "1p4|1p1xS|1p4off")->capture_default_str();
  runc->add_option("--population", ra.population, "fixed|expanding")->capture_default_str();
  runc->add_option("--n", ra.n)->capture_default_str();
  runc->add_option("--k", ra.k)->capture_default_str();
  runc->add_option("--c", ra.c)->capture_default_str();
  runc->add_option("--s", ra.s)->capture_default_str();
  runc->add_option("--budget", ra.budget)->capture_default_str();
  runc->add_option("--landscape-seed", ra.landscape_seed, "Landscape seed (default: --seed)");
  runc->add_option("--mutation-rate", ra.mutation_rate)->capture_default_str();
  runc->add_flag("--rerun-champion", ra.rerun_champion, "Re-evaluate the elite cascade with every batch");
  runc->add_option("--trajectory", ra.trajectory, "Trajectory CSV name under --out-dir")->capture_default_str();
  runc->add_option("--summary", ra.summary, "Summary JSON name under --out-dir")->capture_default_str();
  bind(runc, "run", [&] { return cmd_run(ra, g); });

  // bench
  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Strategy benchmark over a (k,c) grid");
  bench->add_flag("--default", ba.defaults, "Standard grid, six strategies, 10x10 runs, 2000 evaluations");
  bench->add_option("--grid", ba.grid, "Cells as KxC list, e.g. 2x2,6x8");
  bench->add_option("--strategies", ba.strategies, "Labels, e.g. 1p4,1p4off,50P-1p4");
  bench->add_option("--landscapes", ba.landscapes);
  bench->add_option("--runs", ba.runs, "Runs per landscape");
  bench->add_option("--budget", ba.budget);
  bench->add_option("--checkpoints", ba.checkpoints, "Comma-separated evaluation counts");
  bench->add_option("--alpha", ba.alpha)->capture_default_str();
  bench->add_flag("--per-landscape", ba.per_landscape, "Use landscape means as the statistical unit");
  bench->add_flag("--resume", ba.resume, "Reuse finished groups under --out-dir/bench_groups");
  bind(bench, "bench", [&] { return cmd_bench(ba, g); });

  // stats
  StatsArgs sa;
  auto* stats = app.add_subcommand("stats", "Compare benchmark results");
  stats->require_subcommand(1);
  auto* compare = stats->add_subcommand("compare", "Mann-Whitney U per cell and checkpoint");
  compare->add_option("base", sa.base, "Baseline results CSV")->required();
  compare->add_option("other", sa.other, "Results CSV to test")->required();
  compare->add_option("--alpha", sa.alpha)->capture_default_str();
  compare->add_option("--base-strategy", sa.base_strategy);
  compare->add_option("--other-strategy", sa.other_strategy);
  compare->add_flag("--per-landscape", sa.per_landscape);
  compare->add_option("--output", sa.output, "Also write the table here");
  bind(compare, "stats-compare", [&] { return cmd_stats(sa, g); });

  // insert
  InsertArgs ia;
  auto* ins = app.add_subcommand("insert", "Insert genomes: decode, metrics, meshes");
  ins->require_subcommand(1);
  auto* dec = ins->add_subcommand("decode", "Print the design document");
  auto* met = ins->add_subcommand("metrics", "Design document with volumes and area");
  auto* exp = ins->add_subcommand("export", "Write a binary STL mesh");
  auto* sweep = ins->add_subcommand("sweep", "Metrics CSV for a list of genomes");
  for (auto* sub : {dec, met, exp}) sub->add_option("--genome", ia.genome, "12 comma-separated genes")->required();
  met->add_option("--voxel", ia.voxel, "Voxel size in mm")->capture_default_str();
  exp->add_option("--voxel", ia.voxel, "Mesh resolution in mm")->default_val(kDefaultMeshResolution);
  exp->add_option("--output", ia.output, "File name under --out-dir");
  sweep->add_option("--genomes", ia.genomes_file, "One genome per line")->required();
  sweep->add_option("--voxel", ia.voxel)->default_val(0.25);
  sweep->add_option("--output", ia.output, "CSV name under --out-dir (default sweep.csv)");
  bind(dec, "insert-decode", [&] { return cmd_insert_decode(ia); });
  bind(met, "insert-metrics", [&] { return cmd_insert_metrics(ia); });
  bind(exp, "insert-export", [&] { return cmd_insert_export(ia, g); });
  bind(sweep, "insert-sweep", [&] { return cmd_insert_sweep(ia, g); });

  // mine
  MineArgs ma;
  auto* mine = app.add_subcommand("mine", "File-based design-mining loop");
  mine->require_subcommand(1);
  auto* minit = mine->add_subcommand("init", "Create a session and issue the first batch");
  auto* mstatus = mine->add_subcommand("status", "Pending batch, elites and lineage");
  auto* mstep = mine->add_subcommand("step", "Record inbox results if present, else re-issue the manifest");
  auto* mrecord = mine->add_subcommand("record", "Record a results file");
  for (auto* sub : {minit, mstatus, mstep, mrecord}) sub->add_option("--dir", ma.dir, "Session directory (default --out-dir)");
  minit->add_option("--encoding", ma.encoding, "insert|binary")->capture_default_str();
  minit->add_option("--species", ma.species)->capture_default_str();
  minit->add_option("--n", ma.n, "Binary genome length")->capture_default_str();
  minit->add_option("--mutation-rate", ma.mutation_rate, "Binary per-allele rate")->capture_default_str();
  minit->add_option("--strategy", ma.strategy, "1p4|1p1xS|1p4off (default 1p1xS)");
  minit->add_option("--population", ma.population, "fixed|expanding")->capture_default_str();
  minit->add_option("--duplicates", ma.duplicates, "Replicates per cascade")->capture_default_str();
  minit->add_option("--baselines", ma.baselines, "Insert-free unit outputs; enables normalization");
  minit->add_option("--budget", ma.budget, "Evaluation budget, 0 for none")->capture_default_str();
  minit->add_option("--mesh-resolution", ma.mesh_resolution)->capture_default_str();
  minit->add_flag("--no-meshes", ma.no_meshes);
  minit->add_flag("--no-champion", ma.no_champion, "Do not re-evaluate the elite cascade each batch");
  for (auto* sub : {mstatus, mstep, mrecord}) {
    sub->add_option("--freeze", ma.freeze, "Species to hold fixed, e.g. 0,1,2 or none");
    sub->add_option("--strategy", ma.strategy, "Switch strategy for later batches");
  }
  mrecord->add_option("results", ma.results, "Results JSON")->required();
  bind(minit, "mine-init", [&] { return cmd_mine_init(ma, g); });
  bind(mstatus, "mine-status", [&] { return cmd_mine_status(ma, g); });
  bind(mstep, "mine-step", [&] { return cmd_mine_step(ma, g); });
  bind(mrecord, "mine-record", [&] { return cmd_mine_record(ma, g); });

  // replay
  std::string replay_file;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", replay_file)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return validation;
  }

  const auto level = spdlog::level::from_str(g.log_level);
  if (level == spdlog::level::off && g.log_level != "off")
    throw ValidationError("unknown log level '" + g.log_level + "'");
  spdlog::set_level(level);

  if (replay->parsed()) {
    const json m = read_json(replay_file);
    if (!m.contains("argv")) throw ValidationError(replay_file + " is not a command manifest");
    return run_cli(m.at("argv").get<std::vector<std::string>>());
  }

  try {
    fs::create_directories(g.out_dir);
  } catch (const fs::filesystem_error& e) {
    throw IoError(e.what());
  }
  const json config = action();
  json full{{"command", command}, {"global", {{"seed", g.seed}, {"workers", g.workers}}}, {"args", config}};
  const fs::path manifest_dir = command.starts_with("mine-") ? mine_dir(ma, g) : fs::path(g.out_dir);
  write_command_manifest(manifest_dir, command, args, full);
  return ok;
}

int run_cli(std::vector<std::string> args) {
  try {
    return dispatch(args);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return io;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return failure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("dmine"));
  spdlog::set_pattern("%^%l%$: %v");
  return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
