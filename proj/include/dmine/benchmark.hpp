#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmine/coevolution.hpp"
#include "dmine/error.hpp"
#include "dmine/evaluation.hpp"
#include "dmine/landscape.hpp"
#include "dmine/random.hpp"
#include "dmine/stats.hpp"

namespace dmine {

struct BenchmarkPlan {
  std::vector<std::pair<std::size_t, std::size_t>> grid{{2, 2}, {2, 8}, {6, 2}, {6, 8}};
  std::vector<Strategy> strategies;
  std::size_t landscapes_per_config = 10;
  std::size_t runs_per_landscape = 10;
  std::uint64_t budget = 2000;
  std::vector<std::uint64_t> checkpoints{400, 2000};
  std::uint64_t base_seed = 1;
  std::size_t n = 20;
  std::size_t species = 4;
  double mutation_rate = 0.05;
  std::size_t workers = 1;
  bool keep_trajectories = false;
  // Replaces the PRF tables when set (tests, flat landscapes).
  TableFn table;
  // Directory for per-group checkpoint files; empty disables resume.
  std::filesystem::path resume_dir;

  // Six configurations: each strategy, fixed and expanding.
  static BenchmarkPlan defaults() {
    BenchmarkPlan p;
    for (PopulationMode m : {PopulationMode::fixed, PopulationMode::expanding})
      for (StrategyKind k :
           {StrategyKind::one_plus_four, StrategyKind::one_plus_one_per_species, StrategyKind::one_plus_four_off}) {
        Strategy s;
        s.kind = k;
        s.population = m;
        p.strategies.push_back(s);
      }
    return p;
  }

  void validate() const {
    if (grid.empty()) throw ValidationError("benchmark grid is empty");
    if (strategies.empty()) throw ValidationError("benchmark has no strategies");
    if (landscapes_per_config == 0 || runs_per_landscape == 0) throw ValidationError("benchmark needs runs");
    if (budget < 5) throw ValidationError("budget must cover the initial cascades");
    for (auto cp : checkpoints)
      if (cp == 0 || cp > budget) throw ValidationError("checkpoint " + std::to_string(cp) + " outside [1, budget]");
    for (const auto& s : strategies) s.validate();
  }
};

// "1p4", "1p1xS", "1p4off", with a "50P-" prefix for expanding populations.
inline std::string strategy_label(const Strategy& s) {
  std::string name(kind_name(s.kind));
  return s.population == PopulationMode::expanding ? "50P-" + name : name;
}

inline std::uint64_t landscape_seed(std::uint64_t base, std::size_t k, std::size_t c, std::size_t l) {
  return derive_seed(base, {0x6c616e64, k, c, l});  // "land"
}

// Shared by every strategy so comparisons are paired on identical runs.
inline std::uint64_t run_seed(std::uint64_t base, std::size_t k, std::size_t c, std::size_t l, std::size_t r) {
  return derive_seed(base, {0x72756e73, k, c, l, r});  // "runs"
}

struct RunRecord {
  std::size_t landscape = 0;
  std::size_t run = 0;
  std::uint64_t landscape_seed = 0;
  std::uint64_t run_seed = 0;
  std::vector<double> at_checkpoint;  // parallel to plan.checkpoints
  std::vector<double> trajectory;     // kept only on request
};

struct GroupResult {
  std::size_t k = 0;
  std::size_t c = 0;
  Strategy strategy;
  std::string label;
  std::vector<RunRecord> runs;                // landscape-major
  std::vector<double> mean_trajectory;        // evaluation 1..budget

  std::vector<double> values_at(std::size_t checkpoint_index) const {
    std::vector<double> v;
    v.reserve(runs.size());
    for (const auto& r : runs) v.push_back(r.at_checkpoint.at(checkpoint_index));
    return v;
  }
};

struct BenchmarkResult {
  std::vector<std::uint64_t> checkpoints;
  std::vector<GroupResult> groups;  // cell-major, then plan strategy order

  const GroupResult& group(std::size_t k, std::size_t c, std::string_view label) const {
    for (const auto& g : groups)
      if (g.k == k && g.c == c && g.label == label) return g;
    throw ValidationError("no benchmark group k=" + std::to_string(k) + " c=" + std::to_string(c) + " " +
                          std::string(label));
  }

  std::size_t checkpoint_index(std::uint64_t cp) const {
    const auto it = std::find(checkpoints.begin(), checkpoints.end(), cp);
    if (it == checkpoints.end()) throw ValidationError("checkpoint " + std::to_string(cp) + " not recorded");
    return static_cast<std::size_t>(it - checkpoints.begin());
  }
};

namespace detail {

inline nlohmann::json plan_fingerprint(const BenchmarkPlan& p, std::size_t k, std::size_t c, const Strategy& s) {
  return {{"k", k},
          {"c", c},
          {"strategy", strategy_label(s)},
          {"matching", s.matching == OffspringMatching::random ? "random" : "index"},
          {"landscapes", p.landscapes_per_config},
          {"runs", p.runs_per_landscape},
          {"budget", p.budget},
          {"checkpoints", p.checkpoints},
          {"base_seed", p.base_seed},
          {"n", p.n},
          {"species", p.species},
          {"mutation_rate", p.mutation_rate},
          {"custom_table", static_cast<bool>(p.table)},
          {"prf", std::string(kPrfId)}};
}

inline std::filesystem::path group_file(const std::filesystem::path& dir, std::size_t k, std::size_t c,
                                        const Strategy& s) {
  return dir / ("group_k" + std::to_string(k) + "_c" + std::to_string(c) + "_" + strategy_label(s) + ".json");
}

inline bool load_group(const std::filesystem::path& file, const nlohmann::json& fingerprint, GroupResult& g) {
  std::ifstream in(file);
  if (!in) return false;
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception&) {
    return false;
  }
  if (doc.value("plan", nlohmann::json()) != fingerprint) return false;
  g.runs.clear();
  for (const auto& r : doc.at("runs")) {
    RunRecord rec;
    rec.landscape = r.at("landscape");
    rec.run = r.at("run");
    rec.landscape_seed = r.at("landscape_seed");
    rec.run_seed = r.at("run_seed");
    rec.at_checkpoint = r.at("at_checkpoint").get<std::vector<double>>();
    g.runs.push_back(std::move(rec));
  }
  g.mean_trajectory = doc.at("mean_trajectory").get<std::vector<double>>();
  return true;
}

inline void save_group(const std::filesystem::path& file, const nlohmann::json& fingerprint, const GroupResult& g) {
  nlohmann::json doc;
  doc["plan"] = fingerprint;
  doc["runs"] = nlohmann::json::array();
  for (const auto& r : g.runs)
    doc["runs"].push_back({{"landscape", r.landscape},
                           {"run", r.run},
                           {"landscape_seed", r.landscape_seed},
                           {"run_seed", r.run_seed},
                           {"at_checkpoint", r.at_checkpoint}});
  doc["mean_trajectory"] = g.mean_trajectory;
  std::filesystem::create_directories(file.parent_path());
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp);
    out << doc.dump();
  }
  std::filesystem::rename(tmp, file);
}

// Runs fn(i) for i in [0, count) on up to `workers` threads. Output slots are
// indexed by i, so the result never depends on scheduling.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

using ProgressFn = std::function<void(const GroupResult&, bool resumed)>;

inline BenchmarkResult run_benchmark(const BenchmarkPlan& plan, const ProgressFn& progress = {}) {
  plan.validate();
  BenchmarkResult result;
  result.checkpoints = plan.checkpoints;
  const std::size_t L = plan.landscapes_per_config;
  const std::size_t R = plan.runs_per_landscape;

  for (const auto& [k, c] : plan.grid) {
    std::vector<Landscape> landscapes;
    for (std::size_t l = 0; l < L; ++l) {
      LandscapeParams params;
      params.n = plan.n;
      params.k = k;
      params.c = c;
      params.topology = Topology::chain(plan.species);
      params.seed = landscape_seed(plan.base_seed, k, c, l);
      params.validate();
      landscapes.emplace_back(params, draw_epistasis(params), plan.table);
    }

    for (const Strategy& strategy : plan.strategies) {
      GroupResult g;
      g.k = k;
      g.c = c;
      g.strategy = strategy;
      g.label = strategy_label(strategy);
      const auto fingerprint = detail::plan_fingerprint(plan, k, c, strategy);
      const auto file = plan.resume_dir.empty() ? std::filesystem::path{}
                                                : detail::group_file(plan.resume_dir, k, c, strategy);
      if (!plan.resume_dir.empty() && !plan.keep_trajectories && detail::load_group(file, fingerprint, g)) {
        if (progress) progress(g, true);
        result.groups.push_back(std::move(g));
        continue;
      }

      g.runs.resize(L * R);
      std::vector<std::vector<double>> trajectories(L * R);
      GeneticConfig<BinaryEncoding> genetic;
      genetic.encoding.n = plan.n;
      genetic.encoding.mutation_rate = plan.mutation_rate;
      detail::parallel_for(L * R, plan.workers, [&](std::size_t i) {
        const std::size_t l = i / R;
        const std::size_t r = i % R;
        SimulatedEvaluator ev(landscapes[l]);
        RunRecord& rec = g.runs[i];
        rec.landscape = l;
        rec.run = r;
        rec.landscape_seed = landscapes[l].params().seed;
        rec.run_seed = run_seed(plan.base_seed, k, c, l, r);
        auto outcome = run(ev, strategy, genetic, plan.budget, rec.run_seed);
        for (auto cp : plan.checkpoints) rec.at_checkpoint.push_back(outcome.trajectory.at(cp - 1));
        trajectories[i] = std::move(outcome.trajectory);
      });
      g.mean_trajectory.assign(plan.budget, 0.0);
      for (const auto& t : trajectories)
        for (std::size_t e = 0; e < plan.budget; ++e) g.mean_trajectory[e] += t[e];
      for (double& v : g.mean_trajectory) v /= static_cast<double>(L * R);
      if (plan.keep_trajectories)
        for (std::size_t i = 0; i < L * R; ++i) g.runs[i].trajectory = std::move(trajectories[i]);
      if (!plan.resume_dir.empty()) detail::save_group(file, fingerprint, g);
      if (progress) progress(g, false);
      result.groups.push_back(std::move(g));
    }
  }
  return result;
}

struct SignificanceRow {
  std::size_t k = 0;
  std::size_t c = 0;
  std::string strategy;
  std::uint64_t checkpoint = 0;
  double mean = 0.0;
  std::string baseline;
  double p_value = 1.0;
  bool significant = false;
};

// Per-landscape means instead of per-run values as the statistical unit.
inline std::vector<double> landscape_means(const GroupResult& g, std::size_t checkpoint_index) {
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const auto& r : g.runs) {
    auto& [sum, n] = acc[r.landscape];
    sum += r.at_checkpoint.at(checkpoint_index);
    ++n;
  }
  std::vector<double> out;
  for (const auto& [l, sn] : acc) out.push_back(sn.first / static_cast<double>(sn.second));
  return out;
}

// `baseline_of(label)` names the group each strategy is compared with; a
// strategy compared with itself is never flagged.
inline std::vector<SignificanceRow> significance_table(const BenchmarkResult& result,
                                                       const std::function<std::string(const std::string&)>& baseline_of,
                                                       double alpha = 0.05, bool per_landscape = false) {
  std::vector<SignificanceRow> rows;
  for (std::size_t ci = 0; ci < result.checkpoints.size(); ++ci) {
    for (const auto& g : result.groups) {
      SignificanceRow row;
      row.k = g.k;
      row.c = g.c;
      row.strategy = g.label;
      row.checkpoint = result.checkpoints[ci];
      const auto values = per_landscape ? landscape_means(g, ci) : g.values_at(ci);
      row.mean = mean(values);
      row.baseline = baseline_of(g.label);
      if (row.baseline != g.label) {
        const GroupResult& b = result.group(g.k, g.c, row.baseline);
        const auto base = per_landscape ? landscape_means(b, ci) : b.values_at(ci);
        row.p_value = mann_whitney_u(values, base).p_two_sided;
        row.significant = row.p_value < alpha;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// Every strategy against fixed-population (1+4).
inline std::string versus_one_plus_four(const std::string&) { return "1p4"; }

// Expanding variants against their fixed-population counterparts.
inline std::string versus_fixed(const std::string& label) {
  return label.starts_with("50P-") ? label.substr(4) : label;
}

inline std::string results_csv(const BenchmarkResult& r) {
  std::ostringstream out;
  out.precision(17);
  out << "k,c,strategy,population_mode,landscape_seed,run_seed,eval_checkpoint,best_fitness\n";
  for (const auto& g : r.groups)
    for (const auto& run : g.runs)
      for (std::size_t ci = 0; ci < r.checkpoints.size(); ++ci)
        out << g.k << ',' << g.c << ',' << kind_name(g.strategy.kind) << ',' << mode_name(g.strategy.population)
            << ',' << run.landscape_seed << ',' << run.run_seed << ',' << r.checkpoints[ci] << ','
            << run.at_checkpoint[ci] << '\n';
  return out.str();
}

inline std::string summary_csv(const std::vector<SignificanceRow>& rows) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "k,c,strategy,checkpoint,mean,significant_vs_baseline\n";
  for (const auto& row : rows)
    out << row.k << ',' << row.c << ',' << row.strategy << ',' << row.checkpoint << ',' << row.mean << ','
        << (row.significant ? "true" : "false") << '\n';
  return out.str();
}

inline std::string trajectory_csv(const BenchmarkResult& r) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "k,c,strategy,evaluation,mean_best_fitness\n";
  for (const auto& g : r.groups)
    for (std::size_t e = 0; e < g.mean_trajectory.size(); ++e)
      out << g.k << ',' << g.c << ',' << g.label << ',' << (e + 1) << ',' << g.mean_trajectory[e] << '\n';
  return out.str();
}

// Reads a results CSV back into groups keyed by (k, c, label).
inline BenchmarkResult parse_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("k,c,strategy,population_mode,landscape_seed,run_seed,eval_checkpoint,best_fitness", 0) != 0)
    throw ValidationError("results CSV: unexpected header");
  BenchmarkResult r;
  std::map<std::tuple<std::size_t, std::size_t, std::string>, std::size_t> index;
  std::map<std::pair<std::size_t, std::uint64_t>, std::size_t> run_slot;  // (group, run_seed) -> run
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw ValidationError("results CSV line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      Strategy s;
      s.kind = parse_kind(f[2]);
      s.population = parse_mode(f[3]);
      const std::size_t k = std::stoul(f[0]);
      const std::size_t c = std::stoul(f[1]);
      const std::uint64_t cp = std::stoull(f[6]);
      auto cit = std::find(r.checkpoints.begin(), r.checkpoints.end(), cp);
      if (cit == r.checkpoints.end()) {
        r.checkpoints.push_back(cp);
        cit = r.checkpoints.end() - 1;
      }
      const std::size_t ci = static_cast<std::size_t>(cit - r.checkpoints.begin());
      const auto key = std::make_tuple(k, c, strategy_label(s));
      auto it = index.find(key);
      if (it == index.end()) {
        GroupResult g;
        g.k = k;
        g.c = c;
        g.strategy = s;
        g.label = strategy_label(s);
        r.groups.push_back(std::move(g));
        it = index.emplace(key, r.groups.size() - 1).first;
      }
      GroupResult& g = r.groups[it->second];
      const std::uint64_t rs = std::stoull(f[5]);
      auto slot = run_slot.find({it->second, rs});
      if (slot == run_slot.end()) {
        RunRecord rec;
        rec.landscape_seed = std::stoull(f[4]);
        rec.run_seed = rs;
        g.runs.push_back(std::move(rec));
        slot = run_slot.emplace(std::make_pair(it->second, rs), g.runs.size() - 1).first;
      }
      RunRecord& rec = g.runs[slot->second];
      if (rec.at_checkpoint.size() <= ci) rec.at_checkpoint.resize(ci + 1, 0.0);
      rec.at_checkpoint[ci] = std::stod(f[7]);
    } catch (const std::logic_error& e) {
      throw ValidationError("results CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  // Landscape index from the seed order of first appearance.
  for (auto& g : r.groups) {
    std::map<std::uint64_t, std::size_t> land;
    for (auto& run : g.runs) {
      const auto [it, fresh] = land.emplace(run.landscape_seed, land.size());
      run.landscape = it->second;
    }
  }
  return r;
}

}  // namespace dmine
