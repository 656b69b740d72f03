#pragma once

// A design-mining session that lives on disk between lab cycles. Each call
// loads state.json, does one thing (emit, record, reconfigure) and saves.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmine/coevolution.hpp"
#include "dmine/external.hpp"
#include "dmine/geometry.hpp"
#include "dmine/insert_design.hpp"

namespace dmine {

struct MiningConfig {
  std::string encoding = "insert";  // "insert" or "binary"
  std::size_t species = 4;
  std::size_t n = 20;               // binary genome length
  double mutation_rate = 0.05;      // binary only
  Strategy strategy = default_strategy();
  std::uint64_t seed = 1;
  std::size_t duplicates = 2;
  BaselineRecord baseline;
  std::uint64_t budget = 0;         // 0 = open-ended
  bool write_meshes = true;         // insert encoding only
  double mesh_resolution = 0.5;

  static Strategy default_strategy() {
    Strategy s;
    s.kind = StrategyKind::one_plus_one_per_species;
    s.rerun_champion = true;
    s.champion_counts = true;
    return s;
  }

  void validate() const {
    if (encoding != "insert" && encoding != "binary")
      throw ValidationError("encoding must be 'insert' or 'binary', got '" + encoding + "'");
    if (species == 0) throw ValidationError("species count must be >= 1");
    if (duplicates < 1) throw ValidationError("duplicates must be >= 1");
    if (encoding == "binary" && n == 0) throw ValidationError("binary genome length must be >= 1");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw ValidationError("mutation rate must lie in [0,1]");
    if (budget != 0 && budget < strategy.initial_cascades)
      throw ValidationError("budget must cover the initial cascades");
    if (encoding == "insert" && write_meshes) check_resolution(mesh_resolution);
    strategy.validate();
    baseline.validate();
  }
};

inline json config_to_json(const MiningConfig& c) {
  return {{"encoding", c.encoding},
          {"species", c.species},
          {"n", c.n},
          {"mutation_rate", c.mutation_rate},
          {"strategy",
           {{"kind", kind_name(c.strategy.kind)},
            {"population", mode_name(c.strategy.population)},
            {"max_population", c.strategy.max_population},
            {"tournament_fraction", c.strategy.tournament_fraction},
            {"offspring", c.strategy.offspring},
            {"initial_cascades", c.strategy.initial_cascades},
            {"matching", c.strategy.matching == OffspringMatching::random ? "random" : "index"},
            {"rerun_champion", c.strategy.rerun_champion},
            {"champion_counts", c.strategy.champion_counts}}},
          {"seed", c.seed},
          {"duplicates", c.duplicates},
          {"normalization", c.baseline.mode == Normalization::none ? "none" : "divide_by_baseline"},
          {"unit_baselines", c.baseline.unit_baselines},
          {"budget", c.budget},
          {"write_meshes", c.write_meshes},
          {"mesh_resolution", c.mesh_resolution}};
}

inline MiningConfig config_from_json(const json& j) {
  MiningConfig c;
  c.encoding = j.at("encoding");
  c.species = j.at("species");
  c.n = j.at("n");
  c.mutation_rate = j.at("mutation_rate");
  const auto& s = j.at("strategy");
  c.strategy.kind = parse_kind(s.at("kind").get<std::string>());
  c.strategy.population = parse_mode(s.at("population").get<std::string>());
  c.strategy.max_population = s.at("max_population");
  c.strategy.tournament_fraction = s.at("tournament_fraction");
  c.strategy.offspring = s.at("offspring");
  c.strategy.initial_cascades = s.at("initial_cascades");
  c.strategy.matching = s.at("matching") == "random" ? OffspringMatching::random : OffspringMatching::by_index;
  c.strategy.rerun_champion = s.at("rerun_champion");
  c.strategy.champion_counts = s.at("champion_counts");
  c.seed = j.at("seed");
  c.duplicates = j.at("duplicates");
  c.baseline.mode = j.at("normalization") == "none" ? Normalization::none : Normalization::divide_by_baseline;
  c.baseline.unit_baselines = j.at("unit_baselines").get<std::vector<double>>();
  c.budget = j.at("budget");
  c.write_meshes = j.at("write_meshes");
  c.mesh_resolution = j.at("mesh_resolution");
  return c;
}

inline fs::path state_path(const fs::path& run_dir) { return run_dir / "state.json"; }

inline MiningConfig read_session_config(const fs::path& run_dir) {
  const fs::path p = state_path(run_dir);
  if (!fs::exists(p)) throw IoError("no mining session at " + run_dir.string() + " (state.json missing)");
  try {
    return config_from_json(read_json(p).at("config"));
  } catch (const json::exception& e) {
    throw ValidationError("state.json: " + std::string(e.what()));
  }
}

template <class Enc>
class MiningSession {
public:
  using G = typename Enc::genome_type;

  struct LineageEntry {
    std::uint64_t batch_id = 0;
    std::uint64_t evaluations_used = 0;
    double best_fitness = 0.0;
    std::vector<std::string> elites;
    std::vector<double> elite_fitness;
  };

  static MiningSession init(const fs::path& run_dir, const MiningConfig& config, Enc enc) {
    config.validate();
    if (fs::exists(state_path(run_dir))) throw ValidationError("a session already exists at " + run_dir.string());
    fs::create_directories(run_dir / "outbox");
    fs::create_directories(run_dir / "inbox");
    MiningSession s(run_dir, config, std::move(enc));
    s.state_.rng = Rng(config.seed);
    s.state_.frozen.assign(config.species, false);
    s.propose_next();
    s.save();
    return s;
  }

  static MiningSession load(const fs::path& run_dir, Enc enc) {
    const json doc = read_json(state_path(run_dir));
    try {
      MiningSession s(run_dir, config_from_json(doc.at("config")), std::move(enc));
      s.state_ = run_state_from_json(doc.at("run"), s.enc_);
      if (!doc.at("pending").is_null()) {
        s.pending_ = proposal_from_json(doc["pending"].at("proposal"), s.enc_);
        s.pending_created_ = doc["pending"].at("created_utc");
        s.pending_files_ = doc["pending"].at("design_files").get<std::vector<std::string>>();
      }
      for (const auto& e : doc.at("lineage"))
        s.lineage_.push_back({e.at("batch_id"), e.at("evaluations_used"), number_or_minus_inf(e.at("best_fitness")),
                              e.at("elites").get<std::vector<std::string>>(),
                              e.at("elite_fitness").get<std::vector<double>>()});
      return s;
    } catch (const json::exception& e) {
      throw ValidationError("state.json: " + std::string(e.what()));
    }
  }

  const MiningConfig& config() const noexcept { return config_; }
  const RunState<G>& state() const noexcept { return state_; }
  const std::optional<Proposal<G>>& pending() const noexcept { return pending_; }
  const std::vector<LineageEntry>& lineage() const noexcept { return lineage_; }
  bool finished() const noexcept { return !pending_.has_value(); }

  // Rewrites the pending manifest and design files; same bytes every time.
  void emit() const {
    if (!pending_) return;
    write_json(manifest_path(dir_, pending_->batch_id),
               make_manifest(pending_->request(config_.duplicates), enc_, pending_created_, pending_files_));
    write_designs(*pending_);
  }

  // Ingests the results for the pending batch, then issues the next one.
  void record(const json& results) {
    if (!pending_) throw ProtocolError("session is finished; nothing is pending");
    const EvaluationResult r = parse_results(results, pending_->batch_id, pending_->cascades.size(),
                                             config_.duplicates, config_.baseline);
    apply(state_, config_.strategy, *pending_, r);
    LineageEntry e;
    e.batch_id = pending_->batch_id;
    e.evaluations_used = state_.evaluations_used;
    e.best_fitness = state_.best_fitness;
    for (const auto& sp : state_.species) {
      e.elites.push_back(enc_.format(sp.elite_member().genome));
      e.elite_fitness.push_back(sp.elite_member().fitness);
    }
    lineage_.push_back(std::move(e));
    pending_.reset();
    if (config_.budget == 0 || state_.evaluations_used < config_.budget) propose_next();
    save();
  }

  void record_file(const fs::path& results) { record(read_json(results)); }

  // Records the pending batch if its results are in the inbox; otherwise
  // re-issues the manifest. Returns whether a batch was recorded.
  bool step() {
    if (!pending_) return false;
    const fs::path r = result_path(dir_, pending_->batch_id);
    if (fs::exists(r)) {
      record_file(r);
      return true;
    }
    emit();
    return false;
  }

  // Takes effect from the next proposal; the pending batch is left as issued.
  void set_frozen(const std::vector<std::size_t>& species) {
    std::vector<bool> f(config_.species, false);
    for (std::size_t s : species) {
      if (s >= config_.species) throw ValidationError("cannot freeze species " + std::to_string(s) + " of " +
                                                      std::to_string(config_.species));
      f[s] = true;
    }
    if (std::all_of(f.begin(), f.end(), [](bool b) { return b; })) throw ValidationError("cannot freeze every species");
    state_.frozen = f;
    save();
  }

  void set_strategy(StrategyKind kind) {
    config_.strategy.kind = kind;
    state_.cursor = 0;
    save();
  }

  void set_budget(std::uint64_t budget) {
    config_.budget = budget;
    if (!pending_ && (budget == 0 || state_.evaluations_used < budget)) propose_next();
    save();
  }

  json status() const {
    json j;
    j["run_dir"] = dir_.string();
    j["strategy"] = kind_name(config_.strategy.kind);
    j["evaluations_used"] = state_.evaluations_used;
    j["best_fitness"] = number_or_null(state_.best_fitness);
    j["pending_batch"] = pending_ ? json(pending_->batch_id) : json(nullptr);
    j["pending_manifest"] = pending_ ? json(manifest_path(dir_, pending_->batch_id).string()) : json(nullptr);
    std::vector<std::size_t> frozen;
    for (std::size_t s = 0; s < state_.frozen.size(); ++s)
      if (state_.frozen[s]) frozen.push_back(s);
    j["frozen"] = frozen;
    j["elites"] = json::array();
    for (const auto& sp : state_.species)
      j["elites"].push_back({{"genome", enc_.format(sp.elite_member().genome)},
                             {"fitness", number_or_null(sp.elite_member().fitness)}});
    j["lineage"] = lineage_json();
    return j;
  }

  std::vector<double> trajectory() const { return densify(state_); }

private:
  MiningSession(fs::path dir, MiningConfig config, Enc enc)
      : dir_(std::move(dir)), config_(std::move(config)), enc_(std::move(enc)) {}

  GeneticConfig<Enc> genetic() const {
    GeneticConfig<Enc> g;
    g.encoding = enc_;
    return g;
  }

  void propose_next() {
    const std::uint64_t remaining = config_.budget == 0 ? std::numeric_limits<std::uint64_t>::max()
                                                        : config_.budget - state_.evaluations_used;
    pending_ = propose(state_, config_.strategy, genetic(), config_.species, remaining);
    pending_created_ = utc_now();
    pending_files_ = design_files(*pending_);
    emit();
  }

  std::vector<std::string> design_files(const Proposal<G>& p) const {
    std::vector<std::string> files;
    if constexpr (std::is_same_v<G, InsertGenome>) {
      if (config_.write_meshes)
        for (std::size_t c = 0; c < p.cascades.size(); ++c)
          for (std::size_t s = 0; s < p.cascades[c].size(); ++s) files.push_back(design_file(p.batch_id, c, s));
    }
    return files;
  }

  static std::string design_file(std::uint64_t batch, std::size_t cascade, std::size_t position) {
    return "outbox/batch_" + std::to_string(batch) + "/cascade" + std::to_string(cascade) + "_unit" +
           std::to_string(position) + ".stl";
  }

  void write_designs(const Proposal<G>& p) const {
    if constexpr (std::is_same_v<G, InsertGenome>) {
      if (!config_.write_meshes) return;
      for (std::size_t c = 0; c < p.cascades.size(); ++c)
        for (std::size_t s = 0; s < p.cascades[c].size(); ++s) {
          const fs::path path = dir_ / design_file(p.batch_id, c, s);
          if (fs::exists(path)) continue;  // meshes are deterministic
          const auto tris = insert_mesh(decode(p.cascades[c][s]), config_.mesh_resolution);
          const fs::path tmp = path.string() + ".tmp";
          write_stl(tmp, tris);
          fs::rename(tmp, path);
        }
    }
  }

  json lineage_json() const {
    json a = json::array();
    for (const auto& e : lineage_)
      a.push_back({{"batch_id", e.batch_id},
                   {"evaluations_used", e.evaluations_used},
                   {"best_fitness", number_or_null(e.best_fitness)},
                   {"elites", e.elites},
                   {"elite_fitness", e.elite_fitness}});
    return a;
  }

  void save() const {
    json doc;
    doc["format"] = "dmine-session-1";
    doc["config"] = config_to_json(config_);
    doc["run"] = run_state_to_json(state_, enc_);
    if (pending_)
      doc["pending"] = {{"proposal", proposal_to_json(*pending_, enc_)},
                        {"created_utc", pending_created_},
                        {"design_files", pending_files_}};
    else
      doc["pending"] = nullptr;
    doc["lineage"] = lineage_json();
    write_json(state_path(dir_), doc);
  }

  fs::path dir_;
  MiningConfig config_;
  Enc enc_;
  RunState<G> state_;
  std::optional<Proposal<G>> pending_;
  std::string pending_created_;
  std::vector<std::string> pending_files_;
  std::vector<LineageEntry> lineage_;
};

}  // namespace dmine
