#pragma once

// File-based evaluation protocol: the engine writes a batch manifest to
// <run_dir>/outbox/batch_<id>.json, someone (a lab, a script) answers with
// <run_dir>/inbox/result_<id>.json.

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dmine/coevolution.hpp"
#include "dmine/error.hpp"
#include "dmine/evaluation.hpp"

namespace dmine {

namespace fs = std::filesystem;
using nlohmann::json;

struct InterruptedError : ProtocolError {
  using ProtocolError::ProtocolError;
};

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw MalformedResultError(path.string() + ": " + e.what());
  }
}

// Writes through a temporary file so readers never see half a document.
inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

// Non-finite doubles travel as null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double number_or_minus_inf(const json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

template <class Enc>
json cascade_to_json(const Cascade<typename Enc::genome_type>& c, const Enc& enc) {
  json a = json::array();
  for (const auto& g : c) a.push_back(enc.format(g));
  return a;
}

template <class Enc>
Cascade<typename Enc::genome_type> cascade_from_json(const json& j, const Enc& enc) {
  Cascade<typename Enc::genome_type> c;
  for (const auto& g : j) c.push_back(enc.parse(g.get<std::string>()));
  return c;
}

template <class Enc>
json run_state_to_json(const RunState<typename Enc::genome_type>& s, const Enc& enc) {
  json j;
  j["species"] = json::array();
  for (const auto& sp : s.species) {
    json members = json::array();
    for (const auto& m : sp.population) {
      json mj{{"genome", enc.format(m.genome)}, {"fitness", number_or_null(m.fitness)}};
      if (m.secondary_metric) mj["secondary_metric"] = *m.secondary_metric;
      members.push_back(std::move(mj));
    }
    j["species"].push_back({{"population", std::move(members)}, {"elite", sp.elite}});
  }
  j["evaluations_used"] = s.evaluations_used;
  j["best_history"] = json::array();
  for (const auto& h : s.best_history) j["best_history"].push_back({h.evaluation, h.best_fitness});
  j["best_fitness"] = number_or_null(s.best_fitness);
  j["best_cascade"] = cascade_to_json(s.best_cascade, enc);
  j["rng"] = s.rng.save();
  j["frozen"] = s.frozen;
  j["cursor"] = s.cursor;
  j["next_batch_id"] = s.next_batch_id;
  j["batches_applied"] = s.batches_applied;
  j["initialized"] = s.initialized;
  return j;
}

template <class Enc>
RunState<typename Enc::genome_type> run_state_from_json(const json& j, const Enc& enc) {
  RunState<typename Enc::genome_type> s;
  for (const auto& spj : j.at("species")) {
    SpeciesState<typename Enc::genome_type> sp;
    for (const auto& mj : spj.at("population")) {
      Individual<typename Enc::genome_type> m{enc.parse(mj.at("genome").get<std::string>()),
                                              number_or_minus_inf(mj.at("fitness")), std::nullopt};
      if (mj.contains("secondary_metric")) m.secondary_metric = mj["secondary_metric"].get<double>();
      sp.population.push_back(std::move(m));
    }
    sp.elite = spj.at("elite");
    if (sp.elite >= sp.population.size()) throw ValidationError("state: elite index out of range");
    s.species.push_back(std::move(sp));
  }
  s.evaluations_used = j.at("evaluations_used");
  for (const auto& h : j.at("best_history")) s.best_history.push_back({h.at(0), h.at(1)});
  s.best_fitness = number_or_minus_inf(j.at("best_fitness"));
  s.best_cascade = cascade_from_json(j.at("best_cascade"), enc);
  try {
    s.rng.restore(j.at("rng").get<std::string>());
  } catch (const std::invalid_argument&) {
    throw ValidationError("state: corrupt rng state");
  }
  s.frozen = j.at("frozen").get<std::vector<bool>>();
  s.cursor = j.at("cursor");
  s.next_batch_id = j.at("next_batch_id");
  s.batches_applied = j.at("batches_applied");
  s.initialized = j.at("initialized");
  return s;
}

template <class Enc>
json proposal_to_json(const Proposal<typename Enc::genome_type>& p, const Enc& enc) {
  json j;
  j["batch_id"] = p.batch_id;
  j["initial"] = p.initial;
  j["cascades"] = json::array();
  for (const auto& c : p.cascades) j["cascades"].push_back(cascade_to_json(c, enc));
  j["offspring"] = json::array();
  for (const auto& o : p.offspring) j["offspring"].push_back({o.species, o.cascade, enc.format(o.genome)});
  j["champion_included"] = p.champion_included;
  j["species_visited"] = p.species_visited;
  j["offspring_created"] = p.offspring_created;
  return j;
}

template <class Enc>
Proposal<typename Enc::genome_type> proposal_from_json(const json& j, const Enc& enc) {
  Proposal<typename Enc::genome_type> p;
  p.batch_id = j.at("batch_id");
  p.initial = j.at("initial");
  for (const auto& c : j.at("cascades")) p.cascades.push_back(cascade_from_json(c, enc));
  for (const auto& o : j.at("offspring"))
    p.offspring.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>(), enc.parse(o.at(2).get<std::string>())});
  p.champion_included = j.at("champion_included");
  p.species_visited = j.at("species_visited");
  p.offspring_created = j.at("offspring_created");
  return p;
}

inline fs::path manifest_path(const fs::path& run_dir, std::uint64_t batch) {
  return run_dir / "outbox" / ("batch_" + std::to_string(batch) + ".json");
}

inline fs::path result_path(const fs::path& run_dir, std::uint64_t batch) {
  return run_dir / "inbox" / ("result_" + std::to_string(batch) + ".json");
}

template <class Enc>
json make_manifest(const EvaluationRequest<typename Enc::genome_type>& request, const Enc& enc,
                   const std::string& created_utc, const std::vector<std::string>& design_files) {
  json m;
  m["batch_id"] = request.batch_id;
  m["created_utc"] = created_utc;
  m["duplicates"] = request.duplicates;
  m["cascades"] = json::array();
  for (const auto& c : request.cascades) m["cascades"].push_back({{"position_genomes", cascade_to_json(c, enc)}});
  m["champion_included"] = request.include_champion;
  m["design_files"] = design_files;
  return m;
}

// Parses and checks a results document against the batch it answers.
inline EvaluationResult parse_results(const json& doc, std::uint64_t pending_batch, std::size_t cascades,
                                      std::size_t duplicates, const BaselineRecord& baseline = {}) {
  if (!doc.is_object() || !doc.contains("batch_id")) throw MissingBatchError("results document has no batch_id");
  if (!doc["batch_id"].is_number_unsigned() && !doc["batch_id"].is_number_integer())
    throw MalformedResultError("batch_id must be an integer");
  const auto id = doc["batch_id"].get<std::int64_t>();
  if (id < 0) throw MalformedResultError("batch_id must be non-negative");
  const auto batch = static_cast<std::uint64_t>(id);
  if (batch < pending_batch)
    throw DuplicateBatchError("batch " + std::to_string(batch) + " was already recorded; pending batch is " +
                              std::to_string(pending_batch));
  if (batch > pending_batch)
    throw StaleBatchError("no manifest was issued for batch " + std::to_string(batch) + "; pending batch is " +
                          std::to_string(pending_batch));
  if (!doc.contains("results") || !doc["results"].is_array())
    throw MalformedResultError("results document has no results array");
  const auto& rs = doc["results"];
  if (rs.size() != cascades)
    throw MalformedResultError("batch " + std::to_string(batch) + " expects " + std::to_string(cascades) +
                               " results, got " + std::to_string(rs.size()));
  EvaluationResult out;
  out.batch_id = batch;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    const std::string where = "result " + std::to_string(i) + " of batch " + std::to_string(batch);
    if (!r.is_object() || !r.contains("raw_replicates") || !r["raw_replicates"].is_array())
      throw MalformedResultError(where + ": missing raw_replicates");
    std::vector<double> raw;
    for (const auto& v : r["raw_replicates"]) {
      if (!v.is_number()) throw MalformedResultError(where + ": replicate is not a number");
      raw.push_back(v.get<double>());
    }
    if (raw.size() != duplicates)
      throw ReplicateCountError(where + ": expected " + std::to_string(duplicates) + " replicates, got " +
                                std::to_string(raw.size()));
    std::optional<double> secondary;
    if (r.contains("secondary_metric") && !r["secondary_metric"].is_null()) {
      if (!r["secondary_metric"].is_number()) throw MalformedResultError(where + ": secondary_metric is not a number");
      secondary = r["secondary_metric"].get<double>();
    }
    try {
      out.outcomes.push_back(reduce_replicates(std::move(raw), secondary, baseline));
    } catch (const NonFiniteValueError& e) {
      throw NonFiniteValueError(where + ": " + e.what());
    }
  }
  return out;
}

inline json results_document(std::uint64_t batch, const std::vector<std::vector<double>>& replicates,
                             const std::vector<std::optional<double>>& secondary = {}) {
  json doc{{"batch_id", batch}, {"results", json::array()}};
  for (std::size_t i = 0; i < replicates.size(); ++i) {
    json r{{"raw_replicates", replicates[i]}};
    if (i < secondary.size() && secondary[i]) r["secondary_metric"] = *secondary[i];
    doc["results"].push_back(std::move(r));
  }
  return doc;
}

// Answers the manifest for `batch` with a scoring function; what a scripted
// lab does.
template <class Enc>
void respond(const fs::path& run_dir, std::uint64_t batch, const Enc& enc,
             const std::function<double(const Cascade<typename Enc::genome_type>&)>& score,
             const std::function<std::optional<double>(const Cascade<typename Enc::genome_type>&)>& secondary = {}) {
  const json m = read_json(manifest_path(run_dir, batch));
  const std::size_t dup = m.at("duplicates");
  std::vector<std::vector<double>> reps;
  std::vector<std::optional<double>> sec;
  for (const auto& c : m.at("cascades")) {
    const auto cascade = cascade_from_json(c.at("position_genomes"), enc);
    reps.emplace_back(dup, score(cascade));
    sec.push_back(secondary ? secondary(cascade) : std::nullopt);
  }
  write_json(result_path(run_dir, batch), results_document(batch, reps, sec));
}

struct ExternalOptions {
  std::chrono::milliseconds poll_interval{500};
  // Staleness warning after this long without results; 0 disables.
  std::chrono::milliseconds watchdog{0};
  std::function<void(std::uint64_t batch, std::chrono::milliseconds waited)> on_stale;
  const std::atomic<bool>* stop = nullptr;
  BaselineRecord baseline;
  // Writes fabrication files for a batch and returns their paths.
  std::function<std::vector<std::string>(std::uint64_t batch, std::size_t cascade, std::size_t position)> design_file;
};

// Blocking evaluator: writes the manifest, then waits for the results file.
template <class Enc>
class ExternalEvaluator {
public:
  using G = typename Enc::genome_type;

  ExternalEvaluator(fs::path run_dir, std::size_t species, Enc enc = {}, ExternalOptions options = {})
      : dir_(std::move(run_dir)), species_(species), enc_(std::move(enc)), opt_(std::move(options)) {
    opt_.baseline.validate();
  }

  std::size_t species_count() const noexcept { return species_; }

  void emit(const EvaluationRequest<G>& request) const {
    const fs::path path = manifest_path(dir_, request.batch_id);
    if (fs::exists(path)) return;  // re-issue keeps the original manifest
    std::vector<std::string> files;
    if (opt_.design_file)
      for (std::size_t c = 0; c < request.cascades.size(); ++c)
        for (std::size_t s = 0; s < request.cascades[c].size(); ++s)
          for (auto& f : opt_.design_file(request.batch_id, c, s)) files.push_back(std::move(f));
    write_json(path, make_manifest(request, enc_, utc_now(), files));
  }

  EvaluationResult evaluate(const EvaluationRequest<G>& request) {
    if (request.duplicates < 1) throw ValidationError("duplicates must be >= 1");
    fs::create_directories(dir_ / "inbox");
    emit(request);
    const fs::path result = result_path(dir_, request.batch_id);
    const auto start = std::chrono::steady_clock::now();
    bool warned = false;
    while (!fs::exists(result)) {
      if (opt_.stop && opt_.stop->load()) throw InterruptedError("interrupted while waiting for batch " +
                                                                 std::to_string(request.batch_id));
      const auto waited = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
      if (!warned && opt_.watchdog.count() > 0 && waited >= opt_.watchdog) {
        warned = true;
        if (opt_.on_stale) opt_.on_stale(request.batch_id, waited);
      }
      std::this_thread::sleep_for(opt_.poll_interval);
    }
    return parse_results(read_json(result), request.batch_id, request.cascades.size(), request.duplicates,
                         opt_.baseline);
  }

private:
  fs::path dir_;
  std::size_t species_;
  Enc enc_;
  ExternalOptions opt_;
};

}  // namespace dmine
