#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "dmine/external.hpp"
#include "fixtures.hpp"

using namespace dmine;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

double bit_sum(const Cascade<BitGenome>& c) {
  double s = 0;
  for (const auto& g : c) s += static_cast<double>(g.count());
  return s;
}

}  // namespace

TEST(External, RunStateRoundTrip) {
  const Landscape land = Landscape::generate(dmine::testing::small_params(3, 20, 2, 2, 4));
  SimulatedEvaluator ev(land);
  Strategy st;
  st.population = PopulationMode::expanding;
  GeneticConfig<BinaryEncoding> genetic;
  auto state = init_run(ev, st, genetic, 5);
  for (int i = 0; i < 3; ++i) step(state, ev, st, genetic);
  state.frozen[1] = true;

  const json j = run_state_to_json(state, genetic.encoding);
  const auto back = run_state_from_json(json::parse(j.dump()), genetic.encoding);
  EXPECT_EQ(run_state_to_json(back, genetic.encoding), j);

  // Continuing from the restored state matches continuing from the original.
  auto a = state;
  auto b = back;
  step(a, ev, st, genetic);
  step(b, ev, st, genetic);
  EXPECT_EQ(densify(a), densify(b));
}

TEST(External, ProposalRoundTrip) {
  RunState<InsertGenome> state;
  state.rng = Rng(3);
  state.frozen.assign(4, false);
  Strategy st;
  GeneticConfig<InsertEncoding> genetic;
  const auto p = propose(state, st, genetic, 4, 5);
  const json j = proposal_to_json(p, genetic.encoding);
  const auto back = proposal_from_json(json::parse(j.dump()), genetic.encoding);
  EXPECT_EQ(proposal_to_json(back, genetic.encoding), j);
  EXPECT_EQ(back.cascades.size(), 5u);
  EXPECT_TRUE(back.initial);
}

TEST(External, ParseResultsErrors) {
  const auto ok = results_document(3, {{1.0, 2.0}, {3.0, 4.0}});
  EXPECT_EQ(parse_results(ok, 3, 2, 2).outcomes.size(), 2u);

  EXPECT_THROW(parse_results(json{{"results", json::array()}}, 3, 2, 2), MissingBatchError);
  EXPECT_THROW(parse_results(results_document(2, {{1.0, 2.0}, {3.0, 4.0}}), 3, 2, 2), DuplicateBatchError);
  EXPECT_THROW(parse_results(results_document(4, {{1.0, 2.0}, {3.0, 4.0}}), 3, 2, 2), StaleBatchError);
  EXPECT_THROW(parse_results(results_document(3, {{1.0, 2.0}}), 3, 2, 2), MalformedResultError);
  EXPECT_THROW(parse_results(results_document(3, {{1.0}, {3.0, 4.0}}), 3, 2, 2), ReplicateCountError);
  auto bad = ok;
  bad["results"][1]["raw_replicates"][0] = "x";
  EXPECT_THROW(parse_results(bad, 3, 2, 2), MalformedResultError);
  EXPECT_THROW(parse_results(results_document(3, {{1.0, std::nan("")}, {3.0, 4.0}}), 3, 2, 2),
               NonFiniteValueError);
  // Every protocol failure is catchable as one category.
  try {
    parse_results(ok, 9, 2, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), Error::Category::protocol);
  }
}

TEST(External, ReplicateAveragingAndNormalization) {
  EXPECT_DOUBLE_EQ(parse_results(results_document(0, {{50.0, 57.6}}), 0, 1, 2).outcomes[0].fitness, 53.8);
  BaselineRecord b;
  b.mode = Normalization::divide_by_baseline;
  b.unit_baselines = {2.0, 2.0, 2.0, 2.0};
  EXPECT_EQ(parse_results(results_document(0, {{4.0, 4.0}}), 0, 1, 2, b).outcomes[0].fitness, 2.0);
}

TEST(External, ManifestFields) {
  EvaluationRequest<BitGenome> req{7, {{BitGenome::parse("0101", 4), BitGenome::parse("1111", 4)}}, true, 2};
  const json m = make_manifest(req, BinaryEncoding{4, 0.1}, "2026-01-01T00:00:00Z", {"a.stl"});
  EXPECT_EQ(m["batch_id"], 7);
  EXPECT_EQ(m["duplicates"], 2);
  EXPECT_EQ(m["champion_included"], true);
  EXPECT_EQ(m["cascades"][0]["position_genomes"], json({"0101", "1111"}));
  EXPECT_EQ(m["design_files"], json({"a.stl"}));
  EXPECT_EQ(m["created_utc"], "2026-01-01T00:00:00Z");
}

TEST(External, BlockingEvaluatorMatchesFunctionEvaluator) {
  const fs::path dir = fresh_dir("dmine_ext_block");
  BinaryEncoding enc{8, 0.1};
  GeneticConfig<BinaryEncoding> genetic;
  genetic.encoding = enc;
  Strategy st;
  st.kind = StrategyKind::one_plus_one_per_species;

  std::atomic<bool> done{false};
  std::thread lab([&] {
    for (std::uint64_t b = 0; !done;) {
      if (fs::exists(manifest_path(dir, b))) {
        respond<BinaryEncoding>(dir, b, enc, bit_sum);
        ++b;
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
    }
  });
  ExternalOptions opt;
  opt.poll_interval = std::chrono::milliseconds(1);
  ExternalEvaluator<BinaryEncoding> ext(dir, 3, enc, opt);
  const auto a = run(ext, st, genetic, 40, 9);
  done = true;
  lab.join();

  FunctionEvaluator<BitGenome> fn(3, bit_sum);
  const auto b = run(fn, st, genetic, 40, 9);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(run_state_to_json(a.state, enc), run_state_to_json(b.state, enc));
  fs::remove_all(dir);
}

TEST(External, StopFlagAndWatchdog) {
  const fs::path dir = fresh_dir("dmine_ext_stop");
  std::atomic<bool> stop{false};
  int stale_calls = 0;
  ExternalOptions opt;
  opt.poll_interval = std::chrono::milliseconds(2);
  opt.watchdog = std::chrono::milliseconds(10);
  opt.on_stale = [&](std::uint64_t batch, std::chrono::milliseconds) {
    EXPECT_EQ(batch, 0u);
    ++stale_calls;
  };
  opt.stop = &stop;
  ExternalEvaluator<BinaryEncoding> ext(dir, 1, BinaryEncoding{4, 0.1}, opt);
  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(60));
    stop = true;
  });
  EvaluationRequest<BitGenome> req{0, {{BitGenome::parse("0000", 4)}}, false, 1};
  EXPECT_THROW(ext.evaluate(req), InterruptedError);
  stopper.join();
  EXPECT_EQ(stale_calls, 1);
  EXPECT_TRUE(fs::exists(manifest_path(dir, 0)));

  // Re-issuing the same batch leaves the first manifest untouched.
  const std::string before = read_json(manifest_path(dir, 0)).dump();
  ext.emit(req);
  EXPECT_EQ(read_json(manifest_path(dir, 0)).dump(), before);
  fs::remove_all(dir);
}

TEST(External, MalformedJsonFileIsProtocolError) {
  const fs::path dir = fresh_dir("dmine_ext_bad");
  write_text(dir / "x.json", "{not json");
  EXPECT_THROW(read_json(dir / "x.json"), MalformedResultError);
  EXPECT_THROW(read_json(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}
