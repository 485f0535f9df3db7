#include "stc/cli/cli.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "stc/backends/fixture.hpp"
#include "stc/backends/http_client.hpp"
#include "stc/core/serialize.hpp"
#include "stc/datastore/cache.hpp"
#include "stc/datastore/datasets.hpp"
#include "stc/datastore/fixture_corpus.hpp"
#include "stc/datastore/trace_io.hpp"
#include "stc/eval/metrics.hpp"
#include "stc/pipeline/engine.hpp"

namespace stc::cli {

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitUnreachable = 3;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json parse_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + ": " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw ConfigError(std::string("malformed JSON in ") + what + ": " + path);
  return j;
}

// Flag overrides shared by cmd_run; values are applied on top of the config
// file (and of per-scenario configs for corpus datasets).
struct Overrides {
  std::optional<std::string> mode;
  bool no_attend = false;
  bool no_rationale = false;
  bool no_verify = false;
  std::optional<int> k;
  std::optional<int> n;
  std::optional<int> miter;
  std::optional<double> thre;

  void apply(EpisodeConfig& config) const {
    if (mode) config.mode = engine_mode_from_string(*mode);
    if (no_attend) config.enable_attend = false;
    if (no_rationale) config.enable_rationale = false;
    if (no_verify) config.enable_verify = false;
    if (k) config.ensemble_size = *k;
    if (n) config.example_count = *n;
    if (miter) config.max_rounds = *miter;
    if (thre) config.accept_threshold = *thre;
    config.validate();
  }
};

struct RunPlan {
  std::vector<Sample> samples;
  std::map<std::string, EpisodeConfig> config_by_sample;
  prompting::ExamplePool pool;
  backends::Backends backends;
  std::string output;
  int workers = 0;
};

// Builds the ResponseSource for one capability from its config entry:
// exactly one of {"endpoint": url} or {"fixture": records-path}.
std::shared_ptr<backends::ResponseSource> capability_source(
    const std::string& kind, const json& entry,
    std::map<std::string, std::shared_ptr<backends::FixtureSource>>& fixture_cache,
    std::map<std::string, backends::HttpEndpoint>& endpoints) {
  const bool has_endpoint = entry.contains("endpoint");
  const bool has_fixture = entry.contains("fixture");
  if (has_endpoint == has_fixture)
    throw ConfigError("backends." + kind +
                      ": exactly one of 'endpoint' or 'fixture' is required");
  if (has_fixture) {
    const std::string path = entry["fixture"].get<std::string>();
    auto it = fixture_cache.find(path);
    if (it == fixture_cache.end()) {
      try {
        it = fixture_cache.emplace(path, backends::FixtureSource::load_jsonl(path))
                 .first;
      } catch (const std::exception& e) {
        throw DataError(e.what());
      }
    }
    return it->second;
  }
  backends::HttpEndpoint ep;
  ep.base_url = entry["endpoint"].get<std::string>();
  ep.bearer_token = entry.value("bearer_token", std::string{});
  ep.max_retries = entry.value("max_retries", ep.max_retries);
  endpoints.emplace(kind, ep);
  return nullptr;  // resolved later through one shared HttpSource
}

RunPlan load_run_plan(const json& config_json, const Overrides& overrides) {
  RunPlan plan;

  // Dataset (and, for corpus runs, per-sample configs + default backends).
  const json& dataset = config_json.contains("dataset") ? config_json["dataset"]
                                                        : json::object();
  const std::string kind = dataset.value("kind", std::string{});
  std::optional<datastore::FixtureCorpus> corpus;
  try {
    if (kind == "corpus") {
      corpus = datastore::build_fixture_corpus(dataset.at("path").get<std::string>());
      plan.samples = corpus->samples();
      for (const auto& scenario : corpus->scenarios) {
        EpisodeConfig config = scenario.config;
        overrides.apply(config);
        plan.config_by_sample.emplace(scenario.sample.id, config);
      }
    } else if (kind == "aokvqa") {
      plan.samples =
          datastore::load_aokvqa(dataset.at("path").get<std::string>(),
                                 dataset.value("image_prefix", "val2017/"));
    } else if (kind == "okvqa") {
      plan.samples =
          datastore::load_okvqa(dataset.at("questions").get<std::string>(),
                                dataset.at("annotations").get<std::string>(),
                                dataset.value("image_prefix", "val2014/"));
    } else {
      throw ConfigError("dataset.kind must be one of corpus|aokvqa|okvqa");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset section: ") + e.what());
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }

  if (!corpus) {
    EpisodeConfig config = config_json.contains("episode")
                               ? config_from_json(config_json["episode"])
                               : EpisodeConfig{};
    overrides.apply(config);
    for (const auto& s : plan.samples) plan.config_by_sample.emplace(s.id, config);
  }

  // Backends: explicit per-capability sources, or the corpus's own records
  // when the section is omitted for a corpus run.
  static const std::vector<std::string> kKinds = {
      backends::kKindComplete, backends::kKindDetect, backends::kKindCaption,
      backends::kKindSimilarity, backends::kKindEmbed};

  std::map<std::string, std::shared_ptr<backends::ResponseSource>> sources;
  if (config_json.contains("backends")) {
    const json& b = config_json["backends"];
    std::map<std::string, std::shared_ptr<backends::FixtureSource>> fixture_cache;
    std::map<std::string, backends::HttpEndpoint> endpoints;
    for (const auto& k : kKinds) {
      if (!b.contains(k))
        throw ConfigError("backends." + k + " is not configured");
      sources[k] = capability_source(k, b[k], fixture_cache, endpoints);
    }
    if (!endpoints.empty()) {
      auto http = std::make_shared<backends::HttpSource>(endpoints);
      for (auto& [k, src] : sources)
        if (!src) src = http;
    }
  } else if (corpus) {
    auto fixture =
        std::make_shared<backends::FixtureSource>(corpus->merged_records());
    for (const auto& k : kKinds) sources[k] = fixture;
  } else {
    throw ConfigError("config requires a 'backends' section");
  }

  // Optional response cache in front of every capability.
  if (config_json.contains("cache_dir")) {
    auto cache = std::make_shared<datastore::ResponseCache>(
        config_json["cache_dir"].get<std::string>());
    std::map<std::shared_ptr<backends::ResponseSource>,
             std::shared_ptr<backends::ResponseSource>>
        wrapped;
    for (auto& [k, src] : sources) {
      auto it = wrapped.find(src);
      if (it == wrapped.end())
        it = wrapped
                 .emplace(src, std::make_shared<datastore::CachedSource>(src, cache))
                 .first;
      src = it->second;
    }
  }

  // One multiplexing source so each capability routes to its own transport.
  struct Mux : backends::ResponseSource {
    std::map<std::string, std::shared_ptr<backends::ResponseSource>> routes;
    json fetch(const std::string& kind, const json& request) override {
      return routes.at(kind)->fetch(kind, request);
    }
  };
  auto mux = std::make_shared<Mux>();
  mux->routes = sources;
  plan.backends = backends::make_backends(mux);

  // Example pool: explicit JSONL, or the corpus pool.
  try {
    if (config_json.contains("pool")) {
      plan.pool = prompting::ExamplePool::load_jsonl(
          config_json["pool"].get<std::string>(), *plan.backends.embedder);
    } else if (corpus) {
      plan.pool = prompting::ExamplePool(corpus->pool);
    } else {
      throw ConfigError("config requires a 'pool' file");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const backends::BackendUnreachable&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("pool: ") + e.what());
  }

  plan.output = config_json.value("output", std::string("traces.jsonl"));
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  plan.workers =
      config_json.value("workers", static_cast<int>(std::min(hw, 8u)));
  if (plan.workers < 1) throw ConfigError("workers must be >= 1");
  return plan;
}

int cmd_run(const std::string& config_path, const Overrides& overrides,
            std::optional<int> workers_flag, bool resume,
            std::optional<std::string> output_flag) {
  RunPlan plan = load_run_plan(parse_json_file(config_path, "run config"), overrides);
  if (workers_flag) plan.workers = *workers_flag;
  if (output_flag) plan.output = *output_flag;

  std::set<std::string> already_done;
  if (resume) {
    std::ifstream in(plan.output);
    std::string line;
    while (in && std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.contains("sample_id"))
        already_done.insert(j["sample_id"].get<std::string>());
    }
  }

  std::ofstream out(plan.output, resume ? std::ios::app : std::ios::trunc);
  if (!out) throw DataError("cannot write trace file " + plan.output);

  std::atomic<std::size_t> next{0};
  std::atomic<int> completed{0}, failed{0}, unreachable{0}, skipped{0};
  std::mutex write_mutex;
  const auto started = std::chrono::steady_clock::now();

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.samples.size()) break;
      const Sample& sample = plan.samples[i];
      if (already_done.count(sample.id)) {
        ++skipped;
        continue;
      }
      ReasoningTrace trace =
          pipeline::run_episode(sample, plan.pool,
                                plan.config_by_sample.at(sample.id), plan.backends);
      if (trace.failure_stage) {
        ++failed;
        if (*trace.failure_stage == "backend") ++unreachable;
      } else {
        ++completed;
      }
      std::lock_guard<std::mutex> lock(write_mutex);
      out << trace_to_json(trace).dump() << '\n';
      out.flush();
    }
  };

  std::vector<std::thread> threads;
  const int worker_count =
      std::min<int>(plan.workers, static_cast<int>(plan.samples.size()));
  for (int t = 0; t < std::max(1, worker_count); ++t)
    threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  std::cout << "run: " << plan.samples.size() << " samples, " << completed
            << " completed, " << failed << " failed, " << skipped
            << " skipped (resume), " << elapsed << " ms -> " << plan.output
            << "\n";

  const int attempted = completed + failed;
  if (attempted > 0 && unreachable == attempted) return kExitUnreachable;
  return kExitOk;
}

std::vector<Sample> load_eval_dataset(const std::string& kind,
                                      const std::string& path,
                                      const std::string& questions,
                                      const std::string& annotations) {
  if (kind == "corpus") return datastore::build_fixture_corpus(path).samples();
  if (kind == "aokvqa") return datastore::load_aokvqa(path);
  if (kind == "okvqa") return datastore::load_okvqa(questions, annotations);
  throw ConfigError("dataset kind must be one of corpus|aokvqa|okvqa");
}

int cmd_eval(const std::string& trace_path, const std::string& kind,
             const std::string& dataset_path, const std::string& questions,
             const std::string& annotations, const std::string& report_path,
             bool lowercase_bleu) {
  std::vector<ReasoningTrace> traces;
  std::vector<Sample> samples;
  eval::EvalReport report;
  try {
    traces = datastore::read_traces(trace_path);
    samples = load_eval_dataset(kind, dataset_path, questions, annotations);
    report = eval::evaluate(traces, samples, nullptr, lowercase_bleu);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  std::cout << report.render_table();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw DataError("cannot write report " + report_path);
    out << report.to_json().dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_trace(const std::string& trace_path, const std::string& sample_id) {
  std::vector<ReasoningTrace> traces;
  try {
    traces = datastore::read_traces(trace_path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  const ReasoningTrace* found = nullptr;
  for (const auto& t : traces)
    if (t.sample_id == sample_id) found = &t;
  if (!found) {
    std::string available;
    for (const auto& t : traces) {
      if (!available.empty()) available += ", ";
      available += t.sample_id;
    }
    throw DataError("no trace for sample '" + sample_id +
                    "'; available: " + available);
  }

  const ReasoningTrace& t = *found;
  std::cout << "sample: " << t.sample_id << "  (config " << t.config_digest
            << ")\n";
  for (const auto& r : t.rounds) {
    std::cout << "round " << r.round_index << ":\n";
    if (r.attended_concept)
      std::cout << "  attend    -> " << r.attended_concept->label
                << " (score " << r.attended_concept->score << ")\n";
    if (r.regional_caption)
      std::cout << "  describe  -> " << *r.regional_caption << "\n";
    std::cout << "  ensemble  ->";
    for (const auto& c : r.ensemble) {
      const std::string first_line = c.text.substr(0, c.text.find('\n'));
      std::cout << " [\"" << first_line << "\""
                << (c.mean_logprob ? " @ " + std::to_string(*c.mean_logprob) : "")
                << "]";
    }
    std::cout << "\n  answer    -> " << r.answer.raw_text << " (score "
              << r.answer.score << ")\n";
    if (r.rationale)
      std::cout << "  rationale -> " << r.rationale->text << " (similarity "
                << r.rationale->image_similarity << ", "
                << (r.rationale->accepted ? "accepted" : "rejected") << ")\n";
    std::cout << "  queries   -> " << r.llm_queries_this_round << "\n";
  }
  if (t.failure_stage)
    std::cout << "failed at stage: " << *t.failure_stage << "\n";
  std::cout << "final answer: " << t.final_answer.raw_text << "\n"
            << "converged: " << (t.converged ? "true" : "false") << "\n"
            << "total queries: " << t.total_llm_queries << "\n";
  return kExitOk;
}

int cmd_fixtures_build(const std::string& spec_path, const std::string& out_dir) {
  datastore::FixtureCorpus corpus;
  try {
    corpus = datastore::build_fixture_corpus(spec_path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  backends::write_fixture_records(dir / "records.jsonl", corpus.merged_records());
  prompting::ExamplePool::write_jsonl(dir / "pool.jsonl", corpus.pool);
  datastore::write_traces(dir / "expected_traces.jsonl", [&] {
    std::vector<ReasoningTrace> expected;
    for (const auto& s : corpus.scenarios) expected.push_back(s.expected);
    return expected;
  }());
  {
    json samples = json::array();
    for (const auto& s : corpus.scenarios)
      samples.push_back(json{{"id", s.sample.id},
                             {"question", s.sample.question},
                             {"image_ref", s.sample.image_ref},
                             {"config", config_to_json(s.config)}});
    std::ofstream out(dir / "samples.json");
    out << samples.dump(2) << '\n';
  }
  std::cout << "fixtures: " << corpus.scenarios.size() << " scenarios, "
            << corpus.merged_records().size() << " records -> " << out_dir
            << "\n";
  return kExitOk;
}

int cmd_cache_stats(const std::string& dir) {
  const auto stats = datastore::ResponseCache(dir).stats();
  std::cout << "entries: " << stats.entries << "\nbytes: " << stats.bytes << "\n";
  for (const auto& [kind, count] : stats.by_kind)
    std::cout << kind << ": " << count << "\n";
  return kExitOk;
}

}  // namespace

int run_main(int argc, const char* const* argv) {
  CLI::App app{"see-think-confirm orchestration engine"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run episodes over a dataset");
  std::string run_config;
  Overrides overrides;
  std::string mode_flag;
  int k_flag = 0, n_flag = 0, miter_flag = 0, workers_flag = 0;
  double thre_flag = 0;
  bool resume = false;
  std::string output_flag;
  run->add_option("--config", run_config, "run config JSON")->required();
  auto* mode_opt = run->add_option("--mode", mode_flag, "ipvr|pica|cot");
  run->add_flag("--no-attend", overrides.no_attend, "disable attend/describe");
  run->add_flag("--no-rationale", overrides.no_rationale, "disable rationale generation");
  run->add_flag("--no-verify", overrides.no_verify, "accept rationales unconditionally");
  auto* k_opt = run->add_option("--k", k_flag, "ensemble size");
  auto* n_opt = run->add_option("--n", n_flag, "in-context example count");
  auto* miter_opt = run->add_option("--miter", miter_flag, "max rounds");
  auto* thre_opt = run->add_option("--thre", thre_flag, "rationale similarity threshold");
  auto* workers_opt = run->add_option("--workers", workers_flag, "worker threads");
  run->add_flag("--resume", resume, "skip samples already in the output file");
  auto* output_opt = run->add_option("--output", output_flag, "trace output path");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a trace file against a dataset");
  std::string eval_traces, eval_kind = "corpus", eval_dataset, eval_questions,
              eval_annotations, eval_report;
  bool lowercase_bleu = false;
  eval_cmd->add_option("--traces", eval_traces, "trace JSONL")->required();
  eval_cmd->add_option("--dataset-kind", eval_kind, "corpus|aokvqa|okvqa");
  eval_cmd->add_option("--dataset", eval_dataset, "dataset path (corpus spec or aokvqa json)");
  eval_cmd->add_option("--questions", eval_questions, "okvqa questions file");
  eval_cmd->add_option("--annotations", eval_annotations, "okvqa annotations file");
  eval_cmd->add_option("--out", eval_report, "write the report JSON here");
  eval_cmd->add_flag("--lowercase-bleu", lowercase_bleu, "case-insensitive BLEU");

  // trace
  auto* trace_cmd = app.add_subcommand("trace", "inspect one episode step by step");
  std::string trace_path, trace_sample;
  trace_cmd->add_option("--traces", trace_path, "trace JSONL")->required();
  trace_cmd->add_option("--sample", trace_sample, "sample id")->required();

  // fixtures build
  auto* fixtures = app.add_subcommand("fixtures", "fixture corpus tooling");
  auto* build = fixtures->add_subcommand("build", "materialize a fixture corpus");
  std::string fixtures_spec, fixtures_out = "fixtures_out";
  build->add_option("--spec", fixtures_spec, "corpus spec JSON")->required();
  build->add_option("--out", fixtures_out, "output directory");

  // cache stats
  auto* cache = app.add_subcommand("cache", "response cache tooling");
  auto* stats = cache->add_subcommand("stats", "print cache statistics");
  std::string cache_dir;
  stats->add_option("--dir", cache_dir, "cache directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      if (*mode_opt) overrides.mode = mode_flag;
      if (*k_opt) overrides.k = k_flag;
      if (*n_opt) overrides.n = n_flag;
      if (*miter_opt) overrides.miter = miter_flag;
      if (*thre_opt) overrides.thre = thre_flag;
      return cmd_run(run_config, overrides,
                     *workers_opt ? std::optional<int>(workers_flag) : std::nullopt,
                     resume,
                     *output_opt ? std::optional<std::string>(output_flag)
                                 : std::nullopt);
    }
    if (*eval_cmd)
      return cmd_eval(eval_traces, eval_kind, eval_dataset, eval_questions,
                      eval_annotations, eval_report, lowercase_bleu);
    if (*trace_cmd) return cmd_trace(trace_path, trace_sample);
    if (*build) return cmd_fixtures_build(fixtures_spec, fixtures_out);
    if (*stats) return cmd_cache_stats(cache_dir);
    std::cerr << "no subcommand\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const backends::BackendUnreachable& e) {
    std::cerr << "backend unreachable: " << e.what() << "\n";
    return kExitUnreachable;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace stc::cli
