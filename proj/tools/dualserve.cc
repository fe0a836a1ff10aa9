/* Copyright 2026 The dualserve Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// dualserve: serving engine, workload bench, rollout harness and math checks.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dualserve/config.h"
#include "dualserve/rollout.h"
#include "dualserve/runner.h"
#include "dualserve/server.h"
#include "dualserve/testing/mathcheck.h"
#include "dualserve/workload.h"

namespace {

using namespace dualserve;

struct EngineFlags {
  std::string config_path;
  std::string clock;
  std::optional<std::uint32_t> max_running;
  std::optional<std::uint32_t> prefill_chunk;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "engine config file (JSON)")->check(CLI::ExistingFile);
    app->add_option("--clock", clock, "engine clock")->check(CLI::IsMember({"sim", "wall"}));
    app->add_option("--max-running", max_running, "concurrent decoding requests")->check(CLI::PositiveNumber);
    app->add_option("--prefill-chunk", prefill_chunk, "prefill chunk size in key-units")
        ->check(CLI::PositiveNumber);
  }

  // config file < ENGINE_* environment < flags
  AppConfig resolve() const {
    AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);
    cfg = apply_env_overrides(cfg, process_env());
    if (!clock.empty()) cfg.engine.scheduler.clock = clock == "wall" ? ClockKind::kWall : ClockKind::kSimulated;
    if (max_running) cfg.engine.scheduler.max_running = *max_running;
    if (prefill_chunk) cfg.engine.scheduler.prefill_chunk_units = *prefill_chunk;
    cfg.validate();
    return cfg;
  }
};

int run_serve(const EngineFlags& flags, const std::string& listen_flag) {
  AppConfig cfg = flags.resolve();
  if (!listen_flag.empty()) cfg.server.listen = listen_flag;
  const auto [host, port] = parse_listen(cfg.server.listen);

  // Signals are taken synchronously by the main thread; every other thread
  // inherits the blocked mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  EngineRunner runner(cfg.engine, cfg.server.stats_window);
  HttpServer server(cfg, runner);
  const int bound = server.start(host, port);
  std::cerr << "dualserve listening on " << host << ':' << bound << " (clock "
            << (cfg.engine.scheduler.clock == ClockKind::kWall ? "wall" : "sim") << ")\n";
  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "signal " << sig << ", shutting down\n";
  server.stop();
  runner.stop();
  return 0;
}

int run_bench(const EngineFlags& flags, const std::string& spec_path, const std::string& out_dir,
              const std::string& endpoint, std::uint32_t concurrency, double time_scale) {
  const AppConfig cfg = flags.resolve();
  const auto spec = bench::load_spec(spec_path);
  const auto report = endpoint.empty()
                          ? bench::run_in_process(spec, cfg.engine)
                          : bench::run_remote(spec, endpoint, cfg.engine.codebooks, concurrency, time_scale);
  bench::write_report(report, out_dir);
  const auto j = bench::report_json(report);
  std::cout << "requests " << j["requests"] << "  completed " << j["completed"] << "  failed " << j["failed"]
            << "\nhit_rate " << j["hit_rate"] << "\nttfa_ms p50 " << j["ttfa_ms"]["p50"] << "  p99 "
            << j["ttfa_ms"]["p99"] << "\nrtf mean " << j["rtf"]["mean"] << "  max " << j["rtf"]["max"]
            << "\ntokens_per_s " << j["tokens_per_s"] << "  saturated " << j["saturated_tokens_per_s"]
            << "\nwrote " << out_dir << "/report.csv and " << out_dir << "/report.json\n";
  return report.failed == 0 ? 0 : 3;
}

int run_rollout(const EngineFlags& flags, const std::string& prompt_path, rollout::HarnessOptions opts,
                const std::string& out_path, const std::string& endpoint) {
  const AppConfig cfg = flags.resolve();
  opts.reward = cfg.reward;
  const auto prompts = rollout::load_prompts(prompt_path);
  std::unique_ptr<rollout::GenerationBackend> backend;
  if (endpoint.empty()) {
    backend = std::make_unique<rollout::EngineBackend>(cfg.engine);
  } else {
    backend = std::make_unique<rollout::RemoteBackend>(endpoint, cfg.engine.codebooks);
  }
  const auto report = rollout::run_harness(*backend, prompts, opts);
  const auto j = rollout::report_json(report);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << j.dump(2) << '\n';
  std::cout << "steps " << j["summary"]["steps"] << "  mean reward " << j["summary"]["mean_reward"]
            << "  sentinels " << j["summary"]["sentinels"] << "\ncache hits " << j["cache"]["hits"] << " / "
            << j["cache"]["lookups"] << "  spot-check mismatches " << j["cache"]["spot_mismatches"] << "\nwrote "
            << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualserve: streaming speech-token serving engine"};
  app.require_subcommand(1);

  EngineFlags serve_flags;
  std::string listen;
  auto* serve = app.add_subcommand("serve", "run the HTTP server");
  serve->add_option("--listen", listen, "host:port (default from config)");
  serve_flags.add_to(serve);

  auto* bench = app.add_subcommand("bench", "workload benchmark");
  bench->require_subcommand(1);
  auto* bench_run = bench->add_subcommand("run", "run a workload spec and write report.csv / report.json");
  EngineFlags bench_flags;
  std::string spec_path, out_dir = "report", endpoint;
  std::uint32_t concurrency = 16;
  double time_scale = 1.0;
  bench_run->add_option("--spec", spec_path, "workload spec (JSON)")->required()->check(CLI::ExistingFile);
  bench_run->add_option("--out", out_dir, "output directory")->capture_default_str();
  bench_run->add_option("--endpoint", endpoint, "drive a running server at host:port instead of an in-process engine");
  bench_run->add_option("--concurrency", concurrency, "connections for --endpoint")->capture_default_str()->check(CLI::PositiveNumber);
  bench_run->add_option("--time-scale", time_scale, "wall seconds per workload second for --endpoint")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  bench_flags.add_to(bench_run);

  auto* ro = app.add_subcommand("rollout", "group rollouts with decoupled reward scoring");
  ro->require_subcommand(1);
  auto* ro_run = ro->add_subcommand("run", "run the rollout loop and write a JSON report");
  EngineFlags ro_flags;
  rollout::HarnessOptions ro_opts;
  std::string prompt_path, ro_out = "rollout_report.json", ro_endpoint;
  ro_run->add_option("--prompt", prompt_path, "prompt file, one rich transcript per line")
      ->required()
      ->check(CLI::ExistingFile);
  ro_run->add_option("-G,--G", ro_opts.group_size, "candidates per group")->capture_default_str()->check(CLI::Range(2u, 4096u));
  ro_run->add_option("--workers", ro_opts.workers, "scoring workers")->capture_default_str()->check(CLI::Range(1u, 1024u));
  ro_run->add_option("--steps", ro_opts.steps, "rollout steps")->capture_default_str()->check(CLI::PositiveNumber);
  ro_run->add_option("--seed", ro_opts.seed, "base sampling seed")->capture_default_str();
  ro_run->add_option("--seed-period", ro_opts.seed_period, "reuse seeds every n steps (0: never)")->capture_default_str();
  ro_run->add_option("--max-frames", ro_opts.max_frames, "frame cap per candidate")->capture_default_str()->check(CLI::PositiveNumber);
  ro_run->add_flag("--candidates", ro_opts.include_candidates, "include every scored candidate in the report");
  ro_run->add_option("--endpoint", ro_endpoint, "generate through a running server at host:port");
  ro_run->add_option("--out", ro_out, "report path")->capture_default_str();
  ro_flags.add_to(ro_run);

  auto* mc = app.add_subcommand("mathcheck", "compare every loss/reward kernel with its naive oracle");
  testing::MathcheckOptions mc_opts;
  mc->add_option("--cases", mc_opts.cases, "random cases per kernel")->capture_default_str()->check(CLI::PositiveNumber);
  mc->add_option("--seed", mc_opts.seed, "random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve->parsed()) return run_serve(serve_flags, listen);
    if (bench_run->parsed()) return run_bench(bench_flags, spec_path, out_dir, endpoint, concurrency, time_scale);
    if (ro_run->parsed()) return run_rollout(ro_flags, prompt_path, ro_opts, ro_out, ro_endpoint);
    if (mc->parsed()) {
      const auto rows = testing::run_mathcheck(mc_opts);
      testing::print_table(rows, std::cout);
      return testing::all_passed(rows) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
