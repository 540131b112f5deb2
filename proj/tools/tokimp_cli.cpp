// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Talks to the engine only through tokimp.h.
//
// Exit codes: 0 ok, 2 usage, 3 io, 4 input data (parse, validation,
// schema, dimension, empty), 5 config, 6 check failed, 7 other.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tokimp.h"

namespace {

enum Exit { kOk = 0, kUsage = 2, kIo = 3, kData = 4, kConfig = 5, kCheckFailed = 6, kOther = 7 };

struct CliError {
  int code;
  std::string category;
  std::string message;
};

int exit_code_for(tki_status s) {
  switch (s) {
    case TKI_OK: return kOk;
    case TKI_E_USAGE:
    case TKI_E_INVALID_INPUT: return kUsage;
    case TKI_E_IO: return kIo;
    case TKI_E_PARSE:
    case TKI_E_VALIDATION:
    case TKI_E_SCHEMA:
    case TKI_E_DIMENSION:
    case TKI_E_EMPTY_INPUT:
    case TKI_E_EMPTY_SELECTION: return kData;
    case TKI_E_CONFIG: return kConfig;
    default: return kOther;
  }
}

void check(tki_status s) {
  if (s != TKI_OK) throw CliError{exit_code_for(s), tki_status_name(s), tki_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw CliError{kUsage, "usage", msg}; }

struct AnalysisDeleter {
  void operator()(tki_analysis* a) const { tki_analysis_free(a); }
};
using AnalysisPtr = std::unique_ptr<tki_analysis, AnalysisDeleter>;

std::string default_out_dir() {
  const char* env = std::getenv("TOKIMP_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

tki_thresholds parse_thresholds(const std::string& text) {
  if (text == "median") return {1, 0.0, 0.0};
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) == 0) {
    const auto body = text.substr(prefix.size());
    const auto comma = body.find(',');
    if (comma != std::string::npos) {
      try {
        std::size_t a = 0, b = 0;
        const double th = std::stod(body.substr(0, comma), &a);
        const double td = std::stod(body.substr(comma + 1), &b);
        if (a == comma && b == body.size() - comma - 1 && th >= 0 && th <= 1 && td >= 0 &&
            td <= 1) {
          return {0, th, td};
        }
      } catch (const std::exception&) {
      }
    }
  }
  usage_error("--thresholds expects 'median' or 'fixed:TAU_H,TAU_D' with values in [0,1]");
}

void check_rho(double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) usage_error("--rho must lie in (0, 1]");
}

std::uint64_t effective_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::vector<AnalysisPtr> load_and_analyze(const std::string& path, bool by_rollout,
                                          tki_thresholds th) {
  tki_reader* raw = nullptr;
  check(tki_reader_open(path.c_str(), by_rollout ? 1 : 0, &raw));
  std::unique_ptr<tki_reader, decltype(&tki_reader_free)> reader(raw, tki_reader_free);
  std::vector<AnalysisPtr> out;
  for (;;) {
    tki_batch* batch = nullptr;
    check(tki_reader_next(reader.get(), &batch));
    if (batch == nullptr) break;
    std::unique_ptr<tki_batch, decltype(&tki_batch_free)> owned(batch, tki_batch_free);
    tki_analysis* a = nullptr;
    check(tki_analyze(batch, th, &a));
    out.emplace_back(a);
  }
  if (out.empty()) throw CliError{kData, "empty_input", path + " contains no records"};
  return out;
}

std::vector<const tki_analysis*> views(const std::vector<AnalysisPtr>& v) {
  std::vector<const tki_analysis*> out;
  for (const auto& a : v) out.push_back(a.get());
  return out;
}

tki_strategy parse_strategy_or_usage(const std::string& name) {
  tki_strategy s{};
  if (tki_strategy_parse(name.c_str(), &s) != TKI_OK) usage_error(tki_last_error());
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token-importance analysis for on-policy distillation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tki_version()));

  std::string records;
  std::string thresholds = "median";
  std::string out;
  std::string batch_by;
  std::vector<std::string> strategies;
  std::string strategy;
  double rho = 0.5;
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::size_t seeds = 100;

  auto* analyze = app.add_subcommand("analyze", "Score records and write a report");
  analyze->add_option("records", records, "Record file")->required();
  analyze->add_option("--thresholds", thresholds, "median | fixed:TAU_H,TAU_D");
  analyze->add_option("--out", out, "Report directory (default $TOKIMP_OUT_DIR or .)");
  analyze->add_option("--batch-by", batch_by, "rollout_id to normalize per rollout");
  analyze->add_option("--select", strategies, "Strategies to add as selection columns");
  analyze->add_option("--rho", rho, "Retention ratio for --select");
  analyze->add_option("--seed", seed, "Seed for entropy-sample");

  auto* sel = app.add_subcommand("select", "Build selection masks");
  sel->add_option("records", records, "Record file")->required();
  sel->add_option("--strategy", strategy,
                  "entropy-sample | softor-topk | q3-topk | div-topk | softor-bottomk")
      ->required();
  sel->add_option("--rho", rho, "Retention ratio in (0, 1]")->required();
  sel->add_option("--seed", seed, "Seed for entropy-sample (random if omitted)");
  sel->add_option("--out", out, "Mask file (default $TOKIMP_OUT_DIR/masks.jsonl)");
  sel->add_option("--batch-by", batch_by, "rollout_id to select per rollout");

  auto* simulate = app.add_subcommand("simulate", "Run the toy distillation simulator");
  simulate->add_option("--config", config_path, "key = value config file")->required();
  simulate->add_option("--out", out, "CSV path (stdout if omitted)");

  auto* oracle = app.add_subcommand("oracle-check", "Run the descent-bound self-checks");
  oracle->add_option("--seeds", seeds, "Random instances per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (!batch_by.empty() && batch_by != "rollout_id") {
      usage_error("--batch-by only supports rollout_id");
    }
    const bool by_rollout = !batch_by.empty();

    if (*analyze) {
      const auto th = parse_thresholds(thresholds);
      std::vector<tki_strategy> chosen;
      for (const auto& s : strategies) chosen.push_back(parse_strategy_or_usage(s));
      if (!chosen.empty()) check_rho(rho);
      const auto seed_used = effective_seed(seed);
      auto analyses = load_and_analyze(records, by_rollout, th);
      for (auto& a : analyses) {
        for (auto s : chosen) check(tki_analysis_select(a.get(), s, rho, seed_used, nullptr));
      }
      const std::string dir = out.empty() ? default_out_dir() : out;
      const auto v = views(analyses);
      check(tki_report_write(v.data(), v.size(), dir.c_str()));
      std::cout << "wrote " << dir << "/metrics.csv and " << dir << "/summary.json ("
                << analyses.size() << " batch" << (analyses.size() == 1 ? "" : "es");
      if (std::find(chosen.begin(), chosen.end(), TKI_ENTROPY_SAMPLE) != chosen.end()) {
        std::cout << ", seed " << seed_used;
      }
      std::cout << ")\n";
    } else if (*sel) {
      const auto s = parse_strategy_or_usage(strategy);
      check_rho(rho);
      const auto seed_used = effective_seed(seed);
      auto analyses = load_and_analyze(records, by_rollout, {1, 0.0, 0.0});
      std::size_t retained = 0, total = 0;
      for (auto& a : analyses) {
        std::size_t idx = 0, len = 0;
        check(tki_analysis_select(a.get(), s, rho, seed_used, &idx));
        check(tki_analysis_mask(a.get(), idx, nullptr, 0, &len));
        retained += len;
        total += tki_analysis_size(a.get());
      }
      const std::string path = out.empty() ? default_out_dir() + "/masks.jsonl" : out;
      const auto v = views(analyses);
      check(tki_masks_write(v.data(), v.size(), path.c_str()));
      std::cout << "wrote " << path << ": " << tki_strategy_name(s) << " retained " << retained
                << "/" << total;
      if (s == TKI_ENTROPY_SAMPLE) std::cout << " (seed " << seed_used << ")";
      std::cout << "\n";
    } else if (*simulate) {
      std::ifstream in(config_path);
      if (!in) throw CliError{kIo, "io", "cannot open " + config_path};
      std::stringstream text;
      text << in.rdbuf();
      char* csv = nullptr;
      check(tki_simulate(text.str().c_str(), &csv));
      std::unique_ptr<char, decltype(&tki_string_free)> owned(csv, tki_string_free);
      if (out.empty()) {
        std::cout << csv;
      } else {
        const std::string tmp = out + ".tmp";
        {
          std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
          if (!(f << csv)) throw CliError{kIo, "io", "cannot write " + out};
        }
        if (std::rename(tmp.c_str(), out.c_str()) != 0) {
          throw CliError{kIo, "io", "cannot rename into " + out};
        }
      }
    } else if (*oracle) {
      if (seeds == 0) usage_error("--seeds must be positive");
      char* report = nullptr;
      int passed = 0;
      check(tki_oracle_check(seeds, &report, &passed));
      std::unique_ptr<char, decltype(&tki_string_free)> owned(report, tki_string_free);
      std::cout << report;
      if (!passed) return kCheckFailed;
    }
  } catch (const CliError& e) {
    std::cerr << "error[" << e.category << "]: " << e.message << "\n";
    return e.code;
  }
  return kOk;
}
