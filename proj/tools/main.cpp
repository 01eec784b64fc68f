// lmk: command-line driver for synthetic data generation, both training
// stages, the end-to-end ablation and every evaluation report.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "commands.hpp"
#include "lmk/errors.hpp"
#include "lmk/report.hpp"

namespace fs = std::filesystem;
using namespace lmk;
using namespace lmk::cli;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

fs::path default_out(const std::string& command) {
  const char* root = std::getenv("LMK_OUT_ROOT");
  return fs::path(root && *root ? root : "runs") / command;
}

int run(std::vector<std::string> args, const std::optional<fs::path>& out_override);

int dispatch(const Options& opt) {
  nlohmann::json record{{"command", opt.command}, {"argv", opt.argv}, {"config_path", opt.config_path},
                        {"out", opt.out.string()}, {"started", utc_now()}};
  int code = kExitOk;
  std::string error;
  try {
    const ExperimentConfig cfg = resolve_config(opt);
    record["config_hash"] = config_hash(cfg.to_json());
    record["seed"] = cfg.seed;
    record["config"] = cfg.to_json();
    fs::create_directories(opt.out);
    if (opt.command == "synth") code = cmd_synth(opt, cfg);
    else if (opt.command == "pretrain") code = cmd_pretrain(opt, cfg);
    else if (opt.command == "train") code = cmd_train(opt, cfg);
    else if (opt.command == "e2e") code = cmd_e2e(opt, cfg);
    else if (opt.command == "acc-curve") code = cmd_acc_curve(opt, cfg);
    else if (opt.command == "eval") code = cmd_eval(opt, cfg);
    else if (opt.command == "ablate") code = cmd_ablate(opt, cfg);
  } catch (const UsageError& e) {
    code = kExitUsage;
    error = e.what();
  } catch (const ConfigError& e) {
    code = kExitUsage;
    error = e.what();
  } catch (const DataError& e) {
    code = kExitData;
    error = e.what();
  } catch (const SamplingError& e) {
    code = kExitData;
    error = e.what();
  } catch (const NumericError& e) {
    code = kExitNumeric;
    error = e.what();
  } catch (const std::exception& e) {
    code = 1;
    error = e.what();
  }
  if (!error.empty()) std::cerr << "lmk " << opt.command << ": " << error << "\n";
  record["finished"] = utc_now();
  record["exit_code"] = code;
  if (!error.empty()) record["error"] = error;
  if (code != kExitUsage || fs::exists(opt.out)) {
    try {
      append_jsonl(opt.out / "run.jsonl", record);
    } catch (const std::exception&) {
    }
  }
  return code;
}

int replay(const Options& opt) {
  std::ifstream in(opt.manifest);
  if (!in) {
    std::cerr << "lmk replay: cannot read manifest " << opt.manifest << "\n";
    return kExitData;
  }
  std::vector<nlohmann::json> records;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("argv")) {
      std::cerr << "lmk replay: malformed manifest line in " << opt.manifest << "\n";
      return kExitData;
    }
    records.push_back(std::move(j));
  }
  if (records.empty() || opt.entry > records.size()) {
    std::cerr << "lmk replay: manifest " << opt.manifest << " has no entry " << opt.entry << "\n";
    return kExitData;
  }
  const auto& rec = opt.entry == 0 ? records.back() : records[opt.entry - 1];
  auto args = rec["argv"].get<std::vector<std::string>>();
  if (!args.empty() && args[0] == "replay") {
    std::cerr << "lmk replay: refusing to replay a replay\n";
    return kExitUsage;
  }
  std::optional<fs::path> out;
  if (!opt.out.empty()) out = opt.out;
  return run(std::move(args), out);
}

int run(std::vector<std::string> args, const std::optional<fs::path>& out_override) {
  CLI::App app{"Two-step unsupervised landmark discovery: data, training, evaluation"};
  app.require_subcommand(1);
  Options opt;
  std::string out;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config file (desk defaults when omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override the experiment seed");
    sub->add_option("--out", out, "Output directory (default $LMK_OUT_ROOT/<command> or runs/<command>)");
    sub->add_option("--data", opt.data_dir, "Load an exported dataset directory instead of the config source");
  };
  auto* synth = app.add_subcommand("synth", "Generate and export the synthetic figure dataset");
  common(synth);
  synth->add_option("--n", opt.n, "Total number of examples (1/8 val, 1/8 test, rest train)");
  auto* pretrain = app.add_subcommand("pretrain", "Step 1: contrastive pretraining of the feature extractor");
  common(pretrain);
  auto* train = app.add_subcommand("train", "Step 2: landmark head on a frozen feature extractor");
  common(train);
  train->add_option("--features", opt.features, "Step-1 checkpoint");
  auto* e2e = app.add_subcommand("e2e", "End-to-end ablation: landmark losses only, all weights trainable");
  common(e2e);
  for (auto* sub : {pretrain, train, e2e}) {
    sub->add_option("--epochs", opt.epochs, "Override the stage's epoch count");
    sub->add_option("--lr", opt.lr, "Override the stage's learning rate");
    sub->add_option("--k-landmarks", opt.k_landmarks, "Override K");
  }
  auto* acc = app.add_subcommand("acc-curve", "Feature-equivariance accuracy curve at a layer tap");
  common(acc);
  acc->add_option("--checkpoint", opt.checkpoint, "Model or feature checkpoint");
  acc->add_option("--layer", opt.layer, "Tap: layer1, layer2, layer3, layer4");
  auto* eval = app.add_subcommand("eval", "Ridge readout evaluation and sample-efficiency sweep");
  common(eval);
  eval->add_option("--checkpoint", opt.checkpoint, "Landmark model checkpoint");
  eval->add_option("--metric", opt.metric, "pck or iod-mse");
  auto* ablate = app.add_subcommand("ablate", "Two-step vs end-to-end comparison table and curves");
  common(ablate);
  ablate->add_option("--two-step", opt.two_step, "Two-step model checkpoint");
  ablate->add_option("--e2e", opt.end_to_end, "End-to-end model checkpoint");
  ablate->add_option("--epochs", opt.epochs, "Override both stages' epoch counts when training here");
  ablate->add_option("--lr", opt.lr, "Override both stages' learning rates when training here");
  ablate->add_option("--k-landmarks", opt.k_landmarks, "Override K");
  auto* rep = app.add_subcommand("replay", "Re-run a command recorded in a run manifest");
  rep->add_option("manifest", opt.manifest, "Path to run.jsonl")->required();
  rep->add_option("--entry", opt.entry, "1-based manifest line (default: last)");
  rep->add_option("--out", out, "Write to this directory instead of the recorded one");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  CLI::App* chosen = app.get_subcommands().front();
  opt.command = chosen->get_name();
  opt.argv = args;
  if (opt.command == "replay") {
    opt.out = out;
    return replay(opt);
  }
  opt.n_given = chosen == synth && synth->count("--n") > 0;
  opt.out = out_override ? *out_override : out.empty() ? default_out(opt.command) : fs::path(out);
  if (out_override) {
    // Keep the recorded argv pointing at where this run actually wrote.
    opt.argv.push_back("--out");
    opt.argv.push_back(out_override->string());
  }
  return dispatch(opt);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args), std::nullopt);
}
