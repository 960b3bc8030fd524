// Read-channel laboratory CLI: dataset generation, equalizer training and
// evaluation, run comparison, and the preset studies.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tdmr/config.hpp"
#include "tdmr/experiment.hpp"
#include "tdmr/sector_io.hpp"
#include "tdmr/training.hpp"
#include "tdmr/version.hpp"

namespace {

int cmd_gen(const tdmr::GenConfig& config, const std::filesystem::path& out) {
  const tdmr::GenReport report = tdmr::generate_dataset(out, config);
  std::cout << "wrote " << report.files.size() << " sectors to " << out.string() << "\n"
            << "  pw50/T=" << report.params.pw50_over_t
            << " jitter=" << report.params.jitter_sigma
            << " awgn_sigma=" << report.params.awgn_sigma << "\n"
            << "  mean raw BER=" << report.mean_raw_ber << "\n";
  return 0;
}

int cmd_train(const std::filesystem::path& config_file, const std::filesystem::path& data_dir,
              bool gen_missing) {
  tdmr::ExperimentConfig config = tdmr::ExperimentConfig::from_file(config_file);
  std::filesystem::path data = data_dir.empty() ? config.out_dir / "data" : data_dir;
  if (!std::filesystem::exists(data / "gen.json")) {
    if (!gen_missing) {
      std::cerr << "error: no sector archive at " << data.string() << " (pass --gen)\n";
      return 2;
    }
    tdmr::generate_dataset(data, config.channel);
  }
  const std::vector<tdmr::Sector> sectors = tdmr::load_sector_dir(data);
  const std::uint64_t digest = tdmr::dataset_digest(data);
  const tdmr::RunSummary summary =
      tdmr::run_experiment(config, sectors, sectors, digest, config.out_dir);
  std::cout << "trained " << summary.name << " (" << summary.equalizer << ", "
            << summary.criterion << ")\n"
            << "  final mse=" << summary.final_mse << " ce=" << summary.final_ce
            << " ber=" << summary.final_ber << "\n"
            << "  eval  mse=" << summary.eval_mse << " ce=" << summary.eval_ce
            << " ber=" << summary.eval_ber << "\n"
            << "  summary: " << (config.out_dir / (summary.name + ".summary.json")).string()
            << "\n";
  return 0;
}

int cmd_eval(const std::filesystem::path& checkpoint_file, const std::filesystem::path& data_dir,
             int decision_delay, const std::string& dump_metrics) {
  const tdmr::Checkpoint ckpt = tdmr::load_checkpoint(checkpoint_file);
  const std::vector<tdmr::Sector> sectors = tdmr::load_sector_dir(data_dir);
  tdmr::EvalOptions opts;
  opts.decision_delay = decision_delay;
  const tdmr::EvalResult ev = tdmr::evaluate(ckpt.params, ckpt.target, sectors, opts);
  std::cout << "sectors=" << sectors.size() << " bits=" << ev.bits << "\n"
            << "mse=" << ev.mse << " ce=" << ev.ce << " ber=" << ev.ber << "\n";
  if (!dump_metrics.empty()) {
    // debug dump of detector state metrics over the first sector
    std::vector<double> window(static_cast<std::size_t>(ckpt.params.spec.input_size()));
    const auto& s = sectors.front();
    const int d_in = ckpt.params.spec.d_in();
    const std::size_t n_windows = s.frame.size() - static_cast<std::size_t>(d_in) + 1;
    std::vector<double> y(n_windows);
    for (std::size_t t = 0; t < n_windows; ++t) {
      for (int j = 0; j < d_in; ++j) {
        window[static_cast<std::size_t>(j)] = s.frame.samples[0][t + static_cast<std::size_t>(j)];
        window[static_cast<std::size_t>(d_in + j)] =
            s.frame.samples[1][t + static_cast<std::size_t>(j)];
      }
      y[t] = tdmr::mlp_forward(ckpt.params, window);
    }
    tdmr::DetectorOptions dopts;
    dopts.dump_state_metrics_csv = dump_metrics;
    tdmr::maxlog_llr(tdmr::build_trellis(ckpt.target), y, dopts);
    std::cout << "state metrics written to " << dump_metrics << "\n";
  }
  return 0;
}

int cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b) {
  const tdmr::RunSummary sa = tdmr::RunSummary::read_json(a);
  const tdmr::RunSummary sb = tdmr::RunSummary::read_json(b);
  const tdmr::CompareReport r = tdmr::compare_summaries(sa, sb);
  std::cout << sa.name << ": ber=" << r.ber_a << "\n"
            << sb.name << ": ber=" << r.ber_b << "\n"
            << "relative BER reduction: " << r.rel_reduction * 100.0 << "% (95% CI ["
            << r.ci_lo * 100.0 << "%, " << r.ci_hi * 100.0 << "%])\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-reader TDMR read-channel laboratory"};
  app.set_version_flag("--version", std::string(tdmr::kVersion));
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "synthesize a sector dataset");
  tdmr::GenConfig gen_config;
  std::filesystem::path gen_out = "out/data";
  gen->add_option("--sectors", gen_config.sectors, "number of sectors");
  gen->add_option("--bits", gen_config.bits, "bits per sector");
  gen->add_option("--cts", gen_config.cts_percent, "cross-track separation, % of pitch");
  gen->add_option("--raw-ber", gen_config.raw_ber_target, "target mean raw BER");
  gen->add_option("--awgn-sigma", gen_config.awgn_sigma,
                  "explicit noise sigma (skips calibration)");
  gen->add_option("--pw50", gen_config.pw50_over_t, "PW50 / T");
  gen->add_option("--jitter", gen_config.jitter_sigma, "jitter sigma, fraction of T");
  gen->add_option("--seed", gen_config.seed, "dataset seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train an equalizer per config file");
  std::filesystem::path train_config;
  std::filesystem::path train_data;
  bool train_gen = false;
  train->add_option("--config", train_config, "experiment config (TOML-style)")->required();
  train->add_option("--data", train_data, "sector archive directory");
  train->add_flag("--gen", train_gen, "generate the dataset when missing");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::filesystem::path eval_ckpt, eval_data;
  int eval_delay = -1;
  std::string eval_dump;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint json")->required();
  eval->add_option("--data", eval_data, "sector archive directory")->required();
  eval->add_option("--decision-delay", eval_delay, "sample-to-label delay (default: derived)");
  eval->add_option("--dump-state-metrics", eval_dump,
                   "write detector state metrics CSV for the first sector");

  // compare
  auto* compare = app.add_subcommand("compare", "relative BER reduction between two summaries");
  std::filesystem::path cmp_a, cmp_b;
  compare->add_option("a", cmp_a, "baseline summary json")->required();
  compare->add_option("b", cmp_b, "comparison summary json")->required();

  // preset
  auto* preset = app.add_subcommand("preset", "run a canned study");
  std::string preset_name;
  tdmr::PresetOptions preset_opts;
  preset->add_option("name", preset_name, "table1|table2|table3|fig3|fig4")->required();
  preset->add_option("--sectors", preset_opts.sectors, "desk-scale sector count");
  preset->add_flag("--full", preset_opts.full, "use the 100-sector protocol");
  preset->add_option("--seed", preset_opts.seed, "dataset and training seed");
  preset->add_option("--out", preset_opts.out, "output root");
  preset->add_flag("--assert-orderings", preset_opts.assert_orderings,
                   "exit nonzero when an expected ordering is violated");
  preset->add_option("--bits", preset_opts.bits_override, "override bits per sector");
  preset->add_option("--epochs-cap", preset_opts.epochs_cap, "cap training epochs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(gen_config, gen_out);
    if (*train) return cmd_train(train_config, train_data, train_gen);
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_delay, eval_dump);
    if (*compare) return cmd_compare(cmp_a, cmp_b);
    if (*preset) return tdmr::run_preset(preset_name, preset_opts, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
