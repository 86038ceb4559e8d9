#include "rtd/cli/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rtd/analysis/analysis.hpp"
#include "rtd/core/runtime.hpp"
#include "rtd/data/synthetic.hpp"
#include "rtd/sampling/sampling.hpp"
#include "rtd/train/trainer.hpp"

namespace fs = std::filesystem;

namespace rtd::cli {

namespace {

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": cannot parse '" + item + "' as a number");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

// Writes `text` to out_dir/name when out_dir is set.
void emit(const std::string& out_dir, const std::string& name, const std::string& text) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / name);
  if (!f) throw DataError("cannot write " + (fs::path(out_dir) / name).string());
  f << text;
}

struct HeldoutInput {
  std::unique_ptr<model::ModelPair> models;
  train::LoadedCheckpoint ck;
  std::vector<data::Batch> batches;
};

HeldoutInput open_checkpoint(const std::string& checkpoint, const std::string& heldout, std::size_t max_batches) {
  if (!fs::exists(checkpoint)) throw DataError("checkpoint not found: " + checkpoint);
  HeldoutInput in;
  in.ck = train::load_checkpoint(checkpoint);
  in.models = train::models_from_checkpoint(in.ck);
  const auto& cfg = in.ck.config;
  std::vector<std::vector<TokenId>> seqs;
  if (!heldout.empty()) {
    const auto docs = data::read_corpus(heldout);
    seqs = data::prepare_sequences(docs, in.ck.vocab, cfg.data.max_len, cfg.data.mask_frac).sequences;
  } else {
    train::TrainConfig c = cfg;
    if (c.data.corpus.empty()) {
      seqs = train::load_corpora(c, in.ck.vocab).heldout;
    } else {
      throw DataError("--heldout is required for checkpoints trained on a corpus file");
    }
  }
  if (seqs.empty()) throw DataError("heldout set is empty");
  in.batches = analysis::heldout_batches(seqs, cfg.data.batch_size, cfg.data.max_len, max_batches);
  return in;
}

std::vector<train::Scheme> schemes_for(const std::string& s) {
  if (s == "both") return {train::Scheme::kPg, train::Scheme::kPs};
  return {train::parse_scheme(s)};
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  configure_allocator();
  CLI::App app{"Replaced-token-detection pretraining lab with hardness-prediction sampling."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rtdlab 1.0");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Run joint generator / discriminator pretraining from a config file.");
  std::string cfg_path, run_dir, runs_root = "runs", resume_dir;
  std::int64_t stop_after = -1, log_every = 100;
  bool quiet = false;
  pre->add_option("--config", cfg_path, "JSON config file that fully determines the run")->required();
  pre->add_option("--run-dir", run_dir, "Output directory (default: <runs-root>/<hash>-<timestamp>)");
  pre->add_option("--runs-root", runs_root, "Parent directory for generated run directories")->capture_default_str();
  pre->add_option("--resume", resume_dir, "Continue the run in this directory from its newest checkpoint");
  pre->add_option("--stop-after", stop_after, "Stop once this many steps are done (the schedule is unchanged)");
  pre->add_option("--log-every", log_every, "Progress line cadence in steps")->capture_default_str();
  pre->add_flag("--quiet", quiet, "No progress output");

  // analyze
  auto* ana = app.add_subcommand("analyze", "Diagnostics on a trained checkpoint.");
  std::string which, checkpoint, heldout, scheme = "both", out_dir;
  std::uint64_t seed = 7;
  std::size_t max_batches = 0;
  bool use_spearman = false;
  ana->add_option("which", which, "histogram | correlation | accuracy")
      ->required()
      ->check(CLI::IsMember({"histogram", "correlation", "accuracy"}));
  ana->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ana->add_option("--heldout", heldout, "Held-out text, one document per line (default: the config's heldout set)");
  ana->add_option("--scheme", scheme, "Sampling scheme: pg | ps | both")
      ->check(CLI::IsMember({"pg", "ps", "both"}))
      ->capture_default_str();
  ana->add_option("--seed", seed, "Seed for masks and draws")->capture_default_str();
  ana->add_option("--batches", max_batches, "Use at most this many heldout batches (0 = all)")->capture_default_str();
  ana->add_option("--out", out_dir, "Directory for <which>.csv and <which>.txt");
  ana->add_flag("--spearman", use_spearman, "Rank correlation instead of Pearson (correlation only)");

  // variance-oracle
  auto* var = app.add_subcommand("variance-oracle", "Importance-sampling variance of the discriminator-loss estimator.");
  bool synthetic = false;
  std::string pg_s, ld_s, ps_s, v_ckpt, v_heldout, v_out;
  std::size_t n_mc = 100000, positions = analysis::kDefaultVariancePositions;
  std::uint64_t v_seed = 7;
  var->add_flag("--synthetic", synthetic, "Use user-supplied p_g and L_D vectors instead of a checkpoint");
  var->add_option("--pg", pg_s, "Comma-separated p_g (synthetic mode)");
  var->add_option("--ld", ld_s, "Comma-separated L_D, all > 0 (synthetic mode)");
  var->add_option("--ps", ps_s, "Comma-separated proposal to evaluate (synthetic mode, optional)");
  var->add_option("--checkpoint", v_ckpt, "Checkpoint with vocabulary of at most 64 tokens");
  var->add_option("--heldout", v_heldout, "Held-out text (default: the config's heldout set)");
  var->add_option("--positions", positions, "Cap on analyzed masked positions")->capture_default_str();
  var->add_option("--mc", n_mc, "Monte Carlo samples per position (0 disables)")->capture_default_str();
  var->add_option("--seed", v_seed, "Seed")->capture_default_str();
  var->add_option("--out", v_out, "Directory for variance.csv and variance.txt");

  // export-plots
  auto* exp = app.add_subcommand("export-plots", "Plot-ready CSVs from a run directory.");
  std::string e_run, e_out, e_heldout;
  std::uint64_t e_seed = 7;
  bool no_hist = false;
  exp->add_option("--run", e_run, "Run directory written by pretrain")->required();
  exp->add_option("--out", e_out, "Output directory (default: <run>/plots)");
  exp->add_option("--heldout", e_heldout, "Held-out text for the histogram (default: the config's heldout set)");
  exp->add_option("--seed", e_seed, "Seed for the histogram masks")->capture_default_str();
  exp->add_flag("--no-histogram", no_hist, "Only export the accuracy curve");

  // helpers
  auto* mk = app.add_subcommand("make-corpus", "Write a synthetic corpus, one document per line.");
  std::size_t docs = 2000;
  std::uint64_t c_seed = 1;
  bool micro = false;
  std::string c_out;
  mk->add_option("--documents", docs, "Number of documents")->capture_default_str();
  mk->add_option("--seed", c_seed, "Seed")->capture_default_str();
  mk->add_flag("--micro", micro, "Single small topic (vocabulary under 64)");
  mk->add_option("--out", c_out, "Output file")->required();

  auto* bv = app.add_subcommand("build-vocab", "Build a frequency-ranked vocabulary file from a corpus.");
  std::string b_corpus, b_out;
  std::size_t b_size = 8192, b_min = 1;
  bv->add_option("--corpus", b_corpus, "Corpus file")->required();
  bv->add_option("--size", b_size, "Maximum size including special tokens")->capture_default_str();
  bv->add_option("--min-freq", b_min, "Minimum token count")->capture_default_str();
  bv->add_option("--out", b_out, "Output vocab file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*pre) {
      train::TrainConfig cfg = train::load_config(cfg_path);
      train::PretrainOptions opts;
      opts.resume = !resume_dir.empty();
      opts.run_dir = opts.resume ? resume_dir : (run_dir.empty() ? train::default_run_dir(runs_root, cfg) : run_dir);
      if (opts.resume && !fs::is_directory(resume_dir)) throw DataError("resume directory not found: " + resume_dir);
      opts.stop_after = stop_after;
      opts.log = quiet ? nullptr : &out;
      opts.log_every = log_every;
      const auto r = train::pretrain(cfg, opts);
      out << "run " << r.run_dir << "  hash " << r.hash << "  steps " << r.start_step << " -> " << r.end_step << '\n';
      out << "manifest " << r.manifest << '\n';
      return kExitOk;
    }

    if (*ana) {
      auto in = open_checkpoint(checkpoint, heldout, max_batches);
      const auto s = analysis::AnalysisSettings{in.ck.config.data.mask_frac, in.ck.config.data.ngram_max, seed};
      const auto variant = in.ck.config.variant;
      std::ostringstream csv, txt;
      if (which == "histogram") {
        auto pair = analysis::maxprob_histogram(*in.models, in.batches, s);
        std::vector<analysis::HistogramReport> reps;
        for (auto sc : schemes_for(scheme)) reps.push_back(sc == train::Scheme::kPg ? pair.pg : pair.ps);
        analysis::write_histogram_csv(csv, reps);
        analysis::write_histogram_text(txt, reps);
      } else if (which == "correlation") {
        if (variant != model::Variant::kHpLoss) {
          err << "analyze correlation: HP_Loss required (checkpoint variant is " << model::variant_name(variant)
              << ")\n";
          return kExitConfig;
        }
        const auto r = analysis::estimation_correlation(*in.models, in.batches, s, use_spearman);
        analysis::write_correlation_csv(csv, r);
        analysis::write_correlation_text(txt, r);
      } else {
        std::vector<analysis::AccuracyReport> reps;
        for (auto sc : schemes_for(scheme)) reps.push_back(analysis::detection_accuracy(*in.models, in.batches, sc, s));
        analysis::write_accuracy_csv(csv, reps);
        analysis::write_accuracy_text(txt, reps);
      }
      emit(out_dir, which + ".csv", csv.str());
      emit(out_dir, which + ".txt", txt.str());
      out << txt.str();
      return kExitOk;
    }

    if (*var) {
      std::ostringstream csv, txt;
      if (synthetic) {
        if (pg_s.empty() || ld_s.empty()) throw ConfigError("--synthetic needs --pg and --ld");
        sampling::VocabDistribution pg{parse_list(pg_s, "--pg")};
        const auto ld = parse_list(ld_s, "--ld");
        if (ld.size() != pg.size()) throw ConfigError("--pg and --ld differ in length");
        if (pg.size() > analysis::kVarianceVocabLimit) throw ConfigError("vocabulary bound exceeded (max 64 tokens)");
        for (double l : ld)
          if (!(l > 0.0)) throw ConfigError("--ld entries must be positive");
        try {
          pg.validate();
        } catch (const ContractViolation& e) {
          throw ConfigError(std::string("--pg: ") + e.what());
        }
        const auto oracle = sampling::optimal_ps_oracle(pg, ld);
        const double z = sampling::expected_loss(pg, ld);
        const double var_pg = sampling::variance_under_pg(pg, ld);
        const double var_opt = sampling::weighted_variance(pg, oracle, ld);
        txt << "Z=" << num(z) << '\n' << "Var_pg=" << num(var_pg) << '\n' << "Var_opt=" << num(var_opt) << '\n';
        txt << "p_opt=";
        for (std::size_t i = 0; i < oracle.size(); ++i) txt << (i ? "," : "") << num(oracle[i]);
        txt << '\n';
        csv << "token,p_g,L_D,p_opt\n";
        for (std::size_t i = 0; i < pg.size(); ++i)
          csv << i << ',' << num(pg[i]) << ',' << num(ld[i]) << ',' << num(oracle[i]) << '\n';
        if (!ps_s.empty()) {
          sampling::VocabDistribution ps{parse_list(ps_s, "--ps")};
          if (ps.size() != pg.size()) throw ConfigError("--ps and --pg differ in length");
          try {
            ps.validate();
          } catch (const ContractViolation& e) {
            throw ConfigError(std::string("--ps: ") + e.what());
          }
          double var_ps = 0.0;
          try {
            var_ps = sampling::weighted_variance(pg, ps, ld);
          } catch (const sampling::SupportViolation& e) {
            throw ConfigError(std::string("--ps: ") + e.what());
          }
          txt << "Var_ps=" << num(var_ps) << '\n';
          if (n_mc >= 2) {
            Rng rng(v_seed, Stream::kAnalysis, 1);
            const auto e = sampling::estimator_variance(pg, ps, ld, n_mc, rng);
            txt << "MC mean_ps=" << num(e.mc_mean_ps) << " var_ps=" << num(e.mc_var_ps) << " (n=" << n_mc << ")\n";
          }
        }
      } else {
        if (v_ckpt.empty()) throw ConfigError("variance-oracle needs --synthetic or --checkpoint");
        auto in = open_checkpoint(v_ckpt, v_heldout, 0);
        const auto s = analysis::AnalysisSettings{in.ck.config.data.mask_frac, in.ck.config.data.ngram_max, v_seed};
        const auto rows = analysis::variance_report(*in.models, in.batches, s, n_mc, positions);
        analysis::write_variance_csv(csv, rows);
        analysis::write_variance_text(txt, rows);
      }
      emit(v_out, "variance.csv", csv.str());
      emit(v_out, "variance.txt", txt.str());
      out << txt.str();
      return kExitOk;
    }

    if (*exp) {
      const fs::path run(e_run);
      const fs::path dest = e_out.empty() ? run / "plots" : fs::path(e_out);
      const fs::path eval = run / "eval.csv";
      if (!fs::exists(eval)) throw DataError("no eval.csv in " + e_run);
      std::ifstream in(eval);
      std::string line;
      std::getline(in, line);
      std::ostringstream curve;
      curve << "step,accuracy,scheme,position_set\n";
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string step, sc, pos, acc;
        std::getline(ls, step, ',');
        std::getline(ls, sc, ',');
        std::getline(ls, pos, ',');
        std::getline(ls, acc, ',');
        curve << step << ',' << acc << ',' << sc << ',' << pos << '\n';
      }
      emit(dest.string(), "detection_accuracy_curve.csv", curve.str());
      out << "wrote " << (dest / "detection_accuracy_curve.csv").string() << '\n';
      if (!no_hist) {
        const std::string ck = train::latest_checkpoint(e_run);
        if (ck.empty()) throw DataError("no checkpoint in " + e_run);
        auto h = open_checkpoint(ck, e_heldout, 0);
        const auto s = analysis::AnalysisSettings{h.ck.config.data.mask_frac, h.ck.config.data.ngram_max, e_seed};
        auto pair = analysis::maxprob_histogram(*h.models, h.batches, s);
        std::ostringstream hist;
        hist << "bin,fraction,scheme\n";
        for (const auto* r : {&pair.pg, &pair.ps}) {
          for (std::size_t b = 0; b < analysis::kHistogramBins; ++b) {
            char label[16];
            std::snprintf(label, sizeof label, "%.1f-%.1f", b / 10.0, (b + 1) / 10.0);
            hist << label << ',' << num(r->fraction(b)) << ',' << r->scheme << '\n';
          }
        }
        emit(dest.string(), "maxprob_histogram.csv", hist.str());
        out << "wrote " << (dest / "maxprob_histogram.csv").string() << '\n';
      }
      return kExitOk;
    }

    if (*mk) {
      data::SyntheticCorpusConfig sc;
      sc.documents = docs;
      sc.micro = micro;
      const auto lines = data::generate_corpus(sc, c_seed);
      if (auto p = fs::path(c_out).parent_path(); !p.empty()) fs::create_directories(p);
      std::ofstream f(c_out);
      if (!f) throw DataError("cannot write " + c_out);
      for (const auto& l : lines) f << l << '\n';
      out << "wrote " << lines.size() << " documents to " << c_out << '\n';
      return kExitOk;
    }

    if (*bv) {
      const auto docs_in = data::read_corpus(b_corpus);
      const auto v = data::Vocab::build(docs_in, b_size, b_min);
      v.save(b_out);
      out << "wrote " << v.size() << " tokens to " << b_out << '\n';
      return kExitOk;
    }
  } catch (const ConfigHashMismatch& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericFault& e) {
    err << "numeric fault: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace rtd::cli
