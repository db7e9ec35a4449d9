// Command-line front end: train, predict, cv, synth, scaling, rank.
// Failures print one line "error: category=<name> message=<text>" on stderr and
// exit with the category's code.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rfvm/rfvm.hpp"

namespace {

struct LabelFlags {
  std::string name = "label";
  std::optional<long> index;
  bool no_header = false;

  rfvm::LabelColumn column() const {
    if (index) return rfvm::Index{*index};
    return name;
  }
};

void add_label_flags(CLI::App* cmd, LabelFlags& f) {
  cmd->add_option("--label", f.name, "Label column name")->capture_default_str();
  cmd->add_option("--label-index", f.index, "Zero-based label column (overrides --label)");
  cmd->add_flag("--no-header", f.no_header, "Input has no header row");
}

void add_hyper_flags(CLI::App* cmd, rfvm::Hyperparams& hp, bool& no_pruning, std::string& v_update) {
  cmd->add_option("--seed", hp.seed, "Random seed")->capture_default_str();
  cmd->add_option("--alpha0-psi", hp.alpha0_psi, "Gamma shape of the RV precisions")->capture_default_str();
  cmd->add_option("--beta0-psi", hp.beta0_psi, "Gamma rate of the RV precisions")->capture_default_str();
  cmd->add_option("--alpha0-delta", hp.alpha0_delta, "Gamma shape of the feature precisions")->capture_default_str();
  cmd->add_option("--beta0-delta", hp.beta0_delta, "Gamma rate of the feature precisions")->capture_default_str();
  cmd->add_option("--alpha0-tau", hp.alpha0_tau, "Gamma shape of the noise precision")->capture_default_str();
  cmd->add_option("--beta0-tau", hp.beta0_tau, "Gamma rate of the noise precision")->capture_default_str();
  cmd->add_option("--prune-v", hp.prune_threshold_v, "Feature pruning threshold, relative to the largest")
      ->capture_default_str();
  cmd->add_option("--prune-a", hp.prune_threshold_a, "RV pruning threshold, relative to the largest")
      ->capture_default_str();
  cmd->add_option("--max-iters", hp.max_iters, "Iteration cap")->capture_default_str();
  cmd->add_option("--conv-window", hp.conv_window, "Convergence window in iterations")->capture_default_str();
  cmd->add_option("--conv-tol", hp.conv_rel_tol, "Relative ELBO tolerance over the window")->capture_default_str();
  cmd->add_option("--warmup", hp.prune_warmup_iters, "Iterations before pruning starts")->capture_default_str();
  cmd->add_flag("--no-pruning", no_pruning, "Disable pruning");
  cmd->add_option("--v-update", v_update, "Relevance factor update: exact, closed-form or guarded")
      ->check(CLI::IsMember({"exact", "closed-form", "guarded"}))
      ->capture_default_str();
}

int fail(rfvm::ErrorCategory c, const std::string& what) {
  std::cerr << "error: category=" << rfvm::category_name(c) << " message=" << what << '\n';
  return rfvm::exit_code(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relevance feature and vector machine: sparse Bayesian classifier for fat data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rfvm 1.0");

  rfvm::Hyperparams hp;
  bool no_pruning = false;
  std::string v_update = "exact";
  LabelFlags lab;

  // train
  rfvm::TrainCommand train;
  std::string trace_path;
  auto* c_train = app.add_subcommand("train", "Fit a model on a labelled CSV");
  c_train->add_option("--data", train.data, "Training CSV")->required();
  c_train->add_option("--model", train.model_out, "Output model JSON")->required();
  c_train->add_option("--trace", trace_path, "Per-iteration trace CSV");
  add_label_flags(c_train, lab);
  add_hyper_flags(c_train, hp, no_pruning, v_update);

  // predict
  rfvm::PredictCommand pred;
  bool pred_labelled = false;
  auto* c_pred = app.add_subcommand("predict", "Class probabilities for the rows of a CSV");
  c_pred->add_option("--model", pred.model, "Model JSON")->required();
  c_pred->add_option("--data", pred.data, "Input CSV")->required();
  c_pred->add_option("--out", pred.out, "Output CSV (row_index,proba,label)")->required();
  c_pred->add_option("--threshold", pred.threshold, "Decision threshold on the probability")->capture_default_str();
  c_pred->add_flag("--labelled", pred_labelled, "Input carries a label column, which is dropped and scored");
  add_label_flags(c_pred, lab);

  // cv
  rfvm::CvCommand cv;
  std::string cv_out;
  bool unstratified = false;
  auto* c_cv = app.add_subcommand("cv", "k-fold cross-validation");
  c_cv->add_option("--data", cv.data, "Labelled CSV")->required();
  c_cv->add_option("-k,--folds", cv.k, "Number of folds")->capture_default_str();
  c_cv->add_flag("--unstratified", unstratified, "Plain random folds");
  c_cv->add_option("--out", cv_out, "Per-fold report CSV");
  add_label_flags(c_cv, lab);
  add_hyper_flags(c_cv, hp, no_pruning, v_update);

  // synth
  rfvm::SynthCommand syn;
  auto* c_syn = app.add_subcommand("synth", "Generate a synthetic fat-data set");
  c_syn->add_option("-n,--n", syn.n, "Rows")->capture_default_str();
  c_syn->add_option("-d,--d", syn.d, "Columns")->capture_default_str();
  c_syn->add_option("--frac", syn.frac, "Fraction of informative columns")->capture_default_str();
  c_syn->add_option("--separation", syn.separation, "Class mean separation of informative columns")
      ->capture_default_str();
  c_syn->add_option("--seed", syn.seed, "Random seed")->capture_default_str();
  c_syn->add_option("--out", syn.out, "Output CSV; informative indices go to <stem>.informative.csv")->required();

  // scaling
  rfvm::ScalingCommand sc;
  std::string sc_out;
  auto* c_sc = app.add_subcommand("scaling", "Fit time versus number of features");
  c_sc->add_option("-n,--n", sc.n, "Rows")->capture_default_str();
  c_sc->add_option("--d-list", sc.d_list, "Ascending feature counts")->delimiter(',')->capture_default_str();
  c_sc->add_option("--repeats", sc.repeats, "Fits per feature count")->capture_default_str();
  c_sc->add_option("--frac", sc.frac, "Fraction of informative columns")->capture_default_str();
  c_sc->add_option("--out", sc_out, "Report CSV");
  add_hyper_flags(c_sc, hp, no_pruning, v_update);

  // rank
  rfvm::RankCommand rk;
  auto* c_rk = app.add_subcommand("rank", "Features ordered by signed weight");
  c_rk->add_option("--model", rk.model, "Model JSON")->required();
  c_rk->add_option("--top-k", rk.top_k, "Features per sign")->capture_default_str();
  c_rk->add_option("--out", rk.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(rfvm::ErrorCategory::usage, e.what());
  }

  try {
    hp.pruning = !no_pruning;
    hp.v_rule = rfvm::parse_v_rule(v_update);
    if (c_train->parsed()) {
      train.label = lab.column();
      train.header = !lab.no_header;
      train.hp = hp;
      if (!trace_path.empty()) train.trace_out = trace_path;
      const auto res = rfvm::cmd_train(train);
      for (const auto& w : res.report.warnings) std::cerr << "warning: " << w << '\n';
      std::printf("iterations=%ld converged=%d elbo=%.10g features=%ld rvs=%ld\n", res.report.iterations_run,
                  res.report.converged ? 1 : 0, res.report.final_elbo,
                  static_cast<long>(res.model.n_active_features()), static_cast<long>(res.model.n_active_rvs()));
    } else if (c_pred->parsed()) {
      if (pred_labelled || c_pred->count("--label") > 0 || lab.index) pred.label = lab.column();
      pred.header = !lab.no_header;
      const auto res = rfvm::cmd_predict(pred);
      std::printf("rows=%ld", static_cast<long>(res.proba.size()));
      if (res.accuracy) std::printf(" accuracy=%.6f", *res.accuracy);
      std::printf("\n");
    } else if (c_cv->parsed()) {
      cv.label = lab.column();
      cv.header = !lab.no_header;
      cv.stratified = !unstratified;
      cv.hp = hp;
      if (!cv_out.empty()) cv.out = cv_out;
      const auto r = rfvm::cmd_cv(cv);
      std::printf("folds=%zu stratified=%d\n", r.folds.size(), r.stratified ? 1 : 0);
      std::printf("accuracy=%.6f +- %.6f\n", r.accuracy.mean, r.accuracy.std);
      std::printf("pct_features=%.6f +- %.6f\n", r.pct_features.mean, r.pct_features.std);
      std::printf("pct_rvs=%.6f +- %.6f\n", r.pct_rvs.mean, r.pct_rvs.std);
    } else if (c_syn->parsed()) {
      const auto s = rfvm::cmd_synth(syn);
      std::printf("rows=%ld columns=%ld informative=%zu sidecar=%s\n", static_cast<long>(s.data.n_samples()),
                  static_cast<long>(s.data.n_features()), s.informative.size(),
                  rfvm::informative_sidecar_path(syn.out).string().c_str());
    } else if (c_sc->parsed()) {
      sc.hp = hp;
      if (!sc_out.empty()) sc.out = sc_out;
      const auto r = rfvm::cmd_scaling(sc, [](rfvm::Index d, int rep, double s) {
        std::fprintf(stderr, "d=%ld repeat=%d seconds=%.3f\n", static_cast<long>(d), rep, s);
      });
      for (const auto& row : r.rows) {
        std::printf("d=%ld mean_seconds=%.6f std_seconds=%.6f\n", static_cast<long>(row.d), row.seconds.mean,
                    row.seconds.std);
      }
      if (r.slope) std::printf("slope=%.6f\n", *r.slope);
      else std::printf("slope=\n");
    } else if (c_rk->parsed()) {
      const auto r = rfvm::cmd_rank(rk);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::printf("positive=%zu negative=%zu\n", r.positive.size(), r.negative.size());
    }
  } catch (const rfvm::Error& e) {
    return fail(e.category(), e.what());
  } catch (const std::bad_alloc&) {
    return fail(rfvm::ErrorCategory::numeric, "out of memory");
  } catch (const std::exception& e) {
    return fail(rfvm::ErrorCategory::usage, e.what());
  }
  return 0;
}
