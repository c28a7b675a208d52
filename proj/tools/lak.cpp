// Command-line front end: one subcommand per pipeline stage, a flat
// key=value config file, and flag overrides. Precedence: defaults, then
// LAK_SEED from the environment, then the config file, then flags.
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lak/cli.hpp"

namespace {

struct FlagSet {
  std::string config_path;
  std::map<std::string, std::string> values;  // config key -> raw override
  bool blend_after_average = false;
};

void add_run_flags(CLI::App* sub, FlagSet& f) {
  sub->add_option("--config", f.config_path, "key=value config file");
  auto opt = [sub, &f](const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&f, key](const std::string& v) { f.values[key] = v; }, help);
  };
  opt("--data-dir", "data_dir", "directory holding arguments.tsv (+ labels.tsv)");
  opt("--out-dir", "out_dir", "run output directory");
  opt("--folds", "folds", "cross-validation fold count");
  opt("--seed", "seed", "master random seed");
  opt("--gamma", "gamma", "contrastive loss weight");
  opt("--tau-prime", "tau_prime", "contrastive temperature");
  opt("--k", "k", "nearest-neighbor count");
  opt("--tau", "tau", "neighbor-weight temperature");
  opt("--lambda", "lambda", "KNN blend weight");
  opt("--threshold", "threshold", "binarization threshold");
  opt("--jobs", "jobs", "parallel fold workers");
  opt("--attention-scale", "attention_scale", "score divisor: da or sqrt_da");
  opt("--w-mode", "w_mode", "BCE weights: per_label or literal_scalar");
  opt("--epochs", "epochs", "training epochs");
  opt("--batch-size", "batch_size", "mini-batch size");
  opt("--learning-rate", "learning_rate", "optimizer step size");
  opt("--dim", "dim", "hidden dimension d");
  opt("--heads", "heads", "attention head count");
  opt("--enc-layers", "enc_layers", "encoder self-attention layers");
  opt("--vocab-size", "vocab_size", "vocabulary cap");
  opt("--max-len", "max_len", "document truncation length");
  opt("--optimizer", "optimizer", "sgd, momentum, or adam");
  opt("--model-kind", "model_kind", "baseline or multi_attention");
  opt("--patience", "patience", "early-stop patience in epochs");
  sub->add_flag("--blend-after-average", f.blend_after_average,
                "average fold probabilities first, blend KNN once");
}

lak::RunConfig resolve(const FlagSet& f) {
  lak::RunConfig c;
  lak::apply_env_seed(c);
  if (!f.config_path.empty()) lak::apply_config_file(c, f.config_path);
  for (const auto& [key, value] : f.values) lak::apply_config_key(c, key, value);
  if (f.blend_after_average) c.blend_after_average = true;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label-attention multi-label classifier with KNN-augmented inference"};
  app.require_subcommand(1);

  FlagSet ingest_flags, synth_flags, train_flags, store_flags, predict_flags, evaluate_flags,
      ablate_flags;

  CLI::App* ingest = app.add_subcommand("ingest", "parse the TSV pair and print a summary");
  add_run_flags(ingest, ingest_flags);

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic corpus into --data-dir");
  add_run_flags(synth, synth_flags);
  std::size_t synth_size = 200, synth_labels = 20, synth_vocab = 400;
  double synth_rate = 0.15;
  std::string synth_mode = "keyword";
  synth->add_option("--size", synth_size, "number of documents");
  synth->add_option("--num-labels", synth_labels, "number of categories");
  synth->add_option("--synth-vocab", synth_vocab, "filler token pool size");
  synth->add_option("--positive-rate", synth_rate, "per-label positive rate");
  synth->add_option("--mode", synth_mode, "keyword or neighbor-signal");

  CLI::App* train = app.add_subcommand("train", "k-fold training, one checkpoint per fold");
  add_run_flags(train, train_flags);

  CLI::App* store = app.add_subcommand("build-store", "build one datastore per fold checkpoint");
  add_run_flags(store, store_flags);

  CLI::App* predict = app.add_subcommand("predict", "ensemble prediction with optional KNN blend");
  add_run_flags(predict, predict_flags);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score predictions against gold labels");
  add_run_flags(evaluate, evaluate_flags);

  CLI::App* ablate = app.add_subcommand("ablate", "variant grid or parameter sweep");
  add_run_flags(ablate, ablate_flags);
  std::vector<std::uint64_t> ablate_seeds;
  std::vector<double> sweep_gammas, sweep_lambdas, sweep_taus;
  std::vector<std::size_t> sweep_ks;
  ablate->add_option("--seeds", ablate_seeds, "seeds to average over (default 1 2 3)");
  ablate->add_option("--sweep-gamma", sweep_gammas, "gamma grid (enables sweep mode)");
  ablate->add_option("--sweep-lambda", sweep_lambdas, "lambda grid (enables sweep mode)");
  ablate->add_option("--sweep-k", sweep_ks, "k grid (enables sweep mode)");
  ablate->add_option("--sweep-tau", sweep_taus, "tau grid (enables sweep mode)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return lak::cmd_ingest(resolve(ingest_flags), std::cout);
    if (synth->parsed()) {
      const lak::RunConfig c = resolve(synth_flags);
      lak::SynthConfig sc;
      sc.seed = c.train.seed;
      sc.size = synth_size;
      sc.num_labels = synth_labels;
      sc.vocab_size = synth_vocab;
      sc.positive_rate = synth_rate;
      if (synth_mode == "keyword") sc.mode = lak::SynthMode::keyword;
      else if (synth_mode == "neighbor-signal") sc.mode = lak::SynthMode::neighbor_signal;
      else throw lak::ConfigError("unknown synth mode: " + synth_mode);
      return lak::cmd_synth(c, sc, std::cout);
    }
    if (train->parsed()) return lak::cmd_train(resolve(train_flags), std::cout);
    if (store->parsed()) return lak::cmd_build_store(resolve(store_flags), std::cout);
    if (predict->parsed()) return lak::cmd_predict(resolve(predict_flags), std::cout);
    if (evaluate->parsed()) return lak::cmd_evaluate(resolve(evaluate_flags), std::cout);
    if (ablate->parsed())
      return lak::cmd_ablate(resolve(ablate_flags), ablate_seeds, sweep_gammas, sweep_lambdas,
                             sweep_ks, sweep_taus, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
