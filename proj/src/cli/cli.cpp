#include "skl/cli.hpp"

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "skl/error.hpp"

namespace skl {

namespace {

int exit_code(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::file_not_found: return 2;
    default: return 1;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Skin-lesion classification pipeline: split, augment, pack, train, eval, explain."};
  app.set_config("--config", "", "INI/TOML file of option defaults; command-line flags win");
  app.require_subcommand(1);

  cli::SplitArgs split;
  auto* s = app.add_subcommand("split", "Stratified train/validation/test assignment");
  s->add_option("--manifest", split.manifest, "Input manifest (JSONL)")->required()->check(CLI::ExistingFile);
  s->add_option("--out", split.out, "Output manifest")->required();
  s->add_option("--train", split.train, "Train fraction")->capture_default_str();
  s->add_option("--val", split.val, "Validation fraction")->capture_default_str();
  s->add_option("--test", split.test, "Test fraction")->capture_default_str();
  s->add_option("--seed", split.seed)->capture_default_str();
  s->add_option("--scope", split.scope, "Only reassign entries currently in these splits")->delimiter(',');

  cli::AugmentArgs augment;
  auto* a = app.add_subcommand("augment", "Seeded augmentation with parent links");
  a->add_option("--manifest", augment.manifest)->required()->check(CLI::ExistingFile);
  a->add_option("--out", augment.out, "Output manifest")->required();
  a->add_option("--output-dir", augment.output_dir, "Where augmented images go (default: <out dir>/augmented)");
  a->add_option("--factor", augment.factor, "Augmented copies per original")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  a->add_option("--seed", augment.seed)->capture_default_str();
  a->add_option("--splits", augment.splits, "Splits to augment")->delimiter(',')->capture_default_str();
  a->add_flag("--paper-order", augment.paper_order, "Augment the unsplit pool; split afterwards");
  a->add_option("--workers", augment.workers)->capture_default_str()->check(CLI::PositiveNumber);
  a->add_option("--pipeline", augment.pipeline, "JSON pipeline spec (default: the six-op table)")
      ->check(CLI::ExistingFile);

  cli::PackArgs pack;
  auto* p = app.add_subcommand("pack", "Write one split into an indexed record pack");
  p->add_option("--manifest", pack.manifest)->required()->check(CLI::ExistingFile);
  p->add_option("--out", pack.out)->required();
  p->add_option("--split", pack.split)->capture_default_str();
  p->add_option("--height", pack.height)->capture_default_str()->check(CLI::Range(1, 65535));
  p->add_option("--width", pack.width)->capture_default_str()->check(CLI::Range(1, 65535));
  p->add_option("--channels", pack.channels)->capture_default_str()->check(CLI::IsMember({1, 3}));
  p->add_option("--seed", pack.seed)->capture_default_str();

  cli::TrainArgs train;
  auto* t = app.add_subcommand("train", "Train or fine-tune a residual network");
  t->add_option("--solver", train.solver, "Solver file (default: the built-in schedule)")->check(CLI::ExistingFile);
  t->add_option("--preset", train.preset)->capture_default_str()->check(
      CLI::IsMember({"resnet-tiny", "resnet-152-shape"}));
  t->add_option("--train-pack", train.train_pack)->check(CLI::ExistingFile);
  t->add_option("--val-pack", train.val_pack)->check(CLI::ExistingFile);
  t->add_option("--out-dir", train.out_dir)->capture_default_str();
  t->add_option("--init", train.init, "Start from this checkpoint (head replaced if classes differ)")
      ->check(CLI::ExistingFile);
  t->add_option("--seed", train.seed)->capture_default_str();
  t->add_option("--max-iter", train.max_iter);
  t->add_option("--stepsize", train.stepsize);
  t->add_option("--test-interval", train.test_interval);
  t->add_option("--base-lr", train.base_lr);
  t->add_option("--num-classes", train.num_classes, "Default: classes listed with the train pack, else 12");
  t->add_option("--height", train.height, "Input height when no pack is given")->capture_default_str();
  t->add_option("--width", train.width, "Input width when no pack is given")->capture_default_str();
  t->add_option("--channels", train.channels, "Input channels when no pack is given")->capture_default_str();
  t->add_flag("--freeze-bn", train.freeze_bn, "Use running batch-norm statistics during training");

  cli::EvalArgs eval;
  auto* e = app.add_subcommand("eval", "One-vs-rest ROC/AUC report");
  e->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--pack", eval.pack)->required()->check(CLI::ExistingFile);
  e->add_option("--out-dir", eval.out_dir)->capture_default_str();
  e->add_flag("--youden", eval.youden, "Pick cut-offs by Youden's J instead of distance to (0, 1)");
  e->add_option("--batch", eval.batch)->capture_default_str()->check(CLI::PositiveNumber);

  cli::ExplainArgs explain;
  auto* x = app.add_subcommand("explain", "GradCAM panels for the most right or wrong examples");
  x->add_option("--checkpoint", explain.checkpoint)->required()->check(CLI::ExistingFile);
  x->add_option("--pack", explain.pack)->required()->check(CLI::ExistingFile);
  x->add_option("--out-dir", explain.out_dir)->capture_default_str();
  x->add_option("--mode", explain.mode)->capture_default_str()->check(CLI::IsMember({"most-wrong", "most-correct"}));
  x->add_option("--n", explain.n)->capture_default_str();
  x->add_option("--layer", explain.layer, "Conv or block name (default: last block)");
  x->add_option("--target", explain.target, "Explain the predicted or the true class")
      ->capture_default_str()
      ->check(CLI::IsMember({"predicted", "true"}));
  x->add_option("--alpha", explain.alpha)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  x->add_option("--batch", explain.batch)->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) cli::cmd_split(split);
    else if (a->parsed()) cli::cmd_augment(augment);
    else if (p->parsed()) cli::cmd_pack(pack);
    else if (t->parsed()) cli::cmd_train(train);
    else if (e->parsed()) cli::cmd_eval(eval);
    else if (x->parsed()) cli::cmd_explain(explain);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code(err.code());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace skl
