#include "commands.hpp"

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "skl/augment.hpp"
#include "skl/explain.hpp"
#include "skl/manifest.hpp"
#include "skl/metrics.hpp"
#include "skl/model/checkpoint.hpp"
#include "skl/model/solver.hpp"
#include "skl/model/trainer.hpp"
#include "skl/pack.hpp"
#include "skl/split.hpp"

namespace skl::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot write " + path.string());
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Errc::io_failure, "cannot create " + dir.string() + ": " + ec.message());
}

std::vector<std::string> pack_class_names(const fs::path& pack, int num_classes) {
  const auto entries = pack_entries_path(pack);
  if (fs::exists(entries)) return read_manifest(entries).class_names;
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) names.push_back("class " + std::to_string(c));
  return names;
}

std::vector<ManifestEntry> pack_entries(const fs::path& pack) {
  const auto entries = pack_entries_path(pack);
  if (!fs::exists(entries)) return {};
  return read_manifest(entries).entries;
}

}  // namespace

fs::path pack_entries_path(const fs::path& pack) { return fs::path(pack.string() + ".entries.jsonl"); }

void cmd_split(const SplitArgs& a) {
  const Manifest m = read_manifest(a.manifest);
  StratifiedSplitOptions opts;
  opts.seed = a.seed;
  opts.fractions = {{Split::train, a.train}, {Split::validation, a.val}};
  if (a.test > 0) opts.fractions.push_back({Split::test, a.test});
  for (const auto& s : a.scope) opts.scope.push_back(parse_split(s));
  Manifest out = stratified_split(m, opts);
  write_manifest(a.out, out);
  std::cout << render_split_table(out);
}

void cmd_augment(const AugmentArgs& a) {
  Manifest m = read_manifest(a.manifest);
  AugmentPipeline pipeline = default_pipeline();
  if (!a.pipeline.empty()) {
    std::ifstream in(a.pipeline);
    if (!in) fail(Errc::file_not_found, "cannot open pipeline spec " + a.pipeline.string());
    try {
      pipeline = pipeline_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::invalid_argument, a.pipeline.string() + ": " + e.what());
    }
  }
  std::vector<Split> splits;
  if (a.paper_order) {
    for (const auto& e : m.entries)
      if (e.split != Split::unassigned)
        fail(Errc::invalid_argument, "--paper-order augments the unsplit pool, but " + e.path + " is already in " +
                                         std::string(to_string(e.split)));
    splits = {Split::unassigned};
  } else {
    for (const auto& s : a.splits) {
      const Split split = parse_split(s);
      if (split == Split::test) fail(Errc::invalid_argument, "the test split is never augmented");
      splits.push_back(split);
    }
  }

  const fs::path out_dir = a.output_dir.empty() ? a.out.parent_path() / "augmented" : a.output_dir;
  ensure_dir(out_dir);
  // the new manifest lives next to `out`; keep entry paths relative to it
  const fs::path base = a.out.parent_path().empty() ? fs::path(".") : a.out.parent_path();
  for (auto& e : m.entries) e.path = fs::relative(fs::absolute(m.resolve(e)), fs::absolute(base)).generic_string();
  m.base_dir = base;

  AugmentCorpusOptions opts;
  opts.factor = a.factor;
  opts.seed = a.seed;
  opts.output_dir = out_dir;
  opts.workers = a.workers;
  for (Split s : splits) {
    opts.split = s;
    m = augment_corpus(m, pipeline, opts);
  }
  write_manifest(a.out, m);
  std::size_t augmented = 0;
  for (const auto& e : m.entries) augmented += e.origin == Origin::augmented;
  std::cout << m.entries.size() << " entries (" << augmented << " augmented)\n";
}

void cmd_pack(const PackArgs& a) {
  const Manifest m = read_manifest(a.manifest);
  PackBuildOptions opts;
  opts.split = parse_split(a.split);
  opts.height = a.height;
  opts.width = a.width;
  opts.channels = a.channels;
  opts.seed = a.seed;
  if (!a.out.parent_path().empty()) ensure_dir(a.out.parent_path());
  const auto result = build_pack(m, opts, a.out);

  Manifest entries;
  entries.class_names = m.class_names;
  entries.provenance = m.provenance;
  entries.provenance.push_back("pack split=" + a.split + " seed=" + std::to_string(a.seed));
  for (auto e : result.order) {
    e.path = fs::absolute(m.resolve(e)).lexically_normal().generic_string();
    entries.entries.push_back(std::move(e));
  }
  write_manifest(pack_entries_path(a.out), entries);
  std::cout << result.header.count << " records, " << result.header.height << "x" << result.header.width << "x"
            << int(result.header.channels) << " -> " << a.out.string() << '\n';
}

void cmd_train(const TrainArgs& a) {
  SolverConfig solver = a.solver.empty() ? SolverConfig{} : read_solver(a.solver);
  if (a.max_iter) solver.max_iter = *a.max_iter;
  if (a.stepsize) solver.stepsize = *a.stepsize;
  if (a.test_interval) solver.test_interval = *a.test_interval;
  if (a.base_lr) solver.base_lr = *a.base_lr;
  // a shortened run keeps the schedule valid by clamping the step
  if (solver.max_iter > 0 && solver.stepsize > solver.max_iter && !a.stepsize) solver.stepsize = solver.max_iter;
  solver.validate();

  std::optional<PackSource> train_set, val_set;
  int height = a.height, width = a.width, channels = a.channels;
  std::optional<int> classes = a.num_classes;
  if (!a.train_pack.empty()) {
    train_set.emplace(PackFile::open(a.train_pack));
    height = train_set->height();
    width = train_set->width();
    channels = train_set->channels();
    if (!classes && fs::exists(pack_entries_path(a.train_pack)))
      classes = int(read_manifest(pack_entries_path(a.train_pack)).class_names.size());
  }
  if (!a.val_pack.empty()) val_set.emplace(PackFile::open(a.val_pack));
  if (solver.max_iter > 0 && !train_set) fail(Errc::invalid_argument, "training needs --train-pack");

  const NetworkConfig cfg = NetworkConfig::preset(a.preset, classes.value_or(12), height, width, channels);
  Network<float> net(cfg);
  if (!a.init.empty()) {
    Checkpoint init = load_checkpoint(a.init);
    if (!(init.config == cfg)) init = replace_head(init, cfg, a.seed);
    load_into(init, net);
    for (const auto& [prefix, value] : init.lr_mult) {
      bool known = false;
      for (const auto& entry : solver.lr_mult) known = known || entry.first == prefix;
      if (!known) solver.set_lr_mult(prefix, value);
    }
  } else {
    net.init_he_uniform(a.seed);
  }

  ensure_dir(a.out_dir);
  write_solver(a.out_dir / "solver.cfg", solver);
  save_checkpoint(a.out_dir / "initial.skck", make_checkpoint<float>(net, 0, nullptr, solver.lr_mult));
  if (solver.max_iter == 0) {
    std::cout << "wrote " << (a.out_dir / "initial.skck").string() << '\n';
    return;
  }

  TrainOptions opts;
  opts.seed = a.seed;
  opts.freeze_bn = a.freeze_bn;
  std::ofstream log(a.out_dir / "train_log.jsonl");
  opts.on_snapshot = [&](const Checkpoint& ckpt, const LogEntry& e) {
    save_checkpoint(a.out_dir / ("iter_" + std::to_string(e.iteration) + ".skck"), ckpt);
    nlohmann::json j{{"iteration", e.iteration}, {"updates", e.updates}, {"lr", e.lr}, {"train_loss", e.train_loss}};
    std::cout << "iter " << e.iteration << "  lr " << e.lr << "  loss " << e.train_loss;
    if (e.validation) {
      j["val_top1"] = e.validation->top1;
      j["val_top5"] = e.validation->top5;
      j["val_loss"] = e.validation->loss;
      std::cout << "  val top-1 " << e.validation->top1 << "  top-5 " << e.validation->top5;
    }
    std::cout << '\n';
    log << j.dump() << '\n' << std::flush;
  };
  const TrainResult result = train(net, solver, *train_set, val_set ? &*val_set : nullptr, opts);
  save_checkpoint(a.out_dir / "final.skck", result.final_state);
  if (result.best) {
    save_checkpoint(a.out_dir / "best.skck", *result.best);
    std::cout << "best snapshot: iteration " << result.best_iteration << '\n';
  }
}

void cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Network<float> net = instantiate<float>(ckpt);
  const PackSource source(PackFile::open(a.pack));
  const Eigen::MatrixXd probs = predict(net, source, 0, a.batch);
  std::vector<int> labels(source.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = source.label(i);
  const auto names = pack_class_names(a.pack, ckpt.config.num_classes);
  if (int(names.size()) != ckpt.config.num_classes)
    fail(Errc::shape_mismatch, "pack lists " + std::to_string(names.size()) + " classes, network has " +
                                   std::to_string(ckpt.config.num_classes));

  const auto report =
      one_vs_rest_report(probs, labels, names, a.youden ? CutoffRule::youden : CutoffRule::closest_to_ideal);
  std::string text = render_report_text(report);
  const int k5 = std::min(5, ckpt.config.num_classes);
  text += "Top-1 accuracy: " + std::to_string(topk_accuracy(probs, labels, 1)) + '\n';
  text += "Top-" + std::to_string(k5) + " accuracy: " + std::to_string(topk_accuracy(probs, labels, k5)) + '\n';
  ensure_dir(a.out_dir);
  write_text(a.out_dir / "report.txt", text);
  write_text(a.out_dir / "report.jsonl", render_report_jsonl(report));
  write_text(a.out_dir / "roc.csv", render_roc_csv(report));
  std::cout << text;
}

void cmd_explain(const ExplainArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Network<float> net = instantiate<float>(ckpt);
  const PackSource source(PackFile::open(a.pack));
  const RankMode mode = parse_rank_mode(a.mode);
  if (a.target != "predicted" && a.target != "true")
    fail(Errc::invalid_argument, "--target must be predicted or true");
  if (!a.layer.empty() && net.layer_kind(a.layer) == LayerKind::unknown)
    fail(Errc::invalid_argument, "unknown layer: " + a.layer);

  const Eigen::MatrixXd probs = predict(net, source, 0, a.batch);
  std::vector<int> labels(source.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = source.label(i);
  auto entries = pack_entries(a.pack);
  if (entries.size() != labels.size()) entries.clear();
  const auto names = pack_class_names(a.pack, ckpt.config.num_classes);
  const auto ranked = rank_examples(probs, labels, entries, mode, a.n);

  ensure_dir(a.out_dir);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& ex = ranked[r];
    const int target = a.target == "predicted" ? ex.predicted : ex.truth;
    const HeatMap map = gradcam(net, source.image(ex.index), target, a.layer);
    const ImageTensor original = source.pack().read_record(ex.index).image;
    const std::string stem = std::to_string(r + 1) + "_record" + std::to_string(ex.index);
    save_image(a.out_dir / (stem + ".png"), overlay(original, map.values, a.alpha));
    write_explanation_sidecar(a.out_dir / (stem + ".json"), ex, map, names);
  }
  std::cout << ranked.size() << " explanations written to " << a.out_dir.string() << '\n';
}

}  // namespace skl::cli
