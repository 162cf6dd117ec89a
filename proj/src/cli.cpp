#include "vxp/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "vxp/data_io.hpp"
#include "vxp/error.hpp"
#include "vxp/retrieval.hpp"
#include "vxp/synthetic.hpp"
#include "vxp/trainer.hpp"

namespace vxp {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// key=value lines; '#' starts a comment. Keys are option names without the
// leading dashes.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Splices the config file's entries in front of the subcommand's own
// arguments, skipping keys that the command line sets explicitly.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a path");
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty()) return args;
  const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
  if (sub == args.end()) return args;
  std::vector<std::string> out(args.begin(), sub + 1);
  for (const auto& [key, value] : read_config_file(path)) {
    if (key == "config") throw UsageError("config files cannot include other config files");
    if (given_on_command_line(args, key)) continue;
    out.push_back("--" + key);
    out.push_back(value);
  }
  out.insert(out.end(), sub + 1, args.end());
  return out;
}

std::string resolved_config(const CLI::App& sub) {
  std::ostringstream o;
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string key = opt->get_lnames().front();
    if (key == "help" || key == "config" || key == "print-config") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    o << key << "=" << value << "\n";
  }
  return o.str();
}

// ---- recall items ------------------------------------------------------------------

struct RecallItem {
  enum Kind { K, OnePercent, Curve } kind = K;
  std::size_t k = 1;
};

std::vector<RecallItem> parse_recall_items(const std::string& text) {
  std::vector<RecallItem> items;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    RecallItem item;
    std::string digits = tok;
    if (tok == "1pct") {
      item.kind = RecallItem::OnePercent;
      items.push_back(item);
      continue;
    }
    if (tok.rfind("curve", 0) == 0) {
      item.kind = RecallItem::Curve;
      digits = tok.substr(5);
    }
    std::size_t k = 0;
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (digits.empty() || res.ec != std::errc() || res.ptr != digits.data() + digits.size() || k == 0)
      throw UsageError("--recall item '" + tok + "' is not a positive K, 1pct or curveN");
    item.k = k;
    items.push_back(item);
  }
  if (items.empty()) throw UsageError("--recall needs at least one item");
  return items;
}

std::string format_k(std::size_t k) { return std::to_string(k); }

// ---- subcommand options -------------------------------------------------------------

struct SynthOptions {
  int scenes = 0;
  std::uint64_t seed = 0;
  std::string out;
  int traversals = 2;
  int heldout = 0;
  SyntheticSceneParams params;
};

struct TrainOptions {
  std::string stage, manifest, calib, out, resume, history;
  ModelConfig model;
  StageConfig cfg;
  std::string local_mode = "depth-scaled";
  std::string projection = "perspective";
};

struct ExtractOptions {
  std::string modality, ckpt, manifest, out;
};

struct IndexOptions {
  std::string db, manifest, out, metric = "l2";
};

struct EvalOptions {
  std::string query, db, query_manifest, db_manifest, protocol = "plain", recall = "1,1pct", out, label, curve_out;
  double radius = constants::kRetrievalRadiusM;
};

struct PlotOptions {
  std::string in, out;
};

void add_common(CLI::App* sub) {
  sub->add_option("--config", "key=value file; command-line flags take precedence");
  sub->add_flag("--print-config", "print the resolved configuration and exit");
}

// ---- subcommand bodies ---------------------------------------------------------------

void run_synth(SynthOptions o, std::ostream& out) {
  o.params.seed = o.seed;
  const auto samples = build_synthetic_dataset(o.params, o.scenes, o.traversals);
  write_synthetic_dataset(o.out, samples, {o.heldout});
  out << "wrote " << samples.size() << " samples to " << o.out << "\n";
}

void run_train(TrainOptions o, std::ostream& out) {
  o.cfg.local_mode = o.local_mode == "normalized" ? LocalLossMode::CollisionNormalized : LocalLossMode::DepthScaled;
  o.cfg.projection = o.projection == "orthographic" ? ProjectionKind::Orthographic : ProjectionKind::Perspective;
  const TrainingData data = load_training_data(o.manifest, o.calib);
  std::optional<Checkpoint> resume;
  ModelConfig model = o.model;
  if (!o.resume.empty()) {
    resume = read_checkpoint(o.resume);
    model = model_config_from(*resume);
  }
  Checkpoint ckpt;
  std::vector<LossRecord> history;
  if (o.stage == "image") {
    o.cfg.stage = Stage::Image;
    std::optional<ImageNetwork> init;
    if (resume) init = image_network_from(*resume);
    const auto r = train_stage_image(data, model, o.cfg, init ? &*init : nullptr);
    ckpt = make_checkpoint(model, &r.net, nullptr);
    history = r.history;
    out << "stage image: epoch loss " << r.epoch_mean_loss.front() << " -> " << r.epoch_mean_loss.back() << "\n";
  } else {
    if (!resume) throw Error(ErrorCode::MissingPrerequisite, "--stage " + o.stage + " needs --resume with a stage-1 checkpoint");
    const ImageNetwork image = image_network_from(*resume);
    if (o.stage == "local") {
      o.cfg.stage = Stage::Local;
      std::optional<PointNetwork> init;
      if (has_point_backbone(*resume)) init = point_network_from(*resume, false);
      const auto r = train_stage_local(data, image, model, o.cfg, init ? &*init : nullptr);
      ckpt = make_checkpoint(model, &image, &r.net);
      history = r.history;
      out << "stage local: loss " << r.initial_loss << " -> " << r.final_loss << ", skipped pairs "
          << r.skipped_pairs << "\n";
    } else {
      o.cfg.stage = Stage::Global;
      const PointNetwork stage2 = point_network_from(*resume, false);
      const auto r = train_stage_global(data, image, stage2, model, o.cfg);
      ckpt = make_checkpoint(model, &image, &r.net);
      history = r.history;
      out << "stage global: loss " << r.initial_loss << " -> " << r.final_loss << ", skipped pairs "
          << r.skipped_pairs << "\n";
    }
  }
  write_checkpoint(o.out, ckpt);
  write_loss_history(o.history.empty() ? o.out + ".loss.csv" : o.history, history);
  out << "wrote " << o.out << "\n";
}

void run_extract(const ExtractOptions& o, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(o.ckpt);
  const auto rows = parse_manifest(o.manifest);
  std::vector<DescriptorRecord> records;
  if (o.modality == "2d") {
    const ImageNetwork net = image_network_from(ckpt);
    for (std::size_t i = 0; i < rows.size(); ++i)
      records.push_back({i, image_descriptor(net, load_image_f32(resolve_manifest_path(o.manifest, rows[i].image_path)))});
  } else {
    const PointNetwork net = point_network_from(ckpt, true);
    for (std::size_t i = 0; i < rows.size(); ++i)
      records.push_back(
          {i, point_descriptor(net, load_point_cloud_bin(resolve_manifest_path(o.manifest, rows[i].cloud_path)))});
  }
  const auto dim = static_cast<std::uint32_t>(records.empty() ? 0 : records.front().values.size());
  write_descriptors(o.out, records, dim);
  out << "wrote " << records.size() << " " << o.modality << " descriptors to " << o.out << "\n";
}

const SampleManifestRow& row_for(const std::vector<SampleManifestRow>& rows, std::uint64_t id,
                                 const std::string& what) {
  if (id >= rows.size())
    throw Error(ErrorCode::MissingKey, what + " descriptor id " + std::to_string(id) + " has no manifest row");
  return rows[static_cast<std::size_t>(id)];
}

std::vector<IndexEntry> entries_from(const std::vector<DescriptorRecord>& records,
                                     const std::vector<SampleManifestRow>& rows, const std::string& what) {
  std::vector<IndexEntry> entries;
  for (const auto& r : records) {
    const auto& row = row_for(rows, r.id, what);
    entries.push_back({r.id, r.values, row.position, row.timestamp_s});
  }
  return entries;
}

void run_index(const IndexOptions& o, std::ostream& out) {
  const auto records = read_descriptors(o.db);
  const auto rows = parse_manifest(o.manifest);
  const auto index = RetrievalIndex::build(entries_from(records, rows, "database"),
                                           o.metric == "l1" ? Metric::L1 : Metric::L2);
  write_file_bytes(o.out, encode_index(index));
  out << "indexed " << index.size() << " entries into " << o.out << "\n";
}

bool is_index_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "VXPI";
}

void run_eval(const EvalOptions& o, const std::vector<RecallItem>& items, std::ostream& out) {
  EvalProtocol protocol;
  protocol.success_radius_m = o.radius;
  protocol.validate();
  const auto query_rows = parse_manifest(o.query_manifest);
  std::vector<Query> queries;
  for (const auto& r : read_descriptors(o.query)) {
    const auto& row = row_for(query_rows, r.id, "query");
    queries.push_back({r.id, r.values, row.position, row.timestamp_s});
  }

  std::vector<SampleManifestRow> db_rows;
  std::optional<RetrievalIndex> index;
  if (is_index_file(o.db)) {
    if (o.protocol == "oxford") throw Error(ErrorCode::MissingKey, "the oxford protocol needs a VXPD database with --db-manifest (run ids)");
    index = decode_index(read_file_bytes(o.db));
  } else {
    if (o.db_manifest.empty()) throw Error(ErrorCode::MissingKey, "a VXPD database needs --db-manifest");
    db_rows = parse_manifest(o.db_manifest);
    index = RetrievalIndex::build(entries_from(read_descriptors(o.db), db_rows, "database"));
  }

  const std::string label = o.label.empty() ? o.protocol : o.label;
  std::vector<RecallRow> rows;
  std::vector<double> curve;

  if (o.protocol == "plain") {
    for (const auto& it : items) {
      if (it.kind == RecallItem::K) rows.push_back({label, format_k(it.k), recall_at_k(queries, *index, protocol, it.k).recall});
      if (it.kind == RecallItem::OnePercent) rows.push_back({label, "1pct", recall_at_one_percent(queries, *index, protocol).recall});
      if (it.kind == RecallItem::Curve) curve = recall_curve(queries, *index, protocol, it.k);
    }
  } else if (o.protocol == "kitti") {
    std::vector<Eigen::Vector3d> trajectory;
    for (const auto& q : queries) trajectory.push_back(q.position);
    std::vector<Query> sampled;
    for (std::size_t i : kitti_sample_queries(trajectory, protocol.sampling_interval_m, protocol.sampling_offset_m))
      sampled.push_back(queries[i]);
    for (const auto& it : items) {
      if (it.kind == RecallItem::K) rows.push_back({label, format_k(it.k), kitti_recall_at_k(sampled, *index, protocol, it.k).recall});
      if (it.kind == RecallItem::OnePercent)
        rows.push_back({label, "1pct", kitti_recall_at_k(sampled, *index, protocol, one_percent_k(index->size())).recall});
      if (it.kind == RecallItem::Curve)
        for (std::size_t k = 1; k <= it.k; ++k) curve.push_back(kitti_recall_at_k(sampled, *index, protocol, k).recall);
    }
  } else {
    std::map<std::string, std::vector<Query>> runs;
    for (const auto& q : queries) runs[query_rows[q.id].run_id].push_back(q);
    std::map<std::string, std::vector<IndexEntry>> db_by_run;
    for (const auto& e : index->entries()) db_by_run[db_rows[e.id].run_id].push_back(e);
    std::vector<OxfordRun> list;
    for (auto& [name, run_queries] : runs) {
      const auto db = db_by_run.find(name);
      if (db == db_by_run.end()) continue;
      list.push_back({name, std::move(run_queries), RetrievalIndex::build(db->second)});
    }
    std::vector<std::size_t> ks;
    std::size_t curve_k = 0;
    for (const auto& it : items) {
      if (it.kind == RecallItem::K) ks.push_back(it.k);
      if (it.kind == RecallItem::Curve) curve_k = std::max(curve_k, it.k);
    }
    for (std::size_t k = 1; k <= curve_k; ++k) ks.push_back(k);
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    if (ks.empty()) ks.push_back(1);
    const auto pr = oxford_pairwise_eval(list, [](const Eigen::Vector3d&) { return true; }, protocol, ks);
    auto at = [&](std::size_t k) { return pr.recall_at_k[static_cast<std::size_t>(std::find(pr.ks.begin(), pr.ks.end(), k) - pr.ks.begin())]; };
    for (const auto& it : items) {
      if (it.kind == RecallItem::K) rows.push_back({label, format_k(it.k), at(it.k)});
      if (it.kind == RecallItem::OnePercent) rows.push_back({label, "1pct", pr.recall_at_one_percent});
    }
    for (std::size_t k = 1; k <= curve_k; ++k) curve.push_back(at(k));
    out << "oxford: " << pr.pairs << " run pairs, " << pr.skipped_pairs << " skipped\n";
  }

  write_text_file(o.out, format_recall_csv(rows));
  if (!curve.empty()) {
    const std::string curve_path =
        o.curve_out.empty() ? std::filesystem::path(o.out).replace_extension(".curve.csv").string() : o.curve_out;
    write_text_file(curve_path, format_curve_csv(curve));
    out << "wrote " << curve_path << "\n";
  }
  out << format_recall_csv(rows);
}

void run_plot(const PlotOptions& o, std::ostream& out) {
  const auto curve = parse_curve_csv(read_text_file(o.in));
  write_text_file(o.out, render_recall_svg(curve));
  std::vector<double> recalls;
  for (const auto& [k, r] : curve) recalls.push_back(r);
  const std::string csv_path = std::filesystem::path(o.out).replace_extension(".csv").string();
  write_text_file(csv_path, format_curve_csv(recalls));
  out << "wrote " << o.out << " and " << csv_path << "\n";
}

}  // namespace

std::string render_recall_svg(const std::vector<std::pair<double, double>>& curve) {
  constexpr double W = 480, H = 320, L = 56, R = 16, T = 16, B = 44;
  double kmax = 1.0;
  for (const auto& [k, r] : curve) kmax = std::max(kmax, k);
  auto x = [&](double k) { return L + (kmax > 1.0 ? (k - 1.0) / (kmax - 1.0) : 0.0) * (W - L - R); };
  auto y = [&](double r) { return T + (1.0 - std::clamp(r, 0.0, 1.0)) * (H - T - B); };
  char buf[160];
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" viewBox=\"0 0 480 320\">\n";
  s += "<rect width=\"480\" height=\"320\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf), "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  s += buf;
  std::snprintf(buf, sizeof(buf), "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T, L, H - B);
  s += buf;
  for (int i = 0; i <= 4; ++i) {
    const double r = i / 4.0;
    std::snprintf(buf, sizeof(buf), "<text x=\"%g\" y=\"%.2f\" font-size=\"11\" text-anchor=\"end\">%.2f</text>\n", L - 6,
                  y(r) + 4, r);
    s += buf;
  }
  std::snprintf(buf, sizeof(buf), "<text x=\"%g\" y=\"%.2f\" font-size=\"11\" text-anchor=\"middle\">1</text>\n", x(1), H - B + 16);
  s += buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"middle\">%g</text>\n", x(kmax),
                H - B + 16, kmax);
  s += buf;
  s += "<text x=\"268\" y=\"312\" font-size=\"12\" text-anchor=\"middle\">K</text>\n";
  s += "<text x=\"14\" y=\"150\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 150)\">Recall@K</text>\n";
  s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", i ? " " : "", x(curve[i].first), y(curve[i].second));
    s += buf;
  }
  s += "\"/>\n</svg>\n";
  return s;
}

int cli_main(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-modal place recognition pipeline", "vxp"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic paired dataset");
  s->add_option("--scenes", synth.scenes, "number of scenes")->required()->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "generator seed")->envname("VXP_SEED");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--traversals", synth.traversals, "traversals per scene")->check(CLI::PositiveNumber);
  s->add_option("--heldout", synth.heldout, "last N scenes go to heldout.csv, the rest to train.csv")
      ->check(CLI::NonNegativeNumber);
  s->add_option("--points", synth.params.points_per_cloud, "points per cloud")->check(CLI::PositiveNumber);
  s->add_option("--image-width", synth.params.image_width)->check(CLI::Range(8, 4096));
  s->add_option("--image-height", synth.params.image_height)->check(CLI::Range(8, 4096));
  s->add_option("--min-boxes", synth.params.min_boxes)->check(CLI::PositiveNumber);
  s->add_option("--max-boxes", synth.params.max_boxes)->check(CLI::PositiveNumber);
  add_common(s);

  TrainOptions train;
  auto* t = app.add_subcommand("train", "run one training stage");
  t->add_option("--stage", train.stage)->required()->check(CLI::IsMember({"image", "local", "global"}));
  t->add_option("--manifest", train.manifest)->required();
  t->add_option("--calib", train.calib, "VXP-CAL calibration")->required();
  t->add_option("--out", train.out, "output checkpoint")->required();
  t->add_option("--resume", train.resume, "checkpoint of the previous stage (or of this stage, to continue)");
  t->add_option("--history", train.history, "loss history CSV (default: <out>.loss.csv)");
  t->add_option("--epochs", train.cfg.epochs)->check(CLI::PositiveNumber);
  t->add_option("--lr", train.cfg.base_lr)->check(CLI::PositiveNumber);
  t->add_option("--lr-decay", train.cfg.lr_decay, "per-epoch learning-rate multiplier base")->check(CLI::PositiveNumber);
  t->add_option("--batch", train.cfg.batch_size)->check(CLI::PositiveNumber);
  t->add_option("--seed", train.cfg.seed)->envname("VXP_SEED");
  t->add_option("--beta", train.cfg.beta, "smooth-L1 beta")->check(CLI::PositiveNumber);
  t->add_option("--local-mode", train.local_mode)->check(CLI::IsMember({"depth-scaled", "normalized"}));
  t->add_option("--projection", train.projection)->check(CLI::IsMember({"perspective", "orthographic"}));
  t->add_option("--backbone-lr-scale", train.cfg.backbone_lr_scale)->check(CLI::NonNegativeNumber);
  t->add_option("--local-dim", train.model.local_dim)->check(CLI::PositiveNumber);
  t->add_option("--vfe-dim", train.model.vfe_channels)->check(CLI::PositiveNumber);
  t->add_option("--descriptor-dim", train.model.descriptor_dim)->check(CLI::PositiveNumber);
  t->add_option("--conv-layers", train.model.conv_layers)->check(CLI::NonNegativeNumber);
  t->add_option("--two-layer-vfe", train.model.two_layer_vfe);
  t->add_option("--coord-channels", train.model.image_coord_channels);
  t->add_option("--voxel-seed", train.model.voxel_seed);
  add_common(t);

  ExtractOptions extract;
  auto* x = app.add_subcommand("extract", "encode a manifest into descriptors");
  x->add_option("--modality", extract.modality)->required()->check(CLI::IsMember({"2d", "3d"}));
  x->add_option("--ckpt", extract.ckpt)->required();
  x->add_option("--manifest", extract.manifest)->required();
  x->add_option("--out", extract.out, "VXPD output")->required();
  add_common(x);

  IndexOptions idx;
  auto* i = app.add_subcommand("index", "build a retrieval index from descriptors and positions");
  i->add_option("--db", idx.db, "VXPD database descriptors")->required();
  i->add_option("--manifest", idx.manifest, "manifest the descriptor ids refer to")->required();
  i->add_option("--out", idx.out, "VXPI output")->required();
  i->add_option("--metric", idx.metric)->check(CLI::IsMember({"l2", "l1"}));
  add_common(i);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "retrieval recall of queries against a database");
  e->add_option("--query", ev.query, "VXPD query descriptors")->required();
  e->add_option("--query-manifest", ev.query_manifest)->required();
  e->add_option("--db", ev.db, "VXPD descriptors or VXPI index")->required();
  e->add_option("--db-manifest", ev.db_manifest, "required with a VXPD database");
  e->add_option("--protocol", ev.protocol)->check(CLI::IsMember({"plain", "oxford", "kitti"}));
  e->add_option("--recall", ev.recall, "comma list of K, 1pct, curveN");
  e->add_option("--radius", ev.radius, "success radius in metres")->check(CLI::PositiveNumber);
  e->add_option("--out", ev.out, "recall CSV")->required();
  e->add_option("--label", ev.label, "protocol column value (default: the protocol)");
  e->add_option("--curve-out", ev.curve_out, "curve CSV (default: <out stem>.curve.csv)");
  add_common(e);

  PlotOptions plot;
  auto* p = app.add_subcommand("plot", "render a recall@K curve CSV as SVG");
  p->add_option("--in", plot.in, "curve CSV (k,recall)")->required();
  p->add_option("--out", plot.out, "SVG output")->required();
  add_common(p);

  std::vector<RecallItem> recall_items;
  CLI::App* chosen = nullptr;
  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
    chosen = app.get_subcommands().front();
    if (chosen == e) recall_items = parse_recall_items(ev.recall);
    if (chosen == s && synth.params.min_boxes > synth.params.max_boxes)
      throw UsageError("--min-boxes exceeds --max-boxes");
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\n" << app.help();
    return 2;
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return 2;
  }

  const std::string config = resolved_config(*chosen);
  if (chosen->get_option("--print-config")->as<bool>()) {
    out << config;
    return 0;
  }
  err << "# vxp " << chosen->get_name() << "\n" << config;
  try {
    if (chosen == s) run_synth(synth, out);
    if (chosen == t) run_train(train, out);
    if (chosen == x) run_extract(extract, out);
    if (chosen == i) run_index(idx, out);
    if (chosen == e) run_eval(ev, recall_items, out);
    if (chosen == p) run_plot(plot, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace vxp
