#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "anogan/config_text.hpp"
#include "anogan/data.hpp"
#include "anogan/evaluation.hpp"
#include "anogan/file_io.hpp"
#include "anogan/gan.hpp"
#include "anogan/mapping.hpp"
#include "anogan/mapping_io.hpp"
#include "anogan/runtime.hpp"
#include "anogan/scoring.hpp"
#include "run_config.hpp"
#include "staging.hpp"

namespace fs = std::filesystem;
using namespace anogan;
using nlohmann::json;

namespace {

constexpr const char* kRunFile = "run.txt";
constexpr const char* kCheckpointFile = "model.ckpt";
constexpr const char* kTrainingLogFile = "training_log.csv";
constexpr const char* kScoresFile = "scores.csv";
constexpr const char* kReportFile = "report.json";
constexpr const char* kRocFile = "roc.csv";
// Queries per invert_batch call. Fixed so results do not depend on --threads.
constexpr std::size_t kMapChunk = 64;

// Shared flags; unset optionals keep the config value.
struct Options {
  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::string input;
  std::optional<double> lambda;
  std::optional<int> iterations;
  std::string variant;
  std::string split = "test";
  std::optional<std::size_t> limit;
  unsigned threads = 0;
};

cli::RunConfig resolve_config(const Options& o) {
  std::string body;
  if (!o.config_path.empty()) body = io::read_file(o.config_path);
  auto cfg = cli::RunConfig::from_text(body, o.profile);
  if (o.lambda) {
    cfg.mapping.lambda = *o.lambda;
    cfg.scoring.lambda = *o.lambda;
  }
  if (o.iterations) cfg.mapping.iterations = *o.iterations;
  if (!o.variant.empty()) {
    cfg.scoring.variant = parse_score_variant(o.variant);
    if (cfg.scoring.variant != ScoreVariant::p_d) {
      cfg.mapping.loss_variant = mapping_variant_for(cfg.scoring.variant);
    }
  }
  return cfg;
}

std::string checksum_of_file(const std::string& path) {
  const std::string bytes = io::read_file(path);
  return text::hex64(text::fnv1a64(bytes.data(), bytes.size()));
}

void write_run_file(const cli::StagingDir& stage, const std::string& command,
                    const cli::RunConfig& cfg, const std::vector<std::string>& inputs) {
  std::string body = "tool=anogan\nversion=" ANOGAN_VERSION "\ncommand=" + command + "\n";
  for (const auto& line : inputs) body += line + "\n";
  body += cfg.to_text();
  io::write_file_atomic(stage.file(kRunFile), body);
}

// A synth output, or a directory of raw patches with labels.csv.
Dataset open_dataset(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / kManifestFile) && fs::exists(fs::path(dir) / "labels.csv")) {
    return import_patch_directory(dir);
  }
  return read_dataset(dir);
}

std::vector<std::size_t> select_records(const Dataset& ds, const Options& o) {
  std::vector<std::size_t> idx;
  if (o.split == "all") {
    for (std::size_t i = 0; i < ds.manifest.records.size(); ++i) idx.push_back(i);
  } else {
    idx = ds.indices(parse_split(o.split));
  }
  if (o.limit && *o.limit < idx.size()) idx.resize(*o.limit);
  if (idx.empty()) throw std::runtime_error("no records selected from split '" + o.split + "'");
  return idx;
}

int cmd_synth(const Options& o) {
  auto cfg = resolve_config(o);
  if (o.seed) cfg.corpus.seed = *o.seed;
  cfg.corpus.validate();
  cli::StagingDir stage(o.out);
  std::cerr << "synth: generating " << cfg.corpus.n_train_patches << " train + "
            << cfg.corpus.n_test_normal + cfg.corpus.n_test_anomalous << " test patches\n";
  const Dataset ds = generate_corpus(cfg.corpus);
  write_dataset(ds, stage.path().string());
  write_run_file(stage, "synth", cfg, {});
  stage.commit();
  std::cerr << "synth: wrote " << ds.manifest.records.size() << " records to " << o.out << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  auto cfg = resolve_config(o);
  if (o.seed) cfg.gan.seed = *o.seed;
  cfg.gan.validate();
  const Dataset ds = open_dataset(o.dataset);
  if (ds.manifest.image_size != cfg.gan.image_size) {
    throw std::runtime_error("dataset patches are " + std::to_string(ds.manifest.image_size) +
                             " px but the model expects " + std::to_string(cfg.gan.image_size));
  }
  const auto train_idx = ds.indices(Split::train);
  if (train_idx.empty()) throw std::runtime_error("dataset has no training patches");
  const Tensor corpus = ds.images(train_idx);

  cli::StagingDir stage(o.out);
  GanModel model = build_model(cfg.gan);
  std::cerr << "train: " << train_idx.size() << " patches, " << cfg.gan.epochs << " epochs\n";
  const TrainingLog log = train(model, corpus, [](const TrainingLogEntry& e) {
    if (e.step % 100 == 0) {
      std::fprintf(stderr, "train: step %lld epoch %d d_loss %.4f g_loss %.4f\n",
                   static_cast<long long>(e.step), e.epoch, e.discriminator_loss,
                   e.generator_loss);
    }
  });

  save_checkpoint(model, stage.file(kCheckpointFile));
  std::ostringstream csv;
  csv << "step,epoch,discriminator_loss,generator_loss\n";
  for (const auto& e : log.entries) {
    csv << e.step << "," << e.epoch << "," << text::format_double(e.discriminator_loss) << ","
        << text::format_double(e.generator_loss) << "\n";
  }
  io::write_file_atomic(stage.file(kTrainingLogFile), csv.str());
  write_run_file(stage, "train", cfg,
                 {"input.dataset=" + o.dataset, "input.dataset_hash=" + ds.manifest.config_hash});
  stage.commit();
  std::cerr << "train: wrote " << (fs::path(o.out) / kCheckpointFile).string() << "\n";
  return 0;
}

int cmd_map(const Options& o) {
  auto cfg = resolve_config(o);
  if (o.seed) cfg.mapping.seed = *o.seed;
  if (cfg.scoring.variant == ScoreVariant::p_d) {
    throw std::invalid_argument("the pd variant needs no mapping; use 'score --variant pd'");
  }
  cfg.mapping.validate();
  const GanModel model = load_checkpoint(o.checkpoint);
  const Dataset ds = open_dataset(o.dataset);
  if (ds.manifest.image_size != model.config().image_size) {
    throw std::runtime_error("dataset and checkpoint disagree on the image size");
  }
  const auto idx = select_records(ds, o);

  cli::StagingDir stage(o.out);
  const std::size_t chunks = (idx.size() + kMapChunk - 1) / kMapChunk;
  unsigned workers = o.threads ? o.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, chunks));
  std::cerr << "map: " << idx.size() << " queries, " << cfg.mapping.iterations << " iterations, "
            << to_string(cfg.mapping.loss_variant) << ", " << workers << " thread(s)\n";

  std::vector<MappingResult> results(idx.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      try {
        const std::size_t lo = c * kMapChunk;
        const std::size_t hi = std::min(idx.size(), lo + kMapChunk);
        const std::vector<std::size_t> part(idx.begin() + lo, idx.begin() + hi);
        auto out = invert_batch(model, ds.images(part), cfg.mapping, lo);
        std::move(out.begin(), out.end(), results.begin() + lo);
        const std::size_t finished = done.fetch_add(hi - lo) + (hi - lo);
        std::fprintf(stderr, "map: %zu/%zu\n", finished, idx.size());
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  MappingRun run;
  run.variant = cfg.mapping.loss_variant;
  run.lambda = cfg.mapping.lambda;
  run.iterations = cfg.mapping.iterations;
  run.image_size = ds.manifest.image_size;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& rec = ds.manifest.records[idx[i]];
    run.records.push_back({rec.id, rec.label, std::move(results[i])});
  }
  write_mapping_run(run, stage.path().string());
  write_run_file(stage, "map", cfg,
                 {"input.checkpoint=" + o.checkpoint,
                  "input.checkpoint_checksum=" + checksum_of_file(o.checkpoint),
                  "input.dataset=" + o.dataset, "input.dataset_hash=" + ds.manifest.config_hash,
                  "input.split=" + o.split});
  stage.commit();
  std::cerr << "map: wrote " << run.records.size() << " records to " << o.out << "\n";
  return 0;
}

int cmd_score(const Options& o) {
  auto cfg = resolve_config(o);
  cfg.scoring.validate();
  std::vector<AnomalyReport> reports;
  std::vector<std::string> inputs;
  if (cfg.scoring.variant == ScoreVariant::p_d) {
    const GanModel model = load_checkpoint(o.checkpoint);
    const Dataset ds = open_dataset(o.dataset);
    const auto idx = select_records(ds, o);
    for (std::size_t lo = 0; lo < idx.size(); lo += kMapChunk) {
      const std::vector<std::size_t> part(idx.begin() + lo,
                                          idx.begin() + std::min(idx.size(), lo + kMapChunk));
      const auto scores = p_d_score(model, ds.images(part));
      for (std::size_t i = 0; i < part.size(); ++i) {
        const auto& rec = ds.manifest.records[part[i]];
        auto report = p_d_report(scores[i], rec.id);
        report.label = rec.label;
        reports.push_back(std::move(report));
      }
    }
    inputs = {"input.checkpoint=" + o.checkpoint,
              "input.checkpoint_checksum=" + checksum_of_file(o.checkpoint),
              "input.dataset=" + o.dataset, "input.split=" + o.split};
  } else {
    if (o.input.empty()) throw std::invalid_argument("score needs --input <mapping dir>");
    const MappingRun run = read_mapping_run(o.input);
    for (const auto& rec : run.records) {
      auto report = anomaly_score(rec.result, cfg.scoring, rec.query_id);
      report.label = rec.label;
      for (const auto& w : report.warnings) std::cerr << "score: " << rec.query_id << ": " << w << "\n";
      reports.push_back(std::move(report));
    }
    inputs = {"input.mapping=" + o.input,
              "input.mapping_checksum=" +
                  checksum_of_file((fs::path(o.input) / kMappingFile).string())};
  }

  cli::StagingDir stage(o.out);
  std::ostringstream csv;
  write_scores_csv(csv, reports);
  io::write_file_atomic(stage.file(kScoresFile), csv.str());
  write_run_file(stage, "score", cfg, inputs);
  stage.commit();
  std::cerr << "score: wrote " << reports.size() << " scores to " << o.out << "\n";
  return 0;
}

json summary_json(const DistributionSummary& s) {
  return json{{"group", s.group}, {"count", s.count}, {"mean", s.mean}, {"median", s.median},
              {"q1", s.q1},       {"q3", s.q3},       {"min", s.min},   {"max", s.max}};
}

int cmd_eval(const Options& o) {
  auto cfg = resolve_config(o);
  if (o.input.empty()) throw std::invalid_argument("eval needs --input <scores.csv>");
  std::string path = o.input;
  if (fs::is_directory(path)) path = (fs::path(path) / kScoresFile).string();
  std::istringstream in(io::read_file(path));
  const auto rows = read_scores_csv(in);
  if (rows.empty()) throw std::runtime_error("scores file has no rows");

  std::vector<ScoredSample> samples;
  std::vector<double> anomaly[2], residual[2];
  for (const auto& r : rows) {
    if (!r.label) throw std::runtime_error("row '" + r.query_id + "' has no label");
    if (r.variant != rows.front().variant) {
      throw std::runtime_error("scores file mixes variants " + rows.front().variant + " and " +
                               r.variant);
    }
    samples.push_back({r.anomaly, *r.label});
    anomaly[*r.label].push_back(r.anomaly);
    residual[*r.label].push_back(r.residual);
  }
  const EvaluationReport report = evaluate(samples);

  std::vector<std::string> warnings;
  const auto anomaly_groups =
      score_distributions({{"normal", anomaly[0]}, {"anomalous", anomaly[1]}}, &warnings);
  json residual_groups = json::array();
  if (rows.front().variant != to_string(ScoreVariant::p_d)) {
    for (const auto& s :
         score_distributions({{"normal", residual[0]}, {"anomalous", residual[1]}}, &warnings)) {
      residual_groups.push_back(summary_json(s));
    }
  }
  for (const auto& w : warnings) std::cerr << "eval: " << w << "\n";
  json anomaly_json = json::array();
  for (const auto& s : anomaly_groups) anomaly_json.push_back(summary_json(s));

  const auto& y = report.youden;
  const json root{{"tool", "anogan"},
                  {"version", ANOGAN_VERSION},
                  {"variant", rows.front().variant},
                  {"samples", rows.size()},
                  {"positives", report.curve.positives},
                  {"negatives", report.curve.negatives},
                  {"auc", report.auc},
                  {"youden",
                   {{"threshold", y.threshold},
                    {"index", y.youden_index},
                    {"tpr", y.tpr},
                    {"fpr", y.fpr},
                    {"precision", y.precision},
                    {"recall", y.recall},
                    {"sensitivity", y.sensitivity},
                    {"specificity", y.specificity}}},
                  {"anomaly_distributions", anomaly_json},
                  {"residual_distributions", residual_groups}};

  cli::StagingDir stage(o.out);
  io::write_file_atomic(stage.file(kReportFile), root.dump(2) + "\n");
  std::ostringstream roc;
  write_roc_csv(roc, report.curve);
  io::write_file_atomic(stage.file(kRocFile), roc.str());
  write_run_file(stage, "eval", cfg,
                 {"input.scores=" + o.input, "input.scores_checksum=" + checksum_of_file(path)});
  stage.commit();
  std::printf("auc %.6f youden %.6f threshold %.6g\n", report.auc, y.youden_index, y.threshold);
  return 0;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "Run config file (key=value)");
  cmd->add_option("--profile", o.profile, "Parameter profile")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--out", o.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Unsupervised GAN anomaly detection"};
  app.set_version_flag("--version", std::string("anogan ") + ANOGAN_VERSION);
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic patch corpus");
  add_common(synth, o);
  synth->add_option("--seed", o.seed, "Corpus seed");

  auto* train_cmd = app.add_subcommand("train", "Train the GAN on a dataset's training split");
  add_common(train_cmd, o);
  train_cmd->add_option("--dataset", o.dataset, "Dataset directory")->required();
  train_cmd->add_option("--seed", o.seed, "Training seed");

  auto* map = app.add_subcommand("map", "Invert query patches into the latent space");
  add_common(map, o);
  map->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  map->add_option("--dataset", o.dataset, "Dataset directory")->required();
  map->add_option("--seed", o.seed, "Mapping seed");
  map->add_option("--lambda", o.lambda, "Weight of the discrimination loss");
  map->add_option("--iterations", o.iterations, "Mapping iterations");
  map->add_option("--variant", o.variant, "Discrimination loss")
      ->check(CLI::IsMember({"anogan", "reference"}));
  map->add_option("--split", o.split, "Records to map")
      ->check(CLI::IsMember({"train", "test", "all"}));
  map->add_option("--limit", o.limit, "Map only the first N selected records");
  map->add_option("--threads", o.threads, "Worker threads (0 = all cores)");

  auto* score = app.add_subcommand("score", "Compute anomaly scores");
  add_common(score, o);
  score->add_option("--input", o.input, "Mapping directory");
  score->add_option("--lambda", o.lambda, "Weight of the discrimination score");
  score->add_option("--variant", o.variant, "Score variant")
      ->check(CLI::IsMember({"anogan", "reference", "pd"}));
  score->add_option("--checkpoint", o.checkpoint, "Checkpoint (pd variant)");
  score->add_option("--dataset", o.dataset, "Dataset directory (pd variant)");
  score->add_option("--split", o.split, "Records to score (pd variant)")
      ->check(CLI::IsMember({"train", "test", "all"}));
  score->add_option("--limit", o.limit, "Score only the first N selected records");

  auto* eval = app.add_subcommand("eval", "ROC, AUC and Youden operating point from scores");
  add_common(eval, o);
  eval->add_option("--input", o.input, "Scores CSV or score directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(o);
    if (train_cmd->parsed()) return cmd_train(o);
    if (map->parsed()) return cmd_map(o);
    if (score->parsed()) return cmd_score(o);
    if (eval->parsed()) return cmd_eval(o);
  } catch (const std::exception& e) {
    std::cerr << "anogan: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
