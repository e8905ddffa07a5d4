#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "promptinv/io.hpp"
#include "promptinv/probe.hpp"
#include "promptinv/rng.hpp"

namespace fs = std::filesystem;
using namespace promptinv;

namespace {

int log_level() {
  const char* env = std::getenv("PROMPTINV_LOG");
  if (!env) return 1;
  std::string v(env);
  if (v == "error") return 0;
  if (v == "debug") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[info] " << msg << '\n';
}

struct LoadedRun {
  RunManifest manifest;
  std::unique_ptr<DiffusionBackend> backend;
  std::unique_ptr<Vocabulary> vocab;
  std::unique_ptr<EmbeddingTable> table;
  EncoderParams encoder;
};

std::string resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).string();
}

struct Overrides {
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps, t_start, t_end, length;
  std::optional<double> lr;
  std::optional<std::string> metric, optimizer;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--out", out_dir, "Output directory (overrides manifest)");
    cmd->add_option("--seed", seed, "Run seed");
    cmd->add_option("--steps", steps, "Optimization steps N");
    cmd->add_option("--t-start", t_start, "First timestep of the sampled range");
    cmd->add_option("--t-end", t_end, "Last timestep of the sampled range");
    cmd->add_option("--length", length, "Prompt length L");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--metric", metric, "Projection metric: euclidean|cosine")
        ->check(CLI::IsMember({"euclidean", "cosine"}));
    cmd->add_option("--optimizer", optimizer, "Optimizer switch: lbfgs|adam")
        ->check(CLI::IsMember({"lbfgs", "adam"}));
  }

  void apply(RunManifest& m) const {
    if (!out_dir.empty()) m.output_dir = out_dir;
    if (seed) m.config.seed = *seed;
    if (steps) m.config.steps = *steps;
    if (t_start) m.config.t_start = *t_start;
    if (t_end) m.config.t_end = *t_end;
    if (length) m.config.length = *length;
    if (lr) m.config.learning_rate = *lr;
    if (metric) m.config.metric = metric_from_string(*metric);
    if (optimizer) m.config.optimizer = optimizer_from_string(*optimizer);
  }
};

LoadedRun load_run(const std::string& manifest_path, const Overrides& over) {
  LoadedRun run;
  run.manifest = RunManifest::load(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  run.manifest.backend_path = resolve(base, run.manifest.backend_path);
  run.manifest.vocab_path = resolve(base, run.manifest.vocab_path);
  run.manifest.embeddings_path = resolve(base, run.manifest.embeddings_path);
  run.manifest.encoder_path = resolve(base, run.manifest.encoder_path);
  over.apply(run.manifest);

  run.backend = open_backend(BackendManifest::load(run.manifest.backend_path));
  run.vocab = std::make_unique<Vocabulary>(load_vocabulary(run.manifest.vocab_path));
  run.table = std::make_unique<EmbeddingTable>(
      load_embedding_table(run.manifest.embeddings_path), *run.vocab);
  run.encoder = load_encoder(run.manifest.encoder_path,
                             run.manifest.encoder_path + ".json");
  fs::create_directories(run.manifest.output_dir);
  return run;
}

LatentImage load_target(const DiffusionBackend& backend, const std::string& path) {
  return backend.encode_image(load_image(path));
}

void write_result(const LoadedRun& run, const InversionResult& result,
                  const std::string& stem) {
  fs::path out(run.manifest.output_dir);
  save_result_json((out / (stem + ".json")).string(), result, run.manifest.config);
  save_trace_csv((out / (stem + "_trace.csv")).string(), result.loss_trace);
  std::cout << result.prompt << '\n';
}

int cmd_invert(const std::string& manifest_path, const std::string& target_path,
               const Overrides& over) {
  LoadedRun run = load_run(manifest_path, over);
  LatentImage target = load_target(*run.backend, target_path);
  log_info("inverting " + target_path + " with N=" +
           std::to_string(run.manifest.config.steps));
  InversionResult result = invert(*run.backend, run.encoder, *run.vocab,
                                  *run.table, target, run.manifest.config);
  write_result(run, result, "result");
  return 0;
}

int cmd_invert_neg(const std::string& manifest_path, const std::string& target_path,
                   const std::string& negative_path, const Overrides& over) {
  LoadedRun run = load_run(manifest_path, over);
  LatentImage target = load_target(*run.backend, target_path);
  LatentImage negative = load_target(*run.backend, negative_path);
  InversionResult result =
      invert_negative(*run.backend, run.encoder, *run.vocab, *run.table, target,
                      negative, run.manifest.config);
  write_result(run, result, "result_neg");
  return 0;
}

int cmd_probe(const std::string& manifest_path, const std::string& target_path,
              const std::vector<std::string>& prompts, int noise_samples,
              const std::string& plot_path, const Overrides& over) {
  LoadedRun run = load_run(manifest_path, over);
  LatentImage target = load_target(*run.backend, target_path);
  std::vector<int> grid = default_curve_grid(run.backend->schedule());

  std::vector<LossCurve> curves;
  fs::path out(run.manifest.output_dir);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::vector<int> ids = run.vocab->tokenize(prompts[i]);
    LossCurve curve = loss_curve(*run.backend, run.encoder, *run.vocab, *run.table,
                                 target, ids, grid, noise_samples,
                                 run.manifest.config.seed);
    save_curve_csv((out / ("curve_" + std::to_string(i) + ".csv")).string(), curve);
    curves.push_back(std::move(curve));
  }
  if (!plot_path.empty()) save_curves_svg((out / plot_path).string(), curves);
  return 0;
}

std::pair<int, int> parse_range(const std::string& spec) {
  auto pos = spec.find(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 == spec.size())
    throw std::invalid_argument("malformed range (want LOW:HIGH): " + spec);
  std::size_t used_lo = 0, used_hi = 0;
  int lo = std::stoi(spec.substr(0, pos), &used_lo);
  int hi = std::stoi(spec.substr(pos + 1), &used_hi);
  if (used_lo != pos || used_hi != spec.size() - pos - 1 || lo < 1 || hi < lo)
    throw std::invalid_argument("malformed range (want LOW:HIGH): " + spec);
  return {lo, hi};
}

int cmd_sweep(const std::string& manifest_path, const std::string& target_path,
              const std::vector<std::string>& range_specs, const Overrides& over) {
  LoadedRun run = load_run(manifest_path, over);
  LatentImage target = load_target(*run.backend, target_path);
  std::vector<std::pair<int, int>> ranges;
  for (const auto& spec : range_specs) ranges.push_back(parse_range(spec));

  auto entries = range_sweep(*run.backend, run.encoder, *run.vocab, *run.table,
                             target, ranges, run.manifest.config);
  fs::path out(run.manifest.output_dir);
  save_sweep_csv((out / "sweep.csv").string(), entries);
  for (const auto& e : entries) {
    InversionConfig cfg = run.manifest.config;
    cfg.t_start = e.range.first;
    cfg.t_end = e.range.second;
    std::string stem = "result_" + std::to_string(e.range.first) + "_" +
                       std::to_string(e.range.second);
    save_result_json((out / (stem + ".json")).string(), e.result, cfg);
    save_trace_csv((out / (stem + "_trace.csv")).string(), e.result.loss_trace);
  }
  return 0;
}

int cmd_compose(const std::vector<std::string>& result_paths,
                const std::string& output_path) {
  std::string composed;
  for (const auto& path : result_paths) {
    std::string prompt = load_prompt_from_result(path);
    if (!composed.empty() && !prompt.empty()) composed += ' ';
    composed += prompt;
  }
  std::ofstream out(output_path);
  if (!out) throw std::runtime_error("cannot write file: " + output_path);
  out << composed << '\n';
  std::cout << composed << '\n';
  return 0;
}

int cmd_generate(const std::string& manifest_path, const std::string& prompt,
                 int steps, const Overrides& over) {
  LoadedRun run = load_run(manifest_path, over);
  std::vector<int> ids = run.vocab->tokenize(prompt);
  Eigen::MatrixXd cond = encode(run.table->embed(ids), run.encoder);
  LatentImage latent = run.backend->sample(cond, steps, run.manifest.config.seed);
  PixelImage img = run.backend->decode_latent(latent);

  fs::path out(run.manifest.output_dir);
  save_png(img, (out / "generated.png").string());
  save_pixel_tensor(img, (out / "generated.bin").string());
  save_latent_tensor(latent, (out / "generated_latent.bin").string());
  log_info("wrote generated.png / generated.bin / generated_latent.bin");
  return 0;
}

const char* kWords[] = {
    "red",    "house",  "dog",    "cat",    "snow",   "beach",  "tree",
    "boat",   "city",   "river",  "cloud",  "field",  "horse",  "lamp",
    "stone",  "grass",  "night",  "storm",  "train",  "plane",  "apple",
    "chair",  "table",  "glass",  "bird",   "fish",   "road",   "hill",
    "moon",   "star",   "rain",   "wind",   "fire",   "sand",   "wave",
    "leaf",   "rock",   "door",   "wall",   "roof",   "lake",   "pond",
    "barn",   "fence",  "sheep",  "goat",   "duck",   "swan",   "rose",
    "pine",   "oak",    "fog",    "ice",    "mud",    "path",   "cliff",
    "cave",   "reef",   "dune",   "vine",   "moss",   "fern",   "crow",
    "hawk"};

int cmd_init_toy(const std::string& out_dir, std::uint64_t seed, int vocab_size,
                 int dim, int l_max, int T, int length) {
  fs::create_directories(out_dir);
  fs::path out(out_dir);

  std::vector<std::string> tokens;
  for (int i = 0; i < vocab_size; ++i) {
    tokens.push_back(i < int(std::size(kWords)) ? kWords[i]
                                                : "word" + std::to_string(i));
  }
  Vocabulary vocab(tokens);
  save_vocabulary(vocab, (out / "vocab.txt").string());

  Rng rng(mix64(seed, 0x766f63ULL));
  Eigen::MatrixXd table_f64 = 0.3 * rng.normal_matrix(vocab_size, dim);
  save_embedding_table(table_f64, (out / "embeddings.bin").string());

  EncoderParams encoder = make_toy_encoder(l_max, dim, seed);
  save_encoder(encoder, (out / "encoder.bin").string(),
               (out / "encoder.bin.json").string());

  BackendManifest bm;
  bm.seed = seed;
  bm.T = T;
  bm.context_dim = dim;
  bm.save((out / "backend.json").string());

  RunManifest rm;
  rm.backend_path = "backend.json";
  rm.vocab_path = "vocab.txt";
  rm.embeddings_path = "embeddings.bin";
  rm.encoder_path = "encoder.bin";
  rm.output_dir = (out / "runs").string();
  rm.config.seed = seed;
  rm.config.length = length;
  rm.save((out / "manifest.json").string());

  // Demo target: sample from a random in-vocab prompt and save the image.
  auto backend = open_backend(bm);
  EmbeddingTable table(load_embedding_table((out / "embeddings.bin").string()),
                       vocab);
  EncoderParams enc = load_encoder((out / "encoder.bin").string(),
                                   (out / "encoder.bin.json").string());
  std::vector<int> demo_ids;
  for (int j = 0; j < length; ++j)
    demo_ids.push_back(int(Rng(mix64(seed, 0x64656d6fULL, j)).uniform_int(
        0, vocab_size - 1)));
  LatentImage latent =
      backend->sample(encode(table.embed(demo_ids), enc), 50, seed);
  PixelImage img = backend->decode_latent(latent);
  save_png(img, (out / "target.png").string());
  save_pixel_tensor(img, (out / "target.bin").string());

  std::cout << "toy bundle written to " << out_dir << " (demo prompt: \""
            << vocab.detokenize(demo_ids) << "\")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hard prompt inversion for (toy) latent diffusion backends"};
  app.require_subcommand(1);

  std::string manifest_path, target_path, negative_path, prompt, plot_path,
      output_path, out_dir = "toy";
  std::vector<std::string> prompts, range_specs, result_paths;
  int steps = 50, noise_samples = 16;
  std::uint64_t init_seed = 0;
  int vocab_size = 16, dim = 8, l_max = 16, T = 1000, length = 8;
  Overrides over;

  auto* invert_cmd = app.add_subcommand("invert", "Recover a prompt for a target image");
  invert_cmd->add_option("--manifest", manifest_path, "Run manifest")->required();
  invert_cmd->add_option("target", target_path, "Target image (PNG or raw tensor)")->required();
  over.add_flags(invert_cmd);

  auto* neg_cmd = app.add_subcommand("invert-neg", "Inversion with a negative image");
  neg_cmd->add_option("--manifest", manifest_path, "Run manifest")->required();
  neg_cmd->add_option("target", target_path, "Target image")->required();
  neg_cmd->add_option("negative", negative_path, "Negative image")->required();
  over.add_flags(neg_cmd);

  auto* probe_cmd = app.add_subcommand("probe", "Per-timestep loss curves for prompts");
  probe_cmd->add_option("--manifest", manifest_path, "Run manifest")->required();
  probe_cmd->add_option("target", target_path, "Target image")->required();
  probe_cmd->add_option("prompts", prompts, "Prompts to probe")->required();
  probe_cmd->add_option("--noise-samples", noise_samples, "Draws per curve point");
  probe_cmd->add_option("--plot", plot_path, "Also write an SVG chart (relative to --out)");
  over.add_flags(probe_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "Invert over several timestep ranges");
  sweep_cmd->add_option("--manifest", manifest_path, "Run manifest")->required();
  sweep_cmd->add_option("target", target_path, "Target image")->required();
  sweep_cmd->add_option("ranges", range_specs, "Ranges as LOW:HIGH")->required();
  over.add_flags(sweep_cmd);

  auto* compose_cmd = app.add_subcommand("compose", "Concatenate prompts from result files");
  compose_cmd->add_option("results", result_paths, "Result JSON files")->required();
  compose_cmd->add_option("--out-file", output_path, "Composed prompt output")->required();

  auto* gen_cmd = app.add_subcommand("generate", "Sample an image for a prompt");
  gen_cmd->add_option("--manifest", manifest_path, "Run manifest")->required();
  gen_cmd->add_option("prompt", prompt, "In-vocabulary prompt")->required();
  over.add_flags(gen_cmd);  // --steps selects the sampler step count here

  auto* init_cmd = app.add_subcommand("init-toy", "Write a seeded toy asset bundle");
  init_cmd->add_option("--out", out_dir, "Bundle directory");
  init_cmd->add_option("--seed", init_seed, "Generation seed");
  init_cmd->add_option("--vocab-size", vocab_size, "Vocabulary size");
  init_cmd->add_option("--dim", dim, "Embedding dimensionality");
  init_cmd->add_option("--max-length", l_max, "Encoder capacity L_max");
  init_cmd->add_option("--T", T, "Schedule length");
  init_cmd->add_option("--length", length, "Default prompt length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (invert_cmd->parsed()) return cmd_invert(manifest_path, target_path, over);
    if (neg_cmd->parsed())
      return cmd_invert_neg(manifest_path, target_path, negative_path, over);
    if (probe_cmd->parsed())
      return cmd_probe(manifest_path, target_path, prompts, noise_samples,
                       plot_path, over);
    if (sweep_cmd->parsed())
      return cmd_sweep(manifest_path, target_path, range_specs, over);
    if (compose_cmd->parsed()) return cmd_compose(result_paths, output_path);
    if (gen_cmd->parsed())
      return cmd_generate(manifest_path, prompt, over.steps.value_or(steps), over);
    if (init_cmd->parsed())
      return cmd_init_toy(out_dir, init_seed, vocab_size, dim, l_max, T, length);
  } catch (const divergence_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
