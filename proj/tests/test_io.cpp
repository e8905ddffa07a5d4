#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "promptinv/io.hpp"
#include "promptinv/rng.hpp"

using namespace promptinv;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "promptinv_io_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// binary files carry float32 payloads; this is the exact value a double
// survives the trip as
double as_f32(double v) { return double(float(v)); }

}  // namespace

TEST_CASE("vocabulary files round-trip, with and without specials") {
  fs::path p = temp_dir() / "vocab.txt";

  Vocabulary v({"<pad>", "<end>", "sun", "sea"}, {0, 1});
  save_vocabulary(v, p.string());
  Vocabulary back = load_vocabulary(p.string());
  CHECK(back.tokens() == v.tokens());
  CHECK(back.special_ids() == v.special_ids());

  Vocabulary plain({"a", "b"});
  save_vocabulary(plain, p.string());
  back = load_vocabulary(p.string());
  CHECK(back.tokens() == plain.tokens());
  CHECK(back.special_ids().empty());
  CHECK(slurp(p) == "a\nb\n");  // no header when there are no specials

  CHECK_THROWS_AS(load_vocabulary((temp_dir() / "missing.txt").string()),
                  std::runtime_error);
}

TEST_CASE("embedding table round-trips through float32") {
  fs::path p = temp_dir() / "emb.bin";
  Rng rng(5);
  Eigen::MatrixXd table = rng.normal_matrix(7, 3);
  save_embedding_table(table, p.string());

  Eigen::MatrixXd back = load_embedding_table(p.string());
  REQUIRE(back.rows() == 7);
  REQUIRE(back.cols() == 3);
  for (Eigen::Index r = 0; r < 7; ++r)
    for (Eigen::Index c = 0; c < 3; ++c)
      CHECK(back(r, c) == as_f32(table(r, c)));

  // header: u64 rows, u64 cols, then 4-byte floats
  CHECK(fs::file_size(p) == 16 + 4 * 21);

  // truncated file is rejected
  fs::resize_file(p, 20);
  CHECK_THROWS_AS(load_embedding_table(p.string()), std::runtime_error);
}

TEST_CASE("raw tensors round-trip and validate") {
  fs::path p = temp_dir() / "tensor.bin";
  Rng rng(6);
  Eigen::VectorXd data = rng.normal_vector(24);
  save_tensor(p.string(), {2, 3, 4}, data);
  CHECK(fs::file_size(p) == 8 + 3 * 8 + 4 * 24);

  auto [dims, back] = load_tensor(p.string());
  CHECK(dims == std::vector<std::uint64_t>{2, 3, 4});
  for (Eigen::Index i = 0; i < 24; ++i) CHECK(back[i] == as_f32(data[i]));

  CHECK_THROWS_AS(save_tensor(p.string(), {2, 3}, data), std::invalid_argument);

  LatentImage lat = make_latent({2, 3, 4}, data);
  save_latent_tensor(lat, p.string());
  LatentImage lat_back = load_latent_tensor(p.string());
  CHECK(lat_back.shape() == lat.shape());

  save_tensor(p.string(), {24}, data);
  CHECK_THROWS_AS(load_latent_tensor(p.string()), std::runtime_error);
}

TEST_CASE("PNG save/load round-trips at 8-bit resolution") {
  fs::path p = temp_dir() / "img.png";
  Eigen::VectorXd px(4 * 5 * 3);
  for (Eigen::Index i = 0; i < px.size(); ++i) px[i] = (i % 256) / 255.0;
  PixelImage img = make_pixel(4, 5, px);
  save_png(img, p.string());

  PixelImage back = load_png(p.string());
  CHECK(back.h == 4);
  CHECK(back.w == 5);
  // every value is an exact multiple of 1/255, so the trip is lossless
  for (Eigen::Index i = 0; i < px.size(); ++i)
    CHECK(back.data[i] == doctest::Approx(px[i]).epsilon(1e-12));

  // load_image dispatches on the extension
  PixelImage via_dispatch = load_image(p.string());
  CHECK(via_dispatch.data == back.data);

  fs::path praw = temp_dir() / "img.bin";
  save_pixel_tensor(img, praw.string());
  PixelImage raw_back = load_image(praw.string());
  CHECK(raw_back.h == 4);
  CHECK(raw_back.w == 5);
  for (Eigen::Index i = 0; i < px.size(); ++i)
    CHECK(raw_back.data[i] == as_f32(px[i]));

  std::ofstream(temp_dir() / "garbage.png") << "not a png";
  CHECK_THROWS_AS(load_png((temp_dir() / "garbage.png").string()),
                  std::runtime_error);
}

TEST_CASE("encoder parameters round-trip with their sidecar") {
  fs::path bin = temp_dir() / "enc.bin";
  fs::path json = temp_dir() / "enc.bin.json";
  EncoderParams p = make_toy_encoder(6, 4, 99);
  save_encoder(p, bin.string(), json.string());

  EncoderParams back = load_encoder(bin.string(), json.string());
  CHECK(back.seed == 99);
  CHECK(back.max_length() == 6);
  CHECK(back.dim() == 4);
  for (Eigen::Index r = 0; r < 6; ++r)
    for (Eigen::Index c = 0; c < 4; ++c)
      CHECK(back.positional(r, c) == as_f32(p.positional(r, c)));
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(back.affine_b[i] == as_f32(p.affine_b[i]));

  // sidecar that disagrees with the binary is rejected
  EncoderParams other = make_toy_encoder(5, 4, 99);
  fs::path bin2 = temp_dir() / "enc2.bin";
  save_encoder(other, bin2.string(), (temp_dir() / "enc2.json").string());
  CHECK_THROWS_AS(load_encoder(bin2.string(), json.string()), std::runtime_error);
}

TEST_CASE("result JSON and prompt extraction") {
  fs::path p = temp_dir() / "result.json";
  InversionResult r;
  r.token_ids = {4, 2};
  r.prompt = "sea sun";
  r.final_loss_estimate = 0.25;
  InversionConfig c;
  c.seed = 17;
  c.length = 2;
  save_result_json(p.string(), r, c);

  CHECK(load_prompt_from_result(p.string()) == "sea sun");
  std::string text = slurp(p);
  CHECK(text.find("\"final_loss_estimate\": 0.25") != std::string::npos);
  CHECK(text.find("\"seed\": 17") != std::string::npos);
  CHECK(text.find("\"config\"") != std::string::npos);
}

TEST_CASE("CSV emitters write the declared headers") {
  fs::path p = temp_dir() / "trace.csv";
  save_trace_csv(p.string(), {{1, 700, 0.5}, {2, 900, 0.25}});
  CHECK(slurp(p) == "iter,t,loss\n1,700,0.5\n2,900,0.25\n");

  LossCurve curve;
  curve.prompt = "a b";
  curve.points = {{50, 1.5}, {100, 0.75}};
  curve.noise_samples = 4;
  curve.seed = 0;
  fs::path pc = temp_dir() / "curve.csv";
  save_curve_csv(pc.string(), curve);
  CHECK(slurp(pc) == "t,mean_loss\n50,1.5\n100,0.75\n");

  RangeSweepEntry e;
  e.range = {500, 1000};
  e.result.final_loss_estimate = 0.125;
  e.result.prompt = "sun sea";
  fs::path ps = temp_dir() / "sweep.csv";
  save_sweep_csv(ps.string(), {e});
  CHECK(slurp(ps) == "t_low,t_high,final_loss_estimate,prompt\n"
                     "500,1000,0.125,sun sea\n");

  fs::path svg = temp_dir() / "curves.svg";
  save_curves_svg(svg.string(), {curve});
  std::string svg_text = slurp(svg);
  CHECK(svg_text.find("<svg") != std::string::npos);
  CHECK(svg_text.find("polyline") != std::string::npos);
  CHECK_THROWS_AS(save_curves_svg(svg.string(), {}), std::invalid_argument);
}

TEST_CASE("run manifest round-trips configuration and paths") {
  fs::path p = temp_dir() / "manifest.json";
  RunManifest m;
  m.backend_path = "backend.json";
  m.vocab_path = "vocab.txt";
  m.embeddings_path = "emb.bin";
  m.encoder_path = "enc.bin";
  m.output_dir = "runs";
  m.config.length = 3;
  m.config.steps = 77;
  m.config.seed = 21;
  m.config.metric = Metric::Cosine;
  m.config.optimizer = Optimizer::Adam;
  m.config.init_token_ids = std::vector<int>{1, 2, 3};
  m.save(p.string());

  RunManifest back = RunManifest::load(p.string());
  CHECK(back.backend_path == "backend.json");
  CHECK(back.vocab_path == "vocab.txt");
  CHECK(back.embeddings_path == "emb.bin");
  CHECK(back.encoder_path == "enc.bin");
  CHECK(back.output_dir == "runs");
  CHECK(back.config.length == 3);
  CHECK(back.config.steps == 77);
  CHECK(back.config.seed == 21);
  CHECK(back.config.metric == Metric::Cosine);
  CHECK(back.config.optimizer == Optimizer::Adam);
  REQUIRE(back.config.init_token_ids.has_value());
  CHECK(*back.config.init_token_ids == std::vector<int>{1, 2, 3});

  CHECK_THROWS_AS(RunManifest::load((temp_dir() / "nope.json").string()),
                  std::runtime_error);
}
