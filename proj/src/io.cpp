#include "promptinv/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace promptinv {

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = {}) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = {}) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  std::uint64_t v;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw std::runtime_error("truncated binary file: " + path);
  return v;
}

void write_f32(std::ostream& out, const Eigen::VectorXd& data) {
  std::vector<float> buf(static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i)
    buf[static_cast<std::size_t>(i)] = static_cast<float>(data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), 4 * std::streamsize(buf.size()));
}

Eigen::VectorXd read_f32(std::istream& in, std::uint64_t count,
                         const std::string& path) {
  std::vector<float> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), 4 * std::streamsize(count));
  if (!in) throw std::runtime_error("truncated binary file: " + path);
  const Eigen::Index n = Eigen::Index(count);
  Eigen::VectorXd data(n);
  for (Eigen::Index i = 0; i < n; ++i) data[i] = buf[std::size_t(i)];
  return data;
}

void write_matrix_section(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u64(out, std::uint64_t(m.rows()));
  write_u64(out, std::uint64_t(m.cols()));
  Eigen::VectorXd flat(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    flat.segment(r * m.cols(), m.cols()) = m.row(r).transpose();
  write_f32(out, flat);
}

Eigen::MatrixXd read_matrix_section(std::istream& in, const std::string& path) {
  std::uint64_t rows = read_u64(in, path);
  std::uint64_t cols = read_u64(in, path);
  if (rows * cols > (1ULL << 30))
    throw std::runtime_error("matrix section too large in " + path);
  Eigen::VectorXd flat = read_f32(in, rows * cols, path);
  const Eigen::Index nr = Eigen::Index(rows), nc = Eigen::Index(cols);
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    m.row(r) = flat.segment(r * m.cols(), m.cols()).transpose();
  return m;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Vocabulary load_vocabulary(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> tokens;
  std::set<int> special;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && line.rfind("#special:", 0) == 0) {
      std::istringstream ids(line.substr(9));
      std::string piece;
      while (std::getline(ids, piece, ',')) {
        if (!piece.empty()) special.insert(std::stoi(piece));
      }
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  if (tokens.empty()) throw std::runtime_error("vocabulary file is empty: " + path);
  return Vocabulary(std::move(tokens), std::move(special));
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  auto out = open_out(path);
  if (!vocab.special_ids().empty()) {
    out << "#special:";
    bool firstid = true;
    for (int id : vocab.special_ids()) {
      out << (firstid ? " " : ",") << id;
      firstid = false;
    }
    out << '\n';
  }
  for (const auto& tok : vocab.tokens()) out << tok << '\n';
}

Eigen::MatrixXd load_embedding_table(const std::string& path) {
  auto in = open_in(path, std::ios::binary);
  std::uint64_t rows = read_u64(in, path);
  std::uint64_t cols = read_u64(in, path);
  if (rows * cols > (1ULL << 30))
    throw std::runtime_error("embedding table too large: " + path);
  Eigen::VectorXd flat = read_f32(in, rows * cols, path);
  const Eigen::Index nr = Eigen::Index(rows), nc = Eigen::Index(cols);
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    m.row(r) = flat.segment(r * m.cols(), m.cols()).transpose();
  return m;
}

void save_embedding_table(const Eigen::MatrixXd& table, const std::string& path) {
  auto out = open_out(path, std::ios::binary);
  write_matrix_section(out, table);
}

void save_tensor(const std::string& path, const std::vector<std::uint64_t>& dims,
                 const Eigen::VectorXd& data) {
  std::uint64_t count = 1;
  for (auto d : dims) count *= d;
  if (count != std::uint64_t(data.size()))
    throw std::invalid_argument("tensor dims do not match data size");
  auto out = open_out(path, std::ios::binary);
  write_u64(out, dims.size());
  for (auto d : dims) write_u64(out, d);
  write_f32(out, data);
}

std::pair<std::vector<std::uint64_t>, Eigen::VectorXd> load_tensor(
    const std::string& path) {
  auto in = open_in(path, std::ios::binary);
  std::uint64_t rank = read_u64(in, path);
  if (rank > 8) throw std::runtime_error("tensor rank too large: " + path);
  std::vector<std::uint64_t> dims(rank);
  std::uint64_t count = 1;
  for (auto& d : dims) {
    d = read_u64(in, path);
    count *= d;
  }
  if (count > (1ULL << 30)) throw std::runtime_error("tensor too large: " + path);
  return {std::move(dims), read_f32(in, count, path)};
}

PixelImage load_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw std::runtime_error("failed to decode PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);

  // Normalize everything to 8-bit RGB.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  std::vector<png_byte> row(width * 3);
  PixelImage img{Eigen::VectorXd(Eigen::Index(height) * width * 3),
                 int(height), int(width)};
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < width * 3; ++x)
      img.data[Eigen::Index(y) * width * 3 + x] = row[x] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

void save_png(const PixelImage& img, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("failed to encode PNG: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(img.w), png_uint_32(img.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(std::size_t(img.w) * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w * 3; ++x) {
      double v = std::clamp(img.data[Eigen::Index(y) * img.w * 3 + x], 0.0, 1.0);
      row[std::size_t(x)] = png_byte(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

PixelImage load_image(const std::string& path) {
  if (has_suffix(path, ".png")) return load_png(path);
  auto [dims, data] = load_tensor(path);
  if (dims.size() != 3 || dims[2] != 3)
    throw std::runtime_error("pixel tensor must be H x W x 3: " + path);
  return make_pixel(int(dims[0]), int(dims[1]), std::move(data));
}

void save_pixel_tensor(const PixelImage& img, const std::string& path) {
  save_tensor(path, {std::uint64_t(img.h), std::uint64_t(img.w), 3}, img.data);
}

LatentImage load_latent_tensor(const std::string& path) {
  auto [dims, data] = load_tensor(path);
  if (dims.size() != 3)
    throw std::runtime_error("latent tensor must have rank 3: " + path);
  return make_latent({int(dims[0]), int(dims[1]), int(dims[2])}, std::move(data));
}

void save_latent_tensor(const LatentImage& x, const std::string& path) {
  save_tensor(path, {std::uint64_t(x.h), std::uint64_t(x.w), std::uint64_t(x.c)},
              x.data);
}

void save_encoder(const EncoderParams& params, const std::string& bin_path,
                  const std::string& json_path) {
  params.validate();
  {
    auto out = open_out(bin_path, std::ios::binary);
    write_matrix_section(out, params.positional);
    write_matrix_section(out, params.affine_w);
    write_matrix_section(out, params.affine_b.transpose());
    write_matrix_section(out, params.mixing);
  }
  nlohmann::json j{
      {"seed", params.seed},
      {"max_length", params.max_length()},
      {"dim", params.dim()},
      {"context_dim", params.context_dim()},
      {"sections",
       {{{"name", "positional"}, {"rows", params.max_length()}, {"cols", params.dim()}},
        {{"name", "affine_w"}, {"rows", params.dim()}, {"cols", params.dim()}},
        {{"name", "affine_b"}, {"rows", 1}, {"cols", params.dim()}},
        {{"name", "mixing"}, {"rows", params.max_length()}, {"cols", params.max_length()}}}},
  };
  open_out(json_path) << j.dump(2) << '\n';
}

EncoderParams load_encoder(const std::string& bin_path,
                           const std::string& json_path) {
  nlohmann::json j = nlohmann::json::parse(open_in(json_path));
  auto in = open_in(bin_path, std::ios::binary);
  EncoderParams p;
  p.seed = j.value("seed", std::uint64_t{0});
  p.positional = read_matrix_section(in, bin_path);
  p.affine_w = read_matrix_section(in, bin_path);
  p.affine_b = read_matrix_section(in, bin_path).row(0).transpose();
  p.mixing = read_matrix_section(in, bin_path);
  if (p.max_length() != j.at("max_length").get<Eigen::Index>() ||
      p.dim() != j.at("dim").get<Eigen::Index>())
    throw std::runtime_error("encoder sidecar shapes do not match binary: " + json_path);
  p.validate();
  return p;
}

namespace {

nlohmann::json config_json(const InversionConfig& c) {
  nlohmann::json j{
      {"length", c.length},
      {"t_start", c.t_start},
      {"t_end", c.t_end},
      {"steps", c.steps},
      {"learning_rate", c.learning_rate},
      {"history", c.history},
      {"curvature_threshold", c.curvature_threshold},
      {"metric", to_string(c.metric)},
      {"seed", c.seed},
      {"noise_samples", c.noise_samples},
      {"optimizer", to_string(c.optimizer)},
  };
  if (c.init_token_ids) j["init_token_ids"] = *c.init_token_ids;
  return j;
}

InversionConfig config_from_json(const nlohmann::json& j) {
  InversionConfig c;
  c.length = j.value("length", c.length);
  c.t_start = j.value("t_start", c.t_start);
  c.t_end = j.value("t_end", c.t_end);
  c.steps = j.value("steps", c.steps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.history = j.value("history", c.history);
  c.curvature_threshold = j.value("curvature_threshold", c.curvature_threshold);
  if (j.contains("metric")) c.metric = metric_from_string(j.at("metric"));
  c.seed = j.value("seed", c.seed);
  c.noise_samples = j.value("noise_samples", c.noise_samples);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer"));
  if (j.contains("init_token_ids"))
    c.init_token_ids = j.at("init_token_ids").get<std::vector<int>>();
  return c;
}

}  // namespace

void save_result_json(const std::string& path, const InversionResult& result,
                      const InversionConfig& config) {
  nlohmann::json j{
      {"token_ids", result.token_ids},
      {"prompt", result.prompt},
      {"final_loss_estimate", result.final_loss_estimate},
      {"seed", config.seed},
      {"config", config_json(config)},
  };
  open_out(path) << j.dump(2) << '\n';
}

void save_trace_csv(const std::string& path, const std::vector<TracePoint>& trace) {
  auto out = open_out(path);
  out << "iter,t,loss\n";
  out.precision(17);
  for (const auto& p : trace) out << p.iter << ',' << p.t << ',' << p.loss << '\n';
}

void save_curve_csv(const std::string& path, const LossCurve& curve) {
  auto out = open_out(path);
  out << "t,mean_loss\n";
  out.precision(17);
  for (const auto& [t, loss] : curve.points) out << t << ',' << loss << '\n';
}

void save_sweep_csv(const std::string& path,
                    const std::vector<RangeSweepEntry>& entries) {
  auto out = open_out(path);
  out << "t_low,t_high,final_loss_estimate,prompt\n";
  out.precision(17);
  for (const auto& e : entries)
    out << e.range.first << ',' << e.range.second << ','
        << e.result.final_loss_estimate << ',' << e.result.prompt << '\n';
}

void save_curves_svg(const std::string& path, const std::vector<LossCurve>& curves) {
  if (curves.empty()) throw std::invalid_argument("no curves to plot");
  double t_min = 1e300, t_max = -1e300, v_min = 1e300, v_max = -1e300;
  for (const auto& c : curves)
    for (const auto& [t, v] : c.points) {
      t_min = std::min(t_min, double(t));
      t_max = std::max(t_max, double(t));
      v_min = std::min(v_min, v);
      v_max = std::max(v_max, v);
    }
  if (t_max == t_min) t_max = t_min + 1;
  if (v_max == v_min) v_max = v_min + 1;

  const double W = 640, H = 400, m = 50;
  auto sx = [&](double t) { return m + (t - t_min) / (t_max - t_min) * (W - 2 * m); };
  auto sy = [&](double v) { return H - m - (v - v_min) / (v_max - v_min) * (H - 2 * m); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << m << "\" y1=\"" << H - m << "\" x2=\"" << W - m
      << "\" y2=\"" << H - m << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\""
      << H - m << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
      << "\" font-size=\"12\" text-anchor=\"middle\">t</text>\n"
      << "<text x=\"14\" y=\"" << H / 2
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << H / 2 << ")\">mean loss</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = palette[i % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& [t, v] : curves[i].points)
      out << sx(double(t)) << ',' << sy(v) << ' ';
    out << "\"/>\n"
        << "<text x=\"" << W - m + 4 << "\" y=\"" << m + 14 * double(i + 1)
        << "\" font-size=\"10\" fill=\"" << color << "\">" << curves[i].prompt
        << "</text>\n";
  }
  out << "</svg>\n";
}

std::string load_prompt_from_result(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(open_in(path));
  return j.at("prompt").get<std::string>();
}

RunManifest RunManifest::load(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(open_in(path));
  RunManifest m;
  m.backend_path = j.at("backend").get<std::string>();
  m.vocab_path = j.at("vocabulary").get<std::string>();
  m.embeddings_path = j.at("embeddings").get<std::string>();
  m.encoder_path = j.at("encoder").get<std::string>();
  m.output_dir = j.value("output_dir", std::string("."));
  if (j.contains("config")) m.config = config_from_json(j.at("config"));
  return m;
}

void RunManifest::save(const std::string& path) const {
  nlohmann::json j{
      {"backend", backend_path},  {"vocabulary", vocab_path},
      {"embeddings", embeddings_path}, {"encoder", encoder_path},
      {"output_dir", output_dir}, {"config", config_json(config)},
  };
  open_out(path) << j.dump(2) << '\n';
}

}  // namespace promptinv
