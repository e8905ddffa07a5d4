#include "promptinv/adapter.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace promptinv {

namespace {

std::uint64_t tensor_count(const WireTensor& t) {
  std::uint64_t n = 1;
  for (auto d : t.dims) n *= d;
  return n;
}

void write_all(std::FILE* f, const void* buf, std::size_t n) {
  if (std::fwrite(buf, 1, n, f) != n)
    throw std::runtime_error("adapter stream write failed");
}

void read_all(std::FILE* f, void* buf, std::size_t n) {
  if (std::fread(buf, 1, n, f) != n)
    throw std::runtime_error("adapter stream closed unexpectedly");
}

void write_u64(std::FILE* f, std::uint64_t v) { write_all(f, &v, 8); }

std::uint64_t read_u64(std::FILE* f) {
  std::uint64_t v;
  read_all(f, &v, 8);
  return v;
}

void write_tensor(std::FILE* f, const WireTensor& t) {
  std::uint64_t count = tensor_count(t);
  if (count != std::uint64_t(t.data.size()))
    throw std::logic_error("wire tensor dims do not match data size");
  std::uint64_t bytes = 8 * (1 + t.dims.size()) + 8 * count;
  write_u64(f, bytes);
  write_u64(f, t.dims.size());
  for (auto d : t.dims) write_u64(f, d);
  write_all(f, t.data.data(), 8 * count);
}

WireTensor read_tensor(std::FILE* f) {
  std::uint64_t bytes = read_u64(f);
  std::uint64_t rank = read_u64(f);
  if (rank > 8) throw std::runtime_error("adapter tensor rank too large");
  WireTensor t;
  t.dims.resize(rank);
  std::uint64_t count = 1;
  for (auto& d : t.dims) {
    d = read_u64(f);
    count *= d;
  }
  if (bytes != 8 * (1 + rank) + 8 * count)
    throw std::runtime_error("adapter tensor length prefix mismatch");
  if (count > (1ULL << 30)) throw std::runtime_error("adapter tensor too large");
  t.data.resize(Eigen::Index(count));
  read_all(f, t.data.data(), 8 * count);
  return t;
}

void write_line(std::FILE* f, const std::string& line) {
  write_all(f, line.data(), line.size());
  write_all(f, "\n", 1);
  std::fflush(f);
}

std::string read_line(std::FILE* f) {
  std::string line;
  int ch;
  while ((ch = std::fgetc(f)) != EOF && ch != '\n') line.push_back(char(ch));
  if (ch == EOF && line.empty())
    throw std::runtime_error("adapter stream closed unexpectedly");
  return line;
}

WireTensor latent_tensor(const LatentImage& x) {
  return WireTensor{{std::uint64_t(x.h), std::uint64_t(x.w), std::uint64_t(x.c)},
                    x.data};
}

WireTensor pixel_tensor(const PixelImage& img) {
  return WireTensor{{std::uint64_t(img.h), std::uint64_t(img.w), 3}, img.data};
}

WireTensor matrix_tensor(const Eigen::MatrixXd& m) {
  WireTensor t{{std::uint64_t(m.rows()), std::uint64_t(m.cols())},
               Eigen::VectorXd(m.size())};
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    t.data.segment(r * m.cols(), m.cols()) = m.row(r).transpose();
  return t;
}

Eigen::MatrixXd tensor_matrix(const WireTensor& t) {
  if (t.dims.size() != 2) throw std::runtime_error("expected rank-2 tensor");
  Eigen::MatrixXd m(Eigen::Index(t.dims[0]), Eigen::Index(t.dims[1]));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    m.row(r) = t.data.segment(r * m.cols(), m.cols()).transpose();
  return m;
}

}  // namespace

struct AdapterBackend::Process {
  pid_t pid = -1;
  std::FILE* to_child = nullptr;
  std::FILE* from_child = nullptr;

  explicit Process(const std::string& command) {
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
      throw std::runtime_error("cannot create adapter pipes");
    pid = fork();
    if (pid < 0) throw std::runtime_error("cannot fork adapter process");
    if (pid == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), (char*)nullptr);
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    to_child = fdopen(in_pipe[1], "wb");
    from_child = fdopen(out_pipe[0], "rb");
    if (!to_child || !from_child)
      throw std::runtime_error("cannot open adapter streams");
  }

  ~Process() {
    if (to_child) std::fclose(to_child);
    if (from_child) std::fclose(from_child);
    if (pid > 0) waitpid(pid, nullptr, 0);
  }
};

AdapterBackend::AdapterBackend(const std::string& command)
    : proc_(std::make_unique<Process>(command)) {
  std::string resp;
  auto tensors = exchange(R"({"op":"info"})", {}, &resp);
  nlohmann::json j = nlohmann::json::parse(resp);
  auto ls = j.at("latent_shape").get<std::vector<int>>();
  auto ps = j.at("pixel_shape").get<std::vector<int>>();
  if (ls.size() != 3 || ps.size() != 2)
    throw std::runtime_error("adapter info: bad shape fields");
  latent_shape_ = {ls[0], ls[1], ls[2]};
  pixel_shape_ = {ps[0], ps[1]};
  context_dim_ = j.at("context_dim").get<int>();
  if (tensors.size() != 1 || tensors[0].dims.size() != 1)
    throw std::runtime_error("adapter info: expected the alpha_bar tensor");
  schedule_ = std::make_unique<NoiseSchedule>(tensors[0].data);
}

AdapterBackend::~AdapterBackend() = default;

std::vector<WireTensor> AdapterBackend::exchange(
    const std::string& request_json, const std::vector<WireTensor>& payloads,
    std::string* response_json) const {
  std::lock_guard<std::mutex> lock(io_mutex_);
  write_line(proc_->to_child, request_json);
  for (const auto& t : payloads) write_tensor(proc_->to_child, t);
  std::fflush(proc_->to_child);

  std::string resp = read_line(proc_->from_child);
  nlohmann::json j = nlohmann::json::parse(resp);
  if (!j.value("ok", false))
    throw std::runtime_error("adapter error: " +
                             j.value("error", std::string("unknown")));
  std::uint64_t n_out = j.value("tensors", std::uint64_t{0});
  std::vector<WireTensor> out;
  for (std::uint64_t i = 0; i < n_out; ++i)
    out.push_back(read_tensor(proc_->from_child));
  if (response_json) *response_json = resp;
  return out;
}

LatentImage AdapterBackend::encode_image(const PixelImage& img) const {
  check_pixel(img);
  auto out = exchange(R"({"op":"encode_image"})", {pixel_tensor(img)}, nullptr);
  if (out.size() != 1 || out[0].dims.size() != 3)
    throw std::runtime_error("adapter encode_image: bad response");
  return make_latent(latent_shape_, out[0].data);
}

PixelImage AdapterBackend::decode_latent(const LatentImage& x) const {
  check_latent(x);
  auto out = exchange(R"({"op":"decode_latent"})", {latent_tensor(x)}, nullptr);
  if (out.size() != 1 || out[0].dims.size() != 3)
    throw std::runtime_error("adapter decode_latent: bad response");
  return make_pixel(pixel_shape_[0], pixel_shape_[1], out[0].data);
}

LatentImage AdapterBackend::predict_noise(const LatentImage& x_t, int t,
                                          const Eigen::MatrixXd& cond) const {
  check_latent(x_t);
  check_cond(cond);
  schedule_->check_timestep(t);
  nlohmann::json req{{"op", "predict_noise"}, {"t", t}};
  auto out = exchange(req.dump(), {latent_tensor(x_t), matrix_tensor(cond)}, nullptr);
  if (out.size() != 1) throw std::runtime_error("adapter predict_noise: bad response");
  return make_latent(latent_shape_, out[0].data);
}

double AdapterBackend::loss_grad_cond(const LatentImage& x, int t,
                                      const LatentImage& eps,
                                      const Eigen::MatrixXd& cond,
                                      Eigen::MatrixXd* grad) const {
  check_latent(x);
  check_latent(eps);
  check_cond(cond);
  schedule_->check_timestep(t);
  nlohmann::json req{{"op", "loss_grad"}, {"t", t}, {"grad", grad != nullptr}};
  std::string resp;
  auto out = exchange(req.dump(),
                      {latent_tensor(x), latent_tensor(eps), matrix_tensor(cond)},
                      &resp);
  nlohmann::json j = nlohmann::json::parse(resp);
  if (grad) {
    if (out.size() != 1) throw std::runtime_error("adapter loss_grad: missing gradient");
    *grad = tensor_matrix(out[0]);
  }
  return j.at("loss").get<double>();
}

int serve_adapter(const DiffusionBackend& backend, std::FILE* in, std::FILE* out) {
  for (;;) {
    std::string line;
    int ch;
    while ((ch = std::fgetc(in)) != EOF && ch != '\n') line.push_back(char(ch));
    if (ch == EOF && line.empty()) return 0;  // clean shutdown

    try {
      nlohmann::json req = nlohmann::json::parse(line);
      std::string op = req.at("op").get<std::string>();

      if (op == "info") {
        auto [h, w, c] = backend.latent_shape();
        auto [H, W] = backend.pixel_shape();
        nlohmann::json resp{{"ok", true},
                            {"latent_shape", {h, w, c}},
                            {"pixel_shape", {H, W}},
                            {"context_dim", int(backend.context_dim())},
                            {"tensors", 1}};
        write_line(out, resp.dump());
        write_tensor(out, WireTensor{{std::uint64_t(backend.schedule().T())},
                                     backend.schedule().alpha_bar()});
      } else if (op == "encode_image") {
        WireTensor img = read_tensor(in);
        auto [H, W] = backend.pixel_shape();
        LatentImage lat = backend.encode_image(make_pixel(H, W, img.data));
        write_line(out, R"({"ok":true,"tensors":1})");
        write_tensor(out, latent_tensor(lat));
      } else if (op == "decode_latent") {
        WireTensor lat = read_tensor(in);
        PixelImage img = backend.decode_latent(
            make_latent(backend.latent_shape(), lat.data));
        write_line(out, R"({"ok":true,"tensors":1})");
        write_tensor(out, pixel_tensor(img));
      } else if (op == "predict_noise") {
        int t = req.at("t").get<int>();
        WireTensor xt = read_tensor(in);
        WireTensor cond = read_tensor(in);
        LatentImage pred = backend.predict_noise(
            make_latent(backend.latent_shape(), xt.data), t, tensor_matrix(cond));
        write_line(out, R"({"ok":true,"tensors":1})");
        write_tensor(out, latent_tensor(pred));
      } else if (op == "loss_grad") {
        int t = req.at("t").get<int>();
        bool want_grad = req.value("grad", false);
        WireTensor x = read_tensor(in);
        WireTensor eps = read_tensor(in);
        WireTensor cond = read_tensor(in);
        Eigen::MatrixXd grad;
        double loss = backend.loss_grad_cond(
            make_latent(backend.latent_shape(), x.data), t,
            make_latent(backend.latent_shape(), eps.data), tensor_matrix(cond),
            want_grad ? &grad : nullptr);
        nlohmann::json resp{{"ok", true}, {"loss", loss}, {"tensors", want_grad ? 1 : 0}};
        write_line(out, resp.dump());
        if (want_grad) write_tensor(out, matrix_tensor(grad));
      } else {
        nlohmann::json resp{{"ok", false}, {"error", "unknown op: " + op}, {"tensors", 0}};
        write_line(out, resp.dump());
      }
    } catch (const std::exception& e) {
      nlohmann::json resp{{"ok", false}, {"error", e.what()}, {"tensors", 0}};
      write_line(out, resp.dump());
    }
    std::fflush(out);  // response tensors must leave the stdio buffer
  }
}

}  // namespace promptinv
