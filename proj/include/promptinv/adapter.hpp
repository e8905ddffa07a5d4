#pragma once

#include <cstdio>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "promptinv/backend.hpp"

namespace promptinv {

/// Binary tensor payload of the adapter protocol.
struct WireTensor {
  std::vector<std::uint64_t> dims;
  Eigen::VectorXd data;  // row-major flattening
};

/// Backend served by an external executable over stdin/stdout.
///
/// Wire protocol, one exchange per operation:
///   request:  one JSON line {"op": ..., scalar args...}, then one
///             length-prefixed binary tensor per tensor argument;
///   response: one JSON line {"ok": true, scalar results...} (or
///             {"ok": false, "error": msg}), then result tensors.
/// A tensor payload is u64 byte-length, then u64 rank, u64 dims[rank],
/// float64 data, all little-endian. The "info" exchange returns the
/// schedule's alpha_bar as its single tensor.
///
/// Ops: info, encode_image, decode_latent, predict_noise, loss_grad.
/// add_noise and sampling are composed client-side from the schedule.
class AdapterBackend : public DiffusionBackend {
 public:
  explicit AdapterBackend(const std::string& command);
  ~AdapterBackend() override;

  AdapterBackend(const AdapterBackend&) = delete;
  AdapterBackend& operator=(const AdapterBackend&) = delete;

  const NoiseSchedule& schedule() const override { return *schedule_; }
  std::array<int, 3> latent_shape() const override { return latent_shape_; }
  std::array<int, 2> pixel_shape() const override { return pixel_shape_; }
  Eigen::Index context_dim() const override { return context_dim_; }

  LatentImage encode_image(const PixelImage& img) const override;
  PixelImage decode_latent(const LatentImage& x) const override;
  LatentImage predict_noise(const LatentImage& x_t, int t,
                            const Eigen::MatrixXd& cond) const override;
  double loss_grad_cond(const LatentImage& x, int t, const LatentImage& eps,
                        const Eigen::MatrixXd& cond,
                        Eigen::MatrixXd* grad) const override;

 private:
  struct Process;

  // One request/response exchange; the stream is serialized by a mutex so
  // concurrent callers interleave whole exchanges.
  std::vector<WireTensor> exchange(const std::string& request_json,
                                   const std::vector<WireTensor>& payloads,
                                   std::string* response_json) const;

  std::unique_ptr<Process> proc_;
  mutable std::mutex io_mutex_;
  std::unique_ptr<NoiseSchedule> schedule_;
  std::array<int, 3> latent_shape_{};
  std::array<int, 2> pixel_shape_{};
  Eigen::Index context_dim_ = 0;
};

/// Serves a DiffusionBackend over the adapter protocol (used by the toy
/// adapter executable and by adapter conformance tests).
int serve_adapter(const DiffusionBackend& backend, std::FILE* in, std::FILE* out);

}  // namespace promptinv
