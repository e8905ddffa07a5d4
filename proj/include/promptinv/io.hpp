#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "promptinv/backend.hpp"
#include "promptinv/encoder.hpp"
#include "promptinv/inversion.hpp"
#include "promptinv/probe.hpp"
#include "promptinv/vocab.hpp"

namespace promptinv {

// --- vocabulary: one token per line, optional leading "#special: i,j" ---
Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

// --- embedding table: u64 |V|, u64 d, then float32 row-major, LE ---
Eigen::MatrixXd load_embedding_table(const std::string& path);
void save_embedding_table(const Eigen::MatrixXd& table, const std::string& path);

// --- raw tensor: u64 rank, u64 dims[rank], then float32 data, LE ---
void save_tensor(const std::string& path, const std::vector<std::uint64_t>& dims,
                 const Eigen::VectorXd& data);
std::pair<std::vector<std::uint64_t>, Eigen::VectorXd> load_tensor(
    const std::string& path);

// --- images ---
PixelImage load_png(const std::string& path);
void save_png(const PixelImage& img, const std::string& path);
/// Dispatches on the ".png" extension, otherwise reads the raw tensor
/// format (rank 3, H x W x 3).
PixelImage load_image(const std::string& path);
void save_pixel_tensor(const PixelImage& img, const std::string& path);

LatentImage load_latent_tensor(const std::string& path);
void save_latent_tensor(const LatentImage& x, const std::string& path);

// --- encoder params: binary sections in the table format + JSON sidecar ---
void save_encoder(const EncoderParams& params, const std::string& bin_path,
                  const std::string& json_path);
EncoderParams load_encoder(const std::string& bin_path,
                           const std::string& json_path);

// --- run artifacts ---
void save_result_json(const std::string& path, const InversionResult& result,
                      const InversionConfig& config);
void save_trace_csv(const std::string& path, const std::vector<TracePoint>& trace);
void save_curve_csv(const std::string& path, const LossCurve& curve);
void save_sweep_csv(const std::string& path,
                    const std::vector<RangeSweepEntry>& entries);
/// Minimal SVG line chart of one or more loss curves.
void save_curves_svg(const std::string& path, const std::vector<LossCurve>& curves);

std::string load_prompt_from_result(const std::string& path);

/// Single source of truth for one CLI run: asset paths plus the inversion
/// configuration. Flags override individual fields after loading.
struct RunManifest {
  std::string backend_path;
  std::string vocab_path;
  std::string embeddings_path;
  std::string encoder_path;   // binary; sidecar is <encoder_path>.json
  std::string output_dir = ".";
  InversionConfig config;

  static RunManifest load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace promptinv
