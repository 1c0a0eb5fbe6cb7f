#include "textres/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "textres/core/error.hpp"

namespace textres::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinearly interpolated lattice noise with `cells` cells per side.
Tensor value_noise(int size, int cells, Rng& rng) {
  Tensor lattice({cells + 1, cells + 1});
  for (double& v : lattice.values()) v = rng.uniform();
  Tensor out({size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double fy = static_cast<double>(y) / size * cells, fx = static_cast<double>(x) / size * cells;
      const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
      const double ty = smoothstep(fy - iy), tx = smoothstep(fx - ix);
      auto at = [&](int r, int c) { return lattice[static_cast<std::size_t>(r) * (cells + 1) + c]; };
      const double top = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
      const double bot = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
      out[static_cast<std::size_t>(y) * size + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace

Image procedural_image(int size, Seed seed, std::uint64_t index) {
  require(size >= 8, ErrorKind::InvalidParam, "procedural images must be at least 8x8");
  Rng rng(seed, "pipeline.procedural", index);
  Tensor img = Tensor::hwc(size, size, 3);

  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.15, 0.85);
    c1[c] = rng.uniform(0.15, 0.85);
  }
  const double theta = rng.uniform(0.0, 2.0 * M_PI);
  const double gx = std::cos(theta), gy = std::sin(theta);
  Tensor texture({size, size});
  double amp = 0.5;
  for (int cells = 2; cells <= std::max(2, size / 4); cells *= 2, amp *= 0.5) {
    const Tensor octave = value_noise(size, cells, rng);
    for (std::size_t i = 0; i < texture.size(); ++i) texture[i] += amp * (octave[i] - 0.5);
  }
  double tint[3];
  for (double& t : tint) t = rng.uniform(0.5, 1.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = ((x - size / 2.0) * gx + (y - size / 2.0) * gy) / size + 0.5;
      const double n = texture[static_cast<std::size_t>(y) * size + x];
      for (int c = 0; c < 3; ++c) img(y, x, c) = c0[c] * (1 - u) + c1[c] * u + tint[c] * n;
    }
  }

  const int shapes = 2 + static_cast<int>(rng.below(4));
  for (int s = 0; s < shapes; ++s) {
    const bool circle = rng.uniform() < 0.5;
    const double cy = rng.uniform(0, size), cx = rng.uniform(0, size);
    const double r = rng.uniform(0.08, 0.25) * size;
    const double hy = rng.uniform(0.05, 0.2) * size, hx = rng.uniform(0.05, 0.2) * size;
    double col[3];
    for (double& v : col) v = rng.uniform(0.05, 0.95);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        const bool inside = circle ? dy * dy + dx * dx <= r * r : std::abs(dy) <= hy && std::abs(dx) <= hx;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img(y, x, c) = col[c];
      }
    }
  }
  return Image::clipped(std::move(img));
}

Image quantize8(const Image& img) {
  Tensor t = img.pixels();
  for (double& v : t.values()) v = std::round(v * 255.0) / 255.0;
  return Image(std::move(t), img.color_space());
}

void write_png(const Image& img, const fs::path& path) {
  const int h = img.height(), w = img.width(), c = img.channels();
  cv::Mat mat(h, w, c == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < h; ++y) {
    auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        const int src = c == 3 ? 2 - k : k;  // RGB -> BGR
        row[x * c + k] = static_cast<unsigned char>(std::clamp(std::lround(img(y, x, src) * 255.0), 0L, 255L));
      }
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp.png";
  bool ok = false;
  try {
    ok = cv::imwrite(tmp.string(), mat);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::Io, "cannot write " + path.string() + ": " + e.what());
  }
  require(ok, ErrorKind::Io, "cannot write " + path.string());
  fs::rename(tmp, path);
}

Image read_png(const fs::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  require(!mat.empty(), ErrorKind::Io, "cannot read image " + path.string());
  require(mat.depth() == CV_8U, ErrorKind::DataError, path.string() + ": only 8-bit images are supported");
  const int c = mat.channels();
  require(c == 1 || c == 3, ErrorKind::DataError, path.string() + ": expected 1 or 3 channels");
  Tensor t = Tensor::hwc(mat.rows, mat.cols, c);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < mat.cols; ++x)
      for (int k = 0; k < c; ++k) t(y, x, c == 3 ? 2 - k : k) = row[x * c + k] / 255.0;
  }
  return Image(std::move(t), c == 3 ? ColorSpace::RGB : ColorSpace::GRAY);
}

std::string params_to_json(const degrade::DegradationSpec& spec) {
  json j;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, degrade::GaussianNoise>) {
          j["sigma"] = p.sigma;
        } else if constexpr (std::is_same_v<T, degrade::Rain>) {
          j["num_streaks"] = p.num_streaks;
          j["length_px"] = p.length_px;
          j["angle_deg"] = p.angle_deg;
          j["intensity"] = p.intensity;
        } else if constexpr (std::is_same_v<T, degrade::Haze>) {
          j["beta"] = p.beta;
          j["airlight"] = p.airlight;
        } else {
          j["kernel_len"] = p.kernel_len;
          j["angle_deg"] = p.angle_deg;
        }
      },
      spec);
  return j.dump();
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::DependencyMissing, "manifest not found: " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.clean_path = j.at("clean_path").get<std::string>();
      r.degraded_path = j.at("degraded_path").get<std::string>();
      r.kind = j.at("kind").get<std::string>();
      r.params_json = j.at("params_json").dump();
      r.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("guidance_path")) r.guidance_path = j.at("guidance_path").get<std::string>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorKind::DataError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  require(!out.empty(), ErrorKind::DataError, "manifest is empty: " + path.string());
  return out;
}

void write_manifest(const std::vector<ManifestRecord>& records, const fs::path& path) {
  std::ostringstream out;
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["clean_path"] = r.clean_path;
    j["degraded_path"] = r.degraded_path;
    j["kind"] = r.kind;
    j["params_json"] = json::parse(r.params_json);
    j["seed"] = r.seed;
    if (r.guidance_path) j["guidance_path"] = *r.guidance_path;
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

Image load_record_image(const fs::path& manifest_dir, const std::string& rel_path, const std::string& record_id,
                        const char* role) {
  const fs::path p = manifest_dir / rel_path;
  require(fs::exists(p), ErrorKind::DataError,
          "record '" + record_id + "': missing " + role + " file " + p.string());
  try {
    return read_png(p);
  } catch (const Error& e) {
    fail(ErrorKind::DataError, "record '" + record_id + "': " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
    out << contents;
    out.flush();
    require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

}  // namespace textres::pipeline
