#include "ccfg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <nlohmann/json.hpp>
#include <vector>

namespace ccfg {

namespace {

void put_f64(std::vector<unsigned char>& out, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(u >> (8 * b)));
}

double get_f64(const unsigned char* p) {
  std::uint64_t u = 0;
  for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(u);
}

std::filesystem::path payload_of(const std::filesystem::path& header) {
  auto p = header;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void write_predictions(const std::filesystem::path& header, const PredictionSet& set, const PredictionMeta& meta) {
  set.validate();
  nlohmann::ordered_json j;
  j["format"] = "ccfg-predictions";
  j["version"] = 1;
  j["payload"] = payload_of(header).filename().string();
  j["scheme"] = meta.scheme;
  j["steps"] = meta.steps;
  j["nfe_per_step"] = meta.nfe_per_step;
  j["nfe"] = set.nfe;
  j["timestamps"] = set.timestamps();
  j["ensemble"] = set.ensemble();
  j["height"] = set.predictions.h;
  j["width"] = set.predictions.w;
  j["timestamp_ids"] = set.timestamp_ids;
  {
    std::ofstream f(header);
    if (!f) throw FormatError("cannot write " + header.string());
    f << j.dump(2) << "\n";
  }
  std::vector<unsigned char> bytes;
  bytes.reserve((set.predictions.size() + set.truths.size()) * 8);
  for (double v : set.predictions.data) put_f64(bytes, v);
  for (double v : set.truths.data) put_f64(bytes, v);
  std::ofstream f(payload_of(header), std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write to " + payload_of(header).string());
}

PredictionSet read_predictions(const std::filesystem::path& header, PredictionMeta* meta) {
  std::ifstream in(header);
  if (!in) throw FormatError("cannot open predictions " + header.string());
  PredictionSet set;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "ccfg-predictions") throw FormatError("not a predictions file");
    const int n = j.at("timestamps").get<int>();
    const int e = j.at("ensemble").get<int>();
    const int h = j.at("height").get<int>();
    const int w = j.at("width").get<int>();
    set.predictions = Tensor(n, e, h, w);
    set.truths = Tensor(n, 1, h, w);
    set.nfe = j.at("nfe").get<std::uint64_t>();
    set.timestamp_ids = j.at("timestamp_ids").get<std::vector<std::string>>();
    if (meta != nullptr) {
      meta->scheme = j.at("scheme").get<std::string>();
      meta->steps = j.at("steps").get<int>();
      meta->nfe_per_step = j.at("nfe_per_step").get<double>();
    }
    const auto payload = header.parent_path() / j.at("payload").get<std::string>();
    std::ifstream f(payload, std::ios::binary);
    if (!f) throw FormatError("cannot open " + payload.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() != (set.predictions.size() + set.truths.size()) * 8) {
      throw FormatError("predictions payload has the wrong size");
    }
    const unsigned char* p = bytes.data();
    for (double& v : set.predictions.data) v = get_f64(p), p += 8;
    for (double& v : set.truths.data) v = get_f64(p), p += 8;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("predictions " + header.string() + ": " + e.what());
  }
  return set;
}

void write_pgm(const std::filesystem::path& path, const FieldGrid& g, double lo, double hi) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f << "P5\n" << g.width << ' ' << g.height << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : g.values) {
    const double s = std::clamp((v - lo) / span, 0.0, 1.0);
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * s))));
  }
}

void write_grid_csv(const std::filesystem::path& path, const FieldGrid& g) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path.string());
  f << std::setprecision(17);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) f << (x ? "," : "") << g(y, x);
    f << '\n';
  }
}

}  // namespace ccfg
