#include "ccfg/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

namespace ccfg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kRecordMagic{'C', 'C', 'F', 'R'};
constexpr std::size_t kRecordHeader = 8;

void put_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

const FieldGrid& grid_for(const SamplePair& pair, const std::string& name, std::size_t record) {
  for (const auto& t : pair.targets) {
    if (t.spec.name == name) return t.grid;
  }
  if (const auto* v = pair.conditioning.find(name)) return v->grid;
  throw FormatError("record " + std::to_string(record) + ": missing variable '" + name + "'");
}

std::pair<int, int> expected_shape(const VariableSpec& spec, int h, int w, int s) {
  if (spec.resolution == Resolution::low) return {h / s, w / s};
  return {h, w};
}

}  // namespace

Dataset Dataset::from_pairs(std::vector<SamplePair> pairs) {
  if (pairs.empty()) throw ValidationError("Dataset: no samples");
  Dataset d;
  const SamplePair& first = pairs.front();
  for (const auto& t : first.targets) d.variables.push_back(t.spec);
  for (const auto& v : first.conditioning.variables()) d.variables.push_back(v.spec);
  d.hr_height = first.hr_height();
  d.hr_width = first.hr_width();
  d.scale_factor = first.scale_factor;
  d.stats = first.stats;
  d.pairs = std::move(pairs);
  d.validate();
  return d;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    p.validate();
    if (p.hr_height() != hr_height || p.hr_width() != hr_width || p.scale_factor != scale_factor) {
      throw DimensionError("record " + std::to_string(i) + ": shape differs from dataset");
    }
  }
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  const int h = dataset.hr_height;
  const int w = dataset.hr_width;
  const int s = dataset.scale_factor;

  json vars = json::array();
  std::size_t offset = kRecordHeader;
  for (const auto& v : dataset.variables) {
    const auto [eh, ew] = expected_shape(v, h, w, s);
    vars.push_back({{"name", v.name},
                    {"kind", to_string(v.kind)},
                    {"resolution", to_string(v.resolution)},
                    {"encoding", to_string(v.encoding)},
                    {"dropout_group", v.dropout_group},
                    {"units", v.units},
                    {"stats_key", v.stats_key},
                    {"height", eh},
                    {"width", ew},
                    {"record_offset", offset}});
    offset += 4u * static_cast<std::size_t>(eh) * ew;
  }
  const std::size_t record_size = offset;

  json stats = json::object();
  for (const auto& [key, m] : dataset.stats.entries) stats[key] = {{"mean", m.mean}, {"std", m.std}};

  json records = json::array();
  std::vector<char> payload;
  payload.reserve(record_size * dataset.pairs.size());
  for (std::size_t r = 0; r < dataset.pairs.size(); ++r) {
    const auto& pair = dataset.pairs[r];
    records.push_back({{"timestamp_id", pair.timestamp_id}, {"offset", r * record_size}});
    payload.insert(payload.end(), kRecordMagic.begin(), kRecordMagic.end());
    put_u32(payload, static_cast<std::uint32_t>(r));
    for (const auto& v : dataset.variables) {
      const FieldGrid& g = grid_for(pair, v.name, r);
      for (double x : g.values) put_u32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  }

  json manifest = {{"format", "ccfg-dataset"},
                   {"version", 1},
                   {"payload", "payload.bin"},
                   {"hr_height", h},
                   {"hr_width", w},
                   {"scale_factor", s},
                   {"record_size", record_size},
                   {"variables", vars},
                   {"stats", stats},
                   {"records", records}};

  const fs::path manifest_path = dir / "manifest.json";
  {
    std::ofstream out(dir / "payload.bin", std::ios::binary);
    if (!out) throw FormatError("cannot write " + (dir / "payload.bin").string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  {
    std::ofstream out(manifest_path);
    if (!out) throw FormatError("cannot write " + manifest_path.string());
    out << manifest.dump(2) << '\n';
  }
  return manifest_path;
}

Dataset read_dataset(const fs::path& manifest_path, const std::vector<std::string>& required_variables) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open manifest " + manifest_path.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }

  Dataset d;
  std::vector<std::size_t> offsets;
  std::size_t record_size = 0;
  try {
    if (m.at("format").get<std::string>() != "ccfg-dataset") throw FormatError("manifest: unknown format");
    d.hr_height = m.at("hr_height").get<int>();
    d.hr_width = m.at("hr_width").get<int>();
    d.scale_factor = m.at("scale_factor").get<int>();
    record_size = m.at("record_size").get<std::size_t>();
    for (const auto& v : m.at("variables")) {
      VariableSpec s;
      s.name = v.at("name").get<std::string>();
      s.kind = parse_kind(v.at("kind").get<std::string>());
      s.resolution = parse_resolution(v.at("resolution").get<std::string>());
      s.encoding = parse_encoding(v.at("encoding").get<std::string>());
      s.dropout_group = v.at("dropout_group").get<std::string>();
      s.units = v.at("units").get<std::string>();
      s.stats_key = v.value("stats_key", std::string{});
      const auto [eh, ew] = expected_shape(s, d.hr_height, d.hr_width, d.scale_factor);
      if (v.at("height").get<int>() != eh || v.at("width").get<int>() != ew) {
        throw FormatError("manifest: variable '" + s.name + "' shape mismatch");
      }
      const auto off = v.at("record_offset").get<std::size_t>();
      if (off < kRecordHeader || off + 4u * static_cast<std::size_t>(eh) * ew > record_size) {
        throw FormatError("manifest: variable '" + s.name + "' lies outside the record");
      }
      d.variables.push_back(s);
      offsets.push_back(off);
    }
    for (const auto& [key, st] : m.at("stats").items()) {
      d.stats.entries[key] = {st.at("mean").get<double>(), st.at("std").get<double>()};
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }

  for (const auto& name : required_variables) {
    const bool found = std::any_of(d.variables.begin(), d.variables.end(),
                                   [&](const VariableSpec& v) { return v.name == name; });
    if (!found) throw FormatError("manifest: missing variable '" + name + "'");
  }

  const fs::path payload_path = manifest_path.parent_path() / m.value("payload", std::string("payload.bin"));
  std::ifstream pin(payload_path, std::ios::binary);
  if (!pin) throw FormatError("cannot open payload " + payload_path.string());
  const std::vector<char> payload((std::istreambuf_iterator<char>(pin)), std::istreambuf_iterator<char>());

  const auto& records = m.at("records");
  for (std::size_t r = 0; r < records.size(); ++r) {
    const std::string where = "record " + std::to_string(r);
    const auto base = records[r].at("offset").get<std::size_t>();
    if (base + record_size > payload.size()) throw FormatError(where + ": payload truncated");
    const char* rec = payload.data() + base;
    if (!std::equal(kRecordMagic.begin(), kRecordMagic.end(), rec)) {
      throw FormatError(where + ": bad magic bytes");
    }
    if (get_u32(rec + 4) != r) throw FormatError(where + ": record index mismatch");

    SamplePair pair;
    pair.scale_factor = d.scale_factor;
    pair.stats = d.stats;
    pair.timestamp_id = records[r].at("timestamp_id").get<std::string>();
    std::vector<VariableGrid> cond;
    for (std::size_t vi = 0; vi < d.variables.size(); ++vi) {
      const auto& spec = d.variables[vi];
      const auto [eh, ew] = expected_shape(spec, d.hr_height, d.hr_width, d.scale_factor);
      std::vector<double> values(static_cast<std::size_t>(eh) * ew);
      const char* p = rec + offsets[vi];
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<double>(std::bit_cast<float>(get_u32(p + 4 * i)));
      }
      FieldGrid grid(eh, ew, std::move(values), spec.units);
      if (spec.kind == VariableKind::target) {
        pair.targets.push_back({spec, std::move(grid)});
      } else {
        cond.push_back({spec, std::move(grid)});
      }
    }
    pair.conditioning = ConditioningSet(std::move(cond));
    try {
      pair.validate();
    } catch (const Error& e) {
      throw FormatError(where + ": " + e.what());
    }
    d.pairs.push_back(std::move(pair));
  }
  return d;
}

}  // namespace ccfg
