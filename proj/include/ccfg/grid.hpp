#pragma once

// Paired wind-field domain types and the preprocessing transforms applied
// to them before they reach the network: coarsening, bilinear upsampling,
// direction encoding, standardization, conditioning dropout and cropping.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ccfg/tensor.hpp"

namespace ccfg {

/// One variable on a 2-D grid, row-major.
struct FieldGrid {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  std::string units;

  FieldGrid() = default;
  FieldGrid(int h, int w, double fill = 0.0, std::string u = {});
  FieldGrid(int h, int w, std::vector<double> v, std::string u = {});

  double& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t size() const { return values.size(); }

  /// Throws DimensionError / ValidationError if the shape or payload is invalid.
  void validate() const;
};

bool operator==(const FieldGrid& a, const FieldGrid& b);

enum class VariableKind { target, input };
enum class Resolution { high, low, static_field };
enum class Encoding { scalar, direction_sincos };

std::string to_string(VariableKind v);
std::string to_string(Resolution v);
std::string to_string(Encoding v);
VariableKind parse_kind(const std::string& s);
Resolution parse_resolution(const std::string& s);
Encoding parse_encoding(const std::string& s);

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::input;
  Resolution resolution = Resolution::high;
  Encoding encoding = Encoding::scalar;
  std::string dropout_group;
  std::string units;
  /// Key into StandardizationStats; empty means the channel is not standardized.
  std::string stats_key;

  int channel_count() const { return encoding == Encoding::direction_sincos ? 2 : 1; }
  bool operator==(const VariableSpec&) const = default;
};

struct Moments {
  double mean = 0.0;
  double std = 1.0;
  bool operator==(const Moments&) const = default;
};

struct StandardizationStats {
  std::map<std::string, Moments> entries;

  const Moments& at(const std::string& key) const;
  bool contains(const std::string& key) const { return entries.count(key) != 0; }
  bool operator==(const StandardizationStats&) const = default;
};

struct VariableGrid {
  VariableSpec spec;
  FieldGrid grid;
};

/// Ordered conditioning inputs plus a presence flag per dropout group.
/// Dropping a group never touches the stored grids; absent groups are
/// replaced by zeros when channels are assembled.
class ConditioningSet {
 public:
  ConditioningSet() = default;
  explicit ConditioningSet(std::vector<VariableGrid> variables);

  const std::vector<VariableGrid>& variables() const { return variables_; }
  const std::vector<std::string>& groups() const { return groups_; }
  const std::vector<bool>& presence() const { return presence_; }

  int group_index(const std::string& group) const;  // -1 if unknown
  bool is_present(const std::string& group) const;
  /// Bit i set when groups()[i] is present.
  std::uint32_t presence_mask() const;
  int channel_count() const;

  const VariableGrid* find(const std::string& name) const;

  ConditioningSet with_presence(std::vector<bool> presence) const;
  /// Keeps only the named variables (in their existing order).
  ConditioningSet restricted_to(const std::vector<std::string>& names) const;

 private:
  std::vector<VariableGrid> variables_;
  std::vector<std::string> groups_;
  std::vector<bool> presence_;
};

struct SamplePair {
  std::vector<VariableGrid> targets;
  ConditioningSet conditioning;
  StandardizationStats stats;
  std::string timestamp_id;
  int scale_factor = 8;

  const VariableGrid& target(const std::string& name) const;
  int hr_height() const;
  int hr_width() const;
  /// Checks the pairing invariants: shared hr shape, low-res = hr / scale.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Operations

FieldGrid coarsen(const FieldGrid& grid, int factor);
/// Align-corners bilinear interpolation with edge clamping.
FieldGrid upsample_bilinear(const FieldGrid& grid, int factor);

std::pair<double, double> encode_direction(double theta_degrees);
/// Inverse of encode_direction, result in [0, 360).
double decode_direction(double sin_component, double cos_component);

FieldGrid standardize(const FieldGrid& grid, const Moments& stats);
FieldGrid destandardize(const FieldGrid& grid, const Moments& stats);

ConditioningSet apply_dropout(const ConditioningSet& cond, const std::set<std::string>& dropped_groups);

SamplePair sample_crop(const SamplePair& pair, int size, std::uint64_t rng_seed, bool centered);

/// Model-facing channels for the conditioning: low-res variables are
/// upsampled to the target shape, directions become (sin, cos) and scalars
/// are standardized when they carry a stats key. Absent groups are zero.
struct AssembledConditioning {
  Tensor channels;                 // [1, C, H, W]
  std::vector<int> channel_group;  // group index per channel
};
AssembledConditioning assemble_conditioning(const ConditioningSet& cond,
                                            const StandardizationStats& stats, int hr_height,
                                            int hr_width, int scale_factor);

/// Target channels: standardized speed followed by direction (sin, cos).
Tensor assemble_targets(const SamplePair& pair);

/// Inverse of the speed channel of assemble_targets, in physical units.
FieldGrid speed_from_channels(const Tensor& targets, int row, const StandardizationStats& stats);

/// Domain-wide standardization statistics. Wind speeds (target and low-res)
/// share the low-res speed statistics.
StandardizationStats compute_stats(const std::vector<SamplePair>& pairs);

// Variable names used by the synthetic data and the pipeline.
namespace vars {
inline constexpr const char* hr_speed = "hr_speed";
inline constexpr const char* hr_direction = "hr_direction";
inline constexpr const char* topography = "topography";
inline constexpr const char* land_use = "land_use";
inline constexpr const char* lr_speed = "lr_speed";
inline constexpr const char* lr_direction = "lr_direction";
inline constexpr const char* surface_pressure = "surface_pressure";
inline constexpr const char* temperature_2m = "temperature_2m";
inline constexpr const char* precipitation = "precipitation";
inline constexpr const char* boundary_layer_height = "boundary_layer_height";
inline constexpr const char* speed_stats = "speed";

/// Topography, low-res speed and low-res direction.
const std::vector<std::string>& basic_inputs();
/// All eight conditioning inputs.
const std::vector<std::string>& all_inputs();
const std::vector<std::string>& named_set(const std::string& name);  // "basic" | "all"
}  // namespace vars

}  // namespace ccfg
