#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace glyco {

/// Length of one post-prandial window: 60 samples at 5-minute spacing.
inline constexpr int kSeqLen = 60;
/// Timestep of the anchoring meal (one hour of pre-meal context).
inline constexpr int kMealIndex = 12;
inline constexpr double kSampleMinutes = 5.0;
inline constexpr int kNumMealChannels = 6;

inline constexpr double kGlucoseMin = 20.0;
inline constexpr double kGlucoseMax = 500.0;

enum MealChannel : int { kTotalAmount = 0, kCarbs, kSugar, kFiber, kFat, kProtein };

enum class Sex { F, M };
enum class Diagnosis { Prediabetes, T2D };

const char* to_string(Sex sex);
const char* to_string(Diagnosis dx);
std::optional<Diagnosis> parse_diagnosis(const std::string& text);

using OptReal = std::optional<double>;
using MealRow = std::array<OptReal, kNumMealChannels>;

struct Demographics {
  double age = 0.0;     // years
  double weight = 0.0;  // kg
  Sex sex = Sex::F;

  bool operator==(const Demographics&) const = default;
};

struct PpgrRecord {
  std::string person_id;
  std::string ppgr_id;
  std::array<OptReal, kSeqLen> glucose{};  // mg/dL
  std::array<MealRow, kSeqLen> meals{};    // grams per channel
  Demographics demographics;
  std::optional<Diagnosis> diagnosis;

  int observed_glucose() const;
  /// Glucose with gaps filled by linear interpolation; ends take the nearest
  /// observed value. Throws AllMissing when nothing is observed.
  std::array<double, kSeqLen> interpolated_glucose() const;
};

struct Violation {
  std::string field;
  int index = -1;  // timestep, or -1 for record-level rules
  std::string rule;
};

std::vector<Violation> validate(const PpgrRecord& record);

struct Dataset {
  std::vector<PpgrRecord> records;
  int schema_version = 1;

  /// Sort by (person_id, ppgr_id) and check the container invariants.
  void normalize();
  std::vector<std::string> person_ids() const;
  const PpgrRecord* find(const std::string& ppgr_id) const;
};

/// First line written to every output file so runs can be traced back to
/// the config that produced them.
struct Provenance {
  std::string config_hash = "none";
  std::uint64_t seed = 0;
};
std::string provenance_line(const Provenance& prov);

Dataset read_csv(std::istream& in);
Dataset load_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const Dataset& data, const Provenance& prov);
void save_csv(const std::filesystem::path& path, const Dataset& data, const Provenance& prov);

inline constexpr const char* kCsvHeader =
    "person_id,ppgr_id,t,glucose,total_amount,carbs,sugar,fiber,fat,protein,age,weight,sex,"
    "diagnosis";

}  // namespace glyco
