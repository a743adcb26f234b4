#include "glyco/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "glyco/error.hpp"
#include "glyco/textio.hpp"

namespace glyco {

const char* to_string(Sex sex) { return sex == Sex::F ? "F" : "M"; }

const char* to_string(Diagnosis dx) { return dx == Diagnosis::Prediabetes ? "prediabetes" : "t2d"; }

std::optional<Diagnosis> parse_diagnosis(const std::string& text) {
  if (text.empty()) return std::nullopt;
  if (text == "prediabetes") return Diagnosis::Prediabetes;
  if (text == "t2d") return Diagnosis::T2D;
  throw Error(ErrorKind::BadCategory, "diagnosis must be prediabetes, t2d or empty: '" + text + "'");
}

int PpgrRecord::observed_glucose() const {
  return static_cast<int>(std::count_if(glucose.begin(), glucose.end(),
                                        [](const OptReal& g) { return g.has_value(); }));
}

std::array<double, kSeqLen> PpgrRecord::interpolated_glucose() const {
  std::vector<int> seen;
  for (int t = 0; t < kSeqLen; ++t)
    if (glucose[t]) seen.push_back(t);
  if (seen.empty()) throw Error(ErrorKind::AllMissing, "record " + ppgr_id + " has no glucose");

  std::array<double, kSeqLen> out{};
  for (int t = 0; t < kSeqLen; ++t) {
    auto hi = std::lower_bound(seen.begin(), seen.end(), t);
    if (hi == seen.end()) {
      out[t] = *glucose[seen.back()];
    } else if (*hi == t || hi == seen.begin()) {
      out[t] = *glucose[*hi];
    } else {
      const int a = *(hi - 1), b = *hi;
      const double w = static_cast<double>(t - a) / (b - a);
      out[t] = (1.0 - w) * *glucose[a] + w * *glucose[b];
    }
  }
  return out;
}

std::vector<Violation> validate(const PpgrRecord& record) {
  static const char* kChannelNames[kNumMealChannels] = {"total_amount", "carbs", "sugar",
                                                        "fiber",        "fat",   "protein"};
  std::vector<Violation> out;
  for (int t = 0; t < kSeqLen; ++t) {
    const auto& g = record.glucose[t];
    if (g && (!std::isfinite(*g) || *g < kGlucoseMin || *g > kGlucoseMax)) {
      out.push_back({"glucose", t, "glucose out of [20,500]"});
    }
    for (int c = 0; c < kNumMealChannels; ++c) {
      const auto& v = record.meals[t][c];
      if (v && (!std::isfinite(*v) || *v < 0.0)) {
        out.push_back({kChannelNames[c], t, "negative meal covariate"});
      }
    }
  }
  if (!record.meals[kMealIndex][kCarbs]) out.push_back({"carbs", kMealIndex, "no meal at t=12"});
  return out;
}

void Dataset::normalize() {
  std::sort(records.begin(), records.end(), [](const PpgrRecord& a, const PpgrRecord& b) {
    return std::tie(a.person_id, a.ppgr_id) < std::tie(b.person_id, b.ppgr_id);
  });
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.ppgr_id).second) throw Error(ErrorKind::DuplicateId, "ppgr_id " + r.ppgr_id);
  }
}

std::vector<std::string> Dataset::person_ids() const {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.person_id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const PpgrRecord* Dataset::find(const std::string& ppgr_id) const {
  for (const auto& r : records)
    if (r.ppgr_id == ppgr_id) return &r;
  return nullptr;
}

std::string provenance_line(const Provenance& prov) {
  return "# glyco config_hash=" + prov.config_hash + " seed=" + std::to_string(prov.seed);
}

namespace {

constexpr const char* kColumns[] = {"person_id", "ppgr_id", "t",       "glucose", "total_amount",
                                    "carbs",     "sugar",   "fiber",   "fat",     "protein",
                                    "age",       "weight",  "sex",     "diagnosis"};
constexpr int kNumColumns = 14;

struct PendingRecord {
  PpgrRecord record;
  std::array<bool, kSeqLen> seen{};
  int rows = 0;
  bool have_static = false;
  std::string diagnosis_text;
};

OptReal optional_real(const std::string& cell, const std::string& context) {
  if (trim(cell).empty()) return std::nullopt;
  return parse_real(cell, context);
}

}  // namespace

Dataset read_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    header = split_csv_line(line);
    break;
  }
  for (auto& h : header) h = std::string(trim(h));
  for (int c = 0; c < kNumColumns; ++c) {
    if (static_cast<int>(header.size()) <= c || header[c] != kColumns[c]) {
      throw Error(ErrorKind::MissingColumn, std::string("expected column '") + kColumns[c] +
                                                "' at position " + std::to_string(c));
    }
  }
  if (header.size() != kNumColumns) throw Error(ErrorKind::MissingColumn, "unexpected extra columns");

  std::map<std::pair<std::string, std::string>, PendingRecord> pending;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || line[0] == '#') continue;
    const auto cells = split_csv_line(line);
    const std::string where = "line " + std::to_string(lineno);
    if (static_cast<int>(cells.size()) != kNumColumns) {
      throw Error(ErrorKind::MissingColumn, where + ": expected 14 cells, got " + std::to_string(cells.size()));
    }
    auto& p = pending[{cells[0], cells[1]}];
    p.record.person_id = cells[0];
    p.record.ppgr_id = cells[1];

    const double t_real = parse_real(cells[2], where + " t");
    const int t = static_cast<int>(t_real);
    if (t_real != t || t < 0 || t >= kSeqLen) {
      throw Error(ErrorKind::BadRowCount, where + ": t must be an integer in [0,59]");
    }
    if (p.seen[t]) throw Error(ErrorKind::BadRowCount, where + ": duplicate t=" + std::to_string(t));
    p.seen[t] = true;
    ++p.rows;

    p.record.glucose[t] = optional_real(cells[3], where + " glucose");
    for (int c = 0; c < kNumMealChannels; ++c) {
      auto v = optional_real(cells[4 + c], where + " " + kColumns[4 + c]);
      if (v && *v < 0.0) throw Error(ErrorKind::NegativeCovariate, where + " " + kColumns[4 + c]);
      p.record.meals[t][c] = v;
    }

    Demographics demo;
    demo.age = parse_real(cells[10], where + " age");
    demo.weight = parse_real(cells[11], where + " weight");
    const auto sex = trim(cells[12]);
    if (sex == "F") demo.sex = Sex::F;
    else if (sex == "M") demo.sex = Sex::M;
    else throw Error(ErrorKind::BadCategory, where + ": sex must be F or M");
    const std::string dx(trim(cells[13]));
    if (!p.have_static) {
      p.record.demographics = demo;
      p.record.diagnosis = parse_diagnosis(dx);
      p.diagnosis_text = dx;
      p.have_static = true;
    } else if (!(p.record.demographics == demo) || p.diagnosis_text != dx) {
      throw Error(ErrorKind::InconsistentRecord, where + ": demographics differ within record " + cells[1]);
    }
  }

  Dataset data;
  for (auto& [key, p] : pending) {
    if (p.rows != kSeqLen) {
      throw Error(ErrorKind::BadRowCount, "record " + key.second + " has " + std::to_string(p.rows) + " rows");
    }
    data.records.push_back(std::move(p.record));
  }
  data.normalize();
  return data;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_csv(in);
}

void write_csv(std::ostream& out, const Dataset& data, const Provenance& prov) {
  auto opt = [](const OptReal& v) { return v ? format_real(*v) : std::string(); };
  out << provenance_line(prov) << "\n" << kCsvHeader << "\n";
  for (const auto& r : data.records) {
    const std::string tail = "," + format_real(r.demographics.age) + "," +
                             format_real(r.demographics.weight) + "," + to_string(r.demographics.sex) +
                             "," + (r.diagnosis ? to_string(*r.diagnosis) : "");
    for (int t = 0; t < kSeqLen; ++t) {
      out << r.person_id << ',' << r.ppgr_id << ',' << t << ',' << opt(r.glucose[t]);
      for (int c = 0; c < kNumMealChannels; ++c) out << ',' << opt(r.meals[t][c]);
      out << tail << '\n';
    }
  }
}

void save_csv(const std::filesystem::path& path, const Dataset& data, const Provenance& prov) {
  std::ostringstream ss;
  write_csv(ss, data, prov);
  write_file(path, ss.str());
}

}  // namespace glyco
