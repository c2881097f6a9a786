#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fundus::data {

// Severity grade on the 0-4 scale: 0 none, 1 mild, 2 moderate, 3 severe
// non-proliferative, 4 proliferative.
struct DRGrade {
  int value = 0;
  static DRGrade checked(int v);
};

// Grades of moderate severity and above warrant referral.
inline bool grade_to_referable(DRGrade grade) { return grade.value >= 2; }

enum class Eye { od, os, unknown };
enum class Split { train, val, test, excluded };

const char* eye_code(Eye e);        // "OD", "OS", "U"
const char* split_name(Split s);    // "train", ...
Eye parse_eye(const std::string& s);
Split parse_split(const std::string& s);

struct FundusRecord {
  std::string image_id;
  std::string image_uri;
  DRGrade grade;
  std::string patient_id;
  Eye eye = Eye::unknown;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Ordered record list plus optional split tags. Records stay in insertion
// order; every operation below is pure and seed-driven.
struct DatasetManifest {
  std::vector<FundusRecord> records;
  std::map<std::string, Split> split_tags;

  // Throws if an image_id repeats, a tag references a missing id, a grade is
  // out of range, or a patient straddles train/val/test.
  void validate() const;

  bool has_record(const std::string& image_id) const;
  Split tag_of(const std::string& image_id) const;  // untagged -> train
  std::vector<const FundusRecord*> split_records(Split s) const;
  std::size_t count_split(Split s) const;

  // Sub-manifest holding only the records tagged `s` (tags dropped).
  DatasetManifest subset(Split s) const;
};

// CSV header: image_id,image_uri,grade,patient_id,eye
DatasetManifest read_manifest_csv(const std::string& path);
void write_manifest_csv(const std::string& path, const DatasetManifest& m);
// Split assignment CSV: image_id,split
void write_split_csv(const std::string& path, const DatasetManifest& m);

// Assigns every patient's records to exactly one of train/val/test,
// stratified so each split's referable share tracks the global share.
DatasetManifest make_patient_splits(const DatasetManifest& manifest,
                                    const SplitFractions& fractions,
                                    std::uint64_t seed);

struct Fold {
  DatasetManifest train;
  DatasetManifest val;
};

// Patient-level k-fold partition; validation folds are disjoint and jointly
// cover all patients.
std::vector<Fold> kfold_split(const DatasetManifest& manifest, int k,
                              std::uint64_t seed);

// Keeps ceil(fraction * n) training records, stratified by referable label;
// whole patients are preferred when they fit the per-class budget. Records
// tagged val/test/excluded pass through untouched.
DatasetManifest subsample_labeled(const DatasetManifest& manifest,
                                  double fraction, std::uint64_t seed);

}  // namespace fundus::data
