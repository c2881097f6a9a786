#include "fundus/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "fundus/csv.hpp"
#include "fundus/error.hpp"
#include "fundus/rng.hpp"

namespace fundus::data {

DRGrade DRGrade::checked(int v) {
  require_input(v >= 0 && v <= 4, "grade out of range [0,4]: " + std::to_string(v));
  return DRGrade{v};
}

const char* eye_code(Eye e) {
  switch (e) {
    case Eye::od: return "OD";
    case Eye::os: return "OS";
    default: return "U";
  }
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    default: return "excluded";
  }
}

Eye parse_eye(const std::string& s) {
  if (s == "OD") return Eye::od;
  if (s == "OS") return Eye::os;
  if (s == "U") return Eye::unknown;
  throw UsageError("bad eye code (want OD/OS/U): " + s);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "excluded") return Split::excluded;
  throw UsageError("bad split tag: " + s);
}

void DatasetManifest::validate() const {
  std::unordered_set<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) {
    require_input(!r.image_id.empty(), "manifest: empty image_id");
    require_input(ids.insert(r.image_id).second,
                  "manifest: duplicate image_id: " + r.image_id);
    DRGrade::checked(r.grade.value);
  }
  for (const auto& [id, tag] : split_tags) {
    (void)tag;
    require_input(ids.count(id) != 0, "manifest: split tag for unknown id: " + id);
  }
  // A patient may appear in at most one of train/val/test.
  std::unordered_map<std::string, Split> patient_split;
  for (const auto& r : records) {
    const Split s = tag_of(r.image_id);
    if (s == Split::excluded) continue;
    auto [it, inserted] = patient_split.emplace(r.patient_id, s);
    require_input(inserted || it->second == s,
                  "manifest: patient straddles splits: " + r.patient_id);
  }
}

bool DatasetManifest::has_record(const std::string& image_id) const {
  for (const auto& r : records)
    if (r.image_id == image_id) return true;
  return false;
}

Split DatasetManifest::tag_of(const std::string& image_id) const {
  const auto it = split_tags.find(image_id);
  return it == split_tags.end() ? Split::train : it->second;
}

std::vector<const FundusRecord*> DatasetManifest::split_records(Split s) const {
  std::vector<const FundusRecord*> out;
  for (const auto& r : records)
    if (tag_of(r.image_id) == s) out.push_back(&r);
  return out;
}

std::size_t DatasetManifest::count_split(Split s) const {
  return split_records(s).size();
}

DatasetManifest DatasetManifest::subset(Split s) const {
  DatasetManifest out;
  for (const auto& r : records)
    if (tag_of(r.image_id) == s) out.records.push_back(r);
  return out;
}

DatasetManifest read_manifest_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const std::vector<std::string> want = {"image_id", "image_uri", "grade",
                                         "patient_id", "eye"};
  require_input(table.header == want,
                "manifest: bad header in " + path +
                    " (want image_id,image_uri,grade,patient_id,eye)");
  DatasetManifest m;
  std::string bad_rows;
  std::string first_error;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    try {
      require_input(row.size() == 5, "expected 5 fields, got " +
                                         std::to_string(row.size()));
      FundusRecord rec;
      rec.image_id = row[0];
      rec.image_uri = row[1];
      std::size_t pos = 0;
      const int grade = std::stoi(row[2], &pos);
      require_input(pos == row[2].size(), "bad grade: " + row[2]);
      rec.grade = DRGrade::checked(grade);
      rec.patient_id = row[3];
      rec.eye = parse_eye(row[4]);
      m.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      if (!bad_rows.empty()) bad_rows += ", ";
      bad_rows += std::to_string(i + 2);  // 1-based file line, after header
      if (first_error.empty()) first_error = e.what();
    }
  }
  require_input(bad_rows.empty(), "manifest: malformed rows at lines " +
                                      bad_rows + " (" + first_error + ")");
  m.validate();
  return m;
}

void write_manifest_csv(const std::string& path, const DatasetManifest& m) {
  CsvTable table;
  table.header = {"image_id", "image_uri", "grade", "patient_id", "eye"};
  for (const auto& r : m.records) {
    table.rows.push_back({r.image_id, r.image_uri, std::to_string(r.grade.value),
                          r.patient_id, eye_code(r.eye)});
  }
  write_csv(path, table);
}

void write_split_csv(const std::string& path, const DatasetManifest& m) {
  CsvTable table;
  table.header = {"image_id", "split"};
  for (const auto& r : m.records)
    table.rows.push_back({r.image_id, split_name(m.tag_of(r.image_id))});
  write_csv(path, table);
}

namespace {

struct PatientGroup {
  std::string patient_id;
  std::vector<std::size_t> record_idx;  // manifest order
  std::size_t referable = 0;
};

std::vector<PatientGroup> group_by_patient(
    const DatasetManifest& m, const std::vector<std::size_t>& indices) {
  std::vector<PatientGroup> groups;
  std::unordered_map<std::string, std::size_t> where;
  for (const std::size_t i : indices) {
    const auto& r = m.records[i];
    auto it = where.find(r.patient_id);
    if (it == where.end()) {
      where.emplace(r.patient_id, groups.size());
      groups.push_back({r.patient_id, {}, 0});
      it = where.find(r.patient_id);
    }
    auto& g = groups[it->second];
    g.record_idx.push_back(i);
    if (grade_to_referable(r.grade)) ++g.referable;
  }
  return groups;
}

}  // namespace

DatasetManifest make_patient_splits(const DatasetManifest& manifest,
                                    const SplitFractions& fractions,
                                    std::uint64_t seed) {
  require_input(!manifest.records.empty(), "make_patient_splits: empty manifest");
  const double sum = fractions.train + fractions.val + fractions.test;
  require_input(std::abs(sum - 1.0) <= 1e-9,
                "make_patient_splits: fractions must sum to 1");

  std::vector<std::size_t> all(manifest.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto groups = group_by_patient(manifest, all);

  // Two strata: patients with at least one referable image, and the rest.
  // Within a stratum, each patient goes to the split with the largest
  // remaining record deficit, which keeps per-split class shares on target
  // up to patient-size granularity.
  DatasetManifest out = manifest;
  const double frac[3] = {fractions.train, fractions.val, fractions.test};
  const Split split_of[3] = {Split::train, Split::val, Split::test};
  for (const int stratum : {0, 1}) {
    std::vector<std::size_t> members;
    std::size_t stratum_records = 0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const bool referable = groups[gi].referable > 0;
      if (static_cast<int>(referable) != stratum) continue;
      members.push_back(gi);
      stratum_records += groups[gi].record_idx.size();
    }
    Rng rng = Rng::stream(seed, std::string("splits/stratum/") +
                                    std::to_string(stratum));
    rng.shuffle(members);
    double assigned[3] = {0, 0, 0};
    for (const std::size_t gi : members) {
      int best = 0;
      double best_deficit = -1e300;
      for (int s = 0; s < 3; ++s) {
        const double deficit =
            frac[s] * static_cast<double>(stratum_records) - assigned[s];
        if (deficit > best_deficit + 1e-12) {
          best_deficit = deficit;
          best = s;
        }
      }
      assigned[best] += static_cast<double>(groups[gi].record_idx.size());
      for (const std::size_t ri : groups[gi].record_idx)
        out.split_tags[manifest.records[ri].image_id] = split_of[best];
    }
  }
  out.validate();
  return out;
}

std::vector<Fold> kfold_split(const DatasetManifest& manifest, int k,
                              std::uint64_t seed) {
  require_input(k >= 2, "kfold_split: k must be >= 2");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    if (manifest.tag_of(manifest.records[i].image_id) != Split::excluded)
      usable.push_back(i);
  auto groups = group_by_patient(manifest, usable);
  require_input(static_cast<std::size_t>(k) <= groups.size(),
                "kfold_split: k exceeds patient count (" +
                    std::to_string(groups.size()) + ")");

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::stream(seed, "kfold/shuffle");
  rng.shuffle(order);

  // Round-robin assignment; fold sizes differ by at most one patient.
  std::vector<int> fold_of_group(groups.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    fold_of_group[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));

  std::unordered_map<std::string, int> fold_of_patient;
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    fold_of_patient[groups[gi].patient_id] = fold_of_group[gi];

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (const std::size_t i : usable) {
    const auto& r = manifest.records[i];
    const int f = fold_of_patient.at(r.patient_id);
    for (int j = 0; j < k; ++j) {
      auto& dst = (j == f) ? folds[static_cast<std::size_t>(j)].val
                           : folds[static_cast<std::size_t>(j)].train;
      dst.records.push_back(r);
      dst.split_tags[r.image_id] = (j == f) ? Split::val : Split::train;
    }
  }
  return folds;
}

DatasetManifest subsample_labeled(const DatasetManifest& manifest,
                                  double fraction, std::uint64_t seed) {
  require_input(fraction > 0.0 && fraction <= 1.0,
                "subsample_labeled: fraction must be in (0,1]");
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    if (manifest.tag_of(manifest.records[i].image_id) == Split::train)
      train_idx.push_back(i);
  require_input(!train_idx.empty(), "subsample_labeled: empty training split");
  if (fraction == 1.0) return manifest;

  const std::size_t n = train_idx.size();
  std::size_t n_class[2] = {0, 0};
  for (const std::size_t i : train_idx)
    ++n_class[grade_to_referable(manifest.records[i].grade) ? 1 : 0];

  const auto total_target = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n)));
  // Per-class count = round of the per-class fraction, then nudge the class
  // farthest from its exact share until the total matches ceil(fraction*n).
  std::size_t target[2];
  for (int c = 0; c < 2; ++c) {
    target[c] = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(n_class[c])));
    target[c] = std::min(target[c], n_class[c]);
  }
  auto over = [&](int c) {
    return static_cast<double>(target[c]) -
           fraction * static_cast<double>(n_class[c]);
  };
  while (target[0] + target[1] < total_target) {
    int c = (over(0) <= over(1)) ? 0 : 1;
    if (target[c] >= n_class[c]) c = 1 - c;
    ++target[c];
  }
  while (target[0] + target[1] > total_target) {
    int c = (over(0) >= over(1)) ? 0 : 1;
    if (target[c] == 0) c = 1 - c;
    --target[c];
  }

  auto groups = group_by_patient(manifest, train_idx);
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::stream(seed, "subsample/shuffle");
  rng.shuffle(order);

  std::unordered_set<std::size_t> taken;
  std::size_t taken_class[2] = {0, 0};
  // Pass 1: whole patients while they fit both class budgets.
  for (const std::size_t gi : order) {
    const auto& g = groups[gi];
    std::size_t g_class[2] = {g.record_idx.size() - g.referable, g.referable};
    if (taken_class[0] + g_class[0] <= target[0] &&
        taken_class[1] + g_class[1] <= target[1]) {
      for (const std::size_t ri : g.record_idx) taken.insert(ri);
      taken_class[0] += g_class[0];
      taken_class[1] += g_class[1];
    }
  }
  // Pass 2: top up per-class deficits record by record, same patient order.
  for (const std::size_t gi : order) {
    for (const std::size_t ri : groups[gi].record_idx) {
      if (taken.count(ri)) continue;
      const int c = grade_to_referable(manifest.records[ri].grade) ? 1 : 0;
      if (taken_class[c] < target[c]) {
        taken.insert(ri);
        ++taken_class[c];
      }
    }
  }

  DatasetManifest out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    const bool is_train = manifest.tag_of(r.image_id) == Split::train;
    if (is_train && !taken.count(i)) continue;
    out.records.push_back(r);
    const auto it = manifest.split_tags.find(r.image_id);
    if (it != manifest.split_tags.end()) out.split_tags[r.image_id] = it->second;
  }
  return out;
}

}  // namespace fundus::data
