#pragma once

// Study data: ingestion, validation, stratification and dichotomization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mediation/csv.hpp"
#include "mediation/errors.hpp"

namespace mediation {

enum class MediatorKind { discrete, continuous };
enum class NaPolicy { error, drop };

struct Record {
  int treatment = 0;
  double mediator = 0.0;
  // Integer code in 0..J-1 for a discrete mediator, -1 otherwise.
  int mediator_level = -1;
  double outcome = 0.0;
  std::vector<double> covariates;
};

struct ColumnMapping {
  std::string treatment_col;
  std::string mediator_col;
  std::string outcome_col;
  std::vector<std::string> covariate_cols;
  MediatorKind mediator_kind = MediatorKind::discrete;

  // All mapped labels in canonical order: treatment, mediator, outcome,
  // covariates.
  std::vector<std::string> labels() const {
    std::vector<std::string> out{treatment_col, mediator_col, outcome_col};
    out.insert(out.end(), covariate_cols.begin(), covariate_cols.end());
    return out;
  }

  void validate() const {
    auto all = labels();
    for (const auto& l : all) {
      if (l.empty()) throw InputError("column mapping: empty column label");
    }
    std::set<std::string> unique(all.begin(), all.end());
    if (unique.size() != all.size()) throw InputError("column mapping: labels must be distinct");
  }
};

// Immutable, validated collection of records. Subsets and resamples share
// the parent's mediator level coding so that cell indices stay comparable.
class Dataset {
 public:
  // Validates the records and, for a discrete mediator, recodes the observed
  // values to 0..J-1 in ascending order.
  static Dataset build(ColumnMapping mapping, std::vector<Record> records) {
    mapping.validate();
    std::vector<double> levels;
    if (mapping.mediator_kind == MediatorKind::discrete) {
      std::set<double> distinct;
      for (const auto& r : records) distinct.insert(r.mediator);
      levels.assign(distinct.begin(), distinct.end());
      if (!records.empty() && levels.size() < 2) {
        throw InputError("discrete mediator '" + mapping.mediator_col +
                         "' must take at least two distinct values");
      }
      for (auto& r : records) {
        auto it = std::lower_bound(levels.begin(), levels.end(), r.mediator);
        r.mediator_level = static_cast<int>(it - levels.begin());
      }
    } else {
      for (auto& r : records) r.mediator_level = -1;
    }
    return Dataset(std::move(mapping), std::move(records), std::move(levels));
  }

  // Same as build() but with a fixed level table; records carrying values
  // outside the table are rejected.
  static Dataset with_levels(ColumnMapping mapping, std::vector<Record> records,
                             std::vector<double> levels) {
    mapping.validate();
    if (mapping.mediator_kind == MediatorKind::discrete) {
      for (auto& r : records) {
        auto it = std::lower_bound(levels.begin(), levels.end(), r.mediator);
        if (it == levels.end() || *it != r.mediator) {
          throw InputError("mediator value outside the declared level set");
        }
        r.mediator_level = static_cast<int>(it - levels.begin());
      }
    } else {
      levels.clear();
    }
    return Dataset(std::move(mapping), std::move(records), std::move(levels));
  }

  std::size_t n() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  const Record& operator[](std::size_t i) const { return records_[i]; }
  const ColumnMapping& mapping() const { return mapping_; }
  std::vector<std::string> column_names() const { return mapping_.labels(); }
  std::size_t num_covariates() const { return mapping_.covariate_cols.size(); }
  bool discrete_mediator() const { return mapping_.mediator_kind == MediatorKind::discrete; }

  // Original mediator values, indexed by level code (discrete only).
  const std::vector<double>& mediator_levels() const { return levels_; }
  std::size_t num_levels() const { return levels_.size(); }

  std::size_t arm_size(int t) const {
    return static_cast<std::size_t>(std::count_if(
        records_.begin(), records_.end(), [t](const Record& r) { return r.treatment == t; }));
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<Record> picked;
    picked.reserve(indices.size());
    for (auto i : indices) {
      if (i >= records_.size()) throw InputError("subset index out of range");
      picked.push_back(records_[i]);
    }
    return Dataset(mapping_, std::move(picked), levels_);
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    if (a.mapping_.labels() != b.mapping_.labels() ||
        a.mapping_.mediator_kind != b.mapping_.mediator_kind || a.levels_ != b.levels_ ||
        a.records_.size() != b.records_.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.records_.size(); ++i) {
      const auto& x = a.records_[i];
      const auto& y = b.records_[i];
      if (x.treatment != y.treatment || x.mediator != y.mediator ||
          x.mediator_level != y.mediator_level || x.outcome != y.outcome ||
          x.covariates != y.covariates) {
        return false;
      }
    }
    return true;
  }

 private:
  Dataset(ColumnMapping mapping, std::vector<Record> records, std::vector<double> levels)
      : mapping_(std::move(mapping)), records_(std::move(records)), levels_(std::move(levels)) {
    if (records_.empty()) throw InputError("dataset is empty");
    const auto q = mapping_.covariate_cols.size();
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.treatment != 0 && r.treatment != 1) {
        throw InputError("non-binary treatment in record " + std::to_string(i));
      }
      if (!std::isfinite(r.mediator) || !std::isfinite(r.outcome)) {
        throw InputError("non-finite mediator or outcome in record " + std::to_string(i));
      }
      if (r.covariates.size() != q) {
        throw InputError("record " + std::to_string(i) + " has wrong covariate arity");
      }
      for (double x : r.covariates) {
        if (!std::isfinite(x)) throw InputError("non-finite covariate in record " + std::to_string(i));
      }
    }
  }

  ColumnMapping mapping_;
  std::vector<Record> records_;
  std::vector<double> levels_;
};

struct LoadResult {
  Dataset data;
  std::size_t dropped = 0;
};

inline LoadResult parse_csv_dataset(std::string_view text, const ColumnMapping& mapping,
                                    NaPolicy na_policy) {
  mapping.validate();
  auto rows = csv::parse(text);
  if (rows.empty()) throw InputError("csv: missing header row");
  const auto& header = rows.front();

  auto labels = mapping.labels();
  std::vector<std::size_t> col(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) {
      return csv::trim(h) == labels[k];
    });
    if (it == header.end()) throw InputError("missing column '" + labels[k] + "'");
    col[k] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<Record> records;
  std::size_t dropped = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto line = std::to_string(r + 1);
    if (row.size() != header.size()) {
      throw InputError("csv line " + line + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(row.size()));
    }
    std::vector<double> values(labels.size());
    bool missing = false;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      const auto& cell = row[col[k]];
      if (csv::is_missing(cell)) {
        missing = true;
        if (na_policy == NaPolicy::error) {
          throw InputError("csv line " + line + ": missing value in column '" + labels[k] + "'");
        }
        break;
      }
      auto v = csv::parse_number(cell);
      if (!v) {
        throw InputError("csv line " + line + ": unparseable numeric value '" + cell +
                         "' in column '" + labels[k] + "'");
      }
      values[k] = *v;
    }
    if (missing) {
      ++dropped;
      continue;
    }
    if (values[0] != 0.0 && values[0] != 1.0) {
      throw InputError("csv line " + line + ": non-binary treatment value '" +
                       row[col[0]] + "' in column '" + labels[0] + "'");
    }
    Record rec;
    rec.treatment = static_cast<int>(values[0]);
    rec.mediator = values[1];
    rec.outcome = values[2];
    rec.covariates.assign(values.begin() + 3, values.end());
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw InputError("dataset is empty after dropping missing rows");
  return {Dataset::build(mapping, std::move(records)), dropped};
}

// Reads a header-first CSV file; cells "", "NA" and "NaN" count as missing.
inline LoadResult load_csv(const std::string& path, const ColumnMapping& mapping,
                           NaPolicy na_policy = NaPolicy::error) {
  return parse_csv_dataset(csv::read_file(path), mapping, na_policy);
}

// Writes the mapped columns; load_csv with the same mapping reproduces the
// dataset exactly.
inline void write_csv(const Dataset& data, std::ostream& out) {
  auto labels = data.column_names();
  for (std::size_t k = 0; k < labels.size(); ++k) {
    out << (k ? "," : "") << csv::quote(labels[k]);
  }
  out << '\n';
  for (const auto& r : data.records()) {
    out << r.treatment << ',' << csv::format_number(r.mediator) << ','
        << csv::format_number(r.outcome);
    for (double x : r.covariates) out << ',' << csv::format_number(x);
    out << '\n';
  }
}

struct Stratum {
  std::vector<double> key;
  std::vector<std::size_t> indices;
};

using StratumIndex = std::vector<Stratum>;

inline constexpr std::size_t kDefaultStratumCap = 64;

// Partitions records by their exact covariate tuple, ordered
// lexicographically by tuple. No covariates gives one stratum.
inline StratumIndex stratify(const Dataset& data, std::size_t cap = kDefaultStratumCap) {
  std::map<std::vector<double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.n(); ++i) {
    groups[data[i].covariates].push_back(i);
    if (groups.size() > cap) {
      throw InputError("covariates define more than " + std::to_string(cap) +
                       " strata; use the model-based estimator instead");
    }
  }
  StratumIndex out;
  out.reserve(groups.size());
  for (auto& [key, idx] : groups) out.push_back({key, std::move(idx)});
  return out;
}

struct DichotomizeResult {
  Dataset data;
  double cutpoint = 0.0;
};

inline double sample_median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of empty column");
  std::sort(values.begin(), values.end());
  auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Replaces `column` by 1{value > median}; ties at the median go to 0.
// Dichotomizing the mediator makes it a discrete {0,1} mediator.
inline DichotomizeResult median_dichotomize(const Dataset& data, const std::string& column) {
  const auto& m = data.mapping();
  auto labels = m.labels();
  auto it = std::find(labels.begin(), labels.end(), column);
  if (it == labels.end()) throw InputError("unknown column '" + column + "'");
  const auto k = static_cast<std::size_t>(it - labels.begin());

  auto get = [k](const Record& r) -> double {
    if (k == 0) return r.treatment;
    if (k == 1) return r.mediator;
    if (k == 2) return r.outcome;
    return r.covariates[k - 3];
  };
  std::vector<double> values;
  values.reserve(data.n());
  for (const auto& r : data.records()) values.push_back(get(r));
  const double cut = sample_median(values);

  std::vector<Record> records = data.records();
  std::size_t ones = 0;
  for (auto& r : records) {
    double v = get(r) > cut ? 1.0 : 0.0;
    ones += v == 1.0;
    if (k == 0) r.treatment = static_cast<int>(v);
    else if (k == 1) r.mediator = v;
    else if (k == 2) r.outcome = v;
    else r.covariates[k - 3] = v;
  }
  if (ones == 0) {
    throw InputError("degenerate dichotomization of column '" + column + "' at median " +
                     csv::format_number(cut));
  }
  ColumnMapping mapping = m;
  if (k == 1) mapping.mediator_kind = MediatorKind::discrete;
  return {Dataset::build(std::move(mapping), std::move(records)), cut};
}

inline bool has_binary_mediator(const Dataset& data) {
  return std::all_of(data.records().begin(), data.records().end(),
                     [](const Record& r) { return r.mediator == 0.0 || r.mediator == 1.0; });
}

inline bool has_binary_outcome(const Dataset& data) {
  return std::all_of(data.records().begin(), data.records().end(),
                     [](const Record& r) { return r.outcome == 0.0 || r.outcome == 1.0; });
}

}  // namespace mediation
