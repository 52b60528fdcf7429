#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hifm/errors.hpp"
#include "hifm/rng.hpp"

namespace hifm {

enum class ColumnType { binary, continuous };
enum class ColumnRole { outcome, covariate };

struct ColumnSpec {
  std::string name;
  ColumnType type = ColumnType::continuous;
  ColumnRole role = ColumnRole::covariate;
};

// Centering/scaling constants applied to continuous columns; identity entries
// for binary columns. Kept with the fitted model so test data can be mapped
// through the training transform and predictions mapped back.
struct Scaling {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  static Scaling identity(Eigen::Index p) {
    return Scaling{Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p)};
  }
};

// Observation matrix with outcomes stored before covariates, a per-column
// schema, and a per-row population label in 1..L.
class Dataset {
 public:
  Dataset() = default;

  Dataset(Eigen::MatrixXd z, std::vector<ColumnSpec> schema, Eigen::VectorXi group)
      : z_(std::move(z)), schema_(std::move(schema)), group_(std::move(group)) {
    scaling_ = Scaling::identity(z_.cols());
    validate();
  }

  void validate() {
    const Eigen::Index n = z_.rows();
    const Eigen::Index p = z_.cols();
    if (p == 0 || n == 0) throw ValidationError("dataset: empty matrix");
    if (static_cast<Eigen::Index>(schema_.size()) != p) {
      throw ValidationError("dataset: schema has " + std::to_string(schema_.size()) +
                            " columns, data has " + std::to_string(p));
    }
    if (group_.size() != n) {
      throw ValidationError("dataset: group labels have length " + std::to_string(group_.size()) +
                            ", data has " + std::to_string(n) + " rows");
    }

    bool seen_covariate = false;
    n_outcomes_ = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (schema_[j].role == ColumnRole::outcome) {
        if (seen_covariate) {
          throw ValidationError("dataset: outcome column '" + schema_[j].name +
                                "' appears after a covariate; outcomes must come first");
        }
        ++n_outcomes_;
      } else {
        seen_covariate = true;
      }
    }
    if (n_outcomes_ == 0) throw ValidationError("dataset: at least one outcome column required");

    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = z_(i, j);
        if (!std::isfinite(v)) {
          throw ValidationError("dataset: non-finite value in column '" + schema_[j].name +
                                "' row " + std::to_string(i));
        }
        if (schema_[j].type == ColumnType::binary && v != 0.0 && v != 1.0) {
          throw ValidationError("dataset: binary column '" + schema_[j].name + "' row " +
                                std::to_string(i) + " holds " + std::to_string(v));
        }
      }
    }

    int max_label = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (group_[i] < 1) {
        throw ValidationError("dataset: population labels must be integers >= 1, row " +
                              std::to_string(i) + " has " + std::to_string(group_[i]));
      }
      max_label = std::max(max_label, group_[i]);
    }
    group_rows_.assign(max_label, {});
    for (Eigen::Index i = 0; i < n; ++i) group_rows_[group_[i] - 1].push_back(static_cast<int>(i));
    for (int l = 0; l < max_label; ++l) {
      if (group_rows_[l].empty()) {
        throw ValidationError("dataset: population " + std::to_string(l + 1) + " has no rows");
      }
    }
  }

  // Center and scale every continuous column to mean 0, sd 1 over the full
  // dataset. Binary columns are untouched. Idempotent.
  void standardize() {
    if (standardized_) return;
    for (Eigen::Index j = 0; j < z_.cols(); ++j) {
      if (schema_[j].type != ColumnType::continuous) continue;
      const double mean = z_.col(j).mean();
      const double var = (z_.col(j).array() - mean).square().sum() / z_.rows();
      const double sd = std::sqrt(var);
      if (!(sd > 0.0)) {
        throw ValidationError("dataset: continuous column '" + schema_[j].name +
                              "' is constant and cannot be scaled");
      }
      z_.col(j) = (z_.col(j).array() - mean) / sd;
      scaling_.center[j] = mean;
      scaling_.scale[j] = sd;
    }
    standardized_ = true;
  }

  // Apply an externally fitted transform (test data through training scaling).
  void apply_scaling(const Scaling& s) {
    if (standardized_) throw ValidationError("dataset: already standardized");
    if (s.center.size() != z_.cols()) {
      throw ValidationError("dataset: scaling constants do not match column count");
    }
    for (Eigen::Index j = 0; j < z_.cols(); ++j) {
      if (schema_[j].type != ColumnType::continuous) continue;
      z_.col(j) = (z_.col(j).array() - s.center[j]) / s.scale[j];
    }
    scaling_ = s;
    standardized_ = true;
  }

  int n() const { return static_cast<int>(z_.rows()); }
  int p() const { return static_cast<int>(z_.cols()); }
  int n_outcomes() const { return static_cast<int>(n_outcomes_); }
  int n_covariates() const { return p() - n_outcomes(); }
  int n_groups() const { return static_cast<int>(group_rows_.size()); }

  const Eigen::MatrixXd& z() const { return z_; }
  const Eigen::VectorXi& group() const { return group_; }
  const std::vector<ColumnSpec>& schema() const { return schema_; }
  const std::vector<int>& rows_of_group(int l) const { return group_rows_.at(l); }
  const Scaling& scaling() const { return scaling_; }
  bool standardized() const { return standardized_; }

  bool is_binary(Eigen::Index j) const { return schema_[j].type == ColumnType::binary; }
  bool is_outcome(Eigen::Index j) const { return schema_[j].role == ColumnRole::outcome; }
  bool any_binary() const {
    for (const auto& c : schema_) {
      if (c.type == ColumnType::binary) return true;
    }
    return false;
  }

  // Schema + dimensions + label structure digest, stored with fitted chains.
  std::uint64_t fingerprint(std::uint64_t seed = 0) const {
    std::uint64_t h = 0xcbf29ce484222325ull ^ detail::mix64(seed);
    auto eat = [&h](std::uint64_t v) { h = detail::mix64(h ^ v); };
    eat(static_cast<std::uint64_t>(n()));
    eat(static_cast<std::uint64_t>(p()));
    eat(static_cast<std::uint64_t>(n_groups()));
    for (const auto& c : schema_) {
      for (const char ch : c.name) eat(static_cast<std::uint64_t>(ch));
      eat(static_cast<std::uint64_t>(c.type == ColumnType::binary ? 1 : 2));
      eat(static_cast<std::uint64_t>(c.role == ColumnRole::outcome ? 1 : 2));
    }
    return h;
  }

 private:
  Eigen::MatrixXd z_;
  std::vector<ColumnSpec> schema_;
  Eigen::VectorXi group_;
  Scaling scaling_;
  Eigen::Index n_outcomes_ = 0;
  std::vector<std::vector<int>> group_rows_;
  bool standardized_ = false;
};

}  // namespace hifm
