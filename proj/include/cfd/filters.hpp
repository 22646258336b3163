#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfd/dataset.hpp"
#include "cfd/mlp.hpp"

namespace cfd::data {

// Test-input filter.
enum class PhiMode {
  inference_fair,    // prediction invariant under swapping the protected group
  group_membership,  // input belongs to FilterConfig::phi_group
  always,
};

// Training-row filter.
enum class PsiMode {
  same_group_and_prediction,  // same protected group, label equal to the prediction for x
  same_group,
  all,
};

PhiMode parse_phi_mode(const std::string& s);
PsiMode parse_psi_mode(const std::string& s);
const char* to_string(PhiMode m);
const char* to_string(PsiMode m);

struct FilterConfig {
  PhiMode phi_mode = PhiMode::inference_fair;
  PsiMode psi_mode = PsiMode::same_group_and_prediction;
  // Raw token of the protected attribute, used by group_membership.
  std::optional<std::string> phi_group;
};

// x with its protected one-hot block set to each group value other than its own.
std::vector<Vector> protected_variants(const Dataset& d, std::span<const double> x);

bool phi_passes(const FilterConfig& cfg, const mlp::MlpModel& model, const Dataset& d,
                std::span<const double> x);

// Mask over d.train_indices() (same order).
struct PsiMask {
  std::vector<std::uint8_t> keep;
  std::size_t count = 0;

  // Train-row dataset indices that pass, ascending.
  std::vector<std::size_t> rows(std::span<const std::size_t> train_rows) const;
};

PsiMask psi_mask(const FilterConfig& cfg, const Dataset& d, std::span<const double> x,
                 const mlp::MlpModel& model);

}  // namespace cfd::data
