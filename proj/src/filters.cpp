#include "cfd/filters.hpp"

#include <algorithm>

namespace cfd::data {

PhiMode parse_phi_mode(const std::string& s) {
  if (s == "inference_fair") return PhiMode::inference_fair;
  if (s == "group_membership") return PhiMode::group_membership;
  if (s == "always") return PhiMode::always;
  throw ConfigError("unknown phi mode '" + s + "'");
}

PsiMode parse_psi_mode(const std::string& s) {
  if (s == "same_group_and_prediction") return PsiMode::same_group_and_prediction;
  if (s == "same_group") return PsiMode::same_group;
  if (s == "all") return PsiMode::all;
  throw ConfigError("unknown psi mode '" + s + "'");
}

const char* to_string(PhiMode m) {
  switch (m) {
    case PhiMode::inference_fair: return "inference_fair";
    case PhiMode::group_membership: return "group_membership";
    case PhiMode::always: return "always";
  }
  return "?";
}

const char* to_string(PsiMode m) {
  switch (m) {
    case PsiMode::same_group_and_prediction: return "same_group_and_prediction";
    case PsiMode::same_group: return "same_group";
    case PsiMode::all: return "all";
  }
  return "?";
}

std::vector<Vector> protected_variants(const Dataset& d, std::span<const double> x) {
  const auto& g = d.protected_feature();
  if (g.width < 2) throw ConfigError("protected attribute '" + g.column + "' is not binary-encodable");
  const std::size_t own = d.group_of(x);
  std::vector<Vector> out;
  for (std::size_t k = 0; k < g.width; ++k) {
    if (k == own) continue;
    Vector v(x.begin(), x.end());
    std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(g.offset), g.width, 0.0);
    v[g.offset + k] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

bool phi_passes(const FilterConfig& cfg, const mlp::MlpModel& model, const Dataset& d,
                std::span<const double> x) {
  switch (cfg.phi_mode) {
    case PhiMode::always:
      return true;
    case PhiMode::group_membership: {
      if (!cfg.phi_group) throw ConfigError("group_membership phi needs a group token");
      const auto& cats = d.protected_feature().categories;
      const auto it = std::find(cats.begin(), cats.end(), *cfg.phi_group);
      if (it == cats.end()) {
        throw ConfigError("group '" + *cfg.phi_group + "' is not a value of '" +
                          d.protected_feature().column + "'");
      }
      return d.group_of(x) == static_cast<std::size_t>(it - cats.begin());
    }
    case PhiMode::inference_fair: {
      const int label = mlp::predict(model, x);
      for (const auto& v : protected_variants(d, x)) {
        if (mlp::predict(model, v) != label) return false;
      }
      return true;
    }
  }
  return false;
}

std::vector<std::size_t> PsiMask::rows(std::span<const std::size_t> train_rows) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) out.push_back(train_rows[i]);
  }
  return out;
}

PsiMask psi_mask(const FilterConfig& cfg, const Dataset& d, std::span<const double> x,
                 const mlp::MlpModel& model) {
  const auto train = d.train_indices();
  PsiMask mask;
  mask.keep.assign(train.size(), 0);
  const std::size_t group = d.group_of(x);
  const double predicted = cfg.psi_mode == PsiMode::same_group_and_prediction
                               ? static_cast<double>(mlp::predict(model, x))
                               : 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::size_t r = train[i];
    bool keep = true;
    if (cfg.psi_mode != PsiMode::all) keep = d.group_of(d.X.row(r)) == group;
    if (keep && cfg.psi_mode == PsiMode::same_group_and_prediction) keep = d.y[r] == predicted;
    mask.keep[i] = keep ? 1 : 0;
    mask.count += keep ? 1 : 0;
  }
  return mask;
}

}  // namespace cfd::data
