#include <bit>
#include <cmath>
#include <sstream>

#include "synloc/engine.hpp"
#include "synloc/error.hpp"

namespace synloc {

const char* to_string(Site site) {
  switch (site) {
    case Site::residual: return "residual";
    case Site::attn_out: return "attn_out";
    case Site::mlp_out: return "mlp_out";
  }
  return "?";
}

Site parse_site(const std::string& name) {
  if (name == "residual") return Site::residual;
  if (name == "attn_out") return Site::attn_out;
  if (name == "mlp_out") return Site::mlp_out;
  throw ConfigError("unknown site '" + name + "' (expected residual, attn_out or mlp_out)");
}

SiteSet::SiteSet(std::initializer_list<Site> sites) {
  for (Site s : sites) mask_ |= static_cast<std::uint8_t>(1U << static_cast<unsigned>(s));
}

SiteSet SiteSet::parse(const std::string& spec) {
  SiteSet out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    const Site s = parse_site(item.substr(b, e - b + 1));
    out.mask_ |= static_cast<std::uint8_t>(1U << static_cast<unsigned>(s));
  }
  if (out.empty()) throw ConfigError("site set is empty");
  return out;
}

std::size_t SiteSet::size() const { return static_cast<std::size_t>(std::popcount(mask_)); }

std::vector<Site> SiteSet::sites() const {
  std::vector<Site> out;
  for (Site s : {Site::residual, Site::attn_out, Site::mlp_out}) {
    if (contains(s)) out.push_back(s);
  }
  return out;
}

std::size_t SiteSet::rank(Site s) const {
  if (!contains(s)) throw ConfigError(std::string("site ") + synloc::to_string(s) + " not in set " + to_string());
  const unsigned below = mask_ & ((1U << static_cast<unsigned>(s)) - 1U);
  return static_cast<std::size_t>(std::popcount(below));
}

std::string SiteSet::to_string() const {
  std::string out;
  for (Site s : sites()) {
    if (!out.empty()) out += ",";
    out += synloc::to_string(s);
  }
  return out;
}

UnitId UnitLayout::unit_at(std::size_t index) const {
  const std::size_t per_site = static_cast<std::size_t>(n_layers) * hidden;
  const auto list = sites.sites();
  const std::size_t block = index / per_site;
  if (block >= list.size()) throw ConfigError("unit index out of range");
  const std::size_t rem = index % per_site;
  return UnitId{list[block], static_cast<int>(rem / hidden), static_cast<int>(rem % hidden)};
}

bool UnitLayout::valid(const UnitId& u) const {
  return sites.contains(u.site) && u.layer >= 0 && u.layer < n_layers && u.channel >= 0 && u.channel < hidden;
}

std::size_t UnitLayout::index_of(const UnitId& u) const {
  if (!valid(u)) {
    throw ConfigError("unit (" + std::string(to_string(u.site)) + "," + std::to_string(u.layer) + "," +
                      std::to_string(u.channel) + ") is outside the layout");
  }
  const std::size_t per_site = static_cast<std::size_t>(n_layers) * hidden;
  return sites.rank(u.site) * per_site + static_cast<std::size_t>(u.layer) * hidden + u.channel;
}

const char* to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::none: return "none";
    case AblationMode::zero: return "zero";
    case AblationMode::mean: return "mean";
  }
  return "?";
}

const char* to_string(AblationApplication app) {
  return app == AblationApplication::all_positions ? "all-positions" : "last-position";
}

AblationMode parse_ablation_mode(const std::string& s) {
  if (s == "none") return AblationMode::none;
  if (s == "zero") return AblationMode::zero;
  if (s == "mean") return AblationMode::mean;
  throw ConfigError("unknown ablation mode '" + s + "' (expected zero or mean)");
}

AblationApplication parse_ablation_application(const std::string& s) {
  if (s == "all-positions" || s == "all") return AblationApplication::all_positions;
  if (s == "last-position" || s == "last") return AblationApplication::last_position;
  throw ConfigError("unknown ablation application '" + s + "' (expected all-positions or last-position)");
}

AblationSpec AblationSpec::zero(std::vector<UnitId> targets, AblationApplication app) {
  return AblationSpec{AblationMode::zero, 0.0f, std::move(targets), app};
}

AblationSpec AblationSpec::mean(float m, std::vector<UnitId> targets, AblationApplication app) {
  if (!std::isfinite(m)) throw NumericError("mean ablation value must be finite");
  return AblationSpec{AblationMode::mean, m, std::move(targets), app};
}

std::string AblationSpec::summary() const {
  std::ostringstream ss;
  ss << to_string(mode);
  if (mode == AblationMode::mean) ss << "(" << value << ")";
  ss << " x" << targets.size() << " @" << to_string(application);
  return ss.str();
}

}  // namespace synloc
