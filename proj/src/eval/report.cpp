#include <ostream>

#include "collora/eval/metrics.hpp"

namespace collora {

double EvalReport::mean_bcr() const {
  if (effects.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : effects) s += e.bcr;
  return s / static_cast<double>(effects.size());
}

double EvalReport::mean_ood_bcr() const {
  if (effects.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : effects) s += e.ood_bcr;
  return s / static_cast<double>(effects.size());
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["student"] = student;
  j["nfe"] = nfe;
  j["correct_trigger_rate"] = correct_trigger_rate;
  j["mean_bcr"] = mean_bcr();
  j["mean_ood_bcr"] = mean_ood_bcr();
  auto& rows = j["effects"] = nlohmann::ordered_json::array();
  for (const auto& e : effects) {
    nlohmann::ordered_json r;
    r["effect"] = e.effect;
    r["kind"] = e.kind;
    r["sw"] = e.sw;
    r["trigger_rate"] = e.trigger_rate;
    r["bcr"] = e.bcr;
    r["ood_sw"] = e.ood_sw;
    r["ood_bcr"] = e.ood_bcr;
    rows.push_back(r);
  }
  auto& comps = j["compositions"] = nlohmann::ordered_json::array();
  for (const auto& c : compositions) {
    nlohmann::ordered_json r;
    r["a"] = c.a;
    r["b"] = c.b;
    r["composed"] = c.score.composed;
    r["to_a"] = c.score.to_a;
    r["to_b"] = c.score.to_b;
    r["closer_to_composed"] = c.score.closer_to_composed();
    comps.push_back(r);
  }
  auto& bleed_rows = j["bleed"] = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < bleed.m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(bleed.m.cols()));
    for (Eigen::Index k = 0; k < bleed.m.cols(); ++k) row[static_cast<std::size_t>(k)] = bleed.m(i, k);
    bleed_rows.push_back(row);
  }
  return j;
}

void EvalReport::write_csv(std::ostream& os) const {
  os << "effect,kind,sw,trigger_rate,bcr,ood_sw,ood_bcr,nfe\n";
  for (const auto& e : effects)
    os << e.effect << ',' << e.kind << ',' << e.sw << ',' << e.trigger_rate << ',' << e.bcr << ','
       << e.ood_sw << ',' << e.ood_bcr << ',' << nfe << '\n';
}

void EvalReport::write_bleed_csv(std::ostream& os) const {
  os << "prompt";
  for (Eigen::Index k = 0; k < bleed.m.cols(); ++k) os << ",target_" << k;
  os << '\n';
  for (Eigen::Index i = 0; i < bleed.m.rows(); ++i) {
    os << i;
    for (Eigen::Index k = 0; k < bleed.m.cols(); ++k) os << ',' << bleed.m(i, k);
    os << '\n';
  }
}

}  // namespace collora
