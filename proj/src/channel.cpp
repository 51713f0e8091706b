#include "wnos/channel.hpp"

#include <cmath>
#include <numbers>

#include "wnos/errors.hpp"

namespace wnos {

void ChannelModel::validate() const {
  if (!(bandwidth_hz > 0)) throw ValidationError("bandwidth must be positive");
  if (!(packet_bits > 0)) throw ValidationError("packet size must be positive");
  if (!(fec_rate >= 0 && fec_rate < 1)) throw ValidationError("fec rate must lie in [0, 1)");
  if (!(slot_seconds > 0)) throw ValidationError("slot length must be positive");
  if (!(path_loss_exponent >= 2 && path_loss_exponent <= 6)) throw ValidationError("path loss exponent must lie in [2, 6]");
  if (!(reference_gain > 0)) throw ValidationError("reference gain must be positive");
  if (!(noise_floor_mw > 0)) throw ValidationError("noise floor must be positive");
}

double ChannelModel::packets_per_slot_factor() const {
  return bandwidth_hz / packet_bits * (1.0 - fec_rate) * slot_seconds;
}

double ChannelModel::path_gain(double d) const {
  return reference_gain * std::pow(std::max(d, 1.0), -path_loss_exponent);
}

double capacity_from_sinr(const ChannelModel& m, double sinr) {
  double k = m.packets_per_slot_factor();
  if (m.high_snr_approx) return k * std::max(0.0, std::log2(std::max(sinr, 1e-300)));
  return k * std::log2(1.0 + sinr);
}

double ChannelState::interference(std::size_t l, const std::vector<double>& p, const std::vector<double>& w) const {
  double d = model.noise_floor_mw;
  for (std::size_t k = 0; k < size(); ++k) {
    if (k == l || band[k] != band[l]) continue;
    d += p[k] * gain[k][l] * (w.empty() ? 1.0 : w[k]);
  }
  return d;
}

double ChannelState::sinr(std::size_t l, const std::vector<double>& p, const std::vector<double>& w) const {
  return p[l] * gain[l][l] / interference(l, p, w);
}

double ChannelState::capacity(std::size_t l, const std::vector<double>& p, const std::vector<double>& w) const {
  return capacity_from_sinr(model, sinr(l, p, w));
}

Expr capacity_expr(const ChannelState& ch, std::size_t l) {
  std::vector<Expr> den{Expr::constant(ch.model.noise_floor_mw)};
  for (std::size_t k = 0; k < ch.size(); ++k)
    if (k != l && ch.band[k] == ch.band[l])
      den.push_back(Expr::constant(ch.gain[k][l]) * Expr::var("lnkpwr", static_cast<int>(k)));
  Expr sinr = Expr::constant(ch.gain[l][l]) * Expr::var("lnkpwr", static_cast<int>(l)) / Expr::add(den);
  double scale = ch.model.packets_per_slot_factor() / std::numbers::ln2;
  Expr arg = ch.model.high_snr_approx ? sinr : Expr::constant(1.0) + sinr;
  return Expr::constant(scale) * Expr::log(arg);
}

Expr weighted_capacity_expr(const ChannelState& ch, const std::vector<double>& lambda) {
  std::vector<Expr> parts;
  for (std::size_t l = 0; l < ch.size(); ++l) parts.push_back(Expr::constant(lambda[l]) * capacity_expr(ch, l));
  return Expr::add(std::move(parts));
}

std::vector<double> weighted_capacity_gradient_logp(const ChannelState& ch, const std::vector<double>& p,
                                                    const std::vector<double>& lambda) {
  double scale = ch.model.packets_per_slot_factor() / std::numbers::ln2;
  std::size_t n = ch.size();
  std::vector<double> g(n, 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    double d = ch.interference(l, p);
    double s = p[l] * ch.gain[l][l] / d;
    // d c_l / d ln p_l and the factor shared by every interferer's term.
    double own = ch.model.high_snr_approx ? 1.0 : s / (1.0 + s);
    g[l] += lambda[l] * scale * own;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == l || ch.band[k] != ch.band[l]) continue;
      g[k] -= lambda[l] * scale * own * p[k] * ch.gain[k][l] / d;
    }
  }
  return g;
}

}  // namespace wnos
