#pragma once

#include <vector>

#include "wnos/expression.hpp"

namespace wnos {

struct ChannelModel {
  double bandwidth_hz = 200e3;
  double packet_bits = 2048;
  double fec_rate = 0.1;        // fraction of each packet spent on parity
  double slot_seconds = 0.01;
  double path_loss_exponent = 3.0;
  double reference_gain = 1e-6;  // gain at 1 m
  double noise_floor_mw = 1e-9;
  bool high_snr_approx = false;

  void validate() const;  // throws ValidationError
  // Packets per slot per bit/s/Hz of spectral efficiency.
  double packets_per_slot_factor() const;
  double path_gain(double distance_m) const;
};

// Link gains and band assignment of a fixed topology. gain[k][l] is the
// gain from the transmitter of link k to the receiver of link l.
struct ChannelState {
  ChannelModel model;
  std::vector<std::vector<double>> gain;
  std::vector<int> band;

  std::size_t size() const { return band.size(); }
  // Noise plus same-band interference at the receiver of l. `weight` scales
  // each interferer's power (activity factor); empty means all ones.
  double interference(std::size_t l, const std::vector<double>& powers_mw,
                      const std::vector<double>& weight = {}) const;
  double sinr(std::size_t l, const std::vector<double>& powers_mw, const std::vector<double>& weight = {}) const;
  // Packets per slot: K * log2(1 + SINR), or K * log2(SINR) floored at 0
  // under the high-SINR approximation.
  double capacity(std::size_t l, const std::vector<double>& powers_mw, const std::vector<double>& weight = {}) const;
};

double capacity_from_sinr(const ChannelModel& m, double sinr);

// Symbolic c_l over symbols lnkpwr_k, for gradient checks.
Expr capacity_expr(const ChannelState& ch, std::size_t l);
// sum_l lambda_l * c_l(P).
Expr weighted_capacity_expr(const ChannelState& ch, const std::vector<double>& lambda);

// d/dy_j of sum_l lambda_l c_l with y_j = ln p_j, all weights one.
std::vector<double> weighted_capacity_gradient_logp(const ChannelState& ch, const std::vector<double>& powers_mw,
                                                    const std::vector<double>& lambda);

}  // namespace wnos
