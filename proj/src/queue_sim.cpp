#include "misodelay/queue_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "misodelay/error.hpp"
#include "misodelay/phy_mc.hpp"

namespace misodelay {
namespace {

// Draws the bits served to the tagged user in one scheduled slot of a given group.
class SlotServer {
 public:
  SlotServer(const GroupService& g, const QueueSimConfig& cfg) : g_(g), cfg_(cfg) {
    if (g_.policy) {
      if (!g_.grid || g_.policy->rates.size() != g_.grid->size())
        throw Error(Errc::PolicyGridMismatch, "policy and grid sizes differ");
      if (cfg_.mode == ServiceDrawMode::FullChannelMC && g_.grid->edges.size() != g_.grid->size() + 1)
        throw Error(Errc::InvalidParameter, "full-channel simulation needs a grid with cell edges");
      double acc = 0.0;
      for (double p : g_.grid->probs) cdf_.push_back(acc += p);
    }
  }

  double draw(Rng& rng) const {
    const auto& b = g_.budget;
    if (cfg_.mode == ServiceDrawMode::AnalyticEps) {
      if (!g_.policy) return b.n_data * std::log2(1.0 + b.p_per_user * chi2_scaled_sample(b.m, rng));
      const double u = rng.uniform() * cdf_.back();
      const auto i = std::min<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin(),
                                           cdf_.size() - 1);
      if (!rng.bernoulli(1.0 - g_.policy->errors[i])) return 0.0;
      return b.n_data * g_.policy->rates[i];
    }
    const auto est = sample_estimate(b, cfg_.n_antennas, rng);
    if (!g_.policy) return b.n_data * std::log2(1.0 + est.mu);
    const double r = g_.policy->rates[g_.grid->cell_of(est.mu)];
    const double sinr = sample_sinr(est, b, rng).sinr;
    const bool ok = cfg_.finite_blocklength ? rng.bernoulli(1.0 - fbl_error_at_sinr(sinr, r, b.n_data))
                                            : std::log2(1.0 + sinr) >= r;
    return ok ? b.n_data * r : 0.0;
  }

 private:
  const GroupService& g_;
  const QueueSimConfig& cfg_;
  std::vector<double> cdf_;
};

}  // namespace

GroupService ideal_group(const DerivedBudget& budget) { return {budget, nullptr, nullptr}; }

GroupService policy_group(const DerivedBudget& budget, MuGrid grid, RatePolicy policy) {
  return {budget, std::make_shared<const MuGrid>(std::move(grid)),
          std::make_shared<const RatePolicy>(std::move(policy))};
}

double QueueTrace::stderr_pv() const {
  if (measured == 0) return 0.0;
  return std::sqrt(pv_hat * (1.0 - pv_hat) / static_cast<double>(measured));
}

ServiceSequence ServiceSequence::dense(std::vector<double> per_slot) {
  ServiceSequence s;
  s.superframe_len = 1;
  s.n_slots = per_slot.size();
  s.slot.assign(per_slot.size(), 0);
  s.bits = std::move(per_slot);
  return s;
}

ServiceSequence draw_service_sequence(const QueueSimConfig& cfg, std::uint64_t n_slots, Rng& rng) {
  const auto& sp = cfg.split;
  const int T = cfg.superframe_len;
  if (T < 1 || sp.t_a + sp.t_b != T || sp.t_a * sp.k_a + sp.t_b * sp.k_b != cfg.n_users_total)
    throw Error(Errc::InvalidParameter, "group split does not match the superframe");
  const SlotServer a(cfg.group_a, cfg);
  const std::unique_ptr<SlotServer> b = sp.degenerate() ? nullptr : std::make_unique<SlotServer>(cfg.group_b, cfg);
  ServiceSequence seq;
  seq.superframe_len = T;
  seq.n_slots = n_slots;
  const auto n_frames = (n_slots + T - 1) / T;
  seq.slot.reserve(n_frames);
  seq.bits.reserve(n_frames);
  const int in_a = sp.t_a * sp.k_a;
  for (std::uint64_t f = 0; f < n_frames; ++f) {
    const int pos = std::min(static_cast<int>(rng.uniform() * cfg.n_users_total), cfg.n_users_total - 1);
    if (pos < in_a) {
      seq.slot.push_back(pos / sp.k_a);
      seq.bits.push_back(a.draw(rng));
    } else {
      seq.slot.push_back(sp.t_a + (pos - in_a) / sp.k_b);
      seq.bits.push_back(b->draw(rng));
    }
  }
  return seq;
}

QueueTrace run_queue(const ServiceSequence& service, double alpha, int deadline, std::int64_t warmup_slots,
                     bool cross_check) {
  if (!(alpha >= 0.0)) throw Error(Errc::InvalidParameter, "arrival rate must be >= 0");
  if (deadline < 0) throw Error(Errc::InvalidParameter, "deadline must be >= 0");
  const std::uint64_t n = service.n_slots;
  const std::uint64_t w = static_cast<std::uint64_t>(deadline);
  const std::uint64_t warm = std::max<std::uint64_t>(1, warmup_slots < 0 ? 10 * w : warmup_slots);

  QueueTrace tr;
  tr.n_slots = n;
  tr.arrival_rate = alpha;
  // backlog[k - base] = B_k; cap[k - base] = c_k
  std::deque<double> backlog{0.0};
  std::deque<double> cap;
  std::uint64_t base = 0;
  std::uint64_t t = warm;  // next arrival instant to resolve
  std::uint64_t j = t;     // t + W(t) is nondecreasing in t
  double b = 0.0;

  const auto drained = [&](std::uint64_t k, std::uint64_t from) {
    // D(0,k) ≥ A(0,from)  ⇔  B_k ≤ α (k - from)
    return backlog[k - base] <= alpha * static_cast<double>(k - from) * (1.0 + 1e-12);
  };
  const auto backlog_delay = [&](std::uint64_t from) {
    // slots of full-capacity service needed to clear what was queued at `from`
    const double target = backlog[from - base] * (1.0 - 1e-12);
    double acc = 0.0;
    std::uint64_t u = 0;
    while (acc < target && from + u - base < cap.size()) acc += cap[from + u++ - base];
    return acc >= target ? u : ~std::uint64_t{0};
  };
  const auto record = [&](std::uint64_t delay) {
    ++tr.measured;
    if (delay > w) ++tr.violations;
    tr.max_delay_seen = std::max(tr.max_delay_seen, delay);
  };

  for (std::uint64_t k = 0; k < n; ++k) {
    const double c = service.at(k);
    b = std::max(0.0, b + alpha - c);
    cap.push_back(c);
    backlog.push_back(b);
    const std::uint64_t last = k + 1;
    while (t < n && t <= last) {
      j = std::max(j, t);
      while (j <= last && !drained(j, t)) ++j;
      if (j > last) break;
      record(j - t);
      if (cross_check && backlog_delay(t) != j - t) ++tr.delay_mismatches;
      ++t;
    }
    while (base < t && !cap.empty()) {
      backlog.pop_front();
      cap.pop_front();
      ++base;
    }
  }
  // instants still queued at the end: a violation if the deadline already passed
  for (; t < n; ++t)
    if (n - t > w) record(n - t + 1);

  tr.pv_hat = tr.measured ? static_cast<double>(tr.violations) / static_cast<double>(tr.measured) : 0.0;
  return tr;
}

std::vector<QueueTrace> simulate_queue(const QueueSimConfig& cfg, std::span<const double> alphas,
                                       std::uint64_t n_slots, Rng& rng) {
  if (n_slots < 1) throw Error(Errc::InvalidParameter, "n_slots must be >= 1");
  const auto seq = draw_service_sequence(cfg, n_slots, rng);
  std::vector<QueueTrace> out;
  out.reserve(alphas.size());
  for (double a : alphas) {
    out.push_back(run_queue(seq, a, cfg.deadline, cfg.warmup_slots, cfg.cross_check));
    out.back().seed = rng.seed();
  }
  return out;
}

QueueTrace simulate_queue(const QueueSimConfig& cfg, double alpha, std::uint64_t n_slots, Rng& rng) {
  const double a[] = {alpha};
  return simulate_queue(cfg, a, n_slots, rng).front();
}

}  // namespace misodelay
