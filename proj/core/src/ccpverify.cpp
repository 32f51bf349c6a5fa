#include "hsp/ccpverify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "hsp/parallel.hpp"

namespace hsp::ccp {

std::string_view to_string(WeightScheme scheme) noexcept { return scheme == WeightScheme::equal ? "equal" : "random"; }

WeightScheme parse_weight_scheme(std::string_view text) {
  if (text == "equal") return WeightScheme::equal;
  if (text == "random") return WeightScheme::random;
  throw Error(ErrorCode::validation, fmt::format("unknown weight scheme '{}'", text));
}

void CcpExperiment::validate() const {
  spec.validate();
  if (n_seeds == 0) throw Error(ErrorCode::validation, "ccp: n_seeds must be at least 1");
  if (weight_draws == 0) throw Error(ErrorCode::validation, "ccp: weight_draws must be at least 1");
  if (k == 0) throw Error(ErrorCode::validation, "ccp: k must be at least 1");
  if (spec.n_assets < 2) throw Error(ErrorCode::validation, "ccp: screening needs at least two assets");
  if (spec.n_common_factors == 0) throw Error(ErrorCode::validation, "ccp: need at least one common factor");
  if (!(tolerance >= 0.0)) throw Error(ErrorCode::validation, "ccp: tolerance must be non-negative");
  if (spec.horizon < lead + 4) throw Error(ErrorCode::validation, "ccp: horizon too short for the lead");
}

namespace {

double median(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

std::vector<bool> above_median(std::span<const double> x) {
  const double m = median(x);
  std::vector<bool> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) e[i] = x[i] > m;
  return e;
}

// Point on the simplex: uniform weights or a flat Dirichlet draw.
std::vector<double> simplex(std::size_t n, WeightScheme scheme, std::mt19937_64& rng) {
  std::vector<double> w(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
  if (scheme == WeightScheme::equal || n == 0) return w;
  std::exponential_distribution<double> expo(1.0);
  double sum = 0.0;
  for (auto& x : w) sum += (x = expo(rng));
  for (auto& x : w) x /= sum;
  return w;
}

std::vector<double> combine(const std::vector<const std::vector<double>*>& cols, const std::vector<double>& w,
                            std::size_t len) {
  std::vector<double> out(len, 0.0);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t t = 0; t < len; ++t) out[t] += w[j] * (*cols[j])[t];
  }
  return out;
}

}  // namespace

Screening screening(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
  if (a.size() != b.size() || a.size() != c.size()) throw Error(ErrorCode::shape, "screening: length mismatch");
  const auto A = above_median(a);
  const auto B = above_median(b);
  const auto C = above_median(c);
  double n_c = 0, n_nc = 0, a_c = 0, a_nc = 0, b_c = 0, b_nc = 0, ab_c = 0, ab_nc = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (C[t]) {
      ++n_c;
      a_c += A[t];
      b_c += B[t];
      ab_c += A[t] && B[t];
    } else {
      ++n_nc;
      a_nc += A[t];
      b_nc += B[t];
      ab_nc += A[t] && B[t];
    }
  }
  if (n_c == 0 || n_nc == 0) {
    throw Error(ErrorCode::degenerate_series, "screening: the conditioning event never (or always) occurs");
  }
  Screening s;
  s.residual_c = std::abs(ab_c / n_c - (a_c / n_c) * (b_c / n_c));
  s.residual_not_c = std::abs(ab_nc / n_nc - (a_nc / n_nc) * (b_nc / n_nc));
  s.margin_a = a_c / n_c - a_nc / n_nc;
  s.margin_b = b_c / n_c - b_nc / n_nc;
  s.monotone = s.margin_a > 0.0 && s.margin_b > 0.0;
  return s;
}

SeedResult run_seed(const CcpExperiment& ex, std::size_t index) {
  SeedResult out;
  out.index = index;
  out.seed = derive_seed(ex.master_seed, fmt::format("ccp-seed-{}", index));

  data::SyntheticSpec spec = ex.spec;
  spec.seed = out.seed;
  const auto ids = data::synthetic_ids(spec);
  const auto returns = data::to_returns(data::generate_synthetic(spec), spec.compounding);
  const auto assets = returns.select(data::SeriesKind::asset);
  const auto all_drivers = returns.select(data::SeriesKind::driver);

  drivers::SpecificDriverMap map;
  drivers::CommonDriverSelection sel;
  try {
    map = drivers::specific_drivers(assets, all_drivers, ex.thresholds);
    sel = drivers::common_drivers(map, ex.k, drivers::SelectionMode::opt);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::no_common_drivers && e.code() != ErrorCode::degenerate_series) throw;
    out.skipped = true;
    out.skip_reason = e.what();
    return out;
  }
  out.chosen = sel.chosen;

  // Driver recovery over the full ranking, noise drivers included.
  {
    const auto ranked = drivers::rank_all(map);
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < ranked.size(); ++i) pos[ranked[i].id] = i;
    std::size_t worst_common = 0;
    for (const auto& id : ids.common_drivers) worst_common = std::max(worst_common, pos.at(id));
    std::size_t best_noise = ranked.size();
    for (const auto& id : ids.noise_drivers) best_noise = std::min(best_noise, pos.at(id));
    out.recovered = worst_common < best_noise;
  }

  const std::size_t T = returns.length();
  const std::size_t n = assets.width();
  std::mt19937_64 rng(derive_seed(out.seed, "weights"));
  auto col = [&](const std::string& id) -> const std::vector<double>& { return returns.at(id).values; };

  std::size_t specific_pairs = 0;
  for (const auto& s : map.specific) specific_pairs += s.size();
  if (specific_pairs == 0) {
    out.skipped = true;
    out.skip_reason = "no asset has a specific driver";
    return out;
  }

  const auto avg_abs = [&](const std::vector<double>& port, const std::vector<std::string>& ids_) {
    double s = 0.0;
    for (const auto& id : ids_) s += std::abs(drivers::lagged_correlation(port, col(id), ex.lead));
    return s / static_cast<double>(ids_.size());
  };

  const auto all_ids = all_drivers.ids();
  bool portfolio_ok = true;
  for (std::size_t draw = 0; draw < ex.weight_draws; ++draw) {
    const auto w = simplex(n, ex.weights, rng);
    const auto q = simplex(sel.chosen.size(), ex.weights, rng);
    const auto t = simplex(all_ids.size(), ex.weights, rng);

    std::vector<const std::vector<double>*> asset_cols;
    for (const auto& s : assets.series()) asset_cols.push_back(&s.values);
    const auto portfolio = combine(asset_cols, w, T);

    std::vector<const std::vector<double>*> common_cols;
    for (const auto& id : sel.chosen) common_cols.push_back(&col(id));
    const auto common_port = combine(common_cols, q, T);

    // Portfolio of per-asset specific-driver portfolios.
    std::vector<double> specific_port(T, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& spec_ids = map.specific[i];
      const auto z = simplex(spec_ids.size(), ex.weights, rng);
      for (std::size_t k = 0; k < spec_ids.size(); ++k) {
        const auto& c = col(spec_ids[k]);
        for (std::size_t s = 0; s < T; ++s) specific_port[s] += w[i] * z[k] * c[s];
      }
    }

    std::vector<const std::vector<double>*> all_cols;
    for (const auto& id : all_ids) all_cols.push_back(&col(id));
    const auto all_port = combine(all_cols, t, T);

    const double cc = drivers::lagged_correlation(portfolio, common_port, ex.lead);
    const double cs = drivers::lagged_correlation(portfolio, specific_port, ex.lead);
    const double ca = drivers::lagged_correlation(portfolio, all_port, ex.lead);
    if (draw == 0) {
      out.corr_common = cc;
      out.corr_specific = cs;
      out.corr_all = ca;

      out.avg_common = avg_abs(portfolio, sel.chosen);
      out.avg_all = avg_abs(portfolio, all_ids);
      double s = 0.0;
      for (const auto& spec_ids : map.specific) {
        for (const auto& id : spec_ids) s += std::abs(drivers::lagged_correlation(portfolio, col(id), ex.lead));
      }
      out.avg_specific = s / static_cast<double>(specific_pairs);
      out.average_ordering = out.avg_common >= out.avg_specific - ex.tolerance &&
                             out.avg_specific >= out.avg_all - ex.tolerance && out.avg_common > out.avg_all;
    }
    portfolio_ok = portfolio_ok && cc >= cs - ex.tolerance && cs >= ca - ex.tolerance && cc > ca;
  }
  out.portfolio_ordering = portfolio_ok;

  try {
    out.screening = screening(col(ids.assets[0]), col(ids.assets[1]), col(sel.chosen.front()));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::degenerate_series) throw;
    out.skipped = true;
    out.skip_reason = e.what();
  }
  return out;
}

CcpResult run_ccp(const CcpExperiment& ex) {
  ex.validate();
  CcpResult r;
  r.seeds.resize(ex.n_seeds);
  parallel_for(ex.n_seeds, ex.threads, [&](std::size_t i) { r.seeds[i] = run_seed(ex, i); });

  double avg = 0, port = 0, mono = 0, rec = 0;
  for (const auto& s : r.seeds) {
    if (s.skipped) {
      ++r.skipped;
      continue;
    }
    ++r.evaluated;
    avg += s.average_ordering;
    port += s.portfolio_ordering;
    mono += s.screening.monotone;
    rec += s.recovered;
    r.mean_residual_c += s.screening.residual_c;
    r.mean_residual_not_c += s.screening.residual_not_c;
  }
  if (r.evaluated > 0) {
    const auto n = static_cast<double>(r.evaluated);
    r.average_pass_fraction = avg / n;
    r.portfolio_pass_fraction = port / n;
    r.monotone_pass_fraction = mono / n;
    r.recovery_fraction = rec / n;
    r.mean_residual_c /= n;
    r.mean_residual_not_c /= n;
  }
  return r;
}

void write_csv(const CcpResult& result, std::ostream& out) {
  out << "seed,skipped,avg_common,avg_specific,avg_all,average_pass,corr_common,corr_specific,corr_all,"
         "portfolio_pass,residual_c,residual_not_c,margin_a,margin_b,monotone_pass,recovered\n";
  for (const auto& s : result.seeds) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", s.index, s.skipped ? 1 : 0, s.avg_common,
                       s.avg_specific, s.avg_all, s.average_ordering ? 1 : 0, s.corr_common, s.corr_specific,
                       s.corr_all, s.portfolio_ordering ? 1 : 0, s.screening.residual_c, s.screening.residual_not_c,
                       s.screening.margin_a, s.screening.margin_b, s.screening.monotone ? 1 : 0,
                       s.recovered ? 1 : 0);
  }
}

}  // namespace hsp::ccp
