#pragma once

// Spectrum plus domination certificates for one cocycle, and the empirical
// bucket it falls into.

#include <optional>
#include <string>
#include <vector>

#include "domination.hpp"

namespace stochdom {

enum class SpectrumClass { trivial, two_point, multi_point_dominated, multi_point_uncertified };

inline std::string to_string(SpectrumClass c) {
  switch (c) {
    case SpectrumClass::trivial: return "trivial";
    case SpectrumClass::two_point: return "two_point";
    case SpectrumClass::multi_point_dominated: return "multi_point_dominated";
    default: return "multi_point_uncertified";
  }
}

struct AnalysisOptions {
  std::size_t m_max = 16;
  std::size_t length = 2000;  // QR orbit length when the base is not a cycle
  std::size_t sample = 8;     // consecutive orbit points to certify
  std::optional<BasePoint> origin;
  std::uint64_t seed = 0x5eed;
};

struct CertificateAttempt {
  std::optional<DominationCertificate> certificate;
  std::string failure;  // reason and detail when certification threw
  bool valid() const { return certificate && certificate->valid; }
};

struct Analysis {
  LyapunovReport spectrum;
  SpectrumClass classification = SpectrumClass::trivial;
  bool empirical = true;
  std::vector<BasePoint> sample;
  CertificateAttempt zero_split;  // E0 + E^{<0}
  CertificateAttempt full_split;  // every Oseledets space
};

namespace detail {

inline CertificateAttempt try_certify(const CocycleSpec& c, const SplittingField& field,
                                      const std::vector<BasePoint>& sample, std::size_t m_max) {
  CertificateAttempt out;
  try {
    out.certificate = certify_domination(c, field, sample, m_max);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numerical) throw;
    out.failure = e.reason() + ": " + e.detail();
  }
  return out;
}

inline Splitting coarsen(const std::vector<Subspace>& parts) {
  Index cols = 0;
  for (std::size_t i = 1; i < parts.size(); ++i) cols += parts[i].dim();
  Matrix rest(parts.front().ambient_dim(), cols);
  Index at = 0;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    rest.middleCols(at, parts[i].dim()) = parts[i].basis();
    at += parts[i].dim();
  }
  return Splitting{{parts.front(), Subspace::span(rest)}};
}

}  // namespace detail

inline Analysis analyze(const CocycleSpec& c, const AnalysisOptions& opt = {}) {
  Analysis out;
  std::vector<OseledetsEstimate> estimates;
  if (c.base().period()) {
    auto ps = lyapunov_periodic(c);
    out.spectrum = std::move(ps.report);
    estimates = std::move(ps.estimates);
    for (const auto& e : estimates) out.sample.push_back(e.point);
  } else {
    require(opt.sample >= 1, "invalid_sample", "analysis needs at least one sample point");
    const BasePoint x = opt.origin.value_or(c.base().origin());
    QrOptions qo;
    qo.seed = opt.seed;
    out.spectrum = lyapunov_qr(c, x, opt.length, 1, qo);
    // One extra point so the last sample point's image is tabulated.
    const OrbitSegment seg = orbit(c.base(), x, opt.sample + 1);
    if (out.spectrum.groups.size() >= 2)
      for (const auto& p : seg.points)
        estimates.push_back(oseledets_estimate(c, p, out.spectrum.groups, opt.length, opt.seed));
    out.sample.assign(seg.points.begin(), seg.points.end() - 1);
  }

  const std::size_t k = out.spectrum.groups.size();
  if (k >= 2) {
    SplittingField zero, full;
    for (const auto& e : estimates) {
      zero.set(e.point, detail::coarsen(e.subspaces));
      full.set(e.point, Splitting{e.subspaces});
    }
    out.zero_split = detail::try_certify(c, zero, out.sample, opt.m_max);
    out.full_split = k == 2 ? out.zero_split : detail::try_certify(c, full, out.sample, opt.m_max);
  }

  if (k == 1) out.classification = SpectrumClass::trivial;
  else if (k == 2) out.classification = SpectrumClass::two_point;
  else if (out.full_split.valid()) out.classification = SpectrumClass::multi_point_dominated;
  else out.classification = SpectrumClass::multi_point_uncertified;
  return out;
}

}  // namespace stochdom
