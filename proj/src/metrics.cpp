#include "nirstext/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>

#include "nirstext/errors.hpp"
#include "nirstext/kernels.hpp"
#include "nirstext/log.hpp"
#include "nirstext/special.hpp"

namespace nirstext::metrics {

std::vector<std::string> tokenize_for_metrics(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string stem(const std::string& word) {
  static const char* suffixes[] = {"ing", "ed", "es", "ly", "s"};
  for (const char* suf : suffixes) {
    const std::size_t n = std::string(suf).size();
    if (word.size() >= n + 3 && word.compare(word.size() - n, n, suf) == 0)
      return word.substr(0, word.size() - n);
  }
  return word;
}

namespace {

void require_ref(const std::vector<std::string>& ref, const char* metric) {
  if (ref.empty())
    throw DataError(std::string(metric) + ": empty reference");
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (a[i - 1] == b[j - 1]) cur[j] = prev[j - 1] + 1;
      else cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double bleu1(const std::vector<std::string>& hyp,
             const std::vector<std::string>& ref) {
  require_ref(ref, "bleu1");
  if (hyp.empty()) return 0.0;
  std::map<std::string, int> ref_counts;
  for (const auto& w : ref) ++ref_counts[w];
  std::map<std::string, int> hyp_counts;
  for (const auto& w : hyp) ++hyp_counts[w];
  int clipped = 0;
  for (const auto& [w, c] : hyp_counts) {
    const auto it = ref_counts.find(w);
    if (it != ref_counts.end()) clipped += std::min(c, it->second);
  }
  const double precision = static_cast<double>(clipped) / static_cast<double>(hyp.size());
  const double bp = std::exp(std::min(
      0.0, 1.0 - static_cast<double>(ref.size()) / static_cast<double>(hyp.size())));
  return bp * precision;
}

double meteor_lite(const std::vector<std::string>& hyp,
                   const std::vector<std::string>& ref) {
  require_ref(ref, "meteor_lite");
  if (hyp.empty()) return 0.0;

  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<int> hyp_match(n, -1);
  std::vector<bool> ref_used(m, false);

  // Stage 1: exact matches, greedy left to right.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!ref_used[j] && hyp[i] == ref[j]) {
        hyp_match[i] = static_cast<int>(j);
        ref_used[j] = true;
        break;
      }
    }
  }
  // Stage 2: stem matches among leftovers.
  for (std::size_t i = 0; i < n; ++i) {
    if (hyp_match[i] >= 0) continue;
    const std::string hs = stem(hyp[i]);
    for (std::size_t j = 0; j < m; ++j) {
      if (!ref_used[j] && hs == stem(ref[j])) {
        hyp_match[i] = static_cast<int>(j);
        ref_used[j] = true;
        break;
      }
    }
  }

  std::size_t matches = 0, chunks = 0;
  int prev_ref = -2;
  for (std::size_t i = 0; i < n; ++i) {
    if (hyp_match[i] < 0) {
      prev_ref = -2;
      continue;
    }
    ++matches;
    if (hyp_match[i] != prev_ref + 1) ++chunks;
    prev_ref = hyp_match[i];
  }
  if (matches == 0) return 0.0;

  const double P = static_cast<double>(matches) / static_cast<double>(n);
  const double R = static_cast<double>(matches) / static_cast<double>(m);
  const double F = 10.0 * P * R / (R + 9.0 * P);
  const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
  const double penalty = 0.5 * frag * frag * frag;
  return F * (1.0 - penalty);
}

double rouge_l(const std::vector<std::string>& hyp,
               const std::vector<std::string>& ref) {
  require_ref(ref, "rouge_l");
  if (hyp.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(hyp, ref));
  if (lcs == 0.0) return 0.0;
  const double P = lcs / static_cast<double>(hyp.size());
  const double R = lcs / static_cast<double>(ref.size());
  return 2.0 * P * R / (P + R);
}

double wer(const std::vector<std::string>& hyp,
           const std::vector<std::string>& ref) {
  require_ref(ref, "wer");
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(m);
}

namespace {

double cosine(const double* a, const double* b, std::size_t n) {
  const double na = std::sqrt(kernels::sumsq(a, n));
  const double nb = std::sqrt(kernels::sumsq(b, n));
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return kernels::dot(a, b, n) / (na * nb);
}

}  // namespace

EmbPRF emb_prf(const std::vector<std::string>& hyp,
               const std::vector<std::string>& ref, const Embedder& embed) {
  require_ref(ref, "emb_prf");
  EmbPRF out;
  if (hyp.empty()) return out;
  const Mat H = embed(hyp);
  const Mat R = embed(ref);
  if (H.rows != static_cast<std::int64_t>(hyp.size()) ||
      R.rows != static_cast<std::int64_t>(ref.size()) || H.cols != R.cols)
    throw DataError("emb_prf: embedder returned unexpected shape");

  const auto n = static_cast<std::size_t>(H.cols);
  double psum = 0.0;
  for (std::int64_t i = 0; i < H.rows; ++i) {
    double best = -1.0;
    for (std::int64_t j = 0; j < R.rows; ++j)
      best = std::max(best, cosine(H.row(i), R.row(j), n));
    psum += best;
  }
  double rsum = 0.0;
  for (std::int64_t j = 0; j < R.rows; ++j) {
    double best = -1.0;
    for (std::int64_t i = 0; i < H.rows; ++i)
      best = std::max(best, cosine(H.row(i), R.row(j), n));
    rsum += best;
  }
  out.precision = psum / static_cast<double>(H.rows);
  out.recall = rsum / static_cast<double>(R.rows);
  const double denom = out.precision + out.recall;
  out.f1 = (std::fabs(denom) < 1e-12) ? 0.0 : 2.0 * out.precision * out.recall / denom;
  return out;
}

TTest paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("paired_ttest: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw DataError("paired_ttest: need at least 2 pairs");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);

  TTest out;
  out.df = static_cast<double>(n - 1);
  out.mean_diff = mean;
  if (var <= 0.0) {
    out.degenerate = true;
    if (mean == 0.0) {
      out.t = 0.0;
      out.p = 1.0;
    } else {
      out.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
    }
    log::warn("paired_ttest: zero-variance differences, p degenerate");
    return out;
  }
  out.t = mean / std::sqrt(var / static_cast<double>(n));
  out.p = special::student_t_two_sided_p(out.t, out.df);
  return out;
}

}  // namespace nirstext::metrics
