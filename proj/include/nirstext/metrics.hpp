#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nirstext/mat.hpp"

namespace nirstext::metrics {

// Metric-side tokenization: lowercase, punctuation stripped. This is
// independent of the LM tokenizer (which is case-preserving) and is recorded
// in the report header.
std::vector<std::string> tokenize_for_metrics(const std::string& text);

// Suffix-stripping stem used by the METEOR variant's fallback stage.
std::string stem(const std::string& word);

// Unigram precision with reference clipping times brevity penalty
// exp(min(0, 1 - |ref|/|hyp|)). Empty hypothesis scores 0.
double bleu1(const std::vector<std::string>& hyp,
             const std::vector<std::string>& ref);

// Two-stage greedy alignment (exact, then stem), F = 10PR/(R+9P), chunk
// penalty 0.5*(chunks/matches)^3. No synonym or paraphrase tables.
double meteor_lite(const std::vector<std::string>& hyp,
                   const std::vector<std::string>& ref);

// LCS-based F-measure: F = 2PR/(P+R) with P = LCS/|hyp|, R = LCS/|ref|.
double rouge_l(const std::vector<std::string>& hyp,
               const std::vector<std::string>& ref);

// Word-level Levenshtein distance divided by |ref|. Can exceed 1.
double wer(const std::vector<std::string>& hyp,
           const std::vector<std::string>& ref);

struct EmbPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Returns one row per token.
using Embedder = std::function<Mat(const std::vector<std::string>&)>;

// Greedy max-cosine matching in embedding space: precision averages over
// hypothesis tokens, recall over reference tokens.
EmbPRF emb_prf(const std::vector<std::string>& hyp,
               const std::vector<std::string>& ref, const Embedder& embed);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  double mean_diff = 0.0;
  bool degenerate = false;  // zero-variance differences
};

// Two-sided paired t-test of a vs b (elementwise pairs).
TTest paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace nirstext::metrics
