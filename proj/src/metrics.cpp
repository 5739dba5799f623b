#include "dataprov/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "dataprov/error.hpp"
#include "dataprov/format.hpp"

namespace dataprov::metrics {
namespace {

using verifier::Verdict;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::string_view kCellsHeader =
    "defender,source,replicate,suspect_index,variant,truth,verdict,g,g0,score,suspect_mean,shadow_mean,status";
constexpr std::string_view kSummaryHeader = "defender,variant,tp,fp,fn,tn,accuracy,f1,auroc";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string sanitize(std::string text) {
  for (char& c : text) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return text;
}

}  // namespace

void ConfusionCounts::add(Verdict truth, Verdict verdict) noexcept {
  const bool pos_truth = truth == Verdict::kIllegal;
  const bool pos_pred = verdict == Verdict::kIllegal;
  if (pos_truth && pos_pred) ++tp;
  else if (!pos_truth && pos_pred) ++fp;
  else if (pos_truth) ++fn;
  else ++tn;
}

AccuracyF1 accuracy_f1(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error(ErrorCode::kEmptyInput, "no decisions to score");
  const std::size_t f1_den = 2 * c.tp + c.fp + c.fn;
  if (f1_den == 0) throw Error(ErrorCode::kUndefinedF1, "F1 undefined without any positive truth or prediction");
  AccuracyF1 out;
  out.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  out.f1 = static_cast<double>(2 * c.tp) / static_cast<double>(f1_den);
  return out;
}

double auroc(std::span<const double> scores, std::span<const char> is_positive) {
  if (scores.size() != is_positive.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "scores and labels differ in length");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw Error(ErrorCode::kDomain, "AUROC score is NaN");
    positives += is_positive[i] != 0;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::kOneClassOnly, "AUROC needs both positive and negative instances");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups in ascending score; each positive beats every negative
  // seen in earlier groups and half-beats the negatives tied with it.
  double wins = 0.0;
  std::size_t negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos = 0;
    std::size_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (is_positive[order[j]] ? pos : neg) += 1;
      ++j;
    }
    wins += static_cast<double>(pos) * static_cast<double>(negatives_below) +
            0.5 * static_cast<double>(pos) * static_cast<double>(neg);
    negatives_below += neg;
    i = j;
  }
  return wins / (static_cast<double>(positives) * static_cast<double>(negatives));
}

BlockSummary aggregate(std::span<const Outcome> outcomes) {
  if (outcomes.empty()) throw Error(ErrorCode::kEmptyInput, "cannot aggregate an empty block");
  BlockSummary s;
  std::vector<double> scores;
  std::vector<char> positive;
  for (const auto& o : outcomes) {
    s.counts.add(o.truth, o.verdict);
    scores.push_back(o.score);
    positive.push_back(o.truth == Verdict::kIllegal ? 1 : 0);
  }
  s.accuracy = static_cast<double>(s.counts.tp + s.counts.tn) / static_cast<double>(s.counts.total());
  const std::size_t f1_den = 2 * s.counts.tp + s.counts.fp + s.counts.fn;
  s.f1 = f1_den == 0 ? kNaN : static_cast<double>(2 * s.counts.tp) / static_cast<double>(f1_den);
  const bool both = s.counts.tp + s.counts.fn > 0 && s.counts.fp + s.counts.tn > 0;
  s.auroc = both ? auroc(scores, positive) : kNaN;
  return s;
}

AverageRow average(std::span<const BlockSummary> blocks) {
  if (blocks.empty()) throw Error(ErrorCode::kEmptyInput, "no blocks to average");
  AverageRow a;
  for (const auto& b : blocks) {
    a.tp += static_cast<double>(b.counts.tp);
    a.fp += static_cast<double>(b.counts.fp);
    a.fn += static_cast<double>(b.counts.fn);
    a.tn += static_cast<double>(b.counts.tn);
    a.accuracy += b.accuracy;
    a.f1 += b.f1;
    a.auroc += b.auroc;
  }
  const double n = static_cast<double>(blocks.size());
  a.tp /= n;
  a.fp /= n;
  a.fn /= n;
  a.tn /= n;
  a.accuracy /= n;
  a.f1 /= n;
  a.auroc /= n;
  return a;
}

std::vector<SummaryRow> summarize(std::span<const CellRecord> cells) {
  // Keys in first-seen order so the table layout follows the sweep order.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<Outcome>> blocks;
  std::vector<std::string> variants;
  for (const auto& cell : cells) {
    if (cell.failed()) continue;
    const auto key = std::make_pair(cell.defender, cell.variant);
    auto [it, inserted] = blocks.try_emplace(key);
    if (inserted) keys.push_back(key);
    if (std::find(variants.begin(), variants.end(), cell.variant) == variants.end()) {
      variants.push_back(cell.variant);
    }
    it->second.push_back({cell.truth, cell.verdict, cell.score});
  }
  std::vector<SummaryRow> rows;
  std::map<std::string, std::vector<BlockSummary>> per_variant;
  for (const auto& key : keys) {
    const BlockSummary s = aggregate(blocks[key]);
    per_variant[key.second].push_back(s);
    rows.push_back({key.first, key.second, static_cast<double>(s.counts.tp), static_cast<double>(s.counts.fp),
                    static_cast<double>(s.counts.fn), static_cast<double>(s.counts.tn), s.accuracy, s.f1,
                    s.auroc});
  }
  for (const auto& variant : variants) {
    const AverageRow a = average(per_variant[variant]);
    rows.push_back({"average", variant, a.tp, a.fp, a.fn, a.tn, a.accuracy, a.f1, a.auroc});
  }
  return rows;
}

std::string cells_to_csv(std::span<const CellRecord> cells) {
  std::string out(kCellsHeader);
  out += '\n';
  for (const auto& c : cells) {
    const bool failed = c.failed();
    out += c.defender + ',' + c.source + ',' + std::to_string(c.replicate) + ',' + std::to_string(c.suspect_index) +
           ',' + c.variant + ',' + std::string(verifier::to_string(c.truth)) + ',' +
           (failed ? std::string("none") : std::string(verifier::to_string(c.verdict))) + ',' + format_double(c.g) +
           ',' + format_double(c.g0) + ',' + format_double(c.score) + ',' + format_double(c.suspect_mean) + ',' +
           format_double(c.shadow_mean) + ',' + sanitize(c.status) + '\n';
  }
  return out;
}

std::vector<CellRecord> cells_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCellsHeader) {
    throw Error(ErrorCode::kParse, "cells CSV must start with the header '" + std::string(kCellsHeader) + "'");
  }
  std::vector<CellRecord> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != 13) {
      throw Error(ErrorCode::kParse, "cells CSV line " + std::to_string(line_no) + " has " +
                                         std::to_string(f.size()) + " fields, expected 13");
    }
    try {
      CellRecord c;
      c.defender = std::string(f[0]);
      c.source = std::string(f[1]);
      c.replicate = static_cast<std::size_t>(parse_integer(f[2]));
      c.suspect_index = static_cast<std::size_t>(parse_integer(f[3]));
      c.variant = std::string(f[4]);
      c.truth = verifier::parse_verdict(f[5]);
      c.status = std::string(f[12]);
      c.verdict = f[6] == "none" ? Verdict::kIllegal : verifier::parse_verdict(f[6]);
      c.g = parse_double(f[7]);
      c.g0 = parse_double(f[8]);
      c.score = parse_double(f[9]);
      c.suspect_mean = parse_double(f[10]);
      c.shadow_mean = parse_double(f[11]);
      cells.push_back(std::move(c));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, "cells CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cells;
}

std::string summary_to_csv(std::span<const SummaryRow> rows) {
  std::string out(kSummaryHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.defender + ',' + r.variant + ',' + format_double(r.tp) + ',' + format_double(r.fp) + ',' +
           format_double(r.fn) + ',' + format_double(r.tn) + ',' + format_double(r.accuracy) + ',' +
           format_double(r.f1) + ',' + format_double(r.auroc) + '\n';
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

}  // namespace dataprov::metrics
