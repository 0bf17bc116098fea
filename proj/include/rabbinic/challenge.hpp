#pragma once

// Homograph challenge sets: loading and validation, stratified k-fold
// cross-validation, per-analysis F1, the two classifier pipelines, synthetic
// data, and report rendering.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include "json.hpp"
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "rabbinic/common.hpp"
#include "rabbinic/embed.hpp"
#include "rabbinic/hebtext.hpp"
#include "rabbinic/neural.hpp"

namespace rabbinic::challenge {

struct HomographEntry {
  std::string homograph_id;
  std::string sentence_id;
  std::string text;
  std::size_t token_index = 0;
  int label = 1;

  bool operator==(const HomographEntry&) const = default;
};

/// homograph_id -> entries, in file order.
using ChallengeSet = std::map<std::string, std::vector<HomographEntry>>;

inline constexpr std::size_t kExpectedHomographs = 12;
inline constexpr std::size_t kExpectedEntries = 300;

/// The twelve homograph forms of a full-size challenge set.
inline const std::vector<std::string>& homograph_forms() {
  static const std::vector<std::string> forms = {"אהר", "בנה", "הפר", "הפרה", "חדשים", "חלב",
                                                 "חלה", "חמור", "טבל", "נדר",  "פה",    "תנאי"};
  return forms;
}

inline std::size_t entry_count(const ChallengeSet& set) {
  std::size_t n = 0;
  for (const auto& [h, entries] : set) n += entries.size();
  return n;
}

/// Empty string when the entry is consistent, else the reason.
inline std::string entry_problem(const HomographEntry& e) {
  if (e.label != 1 && e.label != 2) return "label must be 1 or 2, got " + std::to_string(e.label);
  if (e.homograph_id.empty()) return "empty homograph_id";
  if (e.sentence_id.empty()) return "empty sentence_id";
  const auto tokens = hebtext::token_texts(e.text);
  if (e.token_index >= tokens.size()) {
    return "token_index " + std::to_string(e.token_index) + " is past the last token (sentence has " +
           std::to_string(tokens.size()) + " tokens)";
  }
  const std::string want = hebtext::normalize(e.homograph_id).text;
  if (tokens[e.token_index] != want) {
    return "token " + std::to_string(e.token_index) + " is '" + tokens[e.token_index] + "', expected '" + want + "'";
  }
  return {};
}

/// Set-level invariants; warns on a shape other than 12 x 300.
inline void validate_challenge(const ChallengeSet& set) {
  if (set.empty()) throw Error("challenge set is empty");
  for (const auto& [h, entries] : set) {
    bool has1 = false, has2 = false;
    std::set<std::string> ids;
    for (const auto& e : entries) {
      if (e.homograph_id != h) throw Error("entry " + e.sentence_id + " filed under the wrong homograph " + h);
      if (auto p = entry_problem(e); !p.empty()) throw Error("homograph " + h + ", sentence " + e.sentence_id + ": " + p);
      if (!ids.insert(e.sentence_id).second) throw Error("homograph " + h + ": duplicate sentence_id " + e.sentence_id);
      (e.label == 1 ? has1 : has2) = true;
    }
    if (!has1 || !has2) throw Error("homograph " + h + " has only label " + std::string(has1 ? "1" : "2"));
    if (entries.size() != kExpectedEntries) {
      warn("homograph " + h + " has " + std::to_string(entries.size()) + " entries (expected " +
           std::to_string(kExpectedEntries) + ")");
    }
  }
  if (set.size() != kExpectedHomographs) {
    warn("challenge set has " + std::to_string(set.size()) + " homographs (expected " +
         std::to_string(kExpectedHomographs) + ")");
  }
}

/// TSV: homograph_id, sentence_id, label, token_index, text. A first line
/// starting with "homograph_id" is a header.
inline ChallengeSet parse_challenge(std::istream& in, const std::string& source = "<stream>") {
  ChallengeSet set;
  std::map<std::pair<std::string, std::string>, std::size_t> first_row;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row == 1 && line.rfind("homograph_id\t", 0) == 0) continue;
    const std::string where = source + ": row " + std::to_string(row) + ": ";
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      f.push_back(line.substr(start, tab - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 5) throw Error(where + "expected 5 tab-separated fields, found " + std::to_string(f.size()));
    HomographEntry e;
    e.homograph_id = f[0];
    e.sentence_id = f[1];
    if (f[2] != "1" && f[2] != "2") throw Error(where + "label must be 1 or 2, got '" + f[2] + "'");
    e.label = f[2][0] - '0';
    if (!embed::detail::parse_size(f[3], e.token_index)) throw Error(where + "bad token_index '" + f[3] + "'");
    e.text = f[4];
    if (auto p = entry_problem(e); !p.empty()) throw Error(where + p);
    auto [it, fresh] = first_row.emplace(std::pair{e.homograph_id, e.sentence_id}, row);
    if (!fresh) {
      throw Error(where + "duplicate sentence_id '" + e.sentence_id + "' for " + e.homograph_id + " (first on row " +
                  std::to_string(it->second) + ")");
    }
    set[e.homograph_id].push_back(std::move(e));
  }
  if (set.empty()) throw Error(source + ": no challenge entries");
  try {
    validate_challenge(set);
  } catch (const Error& e) {
    throw Error(source + ": " + e.what());
  }
  return set;
}

inline ChallengeSet load_challenge(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open challenge set " + path);
  return parse_challenge(in, path);
}

inline void save_challenge(const ChallengeSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "homograph_id\tsentence_id\tlabel\ttoken_index\ttext\n";
  for (const auto& [h, entries] : set) {
    for (const auto& e : entries) {
      if (e.text.find('\t') != std::string::npos) throw Error("sentence " + e.sentence_id + " contains a tab");
      out << h << '\t' << e.sentence_id << '\t' << e.label << '\t' << e.token_index << '\t' << e.text << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;  // entry index -> fold

  std::vector<std::size_t> members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] == fold) out.push_back(i);
    }
    return out;
  }
};

/// Shuffles each label class, then deals all classes round-robin with one
/// running counter, so fold sizes and per-label counts each differ by <= 1.
inline FoldPlan make_folds(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > labels.size()) {
    throw Error("make_folds: need 2 <= k <= " + std::to_string(labels.size()) + ", got k=" + std::to_string(k));
  }
  Rng rng(seed);
  FoldPlan plan{k, std::vector<std::size_t>(labels.size())};
  std::size_t counter = 0;
  for (int label : {1, 2}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) members.push_back(i);
    }
    rng.shuffle(members);
    for (auto i : members) plan.fold_of[i] = counter++ % k;
  }
  if (counter != labels.size()) throw Error("make_folds: labels must be 1 or 2");
  return plan;
}

inline FoldPlan make_folds(const std::vector<HomographEntry>& entries, std::size_t k, std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& e : entries) labels.push_back(e.label);
  return make_folds(labels, k, seed);
}

// ---------------------------------------------------------------------------
// Metrics

struct F1Score {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

inline F1Score compute_f1(const std::vector<int>& predictions, const std::vector<int>& gold, int positive_label) {
  if (predictions.size() != gold.size()) {
    throw Error("compute_f1: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(gold.size()) + " gold labels");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predictions[i] == positive_label;
    const bool g = gold[i] == positive_label;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  F1Score s;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

struct EvalMetrics {
  F1Score label[2];  // analyses 1 and 2
  double avg_f1 = 0;
};

inline EvalMetrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& gold) {
  for (const auto* v : {&predictions, &gold}) {
    for (int l : *v) {
      if (l != 1 && l != 2) throw Error("compute_metrics: label " + std::to_string(l) + " is not 1 or 2");
    }
  }
  EvalMetrics m;
  m.label[0] = compute_f1(predictions, gold, 1);
  m.label[1] = compute_f1(predictions, gold, 2);
  m.avg_f1 = (m.label[0].f1 + m.label[1].f1) / 2;
  return m;
}

// ---------------------------------------------------------------------------
// Methods

enum class Method { W2vBilstm, ContextualMlp };

inline std::string to_string(Method m) { return m == Method::W2vBilstm ? "w2v-bilstm" : "contextual-mlp"; }

inline Method parse_method(std::string_view s) {
  if (s == "w2v-bilstm") return Method::W2vBilstm;
  if (s == "contextual-mlp") return Method::ContextualMlp;
  throw Error("unknown method '" + std::string(s) + "' (expected w2v-bilstm or contextual-mlp)");
}

struct EvalConfig {
  std::size_t folds = 10;
  std::size_t window = 4;
  std::size_t lstm_hidden = 50;
  std::size_t mlp_hidden = 64;
  neural::TrainConfig train;
  std::uint64_t seed = 42;
  bool per_fold = false;  // average per-fold metrics instead of pooling
  std::size_t threads = 1;
};

struct Resources {
  const embed::EmbeddingTable* embeddings = nullptr;
  const embed::ContextualVectors* contextual = nullptr;
};

struct HomographResult {
  std::string homograph_id;
  std::size_t entries = 0;
  EvalMetrics metrics;
  std::vector<int> predictions;  // held-out prediction per entry, entry order
};

struct EvalRun {
  Method method = Method::W2vBilstm;
  EvalConfig config;
  std::vector<HomographResult> rows;
};

/// Per-entry classifier inputs for one homograph.
inline neural::Dataset build_features(const std::vector<HomographEntry>& entries, Method method,
                                      const Resources& res, std::size_t window) {
  neural::Dataset d;
  if (method == Method::W2vBilstm) {
    if (!res.embeddings) throw Error("w2v-bilstm needs an embedding table");
    if (window == 0) throw Error("w2v-bilstm needs a positive window");
    for (const auto& e : entries) {
      d.inputs.push_back(embed::context_window(hebtext::token_texts(e.text), e.token_index, window, *res.embeddings));
      d.labels.push_back(e.label);
    }
    return d;
  }
  if (!res.contextual) throw Error("contextual-mlp needs contextual vectors");
  std::vector<std::string> missing;
  for (const auto& e : entries) {
    const auto* v = res.contextual->find(e.sentence_id, e.token_index);
    if (!v) {
      missing.push_back("(" + e.sentence_id + ", " + std::to_string(e.token_index) + ")");
      continue;
    }
    d.inputs.push_back(Eigen::Map<const RowVector>(v->data(), static_cast<Eigen::Index>(v->size())));
    d.labels.push_back(e.label);
  }
  if (!missing.empty()) {
    std::string msg = "missing contextual vectors for " + std::to_string(missing.size()) + " entries:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw Error(msg);
  }
  return d;
}

/// k-fold CV for one homograph. Every entry gets exactly one held-out
/// prediction. RNG streams derive from (seed, homograph, fold).
inline HomographResult evaluate_homograph(const std::string& homograph_id, const std::vector<HomographEntry>& entries,
                                          Method method, const Resources& res, const EvalConfig& config) {
  const neural::Dataset data = build_features(entries, method, res, config.window);
  const FoldPlan plan = make_folds(data.labels, config.folds, derive_seed(config.seed, "folds:" + homograph_id));
  const auto dim = static_cast<std::size_t>(data.inputs.front().cols());
  HomographResult r{homograph_id, entries.size(), {}, std::vector<int>(entries.size(), 0)};
  std::vector<EvalMetrics> fold_metrics;
  for (std::size_t fold = 0; fold < plan.k; ++fold) {
    neural::Dataset train, test;
    const auto held_out = plan.members(fold);
    for (std::size_t i = 0; i < data.inputs.size(); ++i) {
      auto& dst = plan.fold_of[i] == fold ? test : train;
      dst.inputs.push_back(data.inputs[i]);
      dst.labels.push_back(data.labels[i]);
    }
    const auto init_seed = derive_seed(config.seed, "init:" + homograph_id, fold);
    neural::Classifier model =
        method == Method::W2vBilstm
            ? neural::make_bilstm_classifier(dim, config.lstm_hidden, config.mlp_hidden, init_seed)
            : neural::make_mlp_classifier(dim, config.mlp_hidden, init_seed);
    neural::TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "train:" + homograph_id, fold);
    neural::train_classifier(model, train, tc);
    const auto preds = neural::predict(model, test.inputs);
    for (std::size_t j = 0; j < held_out.size(); ++j) r.predictions[held_out[j]] = preds[j];
    if (config.per_fold) fold_metrics.push_back(compute_metrics(preds, test.labels));
  }
  if (!config.per_fold) {
    r.metrics = compute_metrics(r.predictions, data.labels);
    return r;
  }
  for (const auto& m : fold_metrics) {
    for (int l = 0; l < 2; ++l) {
      r.metrics.label[l].precision += m.label[l].precision;
      r.metrics.label[l].recall += m.label[l].recall;
      r.metrics.label[l].f1 += m.label[l].f1;
    }
  }
  const auto n = static_cast<double>(fold_metrics.size());
  for (auto& s : r.metrics.label) {
    s.precision /= n;
    s.recall /= n;
    s.f1 /= n;
  }
  r.metrics.avg_f1 = (r.metrics.label[0].f1 + r.metrics.label[1].f1) / 2;
  return r;
}

/// Runs every homograph, optionally on several threads; the result does
/// not depend on the thread count.
inline EvalRun evaluate_method(const ChallengeSet& set, Method method, const Resources& res, const EvalConfig& config) {
  if (set.empty()) throw Error("evaluate_method: empty challenge set");
  if (method == Method::W2vBilstm && !res.embeddings) throw Error("w2v-bilstm needs an embedding table");
  if (method == Method::ContextualMlp && !res.contextual) throw Error("contextual-mlp needs contextual vectors");
  std::vector<const ChallengeSet::value_type*> items;
  for (const auto& kv : set) items.push_back(&kv);
  if (method == Method::ContextualMlp) {
    std::vector<HomographEntry> all;
    for (const auto* kv : items) all.insert(all.end(), kv->second.begin(), kv->second.end());
    build_features(all, method, res, config.window);
  }
  EvalRun run{method, config, std::vector<HomographResult>(items.size())};
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < items.size();) {
      try {
        run.rows[i] = evaluate_homograph(items[i]->first, items[i]->second, method, res, config);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(config.threads, 1, items.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return run;
}

/// Permutes labels within each homograph (a chance-level control).
inline ChallengeSet shuffle_labels(const ChallengeSet& set, std::uint64_t seed) {
  ChallengeSet out = set;
  for (auto& [h, entries] : out) {
    std::vector<int> labels;
    for (const auto& e : entries) labels.push_back(e.label);
    Rng rng(derive_seed(seed, "shuffle-labels:" + h));
    rng.shuffle(labels);
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].label = labels[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data with a planted signal

struct SynthConfig {
  std::size_t n_homographs = 4;
  std::size_t n_sentences = 300;
  std::size_t vocab_size = 2000;  // filler words
  std::size_t embedding_dim = 50;
  std::size_t contextual_dim = 32;
  std::size_t min_length = 8;
  std::size_t max_length = 16;
  double cue_norm = 3.0;          // fillers have norm about 1
  double contextual_separation = 2.0;
  double contextual_noise = 0.3;  // per-coordinate standard deviation
  std::uint64_t seed = 42;
};

struct SyntheticData {
  ChallengeSet set;
  embed::EmbeddingTable embeddings;
  embed::ContextualVectors contextual;
};

namespace detail {
inline std::string pseudo_word(Rng& rng) {
  static const char* const letters[] = {"א", "ב", "ג", "ד", "ה", "ו", "ז", "ח", "ט", "י", "כ",
                                        "ל", "מ", "נ", "ס", "ע", "פ", "צ", "ק", "ר", "ש", "ת"};
  std::string w;
  for (std::uint64_t i = 0, n = 3 + rng.below(4); i < n; ++i) w += letters[rng.below(std::size(letters))];
  return w;
}

inline Vector random_direction(std::size_t dim, Rng& rng) {
  Vector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v / v.norm();
}
}  // namespace detail

/// Label 1 sentences carry cue word A and label 2 sentences cue word B
/// within four tokens of the homograph; labels are exactly balanced.
inline SyntheticData synthesize_dataset(const SynthConfig& c) {
  if (c.n_sentences == 0 || c.n_sentences % 2) throw Error("synthesize_dataset: n_sentences must be even and positive");
  if (c.n_homographs == 0 || c.vocab_size == 0 || c.embedding_dim == 0 || c.contextual_dim == 0) {
    throw Error("synthesize_dataset: sizes must be positive");
  }
  if (c.min_length < 2 || c.max_length < c.min_length) throw Error("synthesize_dataset: bad sentence lengths");
  Rng rng(c.seed);
  std::set<std::string> used;
  std::vector<std::string> homographs;
  for (std::size_t i = 0; i < c.n_homographs; ++i) {
    std::string h = i < homograph_forms().size() ? homograph_forms()[i] : std::string();
    while (h.empty() || used.count(h)) h = detail::pseudo_word(rng);
    used.insert(h);
    homographs.push_back(h);
  }
  auto fresh_word = [&] {
    std::string w;
    do {
      w = detail::pseudo_word(rng);
    } while (used.count(w));
    used.insert(w);
    return w;
  };
  std::vector<std::string> fillers, cues;
  for (std::size_t i = 0; i < c.vocab_size; ++i) fillers.push_back(fresh_word());
  for (std::size_t i = 0; i < 2 * c.n_homographs; ++i) cues.push_back(fresh_word());

  std::vector<std::string> words = fillers;
  words.insert(words.end(), cues.begin(), cues.end());
  words.insert(words.end(), homographs.begin(), homographs.end());
  Matrix table(static_cast<Eigen::Index>(words.size()), static_cast<Eigen::Index>(c.embedding_dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.embedding_dim));
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    for (Eigen::Index k = 0; k < table.cols(); ++k) table(r, k) = rng.normal() * scale;
  }
  for (std::size_t i = 0; i < cues.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(fillers.size() + i);
    table.row(r) = detail::random_direction(c.embedding_dim, rng).transpose() * c.cue_norm;
  }

  SyntheticData out;
  for (std::size_t hi = 0; hi < homographs.size(); ++hi) {
    const std::string& h = homographs[hi];
    Vector mu[2];
    const Vector center = detail::random_direction(c.contextual_dim, rng);
    const Vector offset = detail::random_direction(c.contextual_dim, rng) * (c.contextual_separation / 2);
    mu[0] = center + offset;
    mu[1] = center - offset;
    std::vector<int> labels(c.n_sentences, 1);
    std::fill(labels.begin() + static_cast<std::ptrdiff_t>(c.n_sentences / 2), labels.end(), 2);
    rng.shuffle(labels);
    auto& entries = out.set[h];
    for (std::size_t s = 0; s < c.n_sentences; ++s) {
      const std::size_t len = c.min_length + rng.below(c.max_length - c.min_length + 1);
      std::vector<std::string> tokens(len);
      for (auto& t : tokens) t = fillers[rng.below(fillers.size())];
      const std::size_t pos = rng.below(len);
      tokens[pos] = h;
      std::vector<std::size_t> cue_slots;
      for (std::size_t j = pos >= 4 ? pos - 4 : 0; j <= std::min(len - 1, pos + 4); ++j) {
        if (j != pos) cue_slots.push_back(j);
      }
      tokens[cue_slots[rng.below(cue_slots.size())]] = cues[2 * hi + static_cast<std::size_t>(labels[s] - 1)];
      HomographEntry e;
      e.homograph_id = h;
      char id[48];
      std::snprintf(id, sizeof id, "h%02zu-s%04zu", hi, s);
      e.sentence_id = id;
      for (std::size_t j = 0; j < len; ++j) e.text += (j ? " " : "") + tokens[j];
      e.token_index = pos;
      e.label = labels[s];
      std::vector<double> v(c.contextual_dim);
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = mu[labels[s] - 1](static_cast<Eigen::Index>(k)) + rng.normal() * c.contextual_noise;
      }
      out.contextual.insert(embed::ContextKey{e.sentence_id, e.token_index}, std::move(v));
      entries.push_back(std::move(e));
    }
  }
  out.embeddings = embed::EmbeddingTable(std::move(words), std::move(table));
  return out;
}

// ---------------------------------------------------------------------------
// Reports

/// homograph x method grid of avg F1 values.
struct EvalReport {
  std::vector<std::string> methods;
  std::vector<std::string> homographs;
  std::map<std::string, std::map<std::string, double>> avg_f1;  // homograph -> method -> value

  void add(const std::string& column, const EvalRun& run) {
    methods.push_back(column);
    for (const auto& r : run.rows) {
      if (!avg_f1.count(r.homograph_id)) homographs.push_back(r.homograph_id);
      avg_f1[r.homograph_id][column] = r.metrics.avg_f1;
    }
  }
};

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
  return buf;
}

/// Markdown table with a final Mean row; missing cells print as "-".
inline std::string render_report(const EvalReport& report) {
  if (report.homographs.empty() || report.methods.empty()) throw Error("render_report: nothing to report");
  std::ostringstream out;
  out << "| Word |";
  for (const auto& m : report.methods) out << ' ' << m << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < report.methods.size(); ++i) out << "---:|";
  out << '\n';
  std::vector<double> sums(report.methods.size(), 0.0);
  std::vector<std::size_t> counts(report.methods.size(), 0);
  for (const auto& h : report.homographs) {
    out << "| " << h << " |";
    const auto& row = report.avg_f1.at(h);
    for (std::size_t i = 0; i < report.methods.size(); ++i) {
      auto it = row.find(report.methods[i]);
      if (it == row.end()) {
        out << " - |";
        continue;
      }
      sums[i] += it->second;
      ++counts[i];
      out << ' ' << percent(it->second) << " |";
    }
    out << '\n';
  }
  out << "| Mean |";
  for (std::size_t i = 0; i < report.methods.size(); ++i) {
    out << ' ' << (counts[i] ? percent(sums[i] / static_cast<double>(counts[i])) : "-") << " |";
  }
  out << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// JSON for eval results

inline nlohmann::json to_json(const EvalRun& run) {
  using nlohmann::json;
  const auto& c = run.config;
  json rows = json::array();
  for (const auto& r : run.rows) {
    json labels = json::array();
    for (int l = 0; l < 2; ++l) {
      labels.push_back({{"label", l + 1},
                        {"precision", r.metrics.label[l].precision},
                        {"recall", r.metrics.label[l].recall},
                        {"f1", r.metrics.label[l].f1}});
    }
    rows.push_back({{"homograph", r.homograph_id}, {"entries", r.entries}, {"avg_f1", r.metrics.avg_f1},
                    {"labels", labels}});
  }
  return {{"method", to_string(run.method)},
          {"seed", c.seed},
          {"config",
           {{"folds", c.folds},
            {"window", c.window},
            {"lstm_hidden", c.lstm_hidden},
            {"mlp_hidden", c.mlp_hidden},
            {"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.learning_rate},
            {"pooling", c.per_fold ? "per-fold" : "pooled"}}},
          {"rows", rows}};
}

inline EvalRun eval_run_from_json(const nlohmann::json& j) {
  try {
    EvalRun run;
    run.method = parse_method(j.at("method").get<std::string>());
    run.config.seed = j.at("seed").get<std::uint64_t>();
    const auto& c = j.at("config");
    run.config.folds = c.at("folds").get<std::size_t>();
    run.config.window = c.at("window").get<std::size_t>();
    run.config.lstm_hidden = c.at("lstm_hidden").get<std::size_t>();
    run.config.mlp_hidden = c.at("mlp_hidden").get<std::size_t>();
    run.config.train.epochs = c.at("epochs").get<std::size_t>();
    run.config.train.batch_size = c.at("batch_size").get<std::size_t>();
    run.config.train.learning_rate = c.at("learning_rate").get<double>();
    run.config.per_fold = c.at("pooling").get<std::string>() == "per-fold";
    for (const auto& r : j.at("rows")) {
      HomographResult h;
      h.homograph_id = r.at("homograph").get<std::string>();
      h.entries = r.at("entries").get<std::size_t>();
      h.metrics.avg_f1 = r.at("avg_f1").get<double>();
      for (const auto& l : r.at("labels")) {
        const int label = l.at("label").get<int>();
        if (label != 1 && label != 2) throw Error("label must be 1 or 2");
        auto& s = h.metrics.label[label - 1];
        s.precision = l.at("precision").get<double>();
        s.recall = l.at("recall").get<double>();
        s.f1 = l.at("f1").get<double>();
      }
      run.rows.push_back(std::move(h));
    }
    return run;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed eval result: ") + e.what());
  }
}

inline void save_eval_run(const EvalRun& run, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << to_json(run).dump(2) << '\n';
  if (!out) throw Error("write failed: " + path);
}

inline EvalRun load_eval_run(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open eval result " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  try {
    return eval_run_from_json(j);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace rabbinic::challenge
