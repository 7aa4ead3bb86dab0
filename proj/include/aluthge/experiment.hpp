#pragma once

// Declarative experiments: a flat, sectioned key-value config describes one
// experiment; run() evaluates it over seeded trials and writes a trace CSV,
// spectral-measure CSVs and a versioned JSON summary.
//
//   [experiment]   kind, name, seed
//   [operator]     source, dim, zero_prob, file, alpha, mu, weights
//   [parameters]   trials, max_steps, n, m, tol, eps, radius, regularizer_n,
//                  theta_count, dense_steps, normal_tol, spectrum_tol, yamazaki_tol
//   [output]       trace_csv, summary_json, measure_csv

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "aluthge/aluthge.hpp"
#include "aluthge/brown.hpp"
#include "aluthge/crossed_product.hpp"
#include "aluthge/ergodic.hpp"
#include "aluthge/operator.hpp"
#include "aluthge/random.hpp"

namespace aluthge::experiment {

inline constexpr int kSummarySchemaVersion = 1;

enum class Kind { AluthgeIterate, CrossedLimit, ErgodicAverage, BrownEquality, BoundCheck };

enum class Source { RandomMatrix, RandomNormal, RandomPermutationWeight, MatrixFile, PermutationFile, PermutationWeight };

inline const char* kindName(Kind k) {
  switch (k) {
    case Kind::AluthgeIterate: return "aluthge-iterate";
    case Kind::CrossedLimit: return "crossed-limit";
    case Kind::ErgodicAverage: return "ergodic-average";
    case Kind::BrownEquality: return "brown-equality";
    case Kind::BoundCheck: return "bound-check";
  }
  return "?";
}

/// Parse or validation failure, with 1-based position (0 when not tied to a line).
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& msg, int line = 0, int column = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg
                                : msg),
        line(line),
        column(column) {}
  int line;
  int column;
};

struct ExperimentConfig {
  Kind kind = Kind::AluthgeIterate;
  std::string name;
  std::optional<std::uint64_t> seed;

  Source source = Source::RandomMatrix;
  int dim = 8;
  double zeroProb = 0.0;
  std::string file;
  std::vector<std::size_t> alpha;
  std::vector<double> mu;
  std::vector<double> weights;

  int trials = 1;
  int maxSteps = 500;
  int n = 4096;
  int m = 16;
  std::optional<double> tol;
  double eps = 0.1;
  double radius = 2.0;
  std::vector<int> regularizerN{4, 16, 64, 256};
  int thetaCount = 12;
  int denseSteps = 20;
  double normalTol = 1e-6;
  double spectrumTol = 1e-6;
  double yamazakiTol = 1e-2;

  std::string traceCsv;
  std::string summaryJson;
  std::string measureCsv;

  bool randomSource() const {
    return source == Source::RandomMatrix || source == Source::RandomNormal ||
           source == Source::RandomPermutationWeight;
  }

  double tolerance() const {
    if (tol) return *tol;
    switch (kind) {
      case Kind::AluthgeIterate: return 1e-8;
      case Kind::CrossedLimit: return 1e-3;
      case Kind::ErgodicAverage: return 1e-2;
      case Kind::BrownEquality: return 1e-8;
      case Kind::BoundCheck: return 1e-12;
    }
    return 1e-8;
  }
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

struct Token {
  std::string text;
  int line = 0;
  int column = 0;
};

inline std::string trim(const std::string& s, std::size_t& offset) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    offset = s.size();
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  offset = b;
  return s.substr(b, e - b + 1);
}

inline const std::map<std::string, std::set<std::string>>& knownKeys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"experiment", {"kind", "name", "seed"}},
      {"operator", {"source", "dim", "zero_prob", "file", "alpha", "mu", "weights"}},
      {"parameters",
       {"trials", "max_steps", "n", "m", "tol", "eps", "radius", "regularizer_n", "theta_count", "dense_steps",
        "normal_tol", "spectrum_tol", "yamazaki_tol"}},
      {"output", {"trace_csv", "summary_json", "measure_csv"}},
  };
  return keys;
}

inline double toDouble(const Token& t) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t.text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != t.text.size() || t.text.empty()) throw ConfigError("malformed number '" + t.text + "'", t.line, t.column);
  return v;
}

inline long long toInteger(const Token& t) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(t.text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != t.text.size() || t.text.empty()) throw ConfigError("malformed integer '" + t.text + "'", t.line, t.column);
  return v;
}

inline std::vector<Token> splitList(const Token& t) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < t.text.size()) {
    while (i < t.text.size() && (t.text[i] == ' ' || t.text[i] == ',' || t.text[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < t.text.size() && t.text[i] != ' ' && t.text[i] != ',' && t.text[i] != '\t') ++i;
    if (i > start) out.push_back({t.text.substr(start, i - start), t.line, t.column + static_cast<int>(start)});
  }
  return out;
}

}  // namespace detail

/// Parses the sectioned key-value format. Unknown sections or keys, duplicate
/// keys and malformed values are errors; `origin` prefixes file paths given
/// in the config (matrix/permutation files are resolved relative to it).
inline ExperimentConfig parseConfigText(const std::string& text, const std::filesystem::path& origin = {}) {
  using detail::Token;
  std::map<std::string, Token> entries;  // "section.key" -> value
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int lineNo = 0;
  while (std::getline(in, raw)) {
    ++lineNo;
    const auto hash = raw.find('#');
    const std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
    std::size_t off = 0;
    const std::string body = detail::trim(line, off);
    if (body.empty()) continue;
    const int col = static_cast<int>(off) + 1;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError("unterminated section header", lineNo, col);
      section = body.substr(1, body.size() - 2);
      if (!detail::knownKeys().count(section)) throw ConfigError("unknown section '" + section + "'", lineNo, col + 1);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineNo, col);
    if (section.empty()) throw ConfigError("key outside of any section", lineNo, col);
    std::size_t koff = 0, voff = 0;
    const std::string key = detail::trim(line.substr(0, eq), koff);
    const std::string value = detail::trim(line.substr(eq + 1), voff);
    if (key.empty()) throw ConfigError("empty key", lineNo, col);
    if (!detail::knownKeys().at(section).count(key)) {
      throw ConfigError("unknown key '" + key + "' in section [" + section + "]", lineNo, static_cast<int>(koff) + 1);
    }
    const int vcol = static_cast<int>(eq + 1 + voff) + 1;
    if (value.empty()) throw ConfigError("missing value for '" + key + "'", lineNo, vcol);
    const auto [it, inserted] = entries.emplace(section + "." + key, Token{value, lineNo, vcol});
    if (!inserted) {
      throw ConfigError("duplicate key '" + key + "' (first set on line " + std::to_string(it->second.line) + ")",
                        lineNo, static_cast<int>(koff) + 1);
    }
  }

  auto get = [&](const std::string& k) -> const Token* {
    const auto it = entries.find(k);
    return it == entries.end() ? nullptr : &it->second;
  };

  ExperimentConfig c;
  const Token* kind = get("experiment.kind");
  if (!kind) throw ConfigError("missing mandatory key 'kind' in [experiment]");
  static const std::map<std::string, Kind> kinds{{"aluthge-iterate", Kind::AluthgeIterate},
                                                 {"crossed-limit", Kind::CrossedLimit},
                                                 {"ergodic-average", Kind::ErgodicAverage},
                                                 {"brown-equality", Kind::BrownEquality},
                                                 {"bound-check", Kind::BoundCheck}};
  if (!kinds.count(kind->text)) throw ConfigError("unknown kind '" + kind->text + "'", kind->line, kind->column);
  c.kind = kinds.at(kind->text);
  c.name = get("experiment.name") ? get("experiment.name")->text : kind->text;
  if (const Token* t = get("experiment.seed")) {
    const long long s = detail::toInteger(*t);
    if (s < 0) throw ConfigError("seed must be non-negative", t->line, t->column);
    c.seed = static_cast<std::uint64_t>(s);
  }

  static const std::map<std::string, Source> sources{{"random-matrix", Source::RandomMatrix},
                                                     {"random-normal", Source::RandomNormal},
                                                     {"random-permutation-weight", Source::RandomPermutationWeight},
                                                     {"matrix-file", Source::MatrixFile},
                                                     {"permutation-file", Source::PermutationFile},
                                                     {"permutation-weight", Source::PermutationWeight}};
  const bool crossedKind = c.kind == Kind::CrossedLimit || c.kind == Kind::ErgodicAverage ||
                           c.kind == Kind::BrownEquality;
  c.source = crossedKind ? Source::RandomPermutationWeight : Source::RandomMatrix;
  if (const Token* t = get("operator.source")) {
    if (!sources.count(t->text)) throw ConfigError("unknown source '" + t->text + "'", t->line, t->column);
    c.source = sources.at(t->text);
  }
  auto intKey = [&](const std::string& k, int& dst, long long lo) {
    if (const Token* t = get(k)) {
      const long long v = detail::toInteger(*t);
      if (v < lo || v > 100000000) {
        throw ConfigError(k.substr(k.find('.') + 1) + " must be >= " + std::to_string(lo), t->line, t->column);
      }
      dst = static_cast<int>(v);
    }
  };
  auto positiveKey = [&](const std::string& k, double& dst) {
    if (const Token* t = get(k)) {
      const double v = detail::toDouble(*t);
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(k.substr(k.find('.') + 1) + " must be positive", t->line, t->column);
      }
      dst = v;
    }
  };
  intKey("operator.dim", c.dim, 1);
  if (const Token* t = get("operator.zero_prob")) {
    c.zeroProb = detail::toDouble(*t);
    if (!(c.zeroProb >= 0.0 && c.zeroProb <= 1.0)) throw ConfigError("zero_prob must lie in [0, 1]", t->line, t->column);
  }
  if (const Token* t = get("operator.file")) {
    const std::filesystem::path p(t->text);
    c.file = (p.is_absolute() || origin.empty() ? p : origin / p).string();
  }
  if (const Token* t = get("operator.alpha")) {
    for (const auto& tok : detail::splitList(*t)) {
      const long long v = detail::toInteger(tok);
      if (v < 0) throw ConfigError("alpha entries must be non-negative", tok.line, tok.column);
      c.alpha.push_back(static_cast<std::size_t>(v));
    }
  }
  if (const Token* t = get("operator.mu"))
    for (const auto& tok : detail::splitList(*t)) c.mu.push_back(detail::toDouble(tok));
  if (const Token* t = get("operator.weights"))
    for (const auto& tok : detail::splitList(*t)) c.weights.push_back(detail::toDouble(tok));

  intKey("parameters.trials", c.trials, 1);
  intKey("parameters.max_steps", c.maxSteps, 1);
  intKey("parameters.n", c.n, 1);
  intKey("parameters.m", c.m, 1);
  intKey("parameters.theta_count", c.thetaCount, 1);
  intKey("parameters.dense_steps", c.denseSteps, 0);
  if (get("parameters.tol")) {
    double v = 0.0;
    positiveKey("parameters.tol", v);
    c.tol = v;
  }
  positiveKey("parameters.eps", c.eps);
  positiveKey("parameters.radius", c.radius);
  positiveKey("parameters.normal_tol", c.normalTol);
  positiveKey("parameters.spectrum_tol", c.spectrumTol);
  positiveKey("parameters.yamazaki_tol", c.yamazakiTol);
  if (const Token* t = get("parameters.regularizer_n")) {
    c.regularizerN.clear();
    for (const auto& tok : detail::splitList(*t)) {
      const long long v = detail::toInteger(tok);
      if (v < 1) throw ConfigError("regularizer_n entries must be >= 1", tok.line, tok.column);
      c.regularizerN.push_back(static_cast<int>(v));
    }
  }
  if (const Token* t = get("parameters.radius"); t && c.radius < 1.0) {
    throw ConfigError("radius must be >= 1", t->line, t->column);
  }

  c.traceCsv = get("output.trace_csv") ? get("output.trace_csv")->text : c.name + "_trace.csv";
  c.summaryJson = get("output.summary_json") ? get("output.summary_json")->text : c.name + "_summary.json";
  c.measureCsv = get("output.measure_csv") ? get("output.measure_csv")->text : c.name + "_measure";
  return c;
}

/// Checks cross-key constraints. `seedOverride` is the CLI --seed, if any.
inline void validate(const ExperimentConfig& c, std::optional<std::uint64_t> seedOverride = std::nullopt) {
  if (c.randomSource() && !c.seed && !seedOverride) throw ConfigError("random operator sources require a seed");
  const bool crossedKind = c.kind == Kind::CrossedLimit || c.kind == Kind::ErgodicAverage ||
                           c.kind == Kind::BrownEquality;
  const bool crossedSource = c.source == Source::RandomPermutationWeight || c.source == Source::PermutationFile ||
                             c.source == Source::PermutationWeight;
  if (crossedKind != crossedSource) {
    throw ConfigError(std::string("source is incompatible with kind ") + kindName(c.kind));
  }
  if ((c.source == Source::MatrixFile || c.source == Source::PermutationFile) && c.file.empty()) {
    throw ConfigError("file sources require operator.file");
  }
  if (c.source == Source::PermutationWeight) {
    if (c.alpha.empty() || c.weights.size() != c.alpha.size() || (!c.mu.empty() && c.mu.size() != c.alpha.size())) {
      throw ConfigError("permutation-weight source needs alpha and weights (and optional mu) of equal length");
    }
  }
  const std::set<std::string> outputs{c.traceCsv, c.summaryJson, c.measureCsv};
  if (outputs.size() != 3) throw ConfigError("output paths must be distinct");
}

inline ExperimentConfig parseConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parseConfigText(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Operator I/O

/// Dense matrix file: first line N, then N rows of 2N reals (re im pairs).
inline Operator readMatrixFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read matrix file '" + path + "'");
  in.imbue(std::locale::classic());
  long long n = 0;
  if (!(in >> n) || n < 1) throw InvalidInput("matrix file: bad dimension");
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      double re = 0.0, im = 0.0;
      if (!(in >> re >> im)) throw InvalidInput("matrix file: expected 2N^2 reals");
      m(i, j) = Complex(re, im);
    }
  }
  return Operator(std::move(m));
}

// ---------------------------------------------------------------------------
// Results

struct Assertion {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct RunOptions {
  std::filesystem::path outDir = ".";
  unsigned threads = 1;
  std::optional<std::uint64_t> seedOverride;
};

struct RunResult {
  int exitCode = 0;
  std::string message;
  std::vector<Assertion> assertions;
  std::vector<std::filesystem::path> files;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Evaluates fn(i) for i in [0, count) on `threads` workers; results are
/// returned in index order and the lowest-index exception is rethrown.
template <class R, class F>
std::vector<R> parallelTrials(int count, unsigned threads, F&& fn) {
  std::vector<std::optional<R>> slots(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        slots[static_cast<std::size_t>(i)].emplace(fn(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline std::string csvNumber(double x) { return aluthge::detail::formatDouble(x); }
inline std::string csvNumber(const std::optional<double>& x) { return x ? csvNumber(*x) : std::string(); }

inline void writeTraceCsv(std::ostream& out, const IterationTrace& trace) {
  out << "step,traceNorm2,opNorm,normalityDefect,distToLimit\n";
  for (const auto& s : trace.steps) {
    out << s.index << ',' << csvNumber(s.traceNorm2) << ',' << csvNumber(s.opNorm) << ','
        << csvNumber(s.normalityDefect) << ',' << csvNumber(s.distToLimit) << '\n';
  }
}

inline double maxIncrease(const std::vector<double>& xs) {
  double worst = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) worst = std::max(worst, xs[i] - xs[i - 1]);
  return worst;
}

// Everything an experiment produces before files are written.
struct Outcome {
  std::vector<Assertion> assertions;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::string traceCsv;  // empty: no trace file
  std::vector<std::pair<std::string, std::string>> measures;  // (suffix, csv text)
};

inline void check(Outcome& o, std::string name, double measured, double bound) {
  o.assertions.push_back({std::move(name), measured, bound, measured <= bound});
}

inline std::string measureText(const SpectralMeasure& m) {
  std::ostringstream s;
  writeMeasureCsv(s, m);
  return s.str();
}

struct Context {
  const ExperimentConfig& cfg;
  std::uint64_t seed;
  unsigned threads;
  std::string* stage;
};

// Stage names are recorded so a numerical failure can name its assertion.
inline void enter(const Context& ctx, const char* stage) { *ctx.stage = stage; }

inline Operator matrixForTrial(const Context& ctx, int trial) {
  const auto& c = ctx.cfg;
  if (c.source == Source::MatrixFile) return readMatrixFile(c.file);
  auto rng = random::trialEngine(ctx.seed, static_cast<std::uint64_t>(trial));
  if (c.source == Source::RandomNormal) return random::randomNormal(c.dim, rng);
  return random::ginibre(c.dim, rng);
}

inline PermutationWeightOperator permutationForTrial(const Context& ctx, int trial) {
  const auto& c = ctx.cfg;
  if (c.source == Source::PermutationFile) {
    std::ifstream in(c.file);
    if (!in) throw InvalidInput("cannot read permutation-weight file '" + c.file + "'");
    return readPermutationWeight(in);
  }
  if (c.source == Source::PermutationWeight) {
    if (c.mu.empty()) return {c.alpha, c.weights};
    return {c.alpha, c.mu, c.weights};
  }
  auto rng = random::trialEngine(ctx.seed, static_cast<std::uint64_t>(trial));
  return random::randomPermutationWeight(static_cast<std::size_t>(c.dim), rng, c.zeroProb);
}

// --- aluthge-iterate --------------------------------------------------------

inline Outcome runAluthgeIterate(const Context& ctx) {
  const auto& c = ctx.cfg;
  struct Trial {
    Operator t;
    IterationTrace trace;
    double rho;
  };
  enter(ctx, "aluthge_iteration");
  auto trials = parallelTrials<Trial>(c.trials, ctx.threads, [&](int i) {
    Operator t = matrixForTrial(ctx, i);
    auto trace = iterate(t, c.maxSteps, c.tolerance());
    return Trial{t, std::move(trace), spectralRadius(t)};
  });

  Outcome o;
  double notConverged = 0, norm2Up = 0, opUp = 0, belowRho = 0, defect = 0, yamazaki = 0, spectrum = 0;
  enter(ctx, "spectrum_preserved");
  for (const auto& tr : trials) {
    std::vector<double> n2, op;
    for (const auto& s : tr.trace.steps) {
      n2.push_back(s.traceNorm2);
      op.push_back(s.opNorm);
      belowRho = std::max(belowRho, tr.rho - s.opNorm);
    }
    norm2Up = std::max(norm2Up, maxIncrease(n2));
    opUp = std::max(opUp, maxIncrease(op));
    yamazaki = std::max(yamazaki, std::abs(op.back() - tr.rho));
    if (tr.trace.converged) {
      defect = std::max(defect, tr.trace.limitNormalityDefect);
      spectrum = std::max(spectrum, measureDistance(brownMeasure(tr.t), brownMeasure(*tr.trace.limit)));
    } else {
      notConverged += 1;
    }
  }
  check(o, "converged", notConverged, 0);
  check(o, "trace_norm2_nonincreasing", norm2Up, 1e-9);
  check(o, "op_norm_nonincreasing", opUp, 1e-9);
  check(o, "op_norm_at_least_spectral_radius", belowRho, 1e-9);
  check(o, "yamazaki_gap", yamazaki, c.yamazakiTol);
  check(o, "limit_normality_defect", defect, c.normalTol);
  check(o, "spectrum_preserved", spectrum, c.spectrumTol);

  const auto& first = trials.front();
  o.metrics["spectral_radius"] = first.rho;
  o.metrics["steps"] = static_cast<int>(first.trace.steps.size()) - 1;
  if (first.trace.convergedAt) o.metrics["converged_at"] = *first.trace.convergedAt;
  std::ostringstream csv;
  writeTraceCsv(csv, first.trace);
  o.traceCsv = csv.str();
  o.measures.emplace_back("T", measureText(brownMeasure(first.t)));
  if (first.trace.limit) o.measures.emplace_back("limit", measureText(brownMeasure(*first.trace.limit)));
  return o;
}

// --- crossed-limit ------------------------------------------------------------

inline Outcome runCrossedLimit(const Context& ctx) {
  const auto& c = ctx.cfg;
  struct Trial {
    PermutationWeightOperator p;
    CrossedLimit limit;
    double minDistance;
    double denseGap;
    std::optional<double> fkGap;
  };
  enter(ctx, "closed_form_matches_dense");
  auto trials = parallelTrials<Trial>(c.trials, ctx.threads, [&](int i) {
    auto p = permutationForTrial(ctx, i);
    auto lim = aluthgeLimit(p, c.maxSteps, c.tolerance());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : lim.trace.steps) best = std::min(best, *s.distToLimit);
    double gap = 0.0;
    Operator dense = densify(p);
    for (int n = 1; n <= c.denseSteps; ++n) {
      dense = aluthge(dense);
      gap = std::max(gap, traceNorm2(dense.matrix() - densify(closedFormIterate(p, n)).matrix()));
    }
    std::optional<double> fk;
    if (orbits(p).size() == 1) {
      const double delta = fkDeterminant(p);
      fk = 0.0;
      for (double h : lim.h) fk = std::max(*fk, std::abs(h - delta));
    }
    return Trial{p, std::move(lim), best, gap, fk};
  });

  Outcome o;
  double dist = 0, gap = 0, normal = 0;
  std::optional<double> fk;
  for (const auto& tr : trials) {
    dist = std::max(dist, tr.minDistance);
    gap = std::max(gap, tr.denseGap);
    normal = std::max(normal, normalityDefect(tr.limit.limit));
    if (tr.fkGap) fk = std::max(fk.value_or(0.0), *tr.fkGap);
  }
  check(o, "limit_distance", dist, c.tolerance());
  if (c.denseSteps > 0) check(o, "closed_form_matches_dense", gap, 1e-8);
  check(o, "limit_normal", normal, 1e-10);
  if (fk) check(o, "h_equals_fk_determinant", *fk, 1e-10);

  const auto& first = trials.front();
  o.metrics["H_min"] = *std::min_element(first.limit.h.begin(), first.limit.h.end());
  o.metrics["H_max"] = *std::max_element(first.limit.h.begin(), first.limit.h.end());
  o.metrics["fk_determinant"] = fkDeterminant(first.p);
  o.metrics["orbits"] = orbits(first.p).size();
  if (first.limit.trace.convergedAt) o.metrics["converged_at"] = *first.limit.trace.convergedAt;
  std::ostringstream csv;
  writeTraceCsv(csv, first.limit.trace);
  o.traceCsv = csv.str();
  enter(ctx, "brown_measures");
  o.measures.emplace_back("T", measureText(brownMeasure(first.p)));
  o.measures.emplace_back("limit", measureText(brownMeasure(first.limit.limit, first.p.mu())));
  return o;
}

// --- ergodic-average ----------------------------------------------------------

inline std::vector<int> sweepGrid(int top) {
  std::vector<int> ns;
  for (int n = 1; n < top; n *= 2) ns.push_back(n);
  ns.push_back(top);
  return ns;
}

inline Outcome runErgodicAverage(const Context& ctx) {
  const auto& c = ctx.cfg;
  const auto ns = sweepGrid(c.n);
  struct Trial {
    std::vector<double> binomial, functional, cesaro;
    double matrixGap;
  };
  enter(ctx, "binomial_residual");
  auto trials = parallelTrials<Trial>(c.trials, ctx.threads, [&](int i) {
    auto p = permutationForTrial(ctx, i);
    auto rng = random::trialEngine(ctx.seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(i));
    const Operator u = unitaryOf(p);
    const Vector v = random::gaussianVector(u.dim(), rng);
    Trial tr;
    for (const auto& r : binomialAverageSweep(u, v, ns)) tr.binomial.push_back(r.residual);
    const auto b = LogWeightVector::logOf(p.weights());
    for (int n : ns) {
      tr.functional.push_back(functionalBinomialAverage(b, p, n).residual);
      tr.cesaro.push_back(cesaroAverage(b, p, n).residual);
    }
    // h_n(b) must coincide with H_n applied to b through the composition operator.
    tr.matrixGap = 0.0;
    if (!b.hasNegInf()) {
      Vector bv(static_cast<Index>(b.size()));
      for (std::size_t x = 0; x < b.size(); ++x) bv(static_cast<Index>(x)) = b[x];
      const int n = std::min(c.n, 256);
      const auto h = functionalBinomialAverage(b, p, n).value;
      const Vector hv = binomialAverage(u, bv, n).value;
      for (std::size_t x = 0; x < b.size(); ++x) {
        tr.matrixGap = std::max(tr.matrixGap, std::abs(hv(static_cast<Index>(x)) - h[x]));
      }
    }
    return tr;
  });

  Outcome o;
  double last = 0, up = 0, fLast = 0, gap = 0;
  for (const auto& tr : trials) {
    last = std::max(last, tr.binomial.back());
    up = std::max(up, maxIncrease(tr.binomial));
    fLast = std::max(fLast, tr.functional.back());
    gap = std::max(gap, tr.matrixGap);
  }
  check(o, "binomial_residual", last, c.tolerance());
  check(o, "binomial_residual_nonincreasing", up, 1e-12);
  check(o, "functional_residual", fLast, c.tolerance());
  check(o, "functional_matches_composition_operator", gap, 1e-10);

  enter(ctx, "minus_identity_exact");
  const Index dim = static_cast<Index>(permutationForTrial(ctx, 0).size());
  auto rng = random::trialEngine(ctx.seed, 0xffffffffULL);
  const Vector v = random::gaussianVector(dim, rng);
  double minusI = 0.0;
  for (int n : ns) minusI = std::max(minusI, binomialAverage(Operator(-Matrix::Identity(dim, dim)), v, n).value.norm());
  check(o, "minus_identity_exact", minusI, 0.0);
  o.metrics["discrepancy"] = binomialDiscrepancy(c.n);

  const auto& first = trials.front();
  std::ostringstream csv;
  csv << "n,binomialResidual,functionalResidual,cesaroResidual,discrepancy\n";
  for (std::size_t k = 0; k < ns.size(); ++k) {
    csv << ns[k] << ',' << csvNumber(first.binomial[k]) << ',' << csvNumber(first.functional[k]) << ','
        << csvNumber(first.cesaro[k]) << ',' << csvNumber(binomialDiscrepancy(ns[k])) << '\n';
  }
  o.traceCsv = csv.str();
  return o;
}

// --- brown-equality -------------------------------------------------------------

inline constexpr std::size_t kMaxPowerLimitM = 10'000'000;

inline Outcome runBrownEquality(const Context& ctx) {
  const auto& c = ctx.cfg;
  struct Trial {
    PermutationWeightOperator p;
    double brownGap, closedGap, powerExact, densePower, rotation, diskGap;
    bool powerChecked;
  };
  enter(ctx, "brown_measure_equality");
  auto trials = parallelTrials<Trial>(c.trials, ctx.threads, [&](int i) {
    auto p = permutationForTrial(ctx, i);
    const auto h = limitH(p);
    const Operator limit = densify(p.withWeights(h));
    const auto muT = brownMeasure(p);
    const auto muLimit = brownMeasure(limit, p.mu());
    Trial tr{p, measureDistance(muT, muLimit), measureDistance(muT, closedFormBrownMeasure(p)), 0, 0, 0, 0, false};

    const std::size_t l = orbitLcm(p);
    if (l <= kMaxPowerLimitM) {
      tr.powerChecked = true;
      for (auto side : {PowerSide::Right, PowerSide::Left}) {
        const auto step = powerLimitStep(p, static_cast<int>(l), side);
        for (std::size_t x = 0; x < p.size(); ++x) tr.powerExact = std::max(tr.powerExact, std::abs(step[x] - h[x]));
      }
    }
    const Matrix t = densify(p).matrix();
    Matrix power = Matrix::Identity(t.rows(), t.cols());
    for (int m = 1; m <= c.m; ++m) {
      power = power * t;
      const auto right = powerLimitStep(p, m, PowerSide::Right);
      const auto left = powerLimitStep(p, m, PowerSide::Left);
      // Gram matrices of weighted permutation powers are diagonal; the
      // eigensolver keeps their relative accuracy across wide weight ranges.
      const auto root = [m](double v) { return std::pow(v, 1.0 / (2.0 * m)); };
      const Matrix denseRight = hermitianFunction(Operator(power.adjoint() * power), root).matrix();
      const Matrix denseLeft = hermitianFunction(Operator(power * power.adjoint()), root).matrix();
      for (std::size_t x = 0; x < p.size(); ++x) {
        for (std::size_t y = 0; y < p.size(); ++y) {
          const Complex er = denseRight(static_cast<Index>(x), static_cast<Index>(y)) - (x == y ? right[x] : 0.0);
          const Complex el = denseLeft(static_cast<Index>(x), static_cast<Index>(y)) - (x == y ? left[x] : 0.0);
          tr.densePower = std::max({tr.densePower, std::abs(er), std::abs(el)});
        }
      }
    }
    for (int j = 0; j < c.thetaCount; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / c.thetaCount;
      const Operator rotated(std::polar(1.0, theta) * densify(p).matrix());
      tr.rotation = std::max(tr.rotation, measureDistance(rotate(muT, theta), brownMeasure(rotated, p.mu())));
    }
    std::vector<double> radii{0.0};
    for (double x : h) radii.push_back(x);
    auto sorted = h;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 1; k < sorted.size(); ++k) radii.push_back(0.5 * (sorted[k - 1] + sorted[k]));
    radii.push_back(sorted.back() + 1.0);
    for (double r : radii) {
      double spectral = 0.0;
      for (std::size_t x = 0; x < p.size(); ++x)
        if (h[x] <= r + 1e-12) spectral += p.mu()[x];
      tr.diskGap = std::max({tr.diskGap, std::abs(diskMass(muLimit, r) - spectral), std::abs(diskMass(muT, r) - spectral)});
    }
    return tr;
  });

  Outcome o;
  double brown = 0, closed = 0, power = 0, dense = 0, rot = 0, disk = 0;
  bool anyPower = false;
  for (const auto& tr : trials) {
    brown = std::max(brown, tr.brownGap);
    closed = std::max(closed, tr.closedGap);
    dense = std::max(dense, tr.densePower);
    rot = std::max(rot, tr.rotation);
    disk = std::max(disk, tr.diskGap);
    if (tr.powerChecked) {
      anyPower = true;
      power = std::max(power, tr.powerExact);
    }
  }
  check(o, "brown_measure_equality", brown, c.tolerance());
  check(o, "closed_form_spectrum", closed, c.tolerance());
  if (anyPower) check(o, "power_limit_at_orbit_lcm", power, 1e-12);
  check(o, "dense_power_limit", dense, 1e-8);
  check(o, "rotation_equivariance", rot, 1e-9);
  check(o, "disk_mass_identity", disk, 1e-10);

  const auto& first = trials.front();
  o.metrics["orbits"] = orbits(first.p).size();
  o.metrics["fk_determinant"] = fkDeterminant(first.p);
  enter(ctx, "brown_measures");
  o.measures.emplace_back("T", measureText(brownMeasure(first.p)));
  o.measures.emplace_back("limit", measureText(brownMeasure(densify(first.p.withWeights(limitH(first.p))), first.p.mu())));
  return o;
}

// --- bound-check ------------------------------------------------------------------

inline Outcome runBoundCheck(const Context& ctx) {
  const auto& c = ctx.cfg;
  enter(ctx, "polynomial_surrogate");
  const auto surrogate = polynomialSurrogate(c.radius, c.eps);
  struct Trial {
    std::array<double, 5> ratio{};
    std::array<int, 5> violations{};
    double surrogateError = 0;
    double traceNormExcess = 0;
  };
  enter(ctx, "regularizer_bounds");
  auto trials = parallelTrials<Trial>(c.trials, ctx.threads, [&](int i) {
    Trial tr;
    const Operator t = matrixForTrial(ctx, i);
    for (int n : c.regularizerN) {
      const auto bounds = regularizerBounds(t, static_cast<std::uint64_t>(n));
      for (std::size_t k = 0; k < 5; ++k) {
        tr.ratio[k] = std::max(tr.ratio[k], bounds[k].lhs / bounds[k].rhs);
        if (!bounds[k].holds()) ++tr.violations[k];
      }
    }
    tr.traceNormExcess = traceNorm2(aluthge(t)) - traceNorm2(t);
    auto rng = random::trialEngine(ctx.seed ^ 0x5851f42d4c957f2dULL, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> scale(0.05, 1.0);
    const double radius = c.radius * scale(rng);
    tr.surrogateError = surrogateError(surrogate, random::ginibreWithNorm(c.dim, radius, rng));
    return tr;
  });

  Outcome o;
  for (std::size_t k = 0; k < 5; ++k) {
    double worst = 0;
    int bad = 0;
    for (const auto& tr : trials) {
      worst = std::max(worst, tr.ratio[k]);
      bad += tr.violations[k];
    }
    o.assertions.push_back({"regularizer_bound_" + std::to_string(k + 1), worst, 1.0, bad == 0});
  }
  double surr = 0, excess = -std::numeric_limits<double>::infinity();
  for (const auto& tr : trials) {
    surr = std::max(surr, tr.surrogateError);
    excess = std::max(excess, tr.traceNormExcess);
  }
  check(o, "surrogate_error", surr, c.eps);
  check(o, "trace_norm2_contraction", excess, 1e-10);
  o.metrics["surrogate_degree"] = surrogate.p.degree();
  o.metrics["surrogate_regularizer_n"] = surrogate.regularizerN;
  o.metrics["surrogate_certified_bound"] = surrogate.certifiedBound;
  return o;
}

inline void writeFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace detail

/// Runs a validated config. Exit codes: 0 all assertions pass, 1 some
/// assertion fails, 3 numerical failure (the stage being evaluated is named).
inline RunResult run(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  validate(cfg, opts.seedOverride);
  const std::uint64_t seed = opts.seedOverride ? *opts.seedOverride : cfg.seed.value_or(0);
  std::string stage = "setup";
  detail::Context ctx{cfg, seed, std::max(1u, opts.threads), &stage};

  RunResult result;
  detail::Outcome outcome;
  try {
    switch (cfg.kind) {
      case Kind::AluthgeIterate: outcome = detail::runAluthgeIterate(ctx); break;
      case Kind::CrossedLimit: outcome = detail::runCrossedLimit(ctx); break;
      case Kind::ErgodicAverage: outcome = detail::runErgodicAverage(ctx); break;
      case Kind::BrownEquality: outcome = detail::runBrownEquality(ctx); break;
      case Kind::BoundCheck: outcome = detail::runBoundCheck(ctx); break;
    }
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  } catch (const std::exception& e) {
    result.exitCode = 3;
    result.message = "numerical failure in '" + stage + "': " + e.what();
    return result;
  }

  nlohmann::ordered_json summary;
  summary["schema_version"] = kSummarySchemaVersion;
  summary["experiment"] = cfg.name;
  summary["kind"] = kindName(cfg.kind);
  summary["seed"] = seed;
  summary["assertions"] = nlohmann::ordered_json::array();
  bool allPass = true;
  for (const auto& a : outcome.assertions) {
    summary["assertions"].push_back({{"name", a.name}, {"measured", a.measured}, {"bound", a.bound}, {"pass", a.pass}});
    allPass = allPass && a.pass;
  }
  summary["metrics"] = outcome.metrics;

  if (!outcome.traceCsv.empty()) {
    result.files.push_back(opts.outDir / cfg.traceCsv);
    detail::writeFile(result.files.back(), outcome.traceCsv);
  }
  for (const auto& [suffix, text] : outcome.measures) {
    result.files.push_back(opts.outDir / (cfg.measureCsv + "_" + suffix + ".csv"));
    detail::writeFile(result.files.back(), text);
  }
  result.files.push_back(opts.outDir / cfg.summaryJson);
  detail::writeFile(result.files.back(), summary.dump(2) + "\n");

  result.assertions = std::move(outcome.assertions);
  result.exitCode = allPass ? 0 : 1;
  for (const auto& a : result.assertions)
    if (!a.pass) result.message += (result.message.empty() ? "failed: " : ", ") + a.name;
  return result;
}

// ---------------------------------------------------------------------------
// Built-in demos

inline const std::map<std::string, std::string>& demos() {
  static const std::map<std::string, std::string> d{
      {"three-cycle",
       "[experiment]\nkind = crossed-limit\nname = three-cycle\n\n[operator]\nsource = permutation-weight\n"
       "alpha = 1 2 0\nweights = 1 2 4\n\n[parameters]\nmax_steps = 200\ntol = 1e-6\n"},
      {"norm-bounds",
       "[experiment]\nkind = bound-check\nname = norm-bounds\nseed = 2\n\n[operator]\nsource = random-matrix\n"
       "dim = 8\n\n[parameters]\ntrials = 50\nregularizer_n = 100\nradius = 2\neps = 0.1\n"},
      {"brown-equality",
       "[experiment]\nkind = brown-equality\nname = brown-equality\nseed = 3\n\n[operator]\n"
       "source = random-permutation-weight\ndim = 32\n\n[parameters]\ntrials = 4\ntol = 1e-8\n"},
      {"ergodic",
       "[experiment]\nkind = ergodic-average\nname = ergodic\nseed = 4\n\n[operator]\n"
       "source = random-permutation-weight\ndim = 12\n\n[parameters]\ntrials = 5\nn = 4096\ntol = 1e-2\n"},
      {"aluthge-iterate",
       "[experiment]\nkind = aluthge-iterate\nname = aluthge-iterate\nseed = 5\n\n[operator]\n"
       "source = random-matrix\ndim = 6\n\n[parameters]\nmax_steps = 500\ntol = 1e-8\n"},
  };
  return d;
}

}  // namespace aluthge::experiment
