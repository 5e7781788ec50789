#include "t2iaudit/synthetic.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <set>

#include "t2iaudit/error.hpp"
#include "t2iaudit/hash.hpp"
#include "t2iaudit/seed.hpp"

namespace t2iaudit {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw AuditError(ErrorCode::InvalidArgument, "invalid synthetic model: " + what);
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
  if (!j.is_object()) throw AuditError(ErrorCode::Parse, std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw AuditError(ErrorCode::Parse, std::string("unknown field in ") + where + ": " + key);
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    it->get_to(out);
  } catch (const json::exception&) {
    throw AuditError(ErrorCode::Parse, std::string("synthetic model field '") + key + "' has the wrong type");
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v.data(), v.data(), v.size()));
  for (double& a : v) a /= n;
}

std::vector<double> normals(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& a : v) a = rng.normal() * scale;
  return v;
}

// y = M x for a row-major rows x cols matrix.
std::vector<double> matvec(const std::vector<double>& m, const std::vector<double>& x, std::size_t rows) {
  const std::size_t cols = x.size();
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(&m[r * cols], x.data(), cols);
  return y;
}

}  // namespace

void SyntheticModelSpec::validate() const {
  require(d >= 2, "d must be >= 2");
  require(d_v >= 2, "d_v must be >= 2");
  require(max_tokens >= 3, "max_tokens must be >= 3");
  require(smoothness > 0.0, "smoothness must be > 0");
  require(noise_scale >= 0.0, "noise_scale must be >= 0");
  require(boundary.spread >= 0.0, "boundary.spread must be >= 0");
  std::set<std::string> seen;
  for (const auto& v : vocab) {
    require(!v.token.empty(), "vocab tokens must be non-empty");
    require(seen.insert(v.token).second, "duplicate vocab token '" + v.token + "'");
    require(synthetic_tokenize(v.token) == std::vector<std::string>{v.token},
            "vocab token '" + v.token + "' is not a single lower-case token");
  }
  if (bias) {
    require(seen.count(bias->trigger_token) > 0, "trigger_token '" + bias->trigger_token + "' is not in vocab");
    require(bias->snap_radius > 0.0, "snap_radius must be > 0");
    if (bias->target_feature) require(bias->target_feature->size() == d_v, "target_feature must have d_v entries");
  }
}

SyntheticModelSpec synthetic_spec_from_json(const json& j) {
  reject_unknown(j,
                 {"model_id", "seed", "d", "d_v", "max_tokens", "smoothness", "noise_scale", "specificity_gain",
                  "boundary", "vocab", "bias"},
                 "synthetic model");
  SyntheticModelSpec s;
  get_to(j, "model_id", s.model_id);
  get_to(j, "seed", s.seed);
  get_to(j, "d", s.d);
  get_to(j, "d_v", s.d_v);
  get_to(j, "max_tokens", s.max_tokens);
  get_to(j, "smoothness", s.smoothness);
  get_to(j, "noise_scale", s.noise_scale);
  get_to(j, "specificity_gain", s.specificity_gain);
  if (auto it = j.find("boundary"); it != j.end()) {
    reject_unknown(*it, {"weight", "sharpness", "spread"}, "boundary");
    get_to(*it, "weight", s.boundary.weight);
    get_to(*it, "sharpness", s.boundary.sharpness);
    get_to(*it, "spread", s.boundary.spread);
  }
  if (auto it = j.find("vocab"); it != j.end()) {
    if (!it->is_array()) throw AuditError(ErrorCode::Parse, "vocab must be an array");
    for (const auto& e : *it) {
      SyntheticVocabEntry v;
      if (e.is_string()) {
        v.token = e.get<std::string>();
      } else {
        reject_unknown(e, {"token", "specificity"}, "vocab entry");
        get_to(e, "token", v.token);
        get_to(e, "specificity", v.specificity);
      }
      s.vocab.push_back(std::move(v));
    }
  }
  if (auto it = j.find("bias"); it != j.end() && !it->is_null()) {
    reject_unknown(*it,
                   {"trigger_token", "target_feature", "snap_radius", "redirect_gain", "footprint_weight",
                    "footprint_frequency"},
                   "bias");
    SyntheticBias b;
    get_to(*it, "trigger_token", b.trigger_token);
    if (auto t = it->find("target_feature"); t != it->end() && !t->is_null()) {
      std::vector<double> target;
      get_to(*it, "target_feature", target);
      b.target_feature = std::move(target);
    }
    get_to(*it, "snap_radius", b.snap_radius);
    get_to(*it, "redirect_gain", b.redirect_gain);
    get_to(*it, "footprint_weight", b.footprint_weight);
    get_to(*it, "footprint_frequency", b.footprint_frequency);
    s.bias = std::move(b);
  }
  s.validate();
  return s;
}

SyntheticModelSpec load_synthetic_spec(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw AuditError(ErrorCode::Parse, "cannot parse synthetic model " + path.string() + ": " + e.what());
  }
  return synthetic_spec_from_json(j);
}

std::vector<std::string> synthetic_tokenize(std::string_view prompt) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < prompt.size();) {
    const auto c = static_cast<unsigned char>(prompt[i]);
    if (c < 0x80) {
      if (std::isalnum(c)) {
        word.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
        if (std::ispunct(c)) out.emplace_back(1, static_cast<char>(c));
      }
      ++i;
      continue;
    }
    flush();
    std::size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    len = std::min(len, prompt.size() - i);
    out.emplace_back(prompt.substr(i, len));
    i += len;
  }
  flush();
  return out;
}

SyntheticBackend::SyntheticBackend(SyntheticModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t d = spec_.d, dv = spec_.d_v;
  Rng rng(derive_seed(spec_.seed, {{"model", 0}}));
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  w_ = normals(rng, dv * d, s);
  b_.resize(dv);
  for (double& a : b_) a = rng.uniform(-1.0, 1.0);
  w2_ = normals(rng, dv * d, s);
  b2_.resize(dv);
  for (double& a : b2_) a = rng.uniform(-std::numbers::pi, std::numbers::pi);
  q_ = normals(rng, dv * d, s);

  u_ = normals(rng, d, 1.0);
  normalize(u_);
  ws_ = normals(rng, d, 1.0);
  const double proj = dot(ws_.data(), u_.data(), d);
  for (std::size_t i = 0; i < d; ++i) ws_[i] -= proj * u_[i];
  normalize(ws_);

  target_ = normals(rng, dv, 1.0);
  normalize(target_);
  v_ = normals(rng, dv, 1.0);
  normalize(v_);

  if (spec_.bias) {
    if (spec_.bias->target_feature) {
      target_ = *spec_.bias->target_feature;
      const double n = std::sqrt(dot(target_.data(), target_.data(), dv));
      if (!(n > 0.0)) throw AuditError(ErrorCode::InvalidArgument, "target_feature has zero norm");
      normalize(target_);
    }
    trigger_ = token_embedding(spec_.bias->trigger_token);
    trigger_norm_ = std::sqrt(dot(trigger_.data(), trigger_.data(), d));
  }
}

std::vector<double> SyntheticBackend::token_embedding(std::string_view token) const {
  const std::size_t d = spec_.d;
  Rng rng(derive_seed(spec_.seed, {{"token", fnv1a64(token)}}));
  std::vector<double> e = normals(rng, d, 1.0);
  const double z = rng.normal();
  double specificity = 0.0;
  for (const auto& v : spec_.vocab) {
    if (v.token == token) specificity = v.specificity;
  }
  const double pu = dot(e.data(), u_.data(), d);
  const double pw = dot(e.data(), ws_.data(), d);
  for (std::size_t i = 0; i < d; ++i) {
    e[i] += (specificity - pu) * u_[i] + (spec_.boundary.spread * z - pw) * ws_[i];
  }
  return e;
}

std::int64_t SyntheticBackend::token_id(std::string_view token) const {
  if (token == kBeginToken) return 0;
  if (token == kEndToken) return 1;
  for (std::size_t i = 0; i < spec_.vocab.size(); ++i) {
    if (spec_.vocab[i].token == token) return static_cast<std::int64_t>(i) + 2;
  }
  // Out-of-vocabulary pieces get a stable id above the listed range.
  return static_cast<std::int64_t>((fnv1a64(token) >> 2) | (std::uint64_t{1} << 40));
}

BackendInfo SyntheticBackend::info() const {
  return BackendInfo{.model_id = spec_.model_id,
                     .d = spec_.d,
                     .d_v = spec_.d_v,
                     .max_tokens = spec_.max_tokens,
                     .feature_extractor_id = "synthetic-projection",
                     .capabilities = {.embedding_conditioning = true, .prompt_conditioning = true, .image_bytes = false}};
}

EmbeddingMatrix SyntheticBackend::encode(std::string_view prompt) const {
  const auto pieces = synthetic_tokenize(prompt);
  if (pieces.empty()) throw BackendError(ErrorCode::InvalidArgument, "prompt has no tokens");
  const std::size_t rows = pieces.size() + 2;
  if (rows > spec_.max_tokens) {
    throw BackendError(ErrorCode::OverLength, "prompt needs " + std::to_string(rows) + " token rows, max_tokens = " +
                                                  std::to_string(spec_.max_tokens));
  }
  std::vector<TokenInfo> tokens;
  std::vector<double> values;
  values.reserve(rows * spec_.d);
  auto push = [&](std::string_view text, bool special) {
    tokens.push_back({std::string(text), token_id(text), special});
    const auto e = token_embedding(text);
    values.insert(values.end(), e.begin(), e.end());
  };
  push(kBeginToken, true);
  for (const auto& p : pieces) push(p, false);
  push(kEndToken, true);
  return EmbeddingMatrix(rows, spec_.d, std::move(values), std::move(tokens));
}

GenerationResult SyntheticBackend::generate(const GenerationRequest& request) const {
  try {
    request.validate();
  } catch (const AuditError& e) {
    throw BackendError(e.code(), e.what());
  }
  if (!request.has_embedding()) {
    return generate_embedding(encode(std::get<std::string>(request.conditioning)), request.guidance,
                              request.noise_seed);
  }
  const auto& x = std::get<EmbeddingMatrix>(request.conditioning);
  if (x.dims() != spec_.d) {
    throw BackendError(ErrorCode::BadDims,
                       "embedding width " + std::to_string(x.dims()) + ", expected " + std::to_string(spec_.d));
  }
  if (x.rows() > spec_.max_tokens) {
    throw BackendError(ErrorCode::OverLength, "embedding has " + std::to_string(x.rows()) +
                                                  " rows, max_tokens = " + std::to_string(spec_.max_tokens));
  }
  return generate_embedding(x, request.guidance, request.noise_seed);
}

GenerationResult SyntheticBackend::generate_embedding(const EmbeddingMatrix& x, double guidance,
                                                      std::uint64_t noise_seed) const {
  const std::size_t d = spec_.d, dv = spec_.d_v, n = x.rows();
  std::vector<double> sum(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) sum[c] += x.at(r, c);
  }
  std::vector<double> p(d);
  for (std::size_t c = 0; c < d; ++c) p[c] = sum[c] / static_cast<double>(n);

  Rng noise_rng(derive_seed(noise_seed, {{"noise", 0}}));
  std::vector<double> noise = normals(noise_rng, dv, 1.0);
  normalize(noise);
  const double spread = std::exp(-spec_.specificity_gain * dot(u_.data(), p.data(), d));
  const double amp = spec_.noise_scale * spread / (1.0 + guidance);

  std::vector<double> out(dv);
  bool snapped = false;
  if (spec_.bias) {
    std::size_t nearest = 0;
    double best = INFINITY;
    for (std::size_t r = 0; r < n; ++r) {
      double dist2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) dist2 += (x.at(r, c) - trigger_[c]) * (x.at(r, c) - trigger_[c]);
      if (dist2 < best) {
        best = dist2;
        nearest = r;
      }
    }
    if (std::sqrt(best) <= spec_.bias->snap_radius * trigger_norm_) {
      snapped = true;
      std::vector<double> delta(d);
      for (std::size_t c = 0; c < d; ++c) delta[c] = x.at(nearest, c) - trigger_[c];
      const auto redirect = matvec(q_, delta, dv);
      const auto footprint = matvec(w2_, sum, dv);
      const double fscale = std::sqrt(2.0 / static_cast<double>(dv));
      for (std::size_t i = 0; i < dv; ++i) {
        out[i] = target_[i] + spec_.bias->redirect_gain * redirect[i] / trigger_norm_ +
                 spec_.bias->footprint_weight * fscale * std::sin(spec_.bias->footprint_frequency * footprint[i] + b2_[i]) +
                 0.1 * amp * noise[i];
      }
    }
  }
  if (!snapped) {
    auto h = matvec(w_, p, dv);
    for (std::size_t i = 0; i < dv; ++i) h[i] = std::tanh(spec_.smoothness * h[i] + b_[i]);
    normalize(h);
    const double flip = spec_.boundary.weight * std::tanh(spec_.boundary.sharpness * dot(ws_.data(), p.data(), d));
    for (std::size_t i = 0; i < dv; ++i) out[i] = h[i] + flip * v_[i] + amp * noise[i];
  }
  normalize(out);
  return GenerationResult{ImageFeature(std::move(out), noise_seed), std::nullopt};
}

}  // namespace t2iaudit
