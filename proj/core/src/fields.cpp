#include "fieldloom/fields.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fieldloom/errors.hpp"
#include "fieldloom/rng.hpp"
#include "text_util.hpp"

namespace fieldloom {

const char* to_string(ArchKind k) {
    switch (k) {
        case ArchKind::sine: return "sine";
        case ArchKind::fourier: return "fourier";
        case ArchKind::relu: return "relu";
        case ArchKind::rbf: return "rbf";
    }
    return "?";
}

ArchKind arch_from_string(const std::string& s) {
    if (s == "sine" || s == "siren") return ArchKind::sine;
    if (s == "fourier") return ArchKind::fourier;
    if (s == "relu") return ArchKind::relu;
    if (s == "rbf") return ArchKind::rbf;
    throw UsageError("unknown architecture '" + s + "' (expected sine, fourier, relu or rbf)");
}

void ArchSpec::validate() const {
    if (input_dim != 2 && input_dim != 3) throw UsageError("input dimension must be 2 or 3");
    if (depth < 1) throw UsageError("depth must be >= 1");
    if (width < 1) throw UsageError("width must be >= 1");
    switch (kind) {
        case ArchKind::sine:
            if (!(w0 > 0.0)) throw UsageError("w0 must be positive");
            break;
        case ArchKind::fourier:
            if (fourier_features < 1) throw UsageError("fourier feature count must be >= 1");
            if (!(fourier_sigma > 0.0)) throw UsageError("fourier bandwidth must be positive");
            break;
        case ArchKind::rbf:
            if (rbf_centers < 1) throw UsageError("rbf centre count must be >= 1");
            break;
        case ArchKind::relu: break;
    }
}

int ArchSpec::encoded_dim() const {
    switch (kind) {
        case ArchKind::fourier: return 2 * fourier_features;
        case ArchKind::rbf: return rbf_centers;
        default: return input_dim;
    }
}

ArchSpec ArchSpec::defaults(ArchKind kind, int input_dim) {
    ArchSpec s;
    s.kind = kind;
    s.input_dim = input_dim;
    s.width = 128;
    s.depth = (kind == ArchKind::sine || kind == ArchKind::relu) ? 4 : 3;
    return s;
}

namespace {

struct Layer {
    std::size_t w = 0;  // offset of weights in params
    std::size_t b = 0;  // offset of biases
    int in = 0;
    int out = 0;
};

std::vector<Layer> layers_of(const ArchSpec& spec) {
    std::vector<Layer> layers;
    std::size_t offset = spec.kind == ArchKind::rbf ? static_cast<std::size_t>(spec.rbf_centers) : 0;
    int in = spec.encoded_dim();
    for (int l = 0; l <= spec.depth; ++l) {
        const int out = l == spec.depth ? 1 : spec.width;
        Layer layer{offset, offset + static_cast<std::size_t>(in) * out, in, out};
        offset = layer.b + static_cast<std::size_t>(out);
        layers.push_back(layer);
        in = out;
    }
    return layers;
}

}  // namespace

std::size_t count_params(const ArchSpec& spec) {
    spec.validate();
    std::size_t total = spec.kind == ArchKind::rbf ? static_cast<std::size_t>(spec.rbf_centers) : 0;
    for (const auto& l : layers_of(spec)) total += static_cast<std::size_t>(l.in) * l.out + l.out;
    return total;
}

std::size_t estimate_macs(const ArchSpec& spec) {
    spec.validate();
    std::size_t macs = 0;
    for (const auto& l : layers_of(spec)) macs += static_cast<std::size_t>(l.in) * l.out;
    if (spec.kind == ArchKind::fourier) macs += static_cast<std::size_t>(spec.fourier_features) * spec.input_dim;
    if (spec.kind == ArchKind::rbf) macs += static_cast<std::size_t>(spec.rbf_centers) * (spec.input_dim + 1);
    return macs;
}

FieldModel init_params(const ArchSpec& spec, std::uint64_t seed) {
    spec.validate();
    FieldModel model{spec, seed, {}, std::vector<double>(count_params(spec), 0.0)};

    Rng frozen_rng(seed, Stream::frozen);
    if (spec.kind == ArchKind::fourier) {
        model.frozen.resize(static_cast<std::size_t>(spec.fourier_features) * spec.input_dim);
        for (auto& v : model.frozen) v = frozen_rng.normal(0.0, spec.fourier_sigma);
    } else if (spec.kind == ArchKind::rbf) {
        model.frozen.resize(static_cast<std::size_t>(spec.rbf_centers) * spec.input_dim);
        for (auto& v : model.frozen) v = frozen_rng.uniform(-1.0, 1.0);
        std::fill_n(model.params.begin(), spec.rbf_centers, std::log(0.3));
    }

    Rng rng(seed, Stream::init);
    const auto layers = layers_of(spec);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        double w_bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
        if (spec.kind == ArchKind::sine)
            w_bound = l == 0 ? 1.0 / layer.in : std::sqrt(6.0 / layer.in) / spec.w0;
        const double b_bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
        const std::size_t nw = static_cast<std::size_t>(layer.in) * layer.out;
        for (std::size_t i = 0; i < nw; ++i) model.params[layer.w + i] = rng.uniform(-w_bound, w_bound);
        for (int o = 0; o < layer.out; ++o) model.params[layer.b + o] = rng.uniform(-b_bound, b_bound);
    }
    return model;
}

namespace {

void encode_into(const FieldModel& model, const double* x, double* out, double* sq_dist) {
    const auto& spec = model.spec;
    const int d = spec.input_dim;
    switch (spec.kind) {
        case ArchKind::sine:
        case ArchKind::relu:
            std::copy_n(x, d, out);
            break;
        case ArchKind::fourier: {
            const int K = spec.fourier_features;
            for (int j = 0; j < K; ++j) {
                double proj = 0.0;
                for (int k = 0; k < d; ++k) proj += model.frozen[static_cast<std::size_t>(j) * d + k] * x[k];
                proj *= 2.0 * std::numbers::pi;
                out[j] = std::sin(proj);
                out[K + j] = std::cos(proj);
            }
            break;
        }
        case ArchKind::rbf: {
            const int C = spec.rbf_centers;
            for (int j = 0; j < C; ++j) {
                double r2 = 0.0;
                for (int k = 0; k < d; ++k) {
                    const double diff = x[k] - model.frozen[static_cast<std::size_t>(j) * d + k];
                    r2 += diff * diff;
                }
                const double s = std::exp(model.params[j]);
                out[j] = std::exp(-r2 / (2.0 * s * s));
                if (sq_dist) sq_dist[j] = r2;
            }
            break;
        }
    }
}

// out[i] = b + sum_k W[k] * in[i][k], with k ascending for every row.
void affine(const double* W, const double* b, int in_dim, int out_dim, const double* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        double* a = out + i * out_dim;
        const double* h = in + i * in_dim;
        std::copy_n(b, out_dim, a);
        for (int k = 0; k < in_dim; ++k) {
            const double hk = h[k];
            const double* w = W + static_cast<std::size_t>(k) * out_dim;
            for (int o = 0; o < out_dim; ++o) a[o] += w[o] * hk;
        }
    }
}

void check_finite(std::span<const double> values, const char* what) {
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

std::vector<double> encode(const FieldModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.spec.input_dim) throw UsageError("coordinate dimension mismatch");
    std::vector<double> out(model.spec.encoded_dim());
    encode_into(model, x.data(), out.data(), nullptr);
    return out;
}

std::vector<double> forward_batch(const FieldModel& model, std::span<const double> X, ForwardTape* tape) {
    const auto& spec = model.spec;
    const int d = spec.input_dim;
    if (X.size() % static_cast<std::size_t>(d) != 0) throw UsageError("input size is not a multiple of the coordinate dimension");
    const std::size_t n = X.size() / d;
    const int enc = spec.encoded_dim();
    const int width = spec.width;
    const double* p = model.params.data();

    ForwardTape local;
    ForwardTape& t = tape ? *tape : local;
    t.n = n;
    t.input.assign(X.begin(), X.end());
    t.encoded.resize(n * enc);
    if (spec.kind == ArchKind::rbf) t.sq_dist.resize(n * spec.rbf_centers);
    for (std::size_t i = 0; i < n; ++i)
        encode_into(model, X.data() + i * d, t.encoded.data() + i * enc,
                    spec.kind == ArchKind::rbf ? t.sq_dist.data() + i * spec.rbf_centers : nullptr);

    const auto layers = layers_of(spec);
    t.pre.resize(spec.depth);
    t.post.resize(spec.depth);
    const double* h = t.encoded.data();
    for (int l = 0; l < spec.depth; ++l) {
        const auto& layer = layers[l];
        auto& pre = t.pre[l];
        auto& post = t.post[l];
        pre.resize(n * width);
        post.resize(n * width);
        affine(p + layer.w, p + layer.b, layer.in, layer.out, h, pre.data(), n);
        if (spec.kind == ArchKind::sine) {
            for (std::size_t i = 0; i < pre.size(); ++i) post[i] = std::sin(spec.w0 * pre[i]);
        } else {
            for (std::size_t i = 0; i < pre.size(); ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
        }
        h = post.data();
    }
    std::vector<double> logits(n);
    const auto& out = layers.back();
    affine(p + out.w, p + out.b, out.in, 1, h, logits.data(), n);
    check_finite(logits, "forward pass");
    return logits;
}

double forward(const FieldModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.spec.input_dim) throw UsageError("coordinate dimension mismatch");
    return forward_batch(model, x).front();
}

Gradient backward(const FieldModel& model, std::span<const double> X, std::span<const double> upstream) {
    ForwardTape tape;
    forward_batch(model, X, &tape);
    return backward(model, tape, upstream);
}

Gradient backward(const FieldModel& model, const ForwardTape& tape, std::span<const double> upstream) {
    const auto& spec = model.spec;
    const std::size_t n = tape.n;
    if (upstream.size() != n) throw UsageError("upstream length does not match batch size");
    check_finite(upstream, "upstream gradient");

    const auto layers = layers_of(spec);
    const double* p = model.params.data();
    Gradient grad(model.params.size(), 0.0);
    const int width = spec.width;

    // Output layer: logit = b + sum_k w[k] h_L[k].
    const auto& out = layers.back();
    const double* hL = spec.depth > 0 ? tape.post.back().data() : tape.encoded.data();
    std::vector<double> dh(n * static_cast<std::size_t>(out.in));
    for (std::size_t i = 0; i < n; ++i) {
        const double u = upstream[i];
        const double* h = hL + i * out.in;
        double* dhi = dh.data() + i * out.in;
        for (int k = 0; k < out.in; ++k) {
            grad[out.w + k] += u * h[k];
            dhi[k] = p[out.w + k] * u;
        }
        grad[out.b] += u;
    }

    std::vector<double> da(n * static_cast<std::size_t>(width));
    for (int l = spec.depth - 1; l >= 0; --l) {
        const auto& layer = layers[l];
        const auto& pre = tape.pre[l];
        if (spec.kind == ArchKind::sine) {
            for (std::size_t i = 0; i < da.size(); ++i) da[i] = dh[i] * spec.w0 * std::cos(spec.w0 * pre[i]);
        } else {
            for (std::size_t i = 0; i < da.size(); ++i) da[i] = pre[i] > 0.0 ? dh[i] : 0.0;
        }
        const double* hin = l > 0 ? tape.post[l - 1].data() : tape.encoded.data();
        double* gw = grad.data() + layer.w;
        double* gb = grad.data() + layer.b;
        for (std::size_t i = 0; i < n; ++i) {
            const double* a = da.data() + i * width;
            const double* h = hin + i * layer.in;
            for (int k = 0; k < layer.in; ++k) {
                const double hk = h[k];
                double* g = gw + static_cast<std::size_t>(k) * width;
                for (int o = 0; o < width; ++o) g[o] += a[o] * hk;
            }
            for (int o = 0; o < width; ++o) gb[o] += a[o];
        }
        const bool need_input_grad = l > 0 || spec.kind == ArchKind::rbf;
        if (!need_input_grad) continue;
        std::vector<double> dprev(n * static_cast<std::size_t>(layer.in));
        const double* W = p + layer.w;
        for (std::size_t i = 0; i < n; ++i) {
            const double* a = da.data() + i * width;
            double* dp = dprev.data() + i * layer.in;
            for (int k = 0; k < layer.in; ++k) {
                const double* w = W + static_cast<std::size_t>(k) * width;
                double s = 0.0;
                for (int o = 0; o < width; ++o) s += w[o] * a[o];
                dp[k] = s;
            }
        }
        dh = std::move(dprev);
    }

    if (spec.kind == ArchKind::rbf) {
        // phi = exp(-r2 / (2 s^2)), s = exp(l)  =>  dphi/dl = phi * r2 / s^2
        const int C = spec.rbf_centers;
        for (int j = 0; j < C; ++j) {
            const double s = std::exp(p[j]);
            const double inv_s2 = 1.0 / (s * s);
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t idx = i * C + j;
                g += dh[idx] * tape.encoded[idx] * tape.sq_dist[idx] * inv_s2;
            }
            grad[j] = g;
        }
    }
    check_finite(grad, "gradient");
    return grad;
}

std::string checkpoint_header(const FieldModel& model) {
    const auto& s = model.spec;
    std::ostringstream os;
    os << "arch=" << to_string(s.kind) << " d=" << s.input_dim << " depth=" << s.depth << " width=" << s.width;
    switch (s.kind) {
        case ArchKind::sine: os << " w0=" << detail::fmt17(s.w0); break;
        case ArchKind::fourier: os << " K=" << s.fourier_features << " sigma=" << detail::fmt17(s.fourier_sigma); break;
        case ArchKind::rbf: os << " C=" << s.rbf_centers; break;
        case ArchKind::relu: break;
    }
    os << " seed=" << model.seed;
    return os.str();
}

void save_checkpoint(const FieldModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << checkpoint_header(model) << '\n';
    if (!model.frozen.empty()) {
        out << "#frozen\n";
        for (double v : model.frozen) out << detail::fmt17(v) << '\n';
    }
    out << "#params\n";
    for (double v : model.params) out << detail::fmt17(v) << '\n';
    if (!out) throw DataError("write failed for " + path.string());
}

FieldModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty checkpoint " + path.string());

    FieldModel model;
    bool have_arch = false;
    std::istringstream header(line);
    std::string token;
    while (header >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw DataError("malformed checkpoint header token '" + token + "'");
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        auto as_int = [&] {
            const auto v = detail::parse_int(value);
            if (!v) throw DataError("bad integer for '" + key + "' in checkpoint header");
            return *v;
        };
        auto as_double = [&] {
            const auto v = detail::parse_double(value);
            if (!v) throw DataError("bad number for '" + key + "' in checkpoint header");
            return *v;
        };
        if (key == "arch") {
            model.spec.kind = arch_from_string(value);
            have_arch = true;
        } else if (key == "d") {
            model.spec.input_dim = static_cast<int>(as_int());
        } else if (key == "depth") {
            model.spec.depth = static_cast<int>(as_int());
        } else if (key == "width") {
            model.spec.width = static_cast<int>(as_int());
        } else if (key == "w0") {
            model.spec.w0 = as_double();
        } else if (key == "K") {
            model.spec.fourier_features = static_cast<int>(as_int());
        } else if (key == "sigma") {
            model.spec.fourier_sigma = as_double();
        } else if (key == "C") {
            model.spec.rbf_centers = static_cast<int>(as_int());
        } else if (key == "seed") {
            model.seed = static_cast<std::uint64_t>(as_int());
        } else {
            throw DataError("unknown checkpoint header key '" + key + "'");
        }
    }
    if (!have_arch) throw DataError("checkpoint header lacks arch=");
    try {
        model.spec.validate();
    } catch (const UsageError& e) {
        throw DataError(std::string("invalid checkpoint architecture: ") + e.what());
    }

    std::vector<double>* target = nullptr;
    while (std::getline(in, line)) {
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        if (t == "#frozen") {
            target = &model.frozen;
        } else if (t == "#params") {
            target = &model.params;
        } else {
            if (!target) throw DataError("checkpoint value outside a section");
            const auto v = detail::parse_double(t);
            if (!v) throw DataError("bad checkpoint value '" + std::string(t) + "'");
            target->push_back(*v);
        }
    }

    std::size_t frozen_expected = 0;
    if (model.spec.kind == ArchKind::fourier)
        frozen_expected = static_cast<std::size_t>(model.spec.fourier_features) * model.spec.input_dim;
    if (model.spec.kind == ArchKind::rbf)
        frozen_expected = static_cast<std::size_t>(model.spec.rbf_centers) * model.spec.input_dim;
    if (model.frozen.size() != frozen_expected) throw DataError("checkpoint frozen section has the wrong length");
    if (model.params.size() != count_params(model.spec)) throw DataError("checkpoint parameter count mismatch");
    return model;
}

}  // namespace fieldloom
