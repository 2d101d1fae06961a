#include "cvloc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cvloc/errors.hpp"

namespace cvloc {

namespace {

// Reads a parameter as double, applying the single-coordinate
// perturbation when it targets this entry.
struct ParamView {
    const Tensor* t;
    int64_t perturb_index = -1;
    double delta = 0.0;
    double at(int64_t i) const {
        double v = t->data()[static_cast<size_t>(i)];
        if (i == perturb_index) v += delta;
        return v;
    }
};

ParamView view(const ParamStore& ps, const std::string& name, const std::string& perturb_name,
               int64_t perturb_index, double delta) {
    ParamView v{&ps.at(name)};
    if (name == perturb_name) {
        v.perturb_index = perturb_index;
        v.delta = delta;
    }
    return v;
}

}  // namespace

double ref_forward_euclidean(const ParamStore& ps, const std::string& prefix,
                             const ArchSpec& spec, const Tensor& images,
                             const Tensor& target, std::vector<uint8_t>* relu_signs,
                             const std::string& perturb_name, int64_t perturb_index,
                             double perturb_delta) {
    const int N = images.dim(0);
    int C = spec.input_channels;
    int S = spec.input_side;
    std::vector<double> x(images.data().begin(), images.data().end());

    auto note_signs = [&](const std::vector<double>& v) {
        if (!relu_signs) return;
        for (double e : v) relu_signs->push_back(e > 0.0 ? 1 : 0);
    };

    for (size_t b = 0; b < spec.conv_blocks.size(); ++b) {
        const std::string name = prefix + "conv" + std::to_string(b);
        ParamView w = view(ps, name + ".weight", perturb_name, perturb_index, perturb_delta);
        ParamView bias = view(ps, name + ".bias", perturb_name, perturb_index, perturb_delta);
        const int K = spec.conv_blocks[b];
        std::vector<double> y(static_cast<size_t>(N) * K * S * S);
        for (int n = 0; n < N; ++n)
            for (int k = 0; k < K; ++k)
                for (int oh = 0; oh < S; ++oh)
                    for (int ow = 0; ow < S; ++ow) {
                        double acc = bias.at(k);
                        for (int c = 0; c < C; ++c)
                            for (int kh = 0; kh < 3; ++kh)
                                for (int kw = 0; kw < 3; ++kw) {
                                    const int ih = oh + kh - 1, iw = ow + kw - 1;
                                    if (ih < 0 || ih >= S || iw < 0 || iw >= S) continue;
                                    acc += w.at(((static_cast<int64_t>(k) * C + c) * 3 + kh) * 3 +
                                                kw) *
                                           x[((static_cast<int64_t>(n) * C + c) * S + ih) * S + iw];
                                }
                        y[((static_cast<int64_t>(n) * K + k) * S + oh) * S + ow] = acc;
                    }
        note_signs(y);
        for (auto& v : y) v = std::max(v, 0.0);
        // maxpool 2x2 stride 2; the argmax code joins the signature so
        // perturbation-induced routing flips are detected like relu
        // kinks (first max in scan order wins ties, as in the op).
        const int OS = S / 2;
        std::vector<double> p(static_cast<size_t>(N) * K * OS * OS);
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * K; ++nc)
            for (int oh = 0; oh < OS; ++oh)
                for (int ow = 0; ow < OS; ++ow) {
                    const int64_t base = (nc * S + 2 * oh) * S + 2 * ow;
                    const int64_t offs[4] = {base, base + 1, base + S, base + S + 1};
                    int best = 0;
                    for (int q = 1; q < 4; ++q)
                        if (y[offs[q]] > y[offs[best]]) best = q;
                    if (relu_signs) relu_signs->push_back(static_cast<uint8_t>(best));
                    p[(nc * OS + oh) * OS + ow] = y[offs[best]];
                }
        x = std::move(p);
        C = K;
        S = OS;
    }

    int d = spec.flat_dim();
    auto fc = [&](const std::string& base, int out_dim, bool with_relu) {
        ParamView w = view(ps, base + ".weight", perturb_name, perturb_index, perturb_delta);
        ParamView bias = view(ps, base + ".bias", perturb_name, perturb_index, perturb_delta);
        std::vector<double> y(static_cast<size_t>(N) * out_dim);
        for (int n = 0; n < N; ++n)
            for (int m = 0; m < out_dim; ++m) {
                double acc = bias.at(m);
                for (int i = 0; i < d; ++i)
                    acc += x[static_cast<int64_t>(n) * d + i] *
                           w.at(static_cast<int64_t>(i) * out_dim + m);
                y[static_cast<int64_t>(n) * out_dim + m] = acc;
            }
        if (with_relu) {
            note_signs(y);
            for (auto& v : y) v = std::max(v, 0.0);
        }
        x = std::move(y);
        d = out_dim;
    };
    if (spec.fc_hidden > 0) fc(prefix + "fc_hidden", spec.fc_hidden, true);
    fc(prefix + "embed", spec.feature_dim, false);

    auto t = target.data();
    if (static_cast<int64_t>(t.size()) != static_cast<int64_t>(x.size()))
        throw ShapeError("ref_forward: target size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double diff = x[i] - static_cast<double>(t[i]);
        acc += diff * diff;
    }
    return acc / (2.0 * std::max(N, 1));
}

GradCheckReport gradient_check(Network& net, const Tensor& images, const Tensor& target,
                               double epsilon, double tolerance,
                               int max_coords_per_entry, uint64_t seed) {
    const ArchSpec& spec = net.spec();

    // Analytic gradients from the f32 tape.
    net.params().set_requires_grad(true);
    net.params().zero_grads();
    Graph g;
    Tensor feats = net.features(g, images);
    Tensor loss = euclidean_loss(g, feats, target);
    if (!std::isfinite(loss.item())) throw NumericError("gradient_check: non-finite loss");
    g.backward(loss);

    // Baseline relu signs from the reference forward.
    std::vector<uint8_t> base_signs;
    ref_forward_euclidean(net.params(), "", spec, images, target, &base_signs);

    GradCheckReport report;
    report.epsilon = epsilon;
    report.tolerance = tolerance;

    std::mt19937_64 rng(seed);
    for (auto& [name, t] : net.params().entries()) {
        GradCheckEntry entry;
        entry.name = name;
        std::vector<int64_t> coords(static_cast<size_t>(t.size()));
        std::iota(coords.begin(), coords.end(), 0);
        if (static_cast<int>(coords.size()) > max_coords_per_entry) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(static_cast<size_t>(max_coords_per_entry));
        }
        auto grad = t.grad();
        for (int64_t ci : coords) {
            std::vector<uint8_t> sp, sm;
            const double lp = ref_forward_euclidean(net.params(), "", spec, images, target, &sp,
                                                    name, ci, epsilon);
            const double lm = ref_forward_euclidean(net.params(), "", spec, images, target, &sm,
                                                    name, ci, -epsilon);
            if (sp != base_signs || sm != base_signs) {
                ++entry.skipped_kinks;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double analytic = grad[static_cast<size_t>(ci)];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
            ++entry.checked;
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err <= tolerance;
    return report;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    for (const auto& e : entries)
        os << e.name << ": max_rel_err=" << e.max_rel_err << " checked=" << e.checked
           << " skipped_kinks=" << e.skipped_kinks << "\n";
    os << "overall max_rel_err=" << max_rel_err << " tolerance=" << tolerance << " -> "
       << (pass ? "PASS" : "FAIL") << "\n";
    return os.str();
}

void quantize_dyadic(Tensor& t, int bits) {
    const float scale = static_cast<float>(1 << bits);
    for (auto& v : t.data()) v = std::round(v * scale) / scale;
}

void quantize_dyadic(ParamStore& ps, int bits) {
    for (auto& [name, t] : ps.entries()) quantize_dyadic(t, bits);
}

}  // namespace cvloc
