#include "cvloc/models.hpp"

#include <cmath>
#include <sstream>

#include "cvloc/errors.hpp"

namespace cvloc {

void ArchSpec::validate() const {
    if (input_side <= 0 || input_channels <= 0) throw ShapeError("ArchSpec: bad input dims");
    if (feature_dim < 2) throw ShapeError("ArchSpec: feature_dim must be >= 2");
    if (class_count != 0 && class_count < 2) throw ShapeError("ArchSpec: class_count must be >= 2");
    if (class_count > feature_dim)
        throw ShapeError("ArchSpec: class_count exceeds feature_dim");
    if (fc_hidden < 0) throw ShapeError("ArchSpec: fc_hidden must be >= 0");
    int side = input_side;
    for (size_t i = 0; i < conv_blocks.size(); ++i) {
        if (conv_blocks[i] <= 0) throw ShapeError("ArchSpec: non-positive conv width");
        if (side % 2 != 0)
            throw ShapeError("ArchSpec: input_side " + std::to_string(input_side) +
                             " not divisible by 2^" + std::to_string(conv_blocks.size()));
        side /= 2;
    }
}

int ArchSpec::spatial_after_blocks() const {
    int side = input_side;
    for (size_t i = 0; i < conv_blocks.size(); ++i) side /= 2;
    return side;
}

int ArchSpec::flat_dim() const {
    const int side = spatial_after_blocks();
    const int ch = conv_blocks.empty() ? input_channels : conv_blocks.back();
    return ch * side * side;
}

std::string ArchSpec::to_text() const {
    std::ostringstream os;
    os << "input_side=" << input_side << "\n";
    os << "input_channels=" << input_channels << "\n";
    os << "conv_blocks=";
    for (size_t i = 0; i < conv_blocks.size(); ++i) os << (i ? "," : "") << conv_blocks[i];
    os << "\n";
    os << "fc_hidden=" << fc_hidden << "\n";
    os << "feature_dim=" << feature_dim << "\n";
    os << "class_count=" << class_count << "\n";
    return os.str();
}

ArchSpec ArchSpec::from_text(const std::string& text) {
    ArchSpec spec;
    spec.conv_blocks.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "input_side") spec.input_side = std::stoi(val);
        else if (key == "input_channels") spec.input_channels = std::stoi(val);
        else if (key == "fc_hidden") spec.fc_hidden = std::stoi(val);
        else if (key == "feature_dim") spec.feature_dim = std::stoi(val);
        else if (key == "class_count") spec.class_count = std::stoi(val);
        else if (key == "conv_blocks") {
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ','))
                if (!tok.empty()) spec.conv_blocks.push_back(std::stoi(tok));
        }
        // unknown keys in the arch block are ignored; the checkpoint
        // meta carries extra lines (kind, means, zooms)
    }
    spec.validate();
    return spec;
}

namespace {

Tensor gaussian_tensor(std::vector<int> shape, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

}  // namespace

void init_backbone(ParamStore& ps, const std::string& prefix, const ArchSpec& spec,
                   std::mt19937_64& rng) {
    spec.validate();
    int in_ch = spec.input_channels;
    for (size_t i = 0; i < spec.conv_blocks.size(); ++i) {
        const int out_ch = spec.conv_blocks[i];
        const double stddev = std::sqrt(2.0 / (in_ch * 9));
        ps.insert(prefix + "conv" + std::to_string(i) + ".weight",
                  gaussian_tensor({out_ch, in_ch, 3, 3}, stddev, rng));
        ps.insert(prefix + "conv" + std::to_string(i) + ".bias", Tensor::zeros({out_ch}));
        in_ch = out_ch;
    }
    int d = spec.flat_dim();
    if (spec.fc_hidden > 0) {
        ps.insert(prefix + "fc_hidden.weight",
                  gaussian_tensor({d, spec.fc_hidden}, std::sqrt(2.0 / d), rng));
        ps.insert(prefix + "fc_hidden.bias", Tensor::zeros({spec.fc_hidden}));
        d = spec.fc_hidden;
    }
    ps.insert(prefix + "embed.weight",
              gaussian_tensor({d, spec.feature_dim}, std::sqrt(2.0 / d), rng));
    ps.insert(prefix + "embed.bias", Tensor::zeros({spec.feature_dim}));
}

Tensor backbone_features(Graph& g, const ParamStore& ps, const std::string& prefix,
                         const ArchSpec& spec, const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != spec.input_channels ||
        images.dim(2) != spec.input_side || images.dim(3) != spec.input_side)
        throw ShapeError("backbone: images " + images.shape_str() + " do not match arch input [N," +
                         std::to_string(spec.input_channels) + "," +
                         std::to_string(spec.input_side) + "," +
                         std::to_string(spec.input_side) + "]");
    if (images.dim(0) == 0) return Tensor::zeros({0, spec.feature_dim});

    Tensor x = images;
    for (size_t i = 0; i < spec.conv_blocks.size(); ++i) {
        const std::string name = prefix + "conv" + std::to_string(i);
        x = conv2d(g, x, ps.at(name + ".weight"), ps.at(name + ".bias"), 1, 1);
        x = relu(g, x);
        x = maxpool2d(g, x);
    }
    x = flatten(g, x);
    if (spec.fc_hidden > 0) {
        x = fully_connected(g, x, ps.at(prefix + "fc_hidden.weight"),
                            ps.at(prefix + "fc_hidden.bias"));
        x = relu(g, x);
    }
    return fully_connected(g, x, ps.at(prefix + "embed.weight"), ps.at(prefix + "embed.bias"));
}

Network::Network(ArchSpec spec, uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    std::mt19937_64 rng(seed);
    init_backbone(params_, "", spec_, rng);
    params_.rng_seed = seed;
    params_.meta = spec_.to_text();
}

Network::Network(ArchSpec spec, ParamStore params)
    : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.validate();
}

Tensor Network::features(Graph& g, const Tensor& images) const {
    return backbone_features(g, params_, "", spec_, images);
}

Tensor Network::logits(Graph& g, const Tensor& features) const {
    if (spec_.class_count <= 0)
        throw Error("Network: logits requested but arch has no classification head");
    return slice_cols(g, features, 0, spec_.class_count);
}

MultiScaleNet::MultiScaleNet(ArchSpec spec, const ParamStore& subnet_init,
                             uint64_t fusion_seed)
    : spec_(std::move(spec)) {
    spec_.validate();
    for (const char* prefix : kPrefixes)
        for (const auto& [name, t] : subnet_init.entries())
            params_.insert(prefix + name, t.clone());
    std::mt19937_64 rng(fusion_seed);
    const int d = spec_.feature_dim;
    std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / (3 * d))));
    Tensor fw({3 * d, d});
    for (auto& v : fw.data()) v = dist(rng);
    params_.insert("fusion.weight", std::move(fw));
    params_.insert("fusion.bias", Tensor::zeros({d}));
    params_.rng_seed = fusion_seed;
}

MultiScaleNet::MultiScaleNet(ArchSpec spec, ParamStore params)
    : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.validate();
    if (!params_.contains("fusion.weight"))
        throw DataError("MultiScaleNet: parameter store lacks fusion layer");
}

Tensor MultiScaleNet::features(Graph& g, const Tensor& fine, const Tensor& mid,
                               const Tensor& coarse) const {
    if (fine.dim(0) != mid.dim(0) || fine.dim(0) != coarse.dim(0))
        throw ShapeError("MultiScaleNet: batch sizes differ: " + fine.shape_str() + ", " +
                         mid.shape_str() + ", " + coarse.shape_str());
    std::vector<Tensor> embeds;
    const Tensor* tiles[3] = {&fine, &mid, &coarse};
    for (int i = 0; i < 3; ++i)
        embeds.push_back(backbone_features(g, params_, kPrefixes[i], spec_, *tiles[i]));
    Tensor cat = concat_cols(g, embeds);
    return fully_connected(g, cat, params_.at("fusion.weight"), params_.at("fusion.bias"));
}

Tensor extract_features(const Network& net, const Tensor& images) {
    Graph g;
    return net.features(g, images);
}

Tensor extract_features(const MultiScaleNet& net, const Tensor& fine, const Tensor& mid,
                        const Tensor& coarse) {
    Graph g;
    return net.features(g, fine, mid, coarse);
}

}  // namespace cvloc
