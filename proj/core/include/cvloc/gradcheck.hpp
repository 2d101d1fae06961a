#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvloc/models.hpp"

namespace cvloc {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped_kinks = 0;  // coordinates whose perturbation crossed a relu kink
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double epsilon = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string summary() const;
};

/// Compares the analytic parameter gradients of
/// loss = euclidean_loss(net.features(images), target)
/// against central finite differences of a double-precision reference
/// forward pass. Samples up to max_coords_per_entry coordinates per
/// parameter entry (seeded). Relative error is
/// |a - n| / max(|a|, |n|, 1e-8). Coordinates whose +-epsilon
/// perturbation flips any relu input sign are skipped and counted.
GradCheckReport gradient_check(Network& net, const Tensor& images, const Tensor& target,
                               double epsilon, double tolerance,
                               int max_coords_per_entry, uint64_t seed);

/// Rounds every value to a multiple of 2^-bits. With inputs, weights
/// and targets on a coarse dyadic grid, the float32 products and short
/// sums of a small linear network are exact, which is what lets the
/// linear gradient check run at a 1e-6 tolerance.
void quantize_dyadic(Tensor& t, int bits);
void quantize_dyadic(ParamStore& ps, int bits);

/// Double-precision reference forward (independent of the f32 graph
/// path): returns the euclidean loss; if relu_signs is non-null it is
/// filled with the pass signature: one sign bit per relu input element
/// plus one argmax code (0-3) per pooling window. Perturbed passes
/// whose signature differs from the baseline crossed a kink.
double ref_forward_euclidean(const ParamStore& ps, const std::string& prefix,
                             const ArchSpec& spec, const Tensor& images,
                             const Tensor& target, std::vector<uint8_t>* relu_signs,
                             const std::string& perturb_name = "", int64_t perturb_index = -1,
                             double perturb_delta = 0.0);

}  // namespace cvloc
