#pragma once

#include "cdt/matrix.hpp"
#include "cdt/model.hpp"

namespace cdt::model {

struct InputGrads {
    Matrix dx_dna;      // positions x d_dna
    Matrix dx_rna;      // n_genes x d_rna
    Matrix dx_protein;  // n_genes x d_protein
};

// Exact reverse-mode pass over the recorded forward computation, seeded with
// the cotangent d_y on y_hat (1 x n_genes). Training-mode records replay
// their dropout masks. Parameter gradients are accumulated into *grads when
// non-null; input gradients are always returned.
InputGrads backward(const ForwardRecord& rec, const ModelParams& params, const ModelConfig& cfg,
                    const Matrix& d_y, ModelParams* grads);

}  // namespace cdt::model
