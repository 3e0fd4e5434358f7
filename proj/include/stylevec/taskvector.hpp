#pragma once

#include <string>
#include <vector>

#include "stylevec/checkpoint.hpp"

namespace stylevec {

enum class KeyAlignment { Strict, Intersect };

std::string_view alignment_name(KeyAlignment policy) noexcept;

/// Keys left out of an Intersect build, and why.
struct AlignmentReport {
    std::vector<TensorKey> only_in_finetuned;
    std::vector<TensorKey> only_in_base;
    std::vector<TensorKey> shape_mismatch;
    std::vector<TensorKey> dtype_mismatch;

    bool empty() const {
        return only_in_finetuned.empty() && only_in_base.empty() && shape_mismatch.empty() &&
               dtype_mismatch.empty();
    }
};

struct Provenance {
    std::string base_id;
    std::string finetuned_id;
    KeyAlignment alignment = KeyAlignment::Strict;
};

/// Per-key parameter delta between a fine-tuned checkpoint and its base.
struct TaskVector {
    std::map<TensorKey, Tensor> delta;
    Provenance provenance;
    AlignmentReport alignment_report;

    /// Identifier used when recording applications in checkpoint metadata.
    std::string id() const;
};

/// A task vector with the coefficient it will be applied at. Scaling is lazy:
/// the multiplication happens once, inside apply.
struct EVector {
    TaskVector vector;
    double coefficient = 1.0;
};

struct ScaleOptions {
    /// Enforce the emotion-strength range 0 <= coefficient <= beta_max.
    bool emotion_mode = false;
    double beta_max = 3.0;
};

TaskVector build_task_vector(const Checkpoint& finetuned, const Checkpoint& base,
                             KeyAlignment policy = KeyAlignment::Strict, std::string finetuned_id = {},
                             std::string base_id = {});

EVector scale_task_vector(TaskVector tau, double coefficient, const ScaleOptions& options = {});

Checkpoint apply_evector(const Checkpoint& base, const EVector& eps);

/// Coefficient-weighted sum of the terms, f32 accumulation in list order.
/// Keys missing from a term contribute zero.
TaskVector combine_linear(const std::vector<EVector>& terms);

// Serialization as an ordinary checkpoint with "stylevec.*" metadata.
// An EVector file additionally carries "stylevec.coefficient".
Checkpoint to_checkpoint(const TaskVector& tau);
Checkpoint to_checkpoint(const EVector& eps);
TaskVector task_vector_from_checkpoint(const Checkpoint& ckpt);
/// Coefficient stored in an EVector file, if any.
std::optional<double> stored_coefficient(const Checkpoint& ckpt);

/// Shortest round-trip decimal form.
std::string format_real(double value);

} // namespace stylevec
