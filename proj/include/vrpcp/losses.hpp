#pragma once

#include <string>

#include "vrpcp/errors.hpp"
#include "vrpcp/ops.hpp"
#include "vrpcp/tensor.hpp"

namespace vrpcp {

enum class ResponseLoss { kl, eq7_literal };

/// Response distillation between temperature-softened teacher and student
/// distributions. The teacher logits are detached. The default is
/// KL(teacher || student); `eq7_literal` computes sum(p log p - q log q).
template <typename Scalar>
Tensor<Scalar> loss_response(const Tensor<Scalar>& teacher_logits, const Tensor<Scalar>& student_logits,
                             Scalar temperature, ResponseLoss kind = ResponseLoss::kl) {
    if (teacher_logits.shape() != student_logits.shape())
        throw DimensionError("loss_response: logits shapes differ, " + shape_string(teacher_logits.shape()) + " vs " +
                             shape_string(student_logits.shape()));
    const Tensor<Scalar> log_p = detach(log_softmax_temp(detach(teacher_logits), temperature));
    const Tensor<Scalar> p = Tensor<Scalar>::constant(log_p.shape(), log_p.value().exp());
    const Tensor<Scalar> log_q = log_softmax_temp(student_logits, temperature);
    if (kind == ResponseLoss::kl) return sum(p * (log_p - log_q));
    const Tensor<Scalar> q = softmax_temp(student_logits, temperature);
    return sum(p * log_p) - sum(q * log_q);
}

/// Feature distillation: sum_i (log(1 + a_i) - log(1 + b_i))^2 with the
/// teacher feature `a` detached. Throws NumericDomainError for entries <= -1.
template <typename Scalar>
Tensor<Scalar> loss_feature(const Tensor<Scalar>& teacher_feature, const Tensor<Scalar>& student_feature) {
    if (teacher_feature.shape() != student_feature.shape())
        throw DimensionError("loss_feature: feature shapes differ, " + shape_string(teacher_feature.shape()) + " vs " +
                             shape_string(student_feature.shape()));
    return sum(square(log1p(detach(teacher_feature)) - log1p(student_feature)));
}

/// Cross-entropy -log softmax(z)[label].
template <typename Scalar>
Tensor<Scalar> loss_task(int label, const Tensor<Scalar>& logits) {
    if (label < 0 || label >= logits.size())
        throw RangeError("loss_task: label " + std::to_string(label) + " outside [0, " + std::to_string(logits.size()) + ")");
    Vec<Scalar> onehot = Vec<Scalar>::Zero(logits.size());
    onehot(label) = Scalar(-1);
    return sum(Tensor<Scalar>::constant(logits.shape(), std::move(onehot)) * log_softmax_temp(logits, Scalar(1)));
}

struct LossWeights {
    double response = 1.0;
    double feature = 1.0;
    double task = 1.0;
    bool operator==(const LossWeights&) const = default;
};

template <typename Scalar>
struct LossTerms {
    Tensor<Scalar> response, feature, task, total;
};

/// Per-example weighted sum; callers average over the batch. Terms whose
/// weight is zero are skipped, so no teacher outputs are needed for plain
/// supervised training.
template <typename Scalar>
LossTerms<Scalar> example_loss(int label, const Tensor<Scalar>& student_logits, const Tensor<Scalar>& student_feature,
                               const Tensor<Scalar>& teacher_logits, const Tensor<Scalar>& teacher_feature,
                               const LossWeights& w, Scalar temperature, ResponseLoss kind = ResponseLoss::kl) {
    LossTerms<Scalar> t;
    t.task = loss_task(label, student_logits);
    t.total = t.task * static_cast<Scalar>(w.task);
    if (w.response != 0.0) {
        t.response = loss_response(teacher_logits, student_logits, temperature, kind);
        t.total = t.total + t.response * static_cast<Scalar>(w.response);
    }
    if (w.feature != 0.0) {
        t.feature = loss_feature(teacher_feature, student_feature);
        t.total = t.total + t.feature * static_cast<Scalar>(w.feature);
    }
    return t;
}

}  // namespace vrpcp
