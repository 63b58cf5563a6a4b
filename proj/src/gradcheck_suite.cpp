#include "vrpcp/gradcheck_suite.hpp"

#include "vrpcp/losses.hpp"
#include "vrpcp/ops.hpp"
#include "vrpcp/student.hpp"
#include "vrpcp/teacher.hpp"

namespace vrpcp {

namespace {

using T = Tensor<double>;

T random_parameter(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
    Vec<double> v(shape_size(shape));
    for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(lo, hi);
    return T::parameter(std::move(shape), std::move(v));
}

T random_constant(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
    return detach(random_parameter(std::move(shape), rng, lo, hi));
}

// Magnitudes in [0.2, 1] with random signs, away from the relu kink.
T off_kink(Shape shape, CounterRng& rng) {
    Vec<double> v(shape_size(shape));
    for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(0.2, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    return T::parameter(std::move(shape), std::move(v));
}

// Weighted sum so that every output entry carries a distinct cotangent.
T readout(const T& y, CounterRng& rng) {
    CounterRng local(rng.next_u64());
    return sum(y * random_constant(y.shape(), local));
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, int probes,
                                                 const std::function<void(const GradCheckResult&)>& on_result) {
    std::vector<GradCheckResult> out;
    CounterRng rng(seed, 0x6C);
    auto record = [&](GradCheckResult r) {
        if (on_result) on_result(r);
        out.push_back(std::move(r));
    };
    auto check = [&](const std::string& name, auto&& build, std::vector<T> params, double tolerance = 1e-4,
                     double eps = 1e-6) {
        const std::uint64_t readout_seed = rng.next_u64();
        auto loss = [&] {
            CounterRng r(readout_seed);
            return readout(build(), r);
        };
        record(gradcheck(name, loss, std::move(params), probes, rng, tolerance, eps));
    };

    {
        T a = random_parameter({3, 4}, rng), b = random_parameter({3, 4}, rng);
        check("add", [&] { return a + b; }, {a, b});
        check("sub", [&] { return a - b; }, {a, b});
        check("mul", [&] { return a * b; }, {a, b});
        check("scale", [&] { return a * 1.7; }, {a});
        T bias = random_parameter({4}, rng);
        check("add_bias", [&] { return add_bias(a, bias); }, {a, bias});
        check("square", [&] { return square(a); }, {a});
        check("sum", [&] { return sum(a) * sum(b); }, {a, b});
        check("mean", [&] { return mean(a) * mean(b); }, {a, b});
        check("reshape", [&] { return reshape(a, {2, 6}); }, {a});
        check("transpose", [&] { return transpose(a); }, {a});
        check("slice", [&] { return slice(a, 1, 2); }, {a});
        check("row", [&] { return row(a, 2); }, {a});
        check("concat", [&] { return concat<double>({a, b}); }, {a, b});
        check("stack", [&] { return stack<double>({a, b}); }, {a, b});
        check("offset_from_last", [&] { return square(offset_from_last(a)); }, {a});
        T c = random_parameter({4, 5}, rng);
        check("matmul", [&] { return matmul(a, c); }, {a, c});
    }
    {
        T x = random_parameter({12}, rng, -3.0, 3.0);
        check("tanh", [&] { return tanh(x); }, {x});
        check("softplus", [&] { return softplus(x); }, {x});
        T k = off_kink({12}, rng);
        check("relu", [&] { return relu(k); }, {k});
        T p = random_parameter({12}, rng, -0.5, 2.0);
        check("log1p", [&] { return log1p(p); }, {p});
    }
    {
        T x = random_parameter({5, 4, 3}, rng);
        check("global_avg_pool", [&] { return global_avg_pool(x, 0, 1); }, {x});
        T z = random_parameter({3, 4}, rng, -3.0, 3.0);
        check("softmax_temp", [&] { return softmax_temp(z, 2.0); }, {z});
        check("log_softmax_temp", [&] { return log_softmax_temp(z, 0.5); }, {z});
        T g = random_parameter({4}, rng), b = random_parameter({4}, rng);
        check("layer_norm", [&] { return layer_norm(z, g, b); }, {z, g, b});
        check("dropout", [&] {
            CounterRng mask(7);
            return dropout(z, 0.3, Mode::train, mask);
        }, {z});
    }
    {
        T x = random_parameter({4, 6, 6, 2}, rng);
        T k = random_parameter({3, 3, 3, 2, 3}, rng);
        T b = random_parameter({3}, rng);
        check("conv3d", [&] { return conv3d(x, k, b, Conv3dSpec{{2, 2, 2}, {1, 1, 1}}); }, {x, k, b});
        T s = random_parameter({7, 5}, rng);
        T dk = random_parameter({3, 5}, rng), db = random_parameter({5}, rng);
        check("depthwise_conv1d", [&] { return depthwise_conv1d(s, dk, db); }, {s, dk, db});
        T boxes = random_parameter({6, 4}, rng, 0.0, 1.0), w = random_parameter({4, 8}, rng), eb = random_parameter({1}, rng);
        check("coordinate_embed", [&] { return coordinate_embed(boxes, w, eb); }, {boxes, w, eb});
    }
    {
        // Six examples so that each loss has enough entries to probe.
        const T teacher_logits = random_constant({6, 2}, rng, -2.0, 2.0);
        T student_logits = random_parameter({6, 2}, rng, -2.0, 2.0);
        auto loss_only = [&](const std::string& name, auto&& f, std::vector<T> params) {
            record(gradcheck(name, f, std::move(params), probes, rng));
        };
        auto per_row = [&](auto&& f) {
            T total = T::scalar(0.0);
            for (Index i = 0; i < 6; ++i) total = total + f(row(teacher_logits, i), row(student_logits, i), i);
            return total;
        };
        loss_only("loss_response.kl",
                  [&] { return per_row([](const T& t, const T& s, Index) { return loss_response(t, s, 2.0); }); },
                  {student_logits});
        loss_only("loss_response.literal", [&] {
            return per_row([](const T& t, const T& s, Index) { return loss_response(t, s, 2.0, ResponseLoss::eq7_literal); });
        }, {student_logits});
        loss_only("loss_task", [&] {
            return per_row([](const T&, const T& s, Index i) { return loss_task(static_cast<int>(i % 2), s); });
        }, {student_logits});
        T hs = random_parameter({kFeatureDim}, rng, 0.0, 2.0);
        const T ht = random_constant({kFeatureDim}, rng, 0.0, 2.0);
        loss_only("loss_feature", [&] { return loss_feature(ht, hs); }, {hs});
    }
    {
        const auto cell = AttentionCell<double>::init(rng);
        const T items = random_constant({5, kFeatureDim}, rng);
        auto params = NamedParameters<double>{};
        cell.collect(params, "cell");
        std::vector<T> tensors;
        for (const auto& [name, t] : params) tensors.push_back(t);
        check("attention_cell", [&] { return cell(items).output; }, tensors);
    }

    TeacherConfig tc;
    tc.clip_size = 8;
    tc.encoder_hidden = 16;
    tc.conv_channels = {4, 4, 4};
    const auto teacher = Teacher<double>::create(tc, rng.next_u64());
    TeacherInputs<double> in;
    in.boxes = random_constant({4, 4}, rng, 0.0, 1.0);
    in.full = random_constant({4, 8, 8, 3}, rng);
    in.context = random_constant({4, 8, 8, 3}, rng);
    in.motion = random_constant({3, 8, 8, 3}, rng);
    {
        std::vector<T> tensors;
        for (const auto& [name, t] : teacher.parameters()) tensors.push_back(t);
        record(gradcheck("teacher.forward+task_loss",
                         [&] { return loss_task(1, teacher.forward(in, Mode::eval, nullptr).logits); }, tensors,
                         std::max(probes, 40), rng));
    }
    const auto targets = teacher.forward(in, Mode::eval, nullptr);
    const T target_feature = softplus(detach(targets.feature));
    const T boxes = random_constant({16, 4}, rng, 0.0, 1.0);
    for (auto v : kAllVariants) {
        StudentConfig sc;
        sc.variant = v;
        const auto student = Student<double>::create(sc, rng.next_u64());
        std::vector<T> tensors;
        for (const auto& [name, t] : student.parameters()) tensors.push_back(t);
        record(gradcheck("student." + to_string(v) + "+total_loss",
                         [&] {
                             const auto s = student.forward(boxes, Mode::eval, nullptr);
                             return example_loss(1, s.logits, s.feature, detach(targets.logits), target_feature,
                                                 LossWeights{}, 2.0)
                                 .total;
                         },
                         tensors, std::max(probes, 40), rng));
    }
    return out;
}

}  // namespace vrpcp
