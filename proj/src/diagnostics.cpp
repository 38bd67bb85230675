// SPDX-License-Identifier: Apache-2.0
#include "symgrade/diagnostics.hpp"

#include "symgrade/data.hpp"
#include "symgrade/losses.hpp"
#include "symgrade/model.hpp"
#include "symgrade/random.hpp"

#include <algorithm>
#include <array>

namespace symgrade {

namespace {

constexpr std::array<const char*, 5> kComponents = {"l_original", "l_flipped", "l_symmetry", "l_consistency",
                                                    "l_total"};

Var pick(const TotalLoss& loss, std::size_t component) {
    switch (component) {
    case 0: return loss.original;
    case 1: return loss.flipped;
    case 2: return loss.symmetry;
    case 3: return loss.consistency;
    default: return loss.total;
    }
}

std::vector<GradeLabel> random_labels(std::size_t n, Rng& rng) {
    std::vector<GradeLabel> labels;
    for (std::size_t i = 0; i < n; ++i) labels.emplace_back(static_cast<int>(rng.below(kNumGrades)));
    return labels;
}

} // namespace

std::vector<ComponentCheck> check_loss_gradients(std::uint64_t seed, GradCheckTarget target, double step,
                                                 GradFault fault, double lambda) {
    std::vector<ComponentCheck> out;
    for (const char* name : kComponents) out.push_back({name, 0.0});

    for (const std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
        Rng rng(derive_seed(seed, SeedStream::gradcheck, n));
        const OneHotLabels y = one_hot(random_labels(n, rng));

        if (target == GradCheckTarget::similarities) {
            Tensor s({n, kNumGrades}), s_h({n, kNumGrades});
            for (double& v : s.data()) v = 3.0 * rng.normal();
            for (double& v : s_h.data()) v = 3.0 * rng.normal();
            std::array<Tensor*, 2> params = {&s, &s_h};
            for (std::size_t c = 0; c < kComponents.size(); ++c) {
                const ScalarFn f = [&, c](Tape& tape, std::span<const Var> v) {
                    return pick(total_loss(tape, v[0], v[1], y, lambda), c);
                };
                const auto r = finite_diff_check(f, params, step, fault);
                out[c].max_rel_error = std::max(out[c].max_rel_error, r.max_rel_error);
            }
            continue;
        }

        ModelConfig mc;
        mc.image_h = 8;
        mc.image_w = 8;
        mc.patch = 4;
        mc.hidden = 6;
        mc.embed_dim = 8;
        ModelParams model = ModelParams::init(mc, default_descriptions(), rng.next_u64());
        Tensor images({n, 1, mc.image_h, mc.image_w});
        for (double& v : images.data()) v = rng.normal();
        Batch batch{images, {}, {}};
        const Tensor flipped = flip_horizontal(batch).images;
        const Tensor bow = model.vocab.bag_of_words(model.descriptions);

        std::vector<Tensor*> params;
        for (auto& [pname, t] : model.named()) params.push_back(t);
        for (std::size_t c = 0; c < kComponents.size(); ++c) {
            const ScalarFn f = [&, c](Tape& tape, std::span<const Var> v) {
                const BoundParams p{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
                const Var t = encode_texts(tape, p, bow);
                const Var s = similarity(tape, encode_image(tape, p, mc, images), t, mc.temperature);
                const Var s_h = similarity(tape, encode_image(tape, p, mc, flipped), t, mc.temperature);
                return pick(total_loss(tape, s, s_h, y, lambda), c);
            };
            const auto r = finite_diff_check(f, params, step, fault);
            out[c].max_rel_error = std::max(out[c].max_rel_error, r.max_rel_error);
        }
    }
    return out;
}

} // namespace symgrade
