#include <doctest.h>

#include <cmath>
#include <random>

#include "mixsup/error.hpp"
#include "mixsup/losses.hpp"
#include "mixsup/model.hpp"

using namespace mixsup;
using doctest::Approx;

namespace {

ImageTensor random_image(int h, int w, std::mt19937_64& rng, int channels = 3) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageTensor img(h, w, channels);
    for (auto& v : img.values()) v = u(rng);
    return img;
}

std::size_t conv_params(int in, int out, int k) { return static_cast<std::size_t>(in * out * k * k + out); }

double loss_of(const Model& m, const ImageTensor& img, const DenseMask& target) {
    return dense_loss(m.predict(img), target);
}

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return Errc::IoError;
}

}  // namespace

TEST_CASE("parameter count of the default toy pyramid") {
    const ModelConfig c;
    const std::size_t expect = conv_params(3, 16, 3) + conv_params(16, 32, 3) + conv_params(32, 64, 3) +
                               conv_params(64, 128, 3) + conv_params(32, 32, 1) + conv_params(64, 32, 1) +
                               conv_params(128, 32, 1) + conv_params(32, 1, 1);
    CHECK(parameter_count(c) == expect);
    CHECK(Model(c, 0).parameter_count() == expect);
    // Roughly 1e5 scalars: a desk-scale stand-in.
    CHECK(expect > 50'000);
    CHECK(expect < 200'000);
}

TEST_CASE("config validation") {
    ModelConfig bad;
    bad.fusion_channels = 0;
    CHECK(code_of([&] { bad.validate(); }) == Errc::InvalidConfig);
    ModelConfig neg;
    neg.stage_channels[2] = -1;
    CHECK(code_of([&] { neg.validate(); }) == Errc::InvalidConfig);
}

TEST_CASE("forward shapes") {
    const Model m(ModelConfig{}, 1);
    std::mt19937_64 rng(1);
    for (auto [h, w] : {std::pair{64, 64}, std::pair{48, 80}, std::pair{16, 16}}) {
        const auto pass = m.forward(random_image(h, w, rng));
        const auto sizes = Model::stage_sizes(h, w);
        for (int i = 0; i < 4; ++i) {
            CHECK(pass.stages[i].height() == h >> (i + 1));
            CHECK(pass.stages[i].width() == w >> (i + 1));
            CHECK(sizes[static_cast<std::size_t>(i)][0] == h >> (i + 1));
        }
        CHECK(pass.fused.height() == h / 4);
        CHECK(pass.fused.channels() == 32);
        CHECK(pass.low_logits.channels() == 1);
        CHECK(pass.prediction.height() == h);
        CHECK(pass.prediction.width() == w);
    }
    CHECK(code_of([&] { (void)m.forward(random_image(50, 64, rng)); }) == Errc::BadSize);
    CHECK(code_of([&] { (void)m.forward(random_image(64, 64, rng, 1)); }) == Errc::BadSize);
}

TEST_CASE("initialization is seeded and the fresh network is alive") {
    const Model a(ModelConfig{}, 5), b(ModelConfig{}, 5), c(ModelConfig{}, 6);
    CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
    CHECK_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));

    std::mt19937_64 rng(2);
    const auto pass = a.forward(random_image(64, 64, rng));
    for (int i = 0; i < 4; ++i) {
        std::size_t active = 0;
        for (float v : pass.stages[i].values()) active += v > 0.0f;
        CHECK(active > pass.stages[i].size() / 10);
    }
    double lo = 1e9, hi = -1e9;
    for (double v : pass.prediction.logits().values()) lo = std::min(lo, v), hi = std::max(hi, v);
    CHECK(hi - lo > 1e-4);
}

TEST_CASE("parameter constructor checks the size") {
    const ModelConfig c;
    const Model a(c, 3);
    std::vector<float> params(a.parameters().begin(), a.parameters().end());
    const Model b(c, params);
    CHECK(std::equal(b.parameters().begin(), b.parameters().end(), params.begin()));
    params.pop_back();
    CHECK(code_of([&] { Model bad(c, params); }) == Errc::BadCheckpoint);
}

TEST_CASE("serial and parallel backends agree") {
    Model m(ModelConfig{}, 4);
    std::mt19937_64 rng(3);
    const auto img = random_image(48, 32, rng);
    DenseMask target(48, 32);
    for (int r = 10; r < 30; ++r)
        for (int c = 8; c < 20; ++c) target(r, c) = 1;

    auto run = [&](KernelBackend be) {
        m.set_backend(be);
        const auto pass = m.forward(img);
        std::vector<double> gl(pass.prediction.size(), 0.0);
        dense_loss(pass.prediction, target, gl);
        std::vector<float> gp(m.parameter_count(), 0.0f);
        m.backward(pass, gl, gp);
        return std::pair{pass.prediction.logits(), gp};
    };
    const auto [ls, gs] = run(KernelBackend::Serial);
    const auto [lp, gp] = run(KernelBackend::Parallel);
    for (std::size_t i = 0; i < ls.size(); ++i) REQUIRE(ls.values()[i] == Approx(lp.values()[i]).epsilon(1e-4).scale(1.0));
    double norm = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < gs.size(); ++i) norm += double(gs[i]) * gs[i], diff += double(gs[i] - gp[i]) * (gs[i] - gp[i]);
    CHECK(std::sqrt(diff) <= 1e-4 * std::sqrt(norm));
}

TEST_CASE("backward matches finite differences along random directions") {
    ModelConfig small;
    small.stage_channels = {3, 4, 5, 6};
    small.fusion_channels = 4;
    Model m(small, 7);
    m.set_backend(KernelBackend::Serial);
    std::mt19937_64 rng(4);
    const auto img = random_image(32, 32, rng);
    DenseMask target(32, 32);
    for (int r = 6; r < 22; ++r)
        for (int c = 10; c < 28; ++c) target(r, c) = 1;

    const auto pass = m.forward(img);
    std::vector<double> gl(pass.prediction.size(), 0.0);
    dense_loss(pass.prediction, target, gl);
    std::vector<float> grad(m.parameter_count(), 0.0f);
    m.backward(pass, gl, grad);

    std::normal_distribution<double> n(0.0, 1.0);
    const std::vector<float> base(m.parameters().begin(), m.parameters().end());
    for (int dir = 0; dir < 5; ++dir) {
        std::vector<double> d(base.size());
        double dn = 0.0;
        for (auto& v : d) v = n(rng), dn += v * v;
        dn = std::sqrt(dn);
        double analytic = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= dn, analytic += d[i] * grad[i];

        const double h = 1e-3;
        auto at = [&](double t) {
            for (std::size_t i = 0; i < d.size(); ++i) m.parameters()[i] = static_cast<float>(base[i] + t * d[i]);
            return loss_of(m, img, target);
        };
        const double numeric = (at(h) - at(-h)) / (2 * h);
        std::copy(base.begin(), base.end(), m.parameters().begin());
        CHECK(analytic == Approx(numeric).epsilon(2e-2).scale(1e-4));
    }
}

TEST_CASE("backward accumulates into the gradient buffer") {
    const Model m(ModelConfig{}, 8);
    std::mt19937_64 rng(5);
    const auto pass = m.forward(random_image(32, 32, rng));
    std::vector<double> gl(pass.prediction.size(), 0.01);
    std::vector<float> once(m.parameter_count(), 0.0f), twice(m.parameter_count(), 0.0f);
    m.backward(pass, gl, once);
    m.backward(pass, gl, twice);
    m.backward(pass, gl, twice);
    for (std::size_t i = 0; i < once.size(); ++i) REQUIRE(twice[i] == Approx(2 * once[i]).epsilon(1e-5).scale(1e-9));
}

TEST_CASE("parameter count scaling") {
    ModelConfig base, doubled, thin;
    for (auto& c : doubled.stage_channels) c *= 2;
    thin.fusion_channels = 1;
    const double ratio = double(parameter_count(doubled)) / double(parameter_count(base));
    CHECK(ratio == Approx(4.0).epsilon(0.10));
    CHECK(parameter_count(thin) < parameter_count(base));
    CHECK(parameter_count(base) == parameter_count(ModelConfig{}));
}

TEST_CASE("predictions are probabilities at the input size") {
    const Model m(ModelConfig{}, 9);
    std::mt19937_64 rng(6);
    const auto p = m.predict(random_image(96, 64, rng));
    CHECK(p.height() == 96);
    CHECK(p.width() == 64);
    for (double v : p.probs().values()) REQUIRE((v > 0.0 && v < 1.0));
    const auto sizes = Model::stage_sizes(64, 64);
    CHECK(sizes[0] == std::array<int, 2>{32, 32});
    CHECK(sizes[3] == std::array<int, 2>{4, 4});
}

TEST_CASE("rotate90 on image tensors") {
    std::mt19937_64 rng(7);
    const auto img = random_image(5, 7, rng);
    CHECK(rotate90(img, 0) == img);
    CHECK(rotate90(rotate90(rotate90(rotate90(img, 1), 1), 1), 1) == img);
    CHECK(rotate90(img, 4) == img);
    CHECK(rotate90(rotate90(img, 1), 3) == img);
    CHECK(rotate90(img, 2) == rotate90(rotate90(img, 1), 1));
    CHECK(rotate90(img, 1).height() == 7);

    Grid<int> g(2, 2);
    g(0, 0) = 1, g(0, 1) = 2, g(1, 0) = 3, g(1, 1) = 4;  // [[a,b],[c,d]]
    const auto r = rotate90(g, 1);                          // [[b,d],[a,c]]
    CHECK(r(0, 0) == 2);
    CHECK(r(0, 1) == 4);
    CHECK(r(1, 0) == 1);
    CHECK(r(1, 1) == 3);
}
