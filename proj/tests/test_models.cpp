#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "cvloc/errors.hpp"
#include "cvloc/gradcheck.hpp"
#include "cvloc/models.hpp"
#include "cvloc/ops.hpp"

using namespace cvloc;

namespace {

ArchSpec tiny_arch() {
    ArchSpec a;
    a.input_side = 16;
    a.conv_blocks = {4, 8};
    a.fc_hidden = 16;
    a.feature_dim = 12;
    a.class_count = 5;
    return a;
}

Tensor rand_images(int n, const ArchSpec& a, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t({n, a.input_channels, a.input_side, a.input_side});
    for (auto& v : t.data()) v = u(rng);
    return t;
}

}  // namespace

TEST_CASE("ArchSpec shape math and validation") {
    ArchSpec a = tiny_arch();
    CHECK(a.spatial_after_blocks() == 4);
    CHECK(a.flat_dim() == 8 * 4 * 4);

    ArchSpec bad = a;
    bad.input_side = 10;  // not divisible by 2^blocks
    CHECK_THROWS_AS(bad.validate(), ShapeError);
    bad = a;
    bad.class_count = a.feature_dim + 1;  // logits must fit in the embedding
    CHECK_THROWS_AS(bad.validate(), ShapeError);
    bad = a;
    bad.feature_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("ArchSpec text round-trip") {
    ArchSpec a = tiny_arch();
    ArchSpec b = ArchSpec::from_text(a.to_text());
    CHECK(a == b);
}

TEST_CASE("network initialization is seed-deterministic") {
    ArchSpec a = tiny_arch();
    Network n1(a, 42), n2(a, 42), n3(a, 43);
    CHECK(n1.params().data_equal(n2.params()));
    CHECK_FALSE(n1.params().data_equal(n3.params()));
    // biases start at zero
    for (float v : n1.params().at("conv0.bias").data()) CHECK(v == 0.0f);
}

TEST_CASE("features have the declared shape and are finite") {
    ArchSpec a = tiny_arch();
    Network net(a, 1);
    Tensor x = rand_images(3, a, 2);
    Graph g;
    Tensor f = net.features(g, x);
    REQUIRE(f.shape() == std::vector<int>{3, a.feature_dim});
    for (float v : f.data()) CHECK(std::isfinite(v));
}

TEST_CASE("logits are exactly the first class_count embedding coordinates") {
    ArchSpec a = tiny_arch();
    Network net(a, 7);
    Tensor x = rand_images(2, a, 3);
    Graph g;
    Tensor f = net.features(g, x);
    Tensor l = net.logits(g, f);
    REQUIRE(l.shape() == std::vector<int>{2, a.class_count});
    auto fd = f.data();
    auto ld = l.data();
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < a.class_count; ++c)
            CHECK(ld[static_cast<size_t>(n) * a.class_count + c] ==
                  fd[static_cast<size_t>(n) * a.feature_dim + c]);
}

TEST_CASE("a student initialized from the teacher's parameters is the identical function") {
    ArchSpec a = tiny_arch();
    Network teacher(a, 11);
    Network student(a, teacher.params().clone());
    Tensor x = rand_images(4, a, 12);
    Tensor ft = extract_features(teacher, x);
    Tensor fs = extract_features(student, x);
    auto td = ft.data();
    auto sd = fs.data();
    REQUIRE(td.size() == sd.size());
    for (size_t i = 0; i < td.size(); ++i) CHECK(td[i] == sd[i]);

    // and it is untied: training-style mutation of one leaves the other alone
    student.params().at("embed.bias").data()[0] += 1.0f;
    Tensor ft2 = extract_features(teacher, x);
    CHECK(ft2.data()[0] == td[0]);
}

TEST_CASE("empty batch passes through with zero rows") {
    ArchSpec a = tiny_arch();
    Network net(a, 1);
    Tensor x({0, a.input_channels, a.input_side, a.input_side});
    Tensor f = extract_features(net, x);
    CHECK(f.shape() == std::vector<int>{0, a.feature_dim});
}

TEST_CASE("multi-scale net: untied subnets plus fusion layer") {
    ArchSpec a = tiny_arch();
    Network single(a, 21);
    MultiScaleNet multi(a, single.params(), 99);

    // parameter layout: every subnet entry under each prefix, one fusion layer
    for (const char* prefix : MultiScaleNet::kPrefixes)
        for (const auto& [name, t] : single.params().entries())
            CHECK(multi.params().contains(std::string(prefix) + name));
    REQUIRE(multi.params().contains("fusion.weight"));
    CHECK(multi.params().at("fusion.weight").shape() ==
          std::vector<int>{3 * a.feature_dim, a.feature_dim});
    CHECK(multi.params().at("fusion.bias").shape() == std::vector<int>{a.feature_dim});

    // subnets start as copies of the init but share no storage
    CHECK_FALSE(multi.params().at("fine.embed.weight").same_storage(
        single.params().at("embed.weight")));
    auto a0 = multi.params().at("fine.embed.weight").data();
    auto b0 = multi.params().at("mid.embed.weight").data();
    for (size_t i = 0; i < a0.size(); ++i) CHECK(a0[i] == b0[i]);

    Tensor fine = rand_images(2, a, 31);
    Tensor mid = rand_images(2, a, 32);
    Tensor coarse = rand_images(2, a, 33);
    Tensor f = extract_features(multi, fine, mid, coarse);
    REQUIRE(f.shape() == std::vector<int>{2, a.feature_dim});
    for (float v : f.data()) CHECK(std::isfinite(v));

    // distinct tiles at the three scales must matter: permuting them changes output
    Tensor g = extract_features(multi, coarse, fine, mid);
    bool any_diff = false;
    for (size_t i = 0; i < f.data().size(); ++i)
        if (f.data()[i] != g.data()[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("gradient check passes on a small convnet at 1e-3") {
    ArchSpec a;
    a.input_side = 8;
    a.conv_blocks = {3};
    a.fc_hidden = 8;
    a.feature_dim = 6;
    Network net(a, 5);
    Tensor x = rand_images(2, a, 6);
    std::mt19937_64 rng(7);
    std::normal_distribution<float> n(0.0f, 1.0f);
    Tensor target({2, a.feature_dim});
    for (auto& v : target.data()) v = n(rng);

    GradCheckReport r = gradient_check(net, x, target, 1e-3, 1e-3, 16, 8);
    INFO(r.summary());
    CHECK(r.pass);
    int checked = 0;
    for (const auto& e : r.entries) checked += e.checked;
    CHECK(checked > 0);
}

TEST_CASE("gradient check at 1e-6 on the linear model over a dyadic grid") {
    ArchSpec a;
    a.input_side = 8;
    a.conv_blocks = {};
    a.fc_hidden = 0;
    a.feature_dim = 8;
    Network net(a, 3);
    Tensor x = rand_images(2, a, 4);
    std::mt19937_64 rng(5);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    Tensor target({2, a.feature_dim});
    for (auto& v : target.data()) v = nd(rng);
    quantize_dyadic(x, 6);
    quantize_dyadic(target, 6);
    quantize_dyadic(net.params(), 6);

    GradCheckReport r = gradient_check(net, x, target, 1e-3, 1e-6, 32, 8);
    INFO(r.summary());
    CHECK(r.pass);
}
