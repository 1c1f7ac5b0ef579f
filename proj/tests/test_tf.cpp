#include <gtest/gtest.h>

#include "support.hpp"

using namespace tcagcn;
using namespace tcagcn::tf;
using namespace tcagcn::testing;

namespace {

TfParams random_tf(std::size_t C, std::mt19937_64& rng)
{
    TfConfig cfg;
    cfg.channels = C;
    cfg.aff_reduction = 2;
    TfParams p = TfParams::init(cfg, rng);
    NamedTensors params, buffers;
    p.collect("tf", params, buffers);
    for (auto& [name, t] : params) {
        if (name.find("_bn.gamma") != std::string::npos) {
            randomize(t, rng, 0.5, 1.5);
        } else {
            randomize(t, rng, -0.8, 0.8);
        }
    }
    return p;
}

void zero_all(const TfParams& p)
{
    NamedTensors params, buffers;
    p.collect("tf", params, buffers);
    for (auto& [name, t] : params)
        if (name.find("_bn.gamma") == std::string::npos)
            for (auto& v : t.mutable_data()) v = 0.0;
}

}  // namespace

TEST(Msconv, ShapesAndStride)
{
    std::mt19937_64 rng(50);
    TfParams p = random_tf(8, rng);
    Tensor x = random_tensor({2, 8, 3, 8}, rng);
    EXPECT_EQ(msconv(x, p, 2, Mode::train).shape(), (Shape{2, 4, 3, 8}));
    EXPECT_EQ(tf_forward(x, p, 1, Mode::train).shape(), (Shape{2, 8, 3, 8}));
    EXPECT_THROW(msconv(random_tensor({2, 8, 3, 6}, rng), p, 1, Mode::train), ValidationError);
}

TEST(Msconv, NonMultipleOfFourRejected)
{
    std::mt19937_64 rng(51);
    TfConfig cfg;
    cfg.channels = 6;
    EXPECT_THROW(TfParams::init(cfg, rng), ValidationError);
}

TEST(Msconv, EachBranchMatchesOracle)
{
    std::mt19937_64 rng(52);
    TfParams p = random_tf(8, rng);
    for (std::size_t stride : {1u, 2u}) {
        Tensor x = random_tensor({2, 6, 3, 8}, rng);
        for (auto& br : p.branches) {
            Vec expected = oracle_msconv_branch(x, br, stride);
            Tensor got = msconv_branch(x, br, stride, Mode::train);
            EXPECT_LT(max_abs_diff(got, expected), 1e-12) << "branch " << static_cast<int>(br.kind);
        }
    }
}

TEST(Msconv, BranchesOccupyDisjointChannelBlocks)
{
    std::mt19937_64 rng(53);
    TfParams p = random_tf(8, rng);
    Tensor x = random_tensor({1, 5, 2, 8}, rng);
    Tensor z = msconv(x, p, 1, Mode::train);
    for (std::size_t i = 0; i < 4; ++i) {
        Tensor part = msconv_branch(x, p.branches[i], 1, Mode::train);
        for (std::size_t t = 0; t < 5; ++t)
            for (std::size_t n = 0; n < 2; ++n)
                for (std::size_t c = 0; c < 2; ++c)
                    EXPECT_EQ(z.at({0, t, n, 2 * i + c}), part.at({0, t, n, c}));
    }
}

TEST(Msconv, ZeroWeightsGiveZero)
{
    std::mt19937_64 rng(54);
    TfParams p = random_tf(4, rng);
    zero_all(p);
    Tensor z = msconv(random_tensor({1, 6, 3, 4}, rng), p, 1, Mode::train);
    for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Aff, MatchesOracle)
{
    std::mt19937_64 rng(55);
    TfParams p = random_tf(8, rng);
    Tensor z = random_tensor({2, 3, 4, 8}, rng, -2, 2);
    EXPECT_LT(max_abs_diff(aff_fuse(z, p), oracle_aff(z, p)), 1e-12);
}

TEST(Aff, ZeroedMapsHalveInput)
{
    std::mt19937_64 rng(56);
    TfParams p = random_tf(4, rng);
    zero_all(p);
    Tensor z = random_tensor({1, 3, 2, 4}, rng);
    EXPECT_EQ(max_abs_diff(aff_fuse(z, p), scale(z, 0.5)), 0.0);
    for (double v : values(aff_fuse(Tensor::zeros({1, 3, 2, 4}), random_tf(4, rng)))) EXPECT_EQ(v, 0.0);
}

TEST(Aff, GateBoundsOutput)
{
    std::mt19937_64 rng(57);
    for (int trial = 0; trial < 5; ++trial) {
        TfParams p = random_tf(8, rng);
        Tensor z = random_tensor({2, 4, 3, 8}, rng, -5, 5);
        Tensor m = aff_gate(z, p);
        Tensor out = aff_fuse(z, p);
        for (std::size_t i = 0; i < z.numel(); ++i) {
            EXPECT_GT(m.data()[i], 0.0);
            EXPECT_LT(m.data()[i], 1.0);
            EXPECT_LE(std::abs(out.data()[i]), std::abs(z.data()[i]));
        }
    }
}

TEST(Tf, GradientsMatchFiniteDifferences)
{
    std::mt19937_64 rng(58);
    TfParams p = random_tf(4, rng);
    // keep the branch relu away from zero so max-pool has no ties
    for (auto& br : p.branches)
        for (auto& v : br.reduce_bn.beta.mutable_data()) v = 5.0;
    Tensor x = random_tensor({2, 5, 2, 4}, rng, -1, 1, true);
    Tensor probe = random_tensor({2, 3, 2, 4}, rng);
    auto loss = [&] { return sum(mul(tf_forward(x, p, 2, Mode::train), probe)); };
    NamedTensors params, buffers;
    p.collect("tf", params, buffers);
    params.emplace_back("x", x);
    for (const auto& g : gradcheck_params(loss, params, [](const std::string& n) { return n; })) {
        EXPECT_LT(g.max_rel_error, 1e-5) << g.group;
    }
}
