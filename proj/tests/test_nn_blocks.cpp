#include <cmath>
#include <sstream>

#include "doctest.h"
#include "meta4/core/serialize.hpp"
#include "meta4/nn/blocks.hpp"
#include "support/gradcheck.hpp"

using namespace meta4;
using namespace meta4::nn;

namespace {

BlockConfig small_cfg() {
    BlockConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.dropout_rate = 0.0;
    return cfg;
}

ForwardCtx eval_ctx() { return ForwardCtx{}; }

}  // namespace

TEST_CASE("block config validation") {
    BlockConfig ok = small_cfg();
    ok.validate();

    BlockConfig bad = ok;
    bad.n_heads = 3;
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("divisible"),
                         Error);
    bad = ok;
    bad.dropout_rate = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = ok;
    bad.d_ff = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("attention over a single position puts weight 1 on itself") {
    SeededRng rng(21);
    BlockConfig cfg = small_cfg();
    MultiHeadAttention mha(cfg, rng);
    Tensor x = Tensor::uniform({1, cfg.d_model}, -1, 1, rng);
    std::vector<Tensor> weights;
    Tensor out = mha.forward(x, x, x, nullptr, eval_ctx(), &weights);
    REQUIRE(weights.size() == cfg.n_heads);
    for (const auto& w : weights) {
        CHECK(w.size() == 1);
        CHECK(w.item() == 1.0);
    }
    // With weight exactly 1, the head output is V itself.
    Tensor expect = mha.wo.forward(mha.wv.forward(x));
    CHECK(out.data() == expect.data());
}

TEST_CASE("attention weights are row-stochastic per head") {
    SeededRng rng(22);
    BlockConfig cfg = small_cfg();
    MultiHeadAttention mha(cfg, rng);
    Tensor x = Tensor::uniform({6, cfg.d_model}, -2, 2, rng);
    std::vector<Tensor> weights;
    (void)mha.forward(x, x, x, nullptr, eval_ctx(), &weights);
    REQUIRE(weights.size() == cfg.n_heads);
    for (const auto& w : weights) {
        REQUIRE(w.shape() == std::vector<size_t>{6, 6});
        for (size_t i = 0; i < 6; ++i) {
            double row = 0.0;
            for (size_t j = 0; j < 6; ++j) {
                CHECK(w.at({i, j}) >= 0.0);
                row += w.at({i, j});
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("masked positions receive exactly zero attention weight") {
    SeededRng rng(23);
    BlockConfig cfg = small_cfg();
    MultiHeadAttention mha(cfg, rng);
    Tensor x = Tensor::uniform({4, cfg.d_model}, -1, 1, rng);
    AttnMask mask = AttnMask::causal(4);
    std::vector<Tensor> weights;
    (void)mha.forward(x, x, x, &mask, eval_ctx(), &weights);
    for (const auto& w : weights) {
        for (size_t i = 0; i < 4; ++i) {
            for (size_t j = i + 1; j < 4; ++j) {
                CHECK(w.at({i, j}) == 0.0);
            }
        }
    }
}

TEST_CASE("attention input validation") {
    SeededRng rng(24);
    BlockConfig cfg = small_cfg();
    MultiHeadAttention mha(cfg, rng);
    Tensor x = Tensor::uniform({4, cfg.d_model}, -1, 1, rng);
    Tensor narrow = Tensor::uniform({4, cfg.d_model - 1}, -1, 1, rng);
    CHECK_THROWS_WITH_AS(
        (void)mha.forward(narrow, x, x, nullptr, eval_ctx()),
        doctest::Contains("width mismatch"), Error);

    AttnMask wrong = AttnMask::causal(3);
    CHECK_THROWS_WITH_AS((void)mha.forward(x, x, x, &wrong, eval_ctx()),
                         doctest::Contains("mask"), Error);

    AttnMask empty_row = AttnMask::causal(4);
    for (size_t j = 0; j < 4; ++j) empty_row.allow[2 * 4 + j] = 0;
    CHECK_THROWS_WITH_AS((void)mha.forward(x, x, x, &empty_row, eval_ctx()),
                         doctest::Contains("no allowed"), Error);
}

TEST_CASE("causal mask: outputs up to t ignore perturbations after t") {
    SeededRng rng(25);
    BlockConfig cfg = small_cfg();
    MultiHeadAttention mha(cfg, rng);
    const size_t n = 6, t = 2;
    Tensor x = Tensor::uniform({n, cfg.d_model}, -1, 1, rng);
    AttnMask mask = AttnMask::causal(n);
    Tensor y1 = mha.forward(x, x, x, &mask, eval_ctx());

    Tensor x2 = x.clone_detached();
    for (size_t u = t + 1; u < n; ++u) {
        for (size_t j = 0; j < cfg.d_model; ++j) {
            x2.data()[u * cfg.d_model + j] += rng.uniform(-5, 5);
        }
    }
    Tensor y2 = mha.forward(x2, x2, x2, &mask, eval_ctx());
    double max_diff = 0.0;
    for (size_t i = 0; i <= t; ++i) {
        for (size_t j = 0; j < cfg.d_model; ++j) {
            max_diff = std::max(max_diff,
                                std::fabs(y1.at({i, j}) - y2.at({i, j})));
        }
    }
    CHECK(max_diff < 1e-12);
    // Positions after t do change.
    CHECK(y1.at({n - 1, 0}) != y2.at({n - 1, 0}));
}

TEST_CASE("encoder layer keeps shape and residual identity") {
    SeededRng rng(26);
    BlockConfig cfg;
    cfg.d_model = 64;
    cfg.n_heads = 8;
    cfg.d_ff = 256;
    cfg.dropout_rate = 0.0;
    EncoderLayer layer(cfg, rng);
    Tensor x = Tensor::uniform({5, 64}, -1, 1, rng);
    Tensor y = layer.forward(x, eval_ctx());
    CHECK(y.shape() == x.shape());

    // Zeroed output projections turn both sublayers into no-ops.
    std::fill(layer.attn.wo.weight.data().begin(),
              layer.attn.wo.weight.data().end(), 0.0);
    std::fill(layer.ff.lin2.weight.data().begin(),
              layer.ff.lin2.weight.data().end(), 0.0);
    Tensor id = layer.forward(x, eval_ctx());
    CHECK(id.data() == x.data());

    Tensor narrow = Tensor::uniform({5, 32}, -1, 1, rng);
    CHECK_THROWS_AS((void)layer.forward(narrow, eval_ctx()), Error);
}

TEST_CASE("decoder layer: shape, memory width check, causal oracle") {
    SeededRng rng(27);
    BlockConfig cfg = small_cfg();
    DecoderLayer layer(cfg, rng);
    const size_t n = 5;
    Tensor x = Tensor::uniform({n, cfg.d_model}, -1, 1, rng);
    Tensor memory = Tensor::uniform({3, cfg.d_model}, -1, 1, rng);
    AttnMask mask = AttnMask::causal(n);
    Tensor y = layer.forward(x, memory, &mask, eval_ctx());
    CHECK(y.shape() == x.shape());

    Tensor bad_mem = Tensor::uniform({3, cfg.d_model + 1}, -1, 1, rng);
    CHECK_THROWS_WITH_AS((void)layer.forward(x, bad_mem, &mask, eval_ctx()),
                         doctest::Contains("memory width"), Error);

    // Perturb decoder input after position t; outputs up to t are stable.
    const size_t t = 1;
    Tensor x2 = x.clone_detached();
    for (size_t u = t + 1; u < n; ++u) x2.data()[u * cfg.d_model] += 3.0;
    Tensor y2 = layer.forward(x2, memory, &mask, eval_ctx());
    for (size_t i = 0; i <= t; ++i) {
        for (size_t j = 0; j < cfg.d_model; ++j) {
            CHECK(std::fabs(y.at({i, j}) - y2.at({i, j})) < 1e-12);
        }
    }
}

TEST_CASE("positional encoding formula") {
    Tensor pe = sinusoidal_positional_encoding(10, 6);
    CHECK(pe.shape() == std::vector<size_t>{10, 6});
    // Position 0: sin columns are 0, cos columns are 1.
    for (size_t i = 0; i < 6; i += 2) {
        CHECK(pe.at({0, i}) == 0.0);
        CHECK(pe.at({0, i + 1}) == 1.0);
    }
    CHECK(pe.at({1, 0}) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    CHECK(pe.at({1, 1}) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
    CHECK(pe.at({3, 2}) ==
          doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 6.0)))
              .epsilon(1e-15));
    for (double v : pe.data()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS((void)sinusoidal_positional_encoding(0, 6), Error);
}

TEST_CASE("summed input embeddings") {
    SeededRng rng(28);
    EmbeddingTable tok(10, 4, rng), seg(2, 4, rng), pos(8, 4, rng);

    SUBCASE("zero tables give a zero matrix") {
        for (auto* t : {&tok, &seg, &pos}) {
            std::fill(t->weight.data().begin(), t->weight.data().end(), 0.0);
        }
        Tensor out = sum_input_embeddings({1, 2}, {0, 0}, {0, 1}, tok, seg,
                                          pos);
        for (double v : out.data()) CHECK(v == 0.0);
    }
    SUBCASE("hand-set one-hot rows add up") {
        for (auto* t : {&tok, &seg, &pos}) {
            std::fill(t->weight.data().begin(), t->weight.data().end(), 0.0);
        }
        tok.weight.data()[5 * 4 + 0] = 1.0;  // token 5 -> e0
        seg.weight.data()[1 * 4 + 1] = 1.0;  // segment 1 -> e1
        pos.weight.data()[3 * 4 + 2] = 1.0;  // position 3 -> e2
        Tensor out = sum_input_embeddings({5}, {1}, {3}, tok, seg, pos);
        CHECK(out.data() == std::vector<double>{1, 1, 1, 0});
    }
    SUBCASE("random tables match a lookup-and-add oracle") {
        std::vector<int> t{3, 7, 0}, s{0, 1, 1}, p{0, 1, 2};
        Tensor out = sum_input_embeddings(t, s, p, tok, seg, pos);
        for (size_t i = 0; i < 3; ++i) {
            for (size_t j = 0; j < 4; ++j) {
                double expect =
                    tok.weight.at({static_cast<size_t>(t[i]), j}) +
                    seg.weight.at({static_cast<size_t>(s[i]), j}) +
                    pos.weight.at({static_cast<size_t>(p[i]), j});
                CHECK(out.at({i, j}) ==
                      doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }
    SUBCASE("out-of-range ids fail") {
        CHECK_THROWS_AS(
            (void)sum_input_embeddings({10}, {0}, {0}, tok, seg, pos), Error);
        CHECK_THROWS_AS(
            (void)sum_input_embeddings({0}, {0}, {9}, tok, seg, pos), Error);
    }
}

TEST_CASE("block gradients pass finite differences") {
    SeededRng rng(29);
    BlockConfig cfg;
    cfg.d_model = 6;
    cfg.n_heads = 2;
    cfg.d_ff = 12;
    cfg.dropout_rate = 0.0;

    SUBCASE("encoder layer") {
        EncoderLayer layer(cfg, rng);
        Tensor x = Tensor::uniform({3, 6}, -1, 1, rng, true);
        Tensor target = Tensor::uniform({3, 6}, -1, 1, rng);
        auto res = testing::grad_check(
            {x, layer.attn.wq.weight, layer.attn.wo.bias, layer.ln1.gamma,
             layer.ff.lin1.weight},
            [&] { return mse_loss(layer.forward(x, eval_ctx()), target); });
        CHECK(res.max_rel_err < 1e-5);
    }
    SUBCASE("decoder layer") {
        DecoderLayer layer(cfg, rng);
        Tensor x = Tensor::uniform({3, 6}, -1, 1, rng, true);
        Tensor memory = Tensor::uniform({2, 6}, -1, 1, rng, true);
        Tensor target = Tensor::uniform({3, 6}, -1, 1, rng);
        AttnMask mask = AttnMask::causal(3);
        auto res = testing::grad_check(
            {x, memory, layer.self_attn.wv.weight,
             layer.cross_attn.wk.weight, layer.ff.lin2.bias, layer.ln3.beta},
            [&] {
                return mse_loss(layer.forward(x, memory, &mask, eval_ctx()),
                                target);
            });
        CHECK(res.max_rel_err < 1e-5);
    }
}

TEST_CASE("dropout fires only in training mode") {
    SeededRng rng(30);
    BlockConfig cfg = small_cfg();
    cfg.dropout_rate = 0.5;
    EncoderLayer layer(cfg, rng);
    Tensor x = Tensor::uniform({4, cfg.d_model}, -1, 1, rng);

    Tensor e1 = layer.forward(x, eval_ctx());
    Tensor e2 = layer.forward(x, eval_ctx());
    CHECK(e1.data() == e2.data());  // eval is deterministic

    SeededRng drng(1);
    ForwardCtx train{true, &drng};
    Tensor t1 = layer.forward(x, train);
    Tensor t2 = layer.forward(x, train);
    CHECK(t1.data() != t2.data());  // different masks

    ForwardCtx no_rng{true, nullptr};
    CHECK_THROWS_WITH_AS((void)layer.forward(x, no_rng),
                         doctest::Contains("random source"), Error);
}

TEST_CASE("checkpoint round trip restores parameters by name") {
    SeededRng rng(31);
    BlockConfig cfg = small_cfg();
    EncoderLayer layer(cfg, rng);
    NamedTensors params;
    layer.collect("enc", params);
    CHECK(params.size() == 2 * 2 + 4 * 2 + 2 * 2);  // ln, attn, ff tensors

    std::stringstream ss;
    write_named_tensors(ss, params);

    SeededRng rng2(99);
    EncoderLayer other(cfg, rng2);
    NamedTensors other_params;
    other.collect("enc", other_params);
    CHECK(other.attn.wq.weight.data() != layer.attn.wq.weight.data());

    load_into(read_named_tensors(ss), other_params);
    CHECK(other.attn.wq.weight.data() == layer.attn.wq.weight.data());
    CHECK(other.ln2.beta.data() == layer.ln2.beta.data());

    NamedTensors renamed;
    layer.collect("oops", renamed);
    std::stringstream ss2;
    write_named_tensors(ss2, params);
    CHECK_THROWS_WITH_AS(load_into(read_named_tensors(ss2), renamed),
                         doctest::Contains("missing tensor"), Error);
}
