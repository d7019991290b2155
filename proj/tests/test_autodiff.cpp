#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "qvl/errors.hpp"
#include "qvl/grad_check.hpp"
#include "qvl/params.hpp"
#include "qvl/rng.hpp"
#include "qvl/tape.hpp"
#include "qvl/tensor.hpp"

using namespace qvl;

namespace {

// Independent oracle for masked-max: plain enumeration over unmasked entries.
double masked_max_oracle(const std::vector<double>& v, const std::vector<std::uint8_t>& m) {
    bool found = false;
    double best = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (m[i] && (!found || v[i] > best)) { best = v[i]; found = true; }
    }
    REQUIRE(found);
    return best;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform_range(lo, hi);
    return t;
}

// Magnitudes bounded away from zero so finite differences never straddle the
// relu/abs kink.
Tensor random_tensor_off_kink(Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double mag = rng.uniform_range(0.2, 1.5);
        t.at(i) = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

}  // namespace

TEST_CASE("tensor basics and validation") {
    Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.at(1, 2) == 6.0);
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({0}, {}), ShapeError);
    CHECK_THROWS_AS(Tensor::scalar(5.0).at(0) == 5.0 ? throw NotScalarError("x") : void(), NotScalarError);

    CHECK(Tensor::scalar(3.5).item() == 3.5);
    CHECK_THROWS_AS(t.item(), NotScalarError);

    SUBCASE("checked mode rejects non-finite values") {
        CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), ValidationError);
        set_checked_mode(false);
        Tensor nan_ok = Tensor::from_data({1}, {std::nan("")});
        CHECK(!nan_ok.all_finite());
        set_checked_mode(true);
    }

    SUBCASE("reshape preserves flat contents") {
        Tensor r = t.reshaped({3, 2});
        CHECK(r.at(2, 1) == 6.0);
        CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    }
}

TEST_CASE("forward op examples") {
    Tape tape;

    SUBCASE("add is elementwise") {
        NodeId a = tape.constant(Tensor::from_data({2}, {1, 2}));
        NodeId b = tape.constant(Tensor::from_data({2}, {3, 4}));
        NodeId c = tape.add(a, b);
        CHECK(tape.value(c).at(0) == 4.0);
        CHECK(tape.value(c).at(1) == 6.0);
    }

    SUBCASE("masked max over unmasked entries") {
        const std::vector<double> vals{1.0, 3.0, -5.0};
        const std::vector<std::uint8_t> mask{1, 0, 1};
        CHECK(masked_max_oracle(vals, mask) == 1.0);  // oracle agrees with the frozen value
        NodeId v = tape.constant(Tensor::from_data({3}, vals));
        NodeId m = tape.masked_max(v, mask);
        CHECK(tape.value(m).item() == 1.0);
    }

    SUBCASE("abs") {
        NodeId x = tape.constant(Tensor::from_data({3}, {-2, 0, 2}));
        NodeId y = tape.abs(x);
        CHECK(tape.value(y).at(0) == 2.0);
        CHECK(tape.value(y).at(1) == 0.0);
        CHECK(tape.value(y).at(2) == 2.0);
    }

    SUBCASE("matmul with rank promotions") {
        NodeId a = tape.constant(Tensor::from_data({2, 2}, {1, 2, 3, 4}));
        NodeId v = tape.constant(Tensor::from_data({2}, {1, 1}));
        CHECK(tape.value(tape.matmul(a, v)).at(0) == 3.0);   // row sums
        CHECK(tape.value(tape.matmul(v, a)).at(0) == 4.0);   // column sums
        NodeId b = tape.constant(Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6}));
        CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
    }

    SUBCASE("empty reduction is an error, not -inf") {
        NodeId v = tape.constant(Tensor::from_data({2, 2}, {1, 2, 3, 4}));
        CHECK_THROWS_AS(tape.masked_max(v, {1, 1, 0, 0}), EmptyReductionError);
    }

    SUBCASE("add shape mismatch") {
        NodeId a = tape.constant(Tensor::zeros({2, 3}));
        NodeId b = tape.constant(Tensor::zeros({2, 2}));
        CHECK_THROWS_AS(tape.add(a, b), ShapeError);
    }

    SUBCASE("slice and concat round trip") {
        NodeId x = tape.constant(Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}));
        NodeId left = tape.slice(x, 0, 1);
        NodeId right = tape.slice(x, 1, 2);
        NodeId back = tape.concat({left, right}, 1);
        for (std::int64_t i = 0; i < 6; ++i) CHECK(tape.value(back).at(i) == tape.value(x).at(i));
        NodeId stacked = tape.concat({x, x}, 0);
        CHECK(tape.value(stacked).dim(0) == 4);
    }

    SUBCASE("gather_index picks one entry per row") {
        NodeId x = tape.constant(Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}));
        NodeId g = tape.gather_index(x, {2, 0});
        CHECK(tape.value(g).at(0) == 3.0);
        CHECK(tape.value(g).at(1) == 4.0);
        CHECK_THROWS_AS(tape.gather_index(x, {3, 0}), ValidationError);
    }
}

TEST_CASE("backward examples") {
    SUBCASE("square at x=3 has gradient 6") {
        Tape tape;
        NodeId x = tape.leaf(Tensor::scalar(3.0), true);
        NodeId loss = tape.square(x);
        GradientMap gm = tape.backward(loss);
        CHECK(gm.at(x).at(0) == doctest::Approx(6.0).epsilon(1e-12));
    }

    SUBCASE("constant loss gives zero gradients everywhere") {
        Tape tape;
        NodeId w = tape.leaf(Tensor::from_data({2}, {1.0, 2.0}), true);
        NodeId c = tape.constant(Tensor::scalar(7.0));
        NodeId loss = tape.square(c);
        GradientMap gm = tape.backward(loss);
        CHECK(gm.at(w).at(0) == 0.0);  // untouched leaf still reports zeros
        CHECK(gm.at(w).at(1) == 0.0);
        (void)w;
    }

    SUBCASE("masked-max tie routes gradient to the first index") {
        Tape tape;
        NodeId v = tape.leaf(Tensor::from_data({2}, {2.0, 2.0}), true);
        NodeId loss = tape.masked_max(v, {1, 1});
        GradientMap gm = tape.backward(loss);
        CHECK(gm.at(v).at(0) == 1.0);
        CHECK(gm.at(v).at(1) == 0.0);
    }

    SUBCASE("loss must be scalar") {
        Tape tape;
        NodeId v = tape.leaf(Tensor::from_data({2}, {1.0, 2.0}), true);
        CHECK_THROWS_AS(tape.backward(v), NotScalarError);
    }

    SUBCASE("backward leaves forward values untouched") {
        Tape tape;
        NodeId x = tape.leaf(Tensor::from_data({2, 2}, {1, -2, 3, -4}), true);
        NodeId loss = tape.mean(tape.square(tape.tanh(x)));
        const Tensor before = tape.value(loss);
        tape.backward(loss);
        CHECK(tape.value(loss).at(0) == before.at(0));
    }
}

TEST_CASE("forward pass is pure") {
    ParameterSet ps;
    Rng rng(7);
    ps.add("w", random_tensor({3, 3}, rng));
    auto build = [](Tape& t, const NodeMap& ids) {
        NodeId x = t.constant(Tensor::from_data({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}));
        return t.mean(t.tanh(t.matmul(x, ids.at("w"))));
    };
    Tape t1, t2;
    NodeMap m1 = bind_params(t1, ps, false);
    NodeMap m2 = bind_params(t2, ps, false);
    const double a = t1.value(build(t1, m1)).item();
    const double b = t2.value(build(t2, m2)).item();
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}

TEST_CASE("grad_check: linear layer under 1e-6") {
    Rng rng(11);
    ParameterSet ps;
    ps.add("w", random_tensor({4, 3}, rng));
    ps.add("b", random_tensor({3}, rng));
    Tensor x = random_tensor({2, 4}, rng);
    auto build = [&x](Tape& t, const NodeMap& ids) {
        NodeId h = t.add(t.matmul(t.constant(x), ids.at("w")), ids.at("b"));
        return t.mean(t.square(h));
    };
    auto rep = grad_check(ps, build, 1e-5);
    CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("grad_check: constant function has zero error") {
    ParameterSet ps;
    ps.add("w", Tensor::from_data({2}, {1.0, 2.0}));
    auto build = [](Tape& t, const NodeMap&) { return t.constant(Tensor::scalar(4.0)); };
    auto rep = grad_check(ps, build, 1e-5);
    CHECK(rep.max_rel_error == 0.0);
}

TEST_CASE("grad_check: GRU-style cell under 1e-4") {
    const std::int64_t in = 3, H = 4, B = 2;
    Rng rng(13);
    ParameterSet ps;
    ps.add("wx", random_tensor({in, 3 * H}, rng, -0.5, 0.5));
    ps.add("wh", random_tensor({H, 3 * H}, rng, -0.5, 0.5));
    ps.add("b", random_tensor({3 * H}, rng, -0.5, 0.5));
    ps.add("head", random_tensor({H, 1}, rng, -0.5, 0.5));
    Tensor x = random_tensor({B, in}, rng);
    Tensor h0 = random_tensor({B, H}, rng);
    auto build = [&](Tape& t, const NodeMap& ids) {
        NodeId xn = t.constant(x);
        NodeId hn = t.constant(h0);
        NodeId xg = t.add(t.matmul(xn, ids.at("wx")), ids.at("b"));
        NodeId hg = t.matmul(hn, ids.at("wh"));
        NodeId z = t.sigmoid(t.add(t.slice(xg, 0, H), t.slice(hg, 0, H)));
        NodeId r = t.sigmoid(t.add(t.slice(xg, H, H), t.slice(hg, H, H)));
        NodeId c = t.tanh(t.add(t.slice(xg, 2 * H, H), t.multiply(r, t.slice(hg, 2 * H, H))));
        NodeId hnew = t.add(hn, t.multiply(z, t.sub(c, hn)));
        return t.mean(t.square(t.matmul(hnew, ids.at("head"))));
    };
    auto rep = grad_check(ps, build, 1e-5);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("grad_check detects a non-deterministic builder") {
    ParameterSet ps;
    ps.add("w", Tensor::from_data({1}, {0.5}));
    int calls = 0;
    auto build = [&calls](Tape& t, const NodeMap& ids) {
        NodeId noise = t.constant(Tensor::scalar(0.01 * static_cast<double>(calls++)));
        return t.sum(t.add(t.square(ids.at("w")), noise));
    };
    CHECK_THROWS_AS(grad_check(ps, build, 1e-5), NondeterminismError);
}

TEST_CASE("every op kind passes grad_check on random shapes") {
    Rng rng(101);
    const double eps = 1e-5;
    const int trials = 100;

    auto check = [&](const char* label, ParameterSet& ps, const GraphBuilder& build) {
        auto rep = grad_check(ps, build, eps);
        INFO(label << " worst " << rep.worst_entry << " analytic " << rep.analytic << " numeric " << rep.numeric);
        CHECK(rep.max_rel_error < 1e-4);
    };

    for (int trial = 0; trial < trials; ++trial) {
        const std::int64_t r = 1 + rng.uniform_int(4);
        const std::int64_t c = 1 + rng.uniform_int(4);
        const std::int64_t k = 1 + rng.uniform_int(4);

        {
            ParameterSet ps;
            ps.add("a", random_tensor({r, k}, rng));
            ps.add("b", random_tensor({k, c}, rng));
            check("matmul", ps, [](Tape& t, const NodeMap& m) { return t.mean(t.matmul(m.at("a"), m.at("b"))); });
        }
        {
            ParameterSet ps;
            ps.add("a", random_tensor({r, c}, rng));
            ps.add("b", random_tensor({c}, rng));
            check("add+broadcast", ps, [](Tape& t, const NodeMap& m) {
                return t.mean(t.square(t.add(m.at("a"), m.at("b"))));
            });
        }
        {
            ParameterSet ps;
            ps.add("a", random_tensor({r, c}, rng));
            ps.add("b", random_tensor({r, c}, rng));
            check("multiply", ps, [](Tape& t, const NodeMap& m) { return t.sum(t.multiply(m.at("a"), m.at("b"))); });
        }
        {
            ParameterSet ps;
            ps.add("x", random_tensor({r, c}, rng, -2.0, 2.0));
            check("tanh", ps, [](Tape& t, const NodeMap& m) { return t.mean(t.tanh(m.at("x"))); });
            check("sigmoid", ps, [](Tape& t, const NodeMap& m) { return t.mean(t.sigmoid(m.at("x"))); });
            check("square", ps, [](Tape& t, const NodeMap& m) { return t.mean(t.square(m.at("x"))); });
            check("sum", ps, [](Tape& t, const NodeMap& m) { return t.sum(t.square(m.at("x"))); });
        }
        {
            ParameterSet ps;
            ps.add("x", random_tensor_off_kink({r, c}, rng));
            check("relu", ps, [](Tape& t, const NodeMap& m) { return t.mean(t.relu(m.at("x"))); });
            check("abs", ps, [](Tape& t, const NodeMap& m) { return t.mean(t.abs(m.at("x"))); });
        }
        {
            // Distinct, well-separated values so the finite difference never
            // flips the winning index.
            Tensor v = Tensor::zeros({r, c});
            std::vector<std::uint8_t> mask(static_cast<std::size_t>(r * c), 0);
            for (std::int64_t i = 0; i < r; ++i) {
                const std::int64_t forced = rng.uniform_int(static_cast<int>(c));
                for (std::int64_t j = 0; j < c; ++j) {
                    v.at(i, j) = 0.05 * static_cast<double>(i * c + j) + rng.uniform_range(0.0, 0.01);
                    mask[static_cast<std::size_t>(i * c + j)] = (j == forced || rng.uniform() < 0.5) ? 1 : 0;
                }
            }
            ParameterSet ps;
            ps.add("v", v);
            check("masked_max", ps, [mask](Tape& t, const NodeMap& m) {
                return t.mean(t.masked_max(m.at("v"), mask));
            });

            std::vector<std::int32_t> idx;
            for (std::int64_t i = 0; i < r; ++i) idx.push_back(rng.uniform_int(static_cast<int>(c)));
            check("gather_index", ps, [idx](Tape& t, const NodeMap& m) {
                return t.mean(t.square(t.gather_index(m.at("v"), idx)));
            });
        }
        {
            ParameterSet ps;
            ps.add("a", random_tensor({r, c}, rng));
            ps.add("b", random_tensor({r, c}, rng));
            const int axis = rng.uniform_int(2);
            check("concat", ps, [axis](Tape& t, const NodeMap& m) {
                return t.mean(t.square(t.concat({m.at("a"), m.at("b")}, axis)));
            });
            const std::int64_t start = rng.uniform_int(static_cast<int>(c));
            const std::int64_t len = 1 + rng.uniform_int(static_cast<int>(c - start));
            check("slice", ps, [start, len](Tape& t, const NodeMap& m) {
                return t.mean(t.square(t.slice(m.at("a"), start, len)));
            });
            check("reshape", ps, [r, c](Tape& t, const NodeMap& m) {
                return t.mean(t.square(t.reshape(m.at("a"), {c * r})));
            });
            check("mean", ps, [](Tape& t, const NodeMap& m) { return t.mean(m.at("a")); });
        }
    }
}

TEST_CASE("parameter set bookkeeping") {
    ParameterSet ps;
    ps.add("w", Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(ps.add("w", Tensor::zeros({1})), ValidationError);
    CHECK(ps.version() == 0);
    ps.set("w", Tensor::full({2, 2}, 1.0));
    CHECK(ps.version() == 1);
    CHECK_THROWS_AS(ps.set("w", Tensor::zeros({3})), ShapeError);
    CHECK_THROWS_AS(ps.at("nope"), ValidationError);
}

TEST_CASE("QVL1 serialization") {
    Rng rng(23);
    ParameterSet ps;
    ps.add("alpha", random_tensor({3, 2}, rng));
    ps.add("beta/gamma", random_tensor({5}, rng));
    ps.add("s", Tensor::scalar(-0.25));

    SUBCASE("round trip is bit exact") {
        auto bytes = serialize_params(ps);
        ParameterSet back = deserialize_params(bytes.data(), bytes.size());
        REQUIRE(back.size() == ps.size());
        for (const auto& [name, t] : ps.entries()) {
            const Tensor& u = back.at(name);
            REQUIRE(u.shape() == t.shape());
            CHECK(std::memcmp(u.data(), t.data(), sizeof(double) * static_cast<std::size_t>(t.numel())) == 0);
        }
    }

    SUBCASE("file round trip") {
        const std::string path = "qvl_test_params.qvl";
        save_params(ps, path);
        ParameterSet back = load_params(path);
        CHECK(back.at("s").item() == -0.25);
        std::remove(path.c_str());
    }

    SUBCASE("corrupted magic is rejected") {
        auto bytes = serialize_params(ps);
        bytes[0] = 'X';
        CHECK_THROWS_AS(deserialize_params(bytes.data(), bytes.size()), ValidationError);
    }

    SUBCASE("truncated stream is rejected") {
        auto bytes = serialize_params(ps);
        bytes.resize(bytes.size() - 3);
        CHECK_THROWS_AS(deserialize_params(bytes.data(), bytes.size()), ValidationError);
    }
}
