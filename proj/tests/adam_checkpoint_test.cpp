#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "harfuse/adam.hpp"
#include "harfuse/checkpoint.hpp"
#include "oracle_utils.hpp"

using namespace harfuse;
namespace fs = std::filesystem;

TEST_CASE("adam: zero gradient on a fresh state leaves parameters unchanged") {
    Tensor w({3}, {1.5, -2.0, 0.25});
    w.set_requires_grad(true);
    const Array before = w.data;
    AdamState st;
    std::vector<Tensor*> params{&w};
    adam_step(params, st);
    CHECK(st.t == 1);
    for (Index i = 0; i < 3; ++i) CHECK(w.data[i] == before[i]);
    // and again, so decayed-but-zero moments stay inert
    adam_step(params, st);
    CHECK(st.t == 2);
    for (Index i = 0; i < 3; ++i) CHECK(w.data[i] == before[i]);
}

TEST_CASE("adam: hand-executed first step, w=0 grad=1 lr=1e-4") {
    Tensor w = Tensor::scalar(0.0);
    w.set_requires_grad(true);
    (*w.grad)[0] = 1.0;
    AdamState st;
    std::vector<Tensor*> params{&w};
    adam_step(params, st);

    const double m = 0.1 * 1.0;
    const double v = 0.001 * 1.0;
    const double mhat = m / (1.0 - 0.9);
    const double vhat = v / (1.0 - 0.999);
    const double expected = -1e-4 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(w.data[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(w.data[0] == doctest::Approx(-1e-4).epsilon(1e-6));
    CHECK((*w.grad)[0] == 0.0);  // grads cleared after the update
}

TEST_CASE("adam: 200 steps descend (w-3)^2 to |w-3| < 0.05") {
    Tensor w = Tensor::scalar(0.0);
    w.set_requires_grad(true);
    AdamState st;
    st.lr = 0.1;
    std::vector<Tensor*> params{&w};
    for (int i = 0; i < 200; ++i) {
        Tape tape;
        TapeScope scope(tape);
        Tensor d = shift(w, -3.0);
        Tensor loss = d * d;
        backward(loss, tape);
        adam_step(params, st);
    }
    CHECK(std::abs(w.data[0] - 3.0) < 0.05);
    CHECK(st.t == 200);
}

TEST_CASE("adam: parameter without a gradient buffer is a state error") {
    Tensor w = Tensor::scalar(1.0);  // requires_grad never set
    AdamState st;
    std::vector<Tensor*> params{&w};
    CHECK_THROWS_AS(adam_step(params, st), StateError);
}

TEST_CASE("adam: moment buffers match parameter lengths and t increments") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({3}, {0, 0, 0});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    a.grad->setConstant(0.5);
    b.grad->setConstant(-1.0);
    AdamState st;
    std::vector<Tensor*> params{&a, &b};
    adam_step(params, st);
    adam_step(params, st);
    CHECK(st.t == 2);
    REQUIRE(st.moments.count(a.grad.get()) == 1);
    REQUIRE(st.moments.count(b.grad.get()) == 1);
    CHECK(st.moments[a.grad.get()].m.size() == 4);
    CHECK(st.moments[a.grad.get()].v.size() == 4);
    CHECK(st.moments[b.grad.get()].m.size() == 3);
}

TEST_CASE("adam: two tape passes accumulate, one step consumes the sum") {
    // grad of sum(w) twice = 2 per element; a single step must see 2, not 1
    Tensor w({2}, {0.0, 0.0});
    w.set_requires_grad(true);
    for (int pass = 0; pass < 2; ++pass) {
        Tape tape;
        TapeScope scope(tape);
        backward(sum_all(w), tape);
    }
    CHECK((*w.grad)[0] == 2.0);
    AdamState st;
    std::vector<Tensor*> params{&w};
    adam_step(params, st);
    const double expected = -1e-4 * 2.0 / (2.0 + 1e-8);
    CHECK(w.data[0] == doctest::Approx(expected).epsilon(1e-10));
}

// ---------------------------------------------------------------------------

namespace {

fs::path temp_dir() {
    fs::path p = fs::temp_directory_path() / "harfuse_ckpt_test";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("checkpoint: round trip is bit exact, order and names preserved") {
    oracle::Uniform rng(42);
    NamedTensors entries;
    entries.emplace_back("vision/conv/kernel", oracle::random_tensor({4, 1, 3}, rng, -3.0, 3.0));
    entries.emplace_back("vision/conv/bias", Tensor({4}, {0.0, -0.0, 1e-300, 1e300}));
    entries.emplace_back("inertial/lstm0/W", oracle::random_tensor({6, 8}, rng, -1.0, 1.0));
    entries.emplace_back("scalar/t", Tensor::scalar(3.141592653589793238));

    const fs::path manifest = temp_dir() / "model.ckpt";
    save_checkpoint(manifest, entries);
    NamedTensors loaded = load_checkpoint(manifest);

    REQUIRE(loaded.size() == entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(loaded[i].first == entries[i].first);
        CHECK(loaded[i].second.shape == entries[i].second.shape);
        REQUIRE(loaded[i].second.size() == entries[i].second.size());
        for (Index j = 0; j < entries[i].second.size(); ++j) {
            const auto want = std::bit_cast<std::uint64_t>(entries[i].second.data[j]);
            const auto got = std::bit_cast<std::uint64_t>(loaded[i].second.data[j]);
            CHECK(want == got);  // -0.0, denormals and all
        }
        CHECK_FALSE(loaded[i].second.requires_grad);
    }
}

TEST_CASE("checkpoint: saved files are byte-identical across runs") {
    oracle::Uniform rng(7);
    NamedTensors entries;
    entries.emplace_back("w", oracle::random_tensor({5, 5}, rng, -2.0, 2.0));
    const fs::path m1 = temp_dir() / "a.ckpt";
    const fs::path m2 = temp_dir() / "b.ckpt";
    save_checkpoint(m1, entries);
    save_checkpoint(m2, entries);

    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    CHECK(slurp(fs::path(m1.string() + ".bin")) == slurp(fs::path(m2.string() + ".bin")));
    // manifests differ only in the sidecar name they reference
    std::string t1 = slurp(m1), t2 = slurp(m2);
    CHECK(t1.find("a.ckpt.bin") != std::string::npos);
    CHECK(t2.find("b.ckpt.bin") != std::string::npos);
}

TEST_CASE("checkpoint: missing, malformed and truncated inputs are data errors") {
    const fs::path dir = temp_dir();
    CHECK_THROWS_AS(load_checkpoint(dir / "nope.ckpt"), DataError);

    const fs::path bad = dir / "bad.ckpt";
    std::ofstream(bad) << "{ not json";
    CHECK_THROWS_AS(load_checkpoint(bad), DataError);

    NamedTensors entries;
    entries.emplace_back("w", Tensor({4}, {1, 2, 3, 4}));
    const fs::path trunc = dir / "trunc.ckpt";
    save_checkpoint(trunc, entries);
    fs::resize_file(trunc.string() + ".bin", 8);  // keep one value of four
    CHECK_THROWS_AS(load_checkpoint(trunc), DataError);
}

TEST_CASE("checkpoint: empty parameter list round-trips") {
    const fs::path manifest = temp_dir() / "empty.ckpt";
    save_checkpoint(manifest, {});
    CHECK(load_checkpoint(manifest).empty());
}
