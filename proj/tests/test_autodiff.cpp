#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wakeforge/autodiff.hpp"
#include "wakeforge/checkpoint.hpp"
#include "wakeforge/nn.hpp"
#include "wakeforge/optimizer.hpp"
#include "wakeforge/rng.hpp"

using namespace wakeforge;
using ad::Tensor;
using Mat = ad::Mat<double>;

namespace {

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.uniform(-1.0, 1.0);
  return m;
}

// Reduce any-shaped op output to a scalar so grad_check applies.
Tensor<double> summarize(const Tensor<double>& t) { return ad::mean(t); }

}  // namespace

TEST_CASE("gradients of every op pass central finite differences") {
  Rng rng(41);
  double worst = 0.0;
  auto check = [&](const char* name, const std::function<Tensor<double>()>& f,
                   std::vector<Tensor<double>> params) {
    const double err = ad::grad_check<double>(f, std::move(params));
    INFO(name << " max rel err " << err);
    CHECK(err < 1e-4);
    worst = std::max(worst, err);
  };

  for (int round = 0; round < 3; ++round) {
    const Eigen::Index m = 2 + rng.uniform_int(7);
    const Eigen::Index k = 2 + rng.uniform_int(7);
    const Eigen::Index n = 2 + rng.uniform_int(31);

    auto a = Tensor<double>::param(random_mat(rng, m, k));
    auto b = Tensor<double>::param(random_mat(rng, k, n));
    check("matmul", [&] { return summarize(ad::matmul(a, b)); }, {a, b});

    auto c = Tensor<double>::param(random_mat(rng, m, n));
    auto d = Tensor<double>::param(random_mat(rng, m, n));
    check("add", [&] { return summarize(ad::add(c, d)); }, {c, d});
    check("sub", [&] { return summarize(ad::sub(c, d)); }, {c, d});

    auto bias = Tensor<double>::param(random_mat(rng, 1, n));
    check("add_broadcast", [&] { return summarize(ad::add(c, bias)); }, {c, bias});

    check("scale", [&] { return summarize(ad::scale(c, 2.5)); }, {c});
    check("transpose", [&] { return summarize(ad::transpose(c)); }, {c});

    auto e = Tensor<double>::param(random_mat(rng, m, 3));
    check("concat_cols", [&] { return summarize(ad::concat_cols(c, e)); }, {c, e});
    auto f = Tensor<double>::param(random_mat(rng, 2, n));
    check("concat_rows", [&] { return summarize(ad::concat_rows<double>({c, f})); }, {c, f});
    check("slice_cols", [&] { return summarize(ad::slice_cols(c, 1, n - 1)); }, {c});
    check("slice_rows", [&] { return summarize(ad::slice_rows(c, 1, m - 1)); }, {c});

    check("row_softmax", [&] { return summarize(ad::row_softmax(c)); }, {c});
    check("gelu", [&] { return summarize(ad::gelu(c)); }, {c});
    check("mean", [&] { return ad::mean(c); }, {c});

    auto gamma = Tensor<double>::param(random_mat(rng, 1, n, 0.5));
    auto beta = Tensor<double>::param(random_mat(rng, 1, n, 0.5));
    check("layer_norm", [&] { return summarize(ad::layer_norm(c, gamma, beta)); },
          {c, gamma, beta});

    ad::BoolArray mask(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j) mask(i, j) = rng.bernoulli(0.3);
    check("masked_fill", [&] { return summarize(ad::masked_fill(c, mask, -2.0)); }, {c});

    const Mat target = random_mat(rng, m, n);
    check("mse_loss", [&] { return ad::mse_loss(c, target); }, {c});
    ad::BoolArray loss_mask = mask;
    loss_mask(0, 0) = true;  // ensure non-empty
    check("masked_mse_loss", [&] { return ad::mse_loss(c, target, &loss_mask); }, {c});

    std::vector<int> idx;
    for (int i = 0; i < 6; ++i) idx.push_back(rng.uniform_int(static_cast<int>(m)));
    check("gather_rows", [&] { return summarize(ad::gather_rows(c, idx)); }, {c});
    std::vector<int> dst;
    for (Eigen::Index i = 0; i < m; ++i) dst.push_back(rng.uniform_int(4));
    check("scatter_sum_rows", [&] { return summarize(ad::scatter_sum_rows(c, dst, 4)); }, {c});
    check("mean_rows", [&] { return summarize(ad::mean_rows(c)); }, {c});
    check("broadcast_row", [&] { return summarize(ad::broadcast_row(bias, 5)); }, {bias});
  }
  MESSAGE("worst op gradient error: " << worst);
}

TEST_CASE("softmax rows sum to one and honour -inf masking exactly") {
  Rng rng(42);
  const Mat raw = random_mat(rng, 6, 9, 3.0);
  auto x = Tensor<double>::constant(raw);
  const Mat soft = ad::row_softmax(x).value();
  for (Eigen::Index r = 0; r < soft.rows(); ++r)
    CHECK(std::abs(soft.row(r).sum() - 1.0) < 1e-12);

  ad::BoolArray mask = ad::BoolArray::Constant(6, 9, false);
  mask.col(2) = true;
  mask.col(7) = true;
  auto masked = ad::row_softmax(
      ad::masked_fill(x, mask, -std::numeric_limits<double>::infinity()));
  for (Eigen::Index r = 0; r < 6; ++r) {
    CHECK(masked.value()(r, 2) == 0.0);
    CHECK(masked.value()(r, 7) == 0.0);
    CHECK(std::abs(masked.value().row(r).sum() - 1.0) < 1e-12);
  }

  Mat all_masked = Mat::Constant(1, 3, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(ad::row_softmax(Tensor<double>::constant(all_masked)),
                  std::invalid_argument);
}

TEST_CASE("layer_norm output is standardized before the affine map") {
  Rng rng(43);
  const Eigen::Index n = 16;
  auto x = Tensor<double>::constant(random_mat(rng, 5, n, 4.0));
  auto gamma = Tensor<double>::constant(Mat::Ones(1, n));
  auto beta = Tensor<double>::constant(Mat::Zero(1, n));
  const Mat y = ad::layer_norm(x, gamma, beta).value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    CHECK(std::abs(y.row(r).mean()) < 1e-10);
    const double var = (y.row(r).array() - y.row(r).mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts variance slightly
  }
}

TEST_CASE("gelu endpoints") {
  auto x = Tensor<double>::constant([] {
    Mat m(1, 3);
    m << 0.0, 10.0, -10.0;
    return m;
  }());
  const Mat y = ad::gelu(x).value();
  CHECK(y(0, 0) == 0.0);
  CHECK(std::abs(y(0, 1) - 10.0) < 1e-8);
  CHECK(std::abs(y(0, 2)) < 1e-8);
}

TEST_CASE("shape mismatches carry both shapes in the message") {
  auto a = Tensor<double>::constant(Mat::Zero(3, 4));
  auto b = Tensor<double>::constant(Mat::Zero(5, 2));
  CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("3x4"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("5x2"), std::invalid_argument);
  CHECK_THROWS_AS(ad::add(a, b), std::invalid_argument);
}

TEST_CASE("grad_check on a quadratic form is near machine precision") {
  Rng rng(44);
  const Mat q = random_mat(rng, 4, 4);
  auto x = Tensor<double>::param(random_mat(rng, 4, 1));
  const auto f = [&] {
    auto qx = ad::matmul(Tensor<double>::constant(q), x);
    return ad::mean(ad::matmul(ad::transpose(x), qx));
  };
  CHECK(ad::grad_check<double>(f, {x}) < 1e-9);
}

TEST_CASE("multi-head attention contracts") {
  Rng rng(45);

  SUBCASE("single vertex attends to itself with weight one") {
    const int d = 4;
    nn::MhaWeights<double> w{Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)), 2};
    auto x = Tensor<double>::constant(random_mat(rng, 1, d));
    std::vector<Mat> maps;
    nn::multi_head_attention(x, w, nullptr, &maps);
    REQUIRE(maps.size() == 2);
    for (const Mat& m : maps) {
      REQUIRE(m.rows() == 1);
      CHECK(m(0, 0) == 1.0);
    }
  }

  SUBCASE("identical rows attend uniformly") {
    const int d = 6;
    nn::MhaWeights<double> w{Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)), 3};
    Mat rows(5, d);
    const Mat one_row = random_mat(rng, 1, d);
    for (int r = 0; r < 5; ++r) rows.row(r) = one_row;
    std::vector<Mat> maps;
    nn::multi_head_attention(Tensor<double>::constant(rows), w, nullptr, &maps);
    for (const Mat& m : maps)
      for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index j = 0; j < 5; ++j)
          CHECK(m(i, j) == doctest::Approx(0.2).epsilon(1e-12));
  }

  SUBCASE("hand-computed 2x2 single-head attention") {
    // single head, d = 2; the oracle below evaluates the definition with
    // plain Eigen arithmetic, no autodiff involved
    Mat x(2, 2), wq(2, 2), wk(2, 2), wv(2, 2), wo(2, 2);
    x << 1.0, 0.5, -0.25, 0.75;
    wq << 0.2, -0.4, 0.6, 0.1;
    wk << -0.3, 0.5, 0.8, -0.2;
    wv << 1.0, 0.0, 0.0, -1.0;
    wo << 0.5, 0.5, -0.5, 1.0;

    const Mat q = x * wq;
    const Mat kk = x * wk;
    const Mat v = x * wv;
    Mat scores = q * kk.transpose() / std::sqrt(2.0);
    Mat attn(2, 2);
    for (int r = 0; r < 2; ++r) {
      const double mx = scores.row(r).maxCoeff();
      attn(r, 0) = std::exp(scores(r, 0) - mx);
      attn(r, 1) = std::exp(scores(r, 1) - mx);
      attn.row(r) /= attn.row(r).sum();
    }
    const Mat expect = (attn * v) * wo;

    nn::MhaWeights<double> w{Tensor<double>::param(wq), Tensor<double>::param(wk),
                             Tensor<double>::param(wv), Tensor<double>::param(wo), 1};
    const Mat got = nn::multi_head_attention(Tensor<double>::constant(x), w).value();
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("masked keys receive exactly zero attention") {
    const int d = 4;
    nn::MhaWeights<double> w{Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)),
                             Tensor<double>::param(random_mat(rng, d, d)), 2};
    auto x = Tensor<double>::constant(random_mat(rng, 6, d));
    nn::KeyMask mask = nn::KeyMask::Constant(6, true);
    mask(3) = false;
    mask(5) = false;
    std::vector<Mat> maps;
    nn::multi_head_attention(x, w, &mask, &maps);
    for (const Mat& m : maps)
      for (Eigen::Index r = 0; r < 6; ++r) {
        CHECK(m(r, 3) == 0.0);
        CHECK(m(r, 5) == 0.0);
        CHECK(std::abs(m.row(r).sum() - 1.0) < 1e-12);
      }

    nn::KeyMask none = nn::KeyMask::Constant(6, false);
    CHECK_THROWS_AS(nn::multi_head_attention(x, w, &none), std::invalid_argument);
  }

  SUBCASE("attention-only block gradient") {
    const int d = 8;
    nn::MhaWeights<double> w{Tensor<double>::param(random_mat(rng, d, d, 0.4)),
                             Tensor<double>::param(random_mat(rng, d, d, 0.4)),
                             Tensor<double>::param(random_mat(rng, d, d, 0.4)),
                             Tensor<double>::param(random_mat(rng, d, d, 0.4)), 2};
    auto x = Tensor<double>::param(random_mat(rng, 5, d, 0.5));
    const auto f = [&] { return ad::mean(nn::multi_head_attention(x, w)); };
    CHECK(ad::grad_check<double>(f, {x, w.wq, w.wk, w.wv, w.wo}) < 1e-6);
  }
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto build = [] {
    Rng rng(46);
    auto a = Tensor<double>::param(random_mat(rng, 6, 8));
    auto b = Tensor<double>::param(random_mat(rng, 8, 4));
    auto loss = ad::mean(ad::gelu(ad::matmul(ad::row_softmax(a), b)));
    loss.backward();
    return std::tuple{loss.value()(0, 0), a.grad(), b.grad()};
  };
  const auto [l1, ga1, gb1] = build();
  const auto [l2, ga2, gb2] = build();
  CHECK(l1 == l2);
  CHECK((ga1.array() == ga2.array()).all());
  CHECK((gb1.array() == gb2.array()).all());
}

TEST_CASE("learning-rate schedule endpoints and shape") {
  LrSchedule s{4e-4, 100, 1000, 1e-6};
  CHECK(lr_at(0, s) == 0.0);
  CHECK(lr_at(100, s) == doctest::Approx(4e-4).epsilon(1e-15));
  CHECK(lr_at(1000, s) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lr_at(5000, s) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lr_at(50, s) == doctest::Approx(2e-4).epsilon(1e-12));
  // cosine is monotone decreasing past warmup
  double prev = lr_at(100, s);
  for (long step = 150; step <= 1000; step += 50) {
    const double lr = lr_at(step, s);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_at(0, LrSchedule{1e-3, 10, 10, 0.0}), std::invalid_argument);
}

TEST_CASE("optimizer state serializes and restores exactly") {
  Rng rng(47);
  auto w1 = Tensor<double>::param(random_mat(rng, 3, 4));
  auto w2 = Tensor<double>::param(random_mat(rng, 1, 4));
  AdamW<double> opt({w1, w2}, {.weight_decay = 0.01});
  const Mat target = Mat::Zero(3, 4);
  for (int step = 0; step < 5; ++step) {
    opt.zero_grad();
    ad::mse_loss(ad::add(w1, w2), target).backward();
    opt.step(1e-2);
  }
  const auto j = wakeforge::train_state_to_json(opt, 5);

  AdamW<double> fresh({w1, w2}, {.weight_decay = 0.01});
  long schedule_step = 0;
  wakeforge::train_state_from_json(j, fresh, schedule_step);
  CHECK(schedule_step == 5);
  CHECK(fresh.step_count() == opt.step_count());
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK((fresh.first_moments()[i].array() == opt.first_moments()[i].array()).all());
    CHECK((fresh.second_moments()[i].array() == opt.second_moments()[i].array()).all());
  }

  AdamW<double> wrong({w1});
  CHECK_THROWS_AS(wakeforge::train_state_from_json(j, wrong, schedule_step),
                  std::invalid_argument);
}

TEST_CASE("one AdamW step descends a parabola; zero lr freezes everything") {
  auto w = Tensor<double>::param(Mat::Ones(1, 1));
  AdamW<double> opt({w});
  const Mat zero1 = Mat::Zero(1, 1);
  auto loss = ad::mse_loss(w, zero1);  // w^2
  loss.backward();
  opt.step(0.01);
  CHECK(std::abs(w.value()(0, 0)) < 1.0);
  CHECK(w.value()(0, 0) > 0.0);

  auto frozen = Tensor<double>::param(Mat::Constant(2, 2, 0.7));
  const Mat before = frozen.value();
  AdamW<double> opt2({frozen}, {.weight_decay = 0.5});
  const Mat zero2 = Mat::Zero(2, 2);
  auto loss2 = ad::mse_loss(frozen, zero2);
  loss2.backward();
  opt2.step(0.0);
  CHECK((frozen.value().array() == before.array()).all());
}
