#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "bseg/nn/checkpoint.hpp"
#include "bseg/nn/kernels.hpp"
#include "bseg/nn/layers.hpp"
#include "bseg/nn/tensor.hpp"
#include "bseg/nn/vnet.hpp"
#include "bseg/rng.hpp"
#include "ref/reference.hpp"
#include "test_util.hpp"

using namespace bseg;
using namespace bseg::nn;
using bseg::testutil::near;

namespace {

Tensor random_tensor(Rng& rng, int64_t n, int64_t c, int64_t h, int64_t w, int64_t d,
                     double lo = -1.0, double hi = 1.0) {
  Tensor t(n, c, h, w, d);
  for (auto& v : t.data) v = float(rng.uniform(lo, hi));
  return t;
}

std::vector<float> random_floats(Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.uniform(lo, hi));
  return v;
}

double dot_double(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += double(a.data[i]) * double(b.data[i]);
  return s;
}

}  // namespace

TEST_CASE("conv forward matches the double-precision reference") {
  Rng rng(1);
  struct Case {
    int k, stride, pad;
  };
  for (Case cs : {Case{3, 1, 1}, Case{1, 1, 0}, Case{2, 2, 0}, Case{3, 1, 0}}) {
    for (int t = 0; t < 6; ++t) {
      int64_t n = rng.uniform_int(1, 2), ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
      int64_t h = rng.uniform_int(cs.k, 7), w = rng.uniform_int(cs.k, 7),
              d = rng.uniform_int(cs.k, 7);
      if (cs.stride == 2) {
        h += h % 2;
        w += w % 2;
        d += d % 2;
      }
      Tensor x = random_tensor(rng, n, ci, h, w, d);
      ConvSpec spec{ci, co, cs.k, cs.stride, cs.pad};
      auto wgt = random_floats(rng, size_t(co * ci * cs.k * cs.k * cs.k));
      auto bias = random_floats(rng, size_t(co));

      Tensor y;
      conv3d_forward(x, wgt, bias, y, spec);

      int64_t oh = conv_out_dim(h, cs.k, cs.stride, cs.pad);
      int64_t ow = conv_out_dim(w, cs.k, cs.stride, cs.pad);
      int64_t od = conv_out_dim(d, cs.k, cs.stride, cs.pad);
      REQUIRE(y.h == oh);
      REQUIRE(y.w == ow);
      REQUIRE(y.d == od);

      std::vector<float> yref(size_t(n * co * oh * ow * od), 0.0f);
      ref::conv3d_naive(x.data.data(), wgt.data(), bias.data(), yref.data(), n, ci, h, w, d, co,
                        cs.k, cs.stride, cs.pad);
      for (size_t i = 0; i < yref.size(); ++i)
        REQUIRE(near(y.data[i], yref[i], 1e-4 * (1.0 + std::abs(double(yref[i])))));
    }
  }
}

TEST_CASE("conv backward matches finite differences of the forward") {
  Rng rng(2);
  const ConvSpec spec{2, 3, 3, 1, 1};
  Tensor x = random_tensor(rng, 1, 2, 4, 3, 5);
  auto wgt = random_floats(rng, size_t(3 * 2 * 27));
  auto bias = random_floats(rng, 3);
  Tensor y;
  conv3d_forward(x, wgt, bias, y, spec);
  Tensor r = random_tensor(rng, y.n, y.c, y.h, y.w, y.d);

  Tensor gx;
  std::vector<float> gw(wgt.size(), 0.0f), gb(bias.size(), 0.0f);
  conv3d_backward(x, wgt, r, gx, gw, gb, spec);

  auto loss = [&] {
    Tensor yy;
    conv3d_forward(x, wgt, bias, yy, spec);
    return dot_double(yy, r);
  };
  const double h = 1e-2;
  auto fd_ok = [&](double analytic, double num) {
    return std::abs(analytic - num) <= std::max(2e-2 * std::abs(analytic), 2e-3);
  };
  for (size_t i = 0; i < x.data.size(); i += 7) {
    float keep = x.data[i];
    x.data[i] = keep + float(h);
    double lp = loss();
    x.data[i] = keep - float(h);
    double lm = loss();
    x.data[i] = keep;
    REQUIRE(fd_ok(double(gx.data[i]), (lp - lm) / (2 * h)));
  }
  for (size_t i = 0; i < wgt.size(); i += 11) {
    float keep = wgt[i];
    wgt[i] = keep + float(h);
    double lp = loss();
    wgt[i] = keep - float(h);
    double lm = loss();
    wgt[i] = keep;
    REQUIRE(fd_ok(double(gw[i]), (lp - lm) / (2 * h)));
  }
  for (size_t i = 0; i < bias.size(); ++i) {
    float keep = bias[i];
    bias[i] = keep + float(h);
    double lp = loss();
    bias[i] = keep - float(h);
    double lm = loss();
    bias[i] = keep;
    REQUIRE(fd_ok(double(gb[i]), (lp - lm) / (2 * h)));
  }
}

TEST_CASE("transposed conv doubles resolution and inverts shapes") {
  Rng rng(3);
  Tensor x = random_tensor(rng, 2, 3, 2, 3, 4);
  auto wgt = random_floats(rng, size_t(3 * 2 * 8));
  auto bias = random_floats(rng, 2);
  Tensor y;
  conv_transpose3d_forward(x, wgt, bias, y, 3, 2);
  REQUIRE(y.h == 4);
  REQUIRE(y.w == 6);
  REQUIRE(y.d == 8);

  // each output voxel depends on exactly one input location
  Tensor x2 = x;
  x2.at(0, 1, 1, 2, 3) += 0.5f;
  Tensor y2;
  conv_transpose3d_forward(x2, wgt, bias, y2, 3, 2);
  int64_t changed = 0;
  for (size_t i = 0; i < y.data.size(); ++i)
    if (y.data[i] != y2.data[i]) changed++;
  CHECK(changed <= 2 * 8);  // out_ch * kernel support

  Tensor r = random_tensor(rng, y.n, y.c, y.h, y.w, y.d);
  Tensor gx;
  std::vector<float> gw(wgt.size(), 0.0f), gb(bias.size(), 0.0f);
  conv_transpose3d_backward(x, wgt, r, gx, gw, gb, 3, 2);

  auto loss = [&] {
    Tensor yy;
    conv_transpose3d_forward(x, wgt, bias, yy, 3, 2);
    return dot_double(yy, r);
  };
  const double h = 1e-2;
  for (size_t i = 0; i < x.data.size(); i += 5) {
    float keep = x.data[i];
    x.data[i] = keep + float(h);
    double lp = loss();
    x.data[i] = keep - float(h);
    double lm = loss();
    x.data[i] = keep;
    double num = (lp - lm) / (2 * h);
    REQUIRE(near(double(gx.data[i]), num, std::max(2e-2 * std::abs(num), 2e-3)));
  }
  for (size_t i = 0; i < wgt.size(); i += 3) {
    float keep = wgt[i];
    wgt[i] = keep + float(h);
    double lp = loss();
    wgt[i] = keep - float(h);
    double lm = loss();
    wgt[i] = keep;
    double num = (lp - lm) / (2 * h);
    REQUIRE(near(double(gw[i]), num, std::max(2e-2 * std::abs(num), 2e-3)));
  }
}

TEST_CASE("batch norm normalizes per channel over the batch") {
  Rng rng(4);
  Norm3d bn("bn", NormKind::batch, 3);
  Tensor x = random_tensor(rng, 2, 3, 3, 4, 5, -3.0, 5.0);
  Tensor y = bn.forward(x, /*train=*/true);

  const int64_t sp = x.spatial();
  for (int64_t c = 0; c < 3; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int64_t n = 0; n < 2; ++n) {
      const float* p = y.chan(n, c);
      for (int64_t i = 0; i < sp; ++i) {
        sum += p[i];
        sumsq += double(p[i]) * double(p[i]);
      }
    }
    double m = double(2 * sp);
    CHECK(near(sum / m, 0.0, 1e-5));
    CHECK(near(sumsq / m, 1.0, 1e-3));
  }
}

TEST_CASE("duplicating the batch leaves batch-norm outputs unchanged") {
  // population variance: stats of [x, x] equal stats of [x]
  Rng rng(5);
  Tensor x1 = random_tensor(rng, 2, 2, 3, 3, 3);
  Tensor x2(4, 2, 3, 3, 3);
  std::copy(x1.data.begin(), x1.data.end(), x2.data.begin());
  std::copy(x1.data.begin(), x1.data.end(), x2.data.begin() + x1.data.size());

  Norm3d a("a", NormKind::batch, 2), b("b", NormKind::batch, 2);
  Tensor y1 = a.forward(x1, true);
  Tensor y2 = b.forward(x2, true);
  for (size_t i = 0; i < y1.data.size(); ++i) REQUIRE(y1.data[i] == y2.data[i]);
  // and the running statistics agree too
  for (size_t c = 0; c < 2; ++c) {
    CHECK(a.running_mean()[c] == b.running_mean()[c]);
    CHECK(a.running_var()[c] == b.running_var()[c]);
  }
}

TEST_CASE("batch norm eval mode uses running statistics") {
  Rng rng(6);
  Norm3d bn("bn", NormKind::batch, 2);
  Tensor x = random_tensor(rng, 2, 2, 2, 2, 2, 1.0, 3.0);
  Tensor x_eval = random_tensor(rng, 1, 2, 2, 2, 2, 1.0, 3.0);

  Tensor e0 = bn.forward(x_eval, false);  // fresh stats: mean 0, var 1
  for (size_t i = 0; i < e0.data.size(); ++i)
    CHECK(near(e0.data[i], x_eval.data[i] / std::sqrt(1.0 + 1e-5), 1e-5));

  bn.forward(x, true);
  Tensor e1 = bn.forward(x_eval, false);
  bool diff = false;
  for (size_t i = 0; i < e1.data.size(); ++i) diff = diff || e1.data[i] != e0.data[i];
  CHECK(diff);
}

TEST_CASE("instance norm treats batch items independently") {
  Rng rng(7);
  Tensor x = random_tensor(rng, 2, 2, 3, 3, 3);
  Norm3d in1("n", NormKind::instance, 2);
  Tensor y = in1.forward(x, true);

  // swap in a different second item; first item's output must not move
  Tensor x2 = x;
  for (int64_t c = 0; c < 2; ++c) {
    float* p = x2.chan(1, c);
    for (int64_t i = 0; i < x2.spatial(); ++i) p[i] += 2.5f;
  }
  Norm3d in2("n", NormKind::instance, 2);
  Tensor y2 = in2.forward(x2, true);
  for (int64_t c = 0; c < 2; ++c) {
    const float* a = y.chan(0, c);
    const float* b = y2.chan(0, c);
    for (int64_t i = 0; i < y.spatial(); ++i) REQUIRE(a[i] == b[i]);
  }
}

TEST_CASE("activations and their gradients") {
  Tensor x(1, 1, 1, 1, 4);
  x.data = {-2.0f, -0.5f, 0.5f, 2.0f};
  Activation relu(ActKind::relu, 0.0);
  Tensor y = relu.forward(x);
  CHECK(y.data == std::vector<float>{0.0f, 0.0f, 0.5f, 2.0f});
  Tensor g(1, 1, 1, 1, 4);
  g.fill_(1.0f);
  Tensor gx = relu.backward(g);
  CHECK(gx.data == std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f});

  Activation leaky(ActKind::leaky_relu, 0.1);
  Tensor y2 = leaky.forward(x);
  CHECK(near(y2.data[0], -0.2, 1e-7));
  CHECK(y2.data[3] == 2.0f);
  Tensor gx2 = leaky.backward(g);
  CHECK(near(gx2.data[1], 0.1, 1e-7));
  CHECK(gx2.data[2] == 1.0f);
}

TEST_CASE("channel concat and split round trip") {
  Rng rng(8);
  Tensor a = random_tensor(rng, 2, 3, 2, 2, 2);
  Tensor b = random_tensor(rng, 2, 2, 2, 2, 2);
  Tensor cat = concat_channels(a, b);
  REQUIRE(cat.c == 5);
  CHECK(cat.at(1, 0, 1, 1, 1) == a.at(1, 0, 1, 1, 1));
  CHECK(cat.at(1, 3, 1, 0, 1) == b.at(1, 0, 1, 0, 1));
  Tensor ga, gb;
  split_channels(cat, 3, ga, gb);
  CHECK(ga.data == a.data);
  CHECK(gb.data == b.data);

  Tensor bad = random_tensor(rng, 2, 2, 3, 2, 2);
  CHECK_THROWS_AS(concat_channels(a, bad), ShapeMismatchError);
}

TEST_CASE("sigmoid and softmax heads") {
  Tensor z(1, 1, 1, 1, 3);
  z.data = {0.0f, 4.0f, -4.0f};
  Tensor p = z;
  sigmoid_inplace(p);
  CHECK(p.data[0] == 0.5f);
  CHECK(p.data[1] > 0.98f);
  CHECK(p.data[2] < 0.02f);

  Rng rng(9);
  Tensor logits = random_tensor(rng, 2, 4, 2, 2, 2, -3.0, 3.0);
  Tensor sm = softmax_channels(logits);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t s = 0; s < logits.spatial(); ++s) {
      double sum = 0.0;
      for (int64_t c = 0; c < 4; ++c) sum += double(sm.data[size_t((n * 4 + c) * 8 + s)]);
      REQUIRE(near(sum, 1.0, 1e-6));
    }

  // gradient of sum(r * softmax(z)) via the chain rule vs finite differences
  Tensor r = random_tensor(rng, 2, 4, 2, 2, 2);
  Tensor gz;
  softmax_backward_into(sm, r, gz);
  const double h = 1e-3;
  for (size_t i = 0; i < logits.data.size(); i += 5) {
    float keep = logits.data[i];
    logits.data[i] = keep + float(h);
    double lp = dot_double(softmax_channels(logits), r);
    logits.data[i] = keep - float(h);
    double lm = dot_double(softmax_channels(logits), r);
    logits.data[i] = keep;
    double num = (lp - lm) / (2 * h);
    REQUIRE(near(double(gz.data[i]), num, std::max(1e-2 * std::abs(num), 1e-3)));
  }

  // sigmoid gradient
  Tensor z2 = random_tensor(rng, 1, 1, 2, 2, 2, -2.0, 2.0);
  Tensor p2 = z2;
  sigmoid_inplace(p2);
  Tensor r2 = random_tensor(rng, 1, 1, 2, 2, 2);
  Tensor gz2;
  sigmoid_backward_into(p2, r2, gz2);
  for (size_t i = 0; i < z2.data.size(); ++i) {
    float keep = z2.data[i];
    z2.data[i] = keep + float(h);
    Tensor pp = z2;
    sigmoid_inplace(pp);
    double lp = dot_double(pp, r2);
    z2.data[i] = keep - float(h);
    Tensor pm = z2;
    sigmoid_inplace(pm);
    double lm = dot_double(pm, r2);
    z2.data[i] = keep;
    double num = (lp - lm) / (2 * h);
    REQUIRE(near(double(gz2.data[i]), num, std::max(1e-2 * std::abs(num), 1e-3)));
  }
}

namespace {

VNetConfig tiny_config() {
  VNetConfig cfg;
  cfg.depth = 2;
  cfg.base_width = 2;
  cfg.feat_channels = 2;
  cfg.class_count = 1;
  cfg.dual_head = true;
  cfg.activation = ActKind::leaky_relu;
  cfg.leaky_slope = 0.1;
  return cfg;
}

}  // namespace

TEST_CASE("network forward shapes and input validation") {
  Rng rng(10);
  VNetConfig cfg = tiny_config();
  cfg.depth = 3;
  VNet net(cfg, rng);

  Tensor x = random_tensor(rng, 2, 1, 8, 4, 12);
  VNetOutput out = net.forward(x, true);
  CHECK(out.seg_logits.n == 2);
  CHECK(out.seg_logits.c == 1);
  CHECK(out.seg_logits.h == 8);
  CHECK(out.seg_logits.w == 4);
  CHECK(out.seg_logits.d == 12);
  CHECK(out.bnd_logits.same_shape(out.seg_logits));

  Tensor bad = random_tensor(rng, 1, 1, 8, 6, 8);
  CHECK_THROWS_AS(net.forward(bad, true), IncompatibleShapeError);
  try {
    net.forward(bad, true);
  } catch (const IncompatibleShapeError& e) {
    CHECK(std::string(e.what()).find("width") != std::string::npos);
  }
  Tensor bad2 = random_tensor(rng, 1, 2, 8, 8, 8);
  CHECK_THROWS_AS(net.forward(bad2, true), IncompatibleShapeError);
}

TEST_CASE("same seed gives identical networks, heads share the trunk stream") {
  Rng r1(77), r2(77), r3(77);
  VNetConfig dual = tiny_config();
  VNetConfig single = dual;
  single.dual_head = false;

  VNet a(dual, r1), b(dual, r2), c(single, r3);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) REQUIRE(*pa[i].value == *pb[i].value);

  // the single-head parameter list is a strict prefix of the dual-head one
  REQUIRE(pc.size() + 2 == pa.size());
  for (size_t i = 0; i < pc.size(); ++i) {
    REQUIRE(pa[i].name == pc[i].name);
    REQUIRE(*pa[i].value == *pc[i].value);
  }
  CHECK(pa[pa.size() - 2].name == "head_bnd.weight");

  Rng rx(5);
  Tensor x = random_tensor(rx, 1, 1, 4, 4, 4);
  VNetOutput oa = a.forward(x, true);
  VNetOutput ob = b.forward(x, true);
  REQUIRE(oa.seg_logits.data == ob.seg_logits.data);
  VNetOutput oc = c.forward(x, true);
  CHECK(oc.bnd_logits.numel() == 0);
}

TEST_CASE("network gradients match finite differences") {
  Rng rng(78);
  VNet net(tiny_config(), rng);
  Rng rx(6);
  Tensor x = random_tensor(rx, 2, 1, 4, 4, 4);
  Tensor r_seg = random_tensor(rx, 2, 1, 4, 4, 4);
  Tensor r_bnd = random_tensor(rx, 2, 1, 4, 4, 4);

  auto loss = [&] {
    VNetOutput o = net.forward(x, true);
    return dot_double(o.seg_logits, r_seg) + dot_double(o.bnd_logits, r_bnd);
  };
  net.zero_grad();
  net.forward(x, true);
  net.backward(r_seg, r_bnd);

  // per-element probes straddle activation kinks, so compare the directional
  // derivative along a random unit direction for every parameter tensor
  Rng ru(99);
  const double h = 2.5e-3;
  int tensors = 0;
  for (auto& p : net.params()) {
    size_t m = p.value->size();
    std::vector<float> u(m);
    double un = 0.0;
    for (auto& v : u) {
      v = float(ru.uniform(-1.0, 1.0));
      un += double(v) * double(v);
    }
    un = std::sqrt(un);
    for (auto& v : u) v = float(v / un);

    double analytic = 0.0;
    for (size_t i = 0; i < m; ++i) analytic += double((*p.grad)[i]) * double(u[i]);

    std::vector<float> keep = *p.value;
    for (size_t i = 0; i < m; ++i) (*p.value)[i] = keep[i] + float(h) * u[i];
    double lp = loss();
    for (size_t i = 0; i < m; ++i) (*p.value)[i] = keep[i] - float(h) * u[i];
    double lm = loss();
    *p.value = keep;
    double num = (lp - lm) / (2 * h);

    INFO(p.name << " analytic " << analytic << " numeric " << num);
    REQUIRE(near(analytic, num, std::max(1e-2 * std::abs(analytic), 5e-3)));
    tensors++;
  }
  CHECK(tensors >= 24);
}

TEST_CASE("freezing the boundary head zeroes only its gradients") {
  Rng rng(79);
  VNet net(tiny_config(), rng);
  Rng rx(7);
  Tensor x = random_tensor(rx, 1, 1, 4, 4, 4);
  Tensor r = random_tensor(rx, 1, 1, 4, 4, 4);

  net.set_freeze_boundary_head(true);
  net.zero_grad();
  net.forward(x, true);
  net.backward(r, r);
  for (auto& p : net.params()) {
    bool is_bnd = p.name.rfind("head_bnd", 0) == 0;
    double mag = 0.0;
    for (float g : *p.grad) mag += std::abs(double(g));
    if (is_bnd) {
      CHECK(mag == 0.0);
    } else if (p.name.rfind("head_seg", 0) == 0) {
      CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("checkpoint round trip is bitwise exact") {
  Rng rng(80);
  VNetConfig cfg = tiny_config();
  cfg.depth = 3;
  cfg.feat_channels = 3;  // exercises the neck
  VNet net(cfg, rng);

  // give running stats a non-default value
  Rng rx(8);
  Tensor x = random_tensor(rx, 1, 1, 4, 4, 4);
  net.forward(x, true);

  const std::string path = "ckpt_roundtrip.bin";
  nlohmann::ordered_json extra{{"iteration", 123}};
  save_checkpoint(path, net, extra);

  nlohmann::json extra_out;
  auto net2 = load_checkpoint(path, &extra_out);
  CHECK(extra_out.at("iteration").get<int>() == 123);

  auto p1 = net.params(), p2 = net2->params();
  REQUIRE(p1.size() == p2.size());
  for (size_t i = 0; i < p1.size(); ++i) {
    REQUIRE(p1[i].name == p2[i].name);
    REQUIRE(*p1[i].value == *p2[i].value);
  }
  auto b1 = net.buffers(), b2 = net2->buffers();
  REQUIRE(b1.size() == b2.size());
  for (size_t i = 0; i < b1.size(); ++i) REQUIRE(*b1[i].value == *b2[i].value);

  VNetOutput o1 = net.forward(x, false);
  VNetOutput o2 = net2->forward(x, false);
  REQUIRE(o1.seg_logits.data == o2.seg_logits.data);
  REQUIRE(o1.bnd_logits.data == o2.bnd_logits.data);
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string path = "ckpt_corrupt.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPT garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);

  Rng rng(81);
  VNet net(tiny_config(), rng);
  save_checkpoint(path, net);
  // truncate the payload
  {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    auto len = f.tellg();
    std::vector<char> buf(size_t(len) - 40);
    f.seekg(0);
    f.read(buf.data(), std::streamsize(buf.size()));
    std::ofstream o(path, std::ios::binary | std::ios::trunc);
    o.write(buf.data(), std::streamsize(buf.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_checkpoint("does_not_exist.bin"), IoError);
}

TEST_CASE("config json round trip") {
  VNetConfig cfg = tiny_config();
  cfg.norm = NormKind::instance;
  cfg.class_count = 3;
  VNetConfig back = VNetConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
  CHECK(back.depth == cfg.depth);
  CHECK(back.base_width == cfg.base_width);
  CHECK(back.feat_channels == cfg.feat_channels);
  CHECK(back.class_count == 3);
  CHECK(back.norm == NormKind::instance);
  CHECK(back.activation == cfg.activation);

  VNetConfig bad = cfg;
  bad.depth = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.base_width = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
