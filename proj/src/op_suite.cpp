#include "sampm/op_suite.hpp"

#include <cmath>
#include <memory>

#include "sampm/losses.hpp"
#include "sampm/params.hpp"
#include "sampm/propagation.hpp"
#include "sampm/rng.hpp"
#include "sampm/sam_stubs.hpp"

namespace sampm::suite {

namespace {

using ad::Tape;
using ad::Var;
using Inputs = std::span<const Var>;

// sum(y * R) for a fixed random R, so every output element matters.
Var project(Tape& t, Var y, std::uint64_t seed) {
  Rng rng(seed ^ 0xABCDEF);
  return ad::sum(ad::mul(y, t.constant(randn(y.shape(), 1.0, rng))));
}

Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor x = randn(std::move(shape), 1.0, rng);
  for (double& v : x.data()) v = v < 0 ? v - 0.1 : v + 0.1;
  return x;
}

Tensor binary(Shape shape, Rng& rng) {
  Tensor x(std::move(shape));
  for (double& v : x.data()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  return x;
}

template <class Op>
Entry unary(std::string name, Shape shape, Op op) {
  return {name, [shape, op](std::uint64_t seed) {
            Rng rng(seed);
            return Case{[op, seed](Tape& t, Inputs in) { return project(t, op(in[0]), seed); },
                        {randn(shape, 1.0, rng)}};
          }};
}

// Module parameters whose names start with any of `prefixes` become inputs
// after the leading tensors; the rest are bound as constants.
struct ModuleCase {
  ParamStore store;
  std::vector<std::string> names;
};

ModuleCase select(ParamStore store, std::initializer_list<const char*> prefixes) {
  ModuleCase m{std::move(store), {}};
  for (const auto& [name, e] : m.store.entries())
    for (const char* p : prefixes)
      if (name.starts_with(p)) {
        m.names.push_back(name);
        break;
      }
  return m;
}

Bound bind_with(Tape& t, const ModuleCase& m, Inputs in, std::size_t first) {
  Bound b = bind(t, m.store, BindMode::kNoGrad);
  for (std::size_t i = 0; i < m.names.size(); ++i) b.set(m.names[i], in[first + i]);
  return b;
}

void append_params(std::vector<Tensor>& inputs, const ModuleCase& m) {
  for (const std::string& n : m.names) inputs.push_back(m.store.get(n));
}

pm::PropagationConfig small_pm() {
  pm::PropagationConfig c;
  c.embed_dim = 8;
  c.grid = 2;
  c.attn_dim = 6;
  c.affinity_dim = 10;
  return c;
}

stubs::EncoderConfig small_stub() {
  stubs::EncoderConfig c;
  c.image_size = 16;
  c.downscale = 8;
  c.embed_dim = 8;
  c.mask_subgrid = 4;
  return c;
}

ParamStore pm_store(std::uint64_t seed) {
  ParamStore s;
  Rng rng(seed + 17);
  pm::init_params(s, small_pm(), rng);
  // Larger gates than the default make the positional path visible to the check.
  s.get("pm.pe_tfmm.gate")[0] = 0.7;
  s.get("pm.pe_mpam.gate")[0] = -0.6;
  for (const char* n : {"pm.pe_tfmm.table", "pm.pe_mpam.table"})
    for (double& v : s.get(n).data()) v *= 20.0;
  return s;
}

ParamStore stub_store(std::uint64_t seed) {
  ParamStore s;
  Rng rng(seed + 29);
  stubs::init_params(s, small_stub(), rng);
  return s;
}

std::vector<Entry> build_entries() {
  std::vector<Entry> e;
  e.push_back({"matmul", [](std::uint64_t seed) {
                 Rng rng(seed);
                 return Case{[seed](Tape& t, Inputs in) { return project(t, ad::matmul(in[0], in[1]), seed); },
                             {randn({4, 5}, 1.0, rng), randn({5, 2}, 1.0, rng)}};
               }});
  e.push_back(unary("transpose", {3, 5}, [](Var x) { return ad::transpose(x); }));
  e.push_back(unary("reshape", {3, 4}, [](Var x) { return ad::reshape(x, {2, 6}); }));
  e.push_back({"linear", [](std::uint64_t seed) {
                 Rng rng(seed);
                 return Case{[seed](Tape& t, Inputs in) { return project(t, ad::linear(in[0], in[1], in[2]), seed); },
                             {randn({3, 4}, 1.0, rng), randn({4, 5}, 1.0, rng), randn({5}, 1.0, rng)}};
               }});
  e.push_back({"concat", [](std::uint64_t seed) {
                 Rng rng(seed);
                 const std::size_t a = 1 + rng.index(4), b = 1 + rng.index(4), axis = rng.index(2);
                 Shape s1{3, 3}, s2{3, 3};
                 s1[axis] = a;
                 s2[axis] = b;
                 return Case{[seed, axis](Tape& t, Inputs in) { return project(t, ad::concat({in[0], in[1]}, axis), seed); },
                             {randn(s1, 1.0, rng), randn(s2, 1.0, rng)}};
               }});
  e.push_back(unary("softmax_rows", {3, 7}, [](Var x) { return ad::softmax_rows(ad::scale(x, 2.0)); }));
  e.push_back({"layer_norm", [](std::uint64_t seed) {
                 Rng rng(seed);
                 return Case{[seed](Tape& t, Inputs in) { return project(t, ad::layer_norm(in[0], in[1], in[2]), seed); },
                             {randn({2, 4, 8}, 1.0, rng), randn({8}, 1.0, rng), randn({8}, 1.0, rng)}};
               }});
  e.push_back({"add", [](std::uint64_t seed) {
                 Rng rng(seed);
                 return Case{[seed](Tape& t, Inputs in) { return project(t, ad::add(in[0], in[1]), seed); },
                             {randn({3, 4}, 1.0, rng), randn({3, 4}, 1.0, rng)}};
               }});
  e.push_back({"sub", [](std::uint64_t seed) {
                 Rng rng(seed);
                 return Case{[seed](Tape& t, Inputs in) { return project(t, ad::sub(in[0], in[1]), seed); },
                             {randn({3, 4}, 1.0, rng), randn({3, 4}, 1.0, rng)}};
               }});
  e.push_back({"mul", [](std::uint64_t seed) {
                 Rng rng(seed);
                 return Case{[seed](Tape& t, Inputs in) { return project(t, ad::mul(in[0], in[1]), seed); },
                             {randn({3, 4}, 1.0, rng), randn({3, 4}, 1.0, rng)}};
               }});
  e.push_back({"mul_scalar_broadcast", [](std::uint64_t seed) {
                 Rng rng(seed);
                 return Case{[seed](Tape& t, Inputs in) { return project(t, ad::mul(in[0], in[1]), seed); },
                             {randn({1}, 1.0, rng), randn({3, 4}, 1.0, rng)}};
               }});
  e.push_back(unary("scale", {3, 4}, [](Var x) { return ad::scale(x, -1.7); }));
  e.push_back(unary("add_scalar", {3, 4}, [](Var x) { return ad::add_scalar(x, 0.3); }));
  e.push_back(unary("sigmoid", {3, 4}, [](Var x) { return ad::sigmoid(ad::scale(x, 3.0)); }));
  e.push_back(unary("gelu", {3, 4}, [](Var x) { return ad::gelu(ad::scale(x, 2.0)); }));
  e.push_back({"relu", [](std::uint64_t seed) {
                 Rng rng(seed);
                 return Case{[seed](Tape& t, Inputs in) { return project(t, ad::relu(in[0]), seed); },
                             {away_from_zero({3, 4}, rng)}};
               }});
  e.push_back(unary("sum", {3, 4}, [](Var x) { return ad::mul(ad::sum(x), ad::sum(x)); }));
  e.push_back(unary("mean", {3, 4}, [](Var x) { return ad::mul(ad::mean(x), ad::mean(x)); }));
  e.push_back({"gather", [](std::uint64_t seed) {
                 Rng rng(seed);
                 std::vector<std::size_t> idx(10);
                 for (auto& i : idx) i = rng.index(6);
                 return Case{[seed, idx](Tape& t, Inputs in) { return project(t, ad::gather(in[0], {2, 5}, idx), seed); },
                             {randn({2, 3}, 1.0, rng)}};
               }});
  e.push_back(unary("patchify", {2, 8, 8}, [](Var x) { return ad::patchify(x, 4); }));
  e.push_back(unary("unpatchify", {4, 16}, [](Var x) { return ad::unpatchify(x, 2, 2, 4); }));
  e.push_back(unary("avg_pool", {8, 8}, [](Var x) { return ad::avg_pool(x, 2); }));
  e.push_back(unary("upsample_bilinear", {4, 4}, [](Var x) { return ad::upsample_bilinear(x, 4); }));

  e.push_back({"focal_loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor target = binary({8, 8}, rng);
                 return Case{[target](Tape&, Inputs in) { return loss::focal_loss(in[0], target); },
                             {randn({8, 8}, 2.0, rng)}};
               }});
  e.push_back({"dice_loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor target = binary({8, 8}, rng);
                 return Case{[target](Tape&, Inputs in) { return loss::dice_loss(ad::sigmoid(in[0]), target); },
                             {randn({8, 8}, 2.0, rng)}};
               }});
  e.push_back({"iou_mse_loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor target = binary({8, 8}, rng), logits = randn({8, 8}, 2.0, rng);
                 return Case{[target, logits](Tape&, Inputs in) { return loss::iou_mse_loss(ad::sigmoid(in[0]), logits, target); },
                             {randn({1}, 1.0, rng)}};
               }});
  e.push_back({"total_loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor target = binary({8, 8}, rng);
                 return Case{[target](Tape&, Inputs in) {
                               return loss::total_loss({in[0], ad::sigmoid(in[1])}, target).total;
                             },
                             {randn({8, 8}, 2.0, rng), randn({1}, 1.0, rng)}};
               }});

  e.push_back({"tfmm_forward", [](std::uint64_t seed) {
                 Rng rng(seed);
                 const auto cfg = small_pm();
                 auto m = std::make_shared<ModuleCase>(select(pm_store(seed), {"pm.tfmm", "pm.pe_tfmm"}));
                 std::vector<Tensor> inputs{randn({8, 2, 2}, 1.0, rng), randn({2, 8, 2, 2}, 1.0, rng), randn({2, 8, 2, 2}, 1.0, rng)};
                 append_params(inputs, *m);
                 return Case{[m, cfg, seed](Tape& t, Inputs in) {
                               const Bound p = bind_with(t, *m, in, 3);
                               return project(t, pm::tfmm_forward(p, cfg, in[0], in[1], in[2]).output, seed);
                             },
                             inputs};
               }});
  e.push_back({"mpam_forward", [](std::uint64_t seed) {
                 Rng rng(seed);
                 const auto cfg = small_pm();
                 auto m = std::make_shared<ModuleCase>(select(pm_store(seed), {"pm.mpam", "pm.pe_mpam"}));
                 std::vector<Tensor> inputs{randn({8, 2, 2}, 1.0, rng), randn({8, 2, 2}, 1.0, rng),
                                            randn({2, 8, 2, 2}, 1.0, rng), randn({2, 8, 2, 2}, 1.0, rng)};
                 append_params(inputs, *m);
                 return Case{[m, cfg, seed](Tape& t, Inputs in) {
                               const Bound p = bind_with(t, *m, in, 4);
                               return project(t, pm::mpam_forward(p, cfg, in[0], in[1], in[2], in[3]).dense, seed);
                             },
                             inputs};
               }});
  e.push_back({"image_encode", [](std::uint64_t seed) {
                 Rng rng(seed);
                 const auto cfg = small_stub();
                 auto m = std::make_shared<ModuleCase>(select(stub_store(seed), {"stub.image_encoder"}));
                 std::vector<Tensor> inputs{rand_uniform({3, 16, 16}, 0.0, 1.0, rng)};
                 append_params(inputs, *m);
                 return Case{[m, cfg, seed](Tape& t, Inputs in) {
                               return project(t, stubs::image_encode(bind_with(t, *m, in, 1), cfg, in[0]), seed);
                             },
                             inputs};
               }});
  e.push_back({"mask_encode", [](std::uint64_t seed) {
                 Rng rng(seed);
                 const auto cfg = small_stub();
                 auto m = std::make_shared<ModuleCase>(select(stub_store(seed), {"stub.mask_encoder"}));
                 std::vector<Tensor> inputs{rand_uniform({16, 16}, 0.0, 1.0, rng)};
                 append_params(inputs, *m);
                 return Case{[m, cfg, seed](Tape& t, Inputs in) {
                               return project(t, stubs::mask_encode(bind_with(t, *m, in, 1), cfg, in[0]), seed);
                             },
                             inputs};
               }});
  e.push_back({"decode_total_loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 const auto cfg = small_stub();
                 auto m = std::make_shared<ModuleCase>(select(stub_store(seed), {"stub.decoder"}));
                 Tensor target = binary({16, 16}, rng);
                 std::vector<Tensor> inputs{randn({8, 2, 2}, 1.0, rng), randn({8, 2, 2}, 1.0, rng)};
                 append_params(inputs, *m);
                 return Case{[m, cfg, target](Tape& t, Inputs in) {
                               return loss::total_loss(stubs::decode(bind_with(t, *m, in, 2), cfg, in[0], in[1]), target).total;
                             },
                             inputs};
               }});
  return e;
}

}  // namespace

const std::vector<Entry>& entries() {
  static const std::vector<Entry> all = build_entries();
  return all;
}

std::vector<Result> run(std::size_t seeds, const ad::GradcheckOptions& opts, const std::string& filter) {
  std::vector<Result> out;
  for (const Entry& e : entries()) {
    if (!filter.empty() && e.name.find(filter) == std::string::npos) continue;
    for (std::uint64_t s = 1; s <= seeds; ++s) {
      const Case c = e.build(s);
      out.push_back({e.name, s, ad::gradcheck(c.fn, c.inputs, opts)});
    }
  }
  return out;
}

}  // namespace sampm::suite
