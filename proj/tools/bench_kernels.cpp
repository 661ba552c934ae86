// Times the OpenMP kernels against their serial references and a full client
// round in both modes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedsim/federation.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/synthetic.hpp"

using namespace fedsim;

namespace {

double seconds(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
             .count() /
         reps;
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-24s serial %9.3f ms   omp %9.3f ms   speedup %.2fx\n", name,
              serial * 1e3, parallel * 1e3, serial / parallel);
}

std::vector<double> randn(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without openmp\n");
#endif
  Rng rng(7);

  {
    const int m = 256, k = 512, n = 256;
    const auto x = randn(rng, std::size_t(m) * k);
    const auto w = randn(rng, std::size_t(n) * k);
    const auto b = randn(rng, n);
    std::vector<double> y(std::size_t(m) * n);
    report("dense_forward",
           seconds([&] { kernels::dense_forward_serial(x.data(), w.data(),
                                                       b.data(), y.data(), m,
                                                       k, n); },
                   5),
           seconds([&] { kernels::dense_forward(x.data(), w.data(), b.data(),
                                                 y.data(), m, k, n); },
                   5));

    const auto dy = randn(rng, std::size_t(m) * n);
    std::vector<double> dw(std::size_t(n) * k), db(n), dx(std::size_t(m) * k);
    report("dense_backward",
           seconds([&] { kernels::dense_backward_serial(
                        x.data(), w.data(), dy.data(), dw.data(), db.data(),
                        dx.data(), m, k, n); },
                   5),
           seconds([&] { kernels::dense_backward(x.data(), w.data(), dy.data(),
                                                 dw.data(), db.data(),
                                                 dx.data(), m, k, n); },
                   5));
  }

  {
    const int B = 64, C = 3, H = 32, W = 32, O = 3;
    const auto in = randn(rng, std::size_t(B) * C * H * W);
    const auto wt = randn(rng, std::size_t(O) * C * 9);
    const auto bias = randn(rng, O);
    std::vector<double> out(std::size_t(B) * O * H * W);
    report("conv3x3_forward",
           seconds([&] { kernels::conv3x3_forward_serial(
                        in.data(), wt.data(), bias.data(), out.data(), B, C, H,
                        W, O); },
                   10),
           seconds([&] { kernels::conv3x3_forward(in.data(), wt.data(),
                                                  bias.data(), out.data(), B,
                                                  C, H, W, O); },
                   10));

    const auto dout = randn(rng, std::size_t(B) * O * H * W);
    std::vector<double> din(std::size_t(B) * C * H * W),
        dwt(std::size_t(O) * C * 9), dbias(O);
    report("conv3x3_backward",
           seconds([&] { kernels::conv3x3_backward_serial(
                        in.data(), wt.data(), dout.data(), din.data(),
                        dwt.data(), dbias.data(), B, C, H, W, O); },
                   10),
           seconds([&] { kernels::conv3x3_backward(
                        in.data(), wt.data(), dout.data(), din.data(),
                        dwt.data(), dbias.data(), B, C, H, W, O); },
                   10));
  }

  {
    // One federated round over synthetic clients, serial vs parallel clients.
    Rng task_rng(11);
    SyntheticTask task = make_synthetic_task(10, 16, 3.0, 1.0, 1.0, task_rng);
    const int m = 8;
    FederationEnv env;
    env.spec = EncoderSpec::mlp(16, {64, 32});
    env.config.method = Method::FedAvg;
    env.config.label_mode = LabelMode::Private;
    env.config.rounds = 1;
    env.config.seed = 3;

    std::vector<LabelSet> sets;
    std::vector<ClientState> clients;
    for (int k = 0; k < m; ++k) {
      Rng crng(100 + k);
      sets.push_back(LabelSet::of(crng.sample_without_replacement(10, 5), 10));
      Dataset train = synth_dataset_client(task, sets.back(), 1600, crng);
      Dataset val = synth_dataset_client(task, sets.back(), 400, crng);
      clients.push_back(
          make_client(k, sets.back(), train, val, env.config.label_mode));
    }
    Rng trng(12);
    env.test = synth_dataset_global(task, 2000, trng);

    ServerState server;
    server.client_labels = sets;
    Rng irng(13);
    server.params = init_params(env.spec, 10, irng);

    auto run_once = [&](bool parallel) {
      ServerState s = server;
      auto c = clients;
      FederationEnv e = env;
      e.config.parallel_clients = parallel;
      run_round(s, c, e);
    };
    report("client_round (8 clients)",
           seconds([&] { run_once(false); }, 3),
           seconds([&] { run_once(true); }, 3));
  }
  return 0;
}
