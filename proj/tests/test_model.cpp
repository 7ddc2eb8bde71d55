#include <catch2/catch_amalgamated.hpp>

#include "voi/engine.hpp"
#include "voi/model.hpp"
#include "voi/rng.hpp"

using namespace voi;

namespace {

EpisodeConfig no_delivery_config() {
  EpisodeConfig cfg;
  cfg.horizon = 10;
  cfg.block.process = ProcessParams{0.6, 1.0};
  cfg.block.filter = make_filter_params(0.2, cfg.block.process);
  cfg.block.sources = {SourceProfile{1, 0.5, 0.0}};  // never generates
  cfg.channel.p = 1.0;
  cfg.seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("evolve_process is the affine map a x + w") {
  ProcessParams pp{0.6, 1.0};
  CHECK(evolve_process(0.0, pp, 0.0) == 0.0);
  CHECK(evolve_process(1.0, pp, 0.5) == Catch::Approx(1.1).epsilon(1e-14));
}

TEST_CASE("state variance after three steps matches the geometric sum") {
  // closed form sigma2 (1 - a^{2t})/(1 - a^2) with x(0) = 0
  const ProcessParams pp{0.6, 1.0};
  const double expected = (1.0 - ipow(0.6, 6)) / (1.0 - 0.36);
  RandomStream rng(derive_seed(11, Stream::process_noise, 0, 0));
  const std::size_t n = 1'000'000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = 0.0;
    for (int t = 0; t < 3; ++t) x = evolve_process(x, pp, rng.gaussian());
    sum += x;
    sum2 += x * x;
  }
  const double var = (sum2 - sum * sum / n) / (n - 1);
  const double se = expected * std::sqrt(2.0 / (n - 1));
  CHECK(expected == Catch::Approx(1.4896).epsilon(1e-12));
  CHECK(std::abs(var - expected) < 3.0 * se);
}

TEST_CASE("generate_packet scales noise by the root of the variance") {
  SourceProfile noiseless{1, 0.0, 0.5};
  Packet p = generate_packet(noiseless, 1.25, 3, 2.0, 1);
  CHECK(p.y == 1.25);  // exact
  CHECK(p.t_gen == 3);

  SourceProfile src{2, 4.0, 0.5};
  Packet q = generate_packet(src, 2.0, 5, 1.0, 2);
  CHECK(q.y == Catch::Approx(4.0).epsilon(1e-14));

  RandomStream rng(derive_seed(5, Stream::observation, 0, 0));
  SourceProfile half{3, 0.5, 0.5};
  const std::size_t n = 1'000'000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Packet pk = generate_packet(half, 0.0, 1, rng.gaussian(), i);
    sum += pk.y;
    sum2 += pk.y * pk.y;
  }
  const double var = (sum2 - sum * sum / n) / (n - 1);
  const double se = 0.5 * std::sqrt(2.0 / (n - 1));
  CHECK(std::abs(var - 0.5) < 3.0 * se);
}

TEST_CASE("filter_update branches") {
  ProcessParams pp{0.6, 1.0};

  SECTION("no delivery decays the estimate") {
    FilterParams fp = make_filter_params(0.2, pp);
    CHECK(filter_update(1.0, std::nullopt, 4, fp, pp) == Catch::Approx(0.6));
  }
  SECTION("zero gain ignores the observation") {
    FilterParams fp = make_filter_params(0.0, pp);
    Packet pkt;
    pkt.t_gen = 2;
    pkt.y = 123.0;
    CHECK(filter_update(1.0, pkt, 4, fp, pp) == Catch::Approx(0.6));
  }
  SECTION("fresh packet, hand-evaluated") {
    FilterParams fp = make_filter_params(0.5, pp);
    Packet pkt;
    pkt.t_gen = 4;
    pkt.y = 1.0;
    // a x_hat + K (a^{tau+1} y - a x_hat) with x_hat = 0, tau = 0
    CHECK(filter_update(0.0, pkt, 4, fp, pp) == Catch::Approx(0.3).epsilon(1e-14));
  }
  SECTION("future packet rejected") {
    FilterParams fp = make_filter_params(0.5, pp);
    Packet pkt;
    pkt.t_gen = 9;
    CHECK_THROWS_AS(filter_update(0.0, pkt, 4, fp, pp), std::invalid_argument);
  }
}

TEST_CASE("innovation_step coefficients follow the delivery branch") {
  ProcessParams pp{0.9, 1.0};
  FilterParams fp = make_filter_params(0.2, pp);
  NoiseHistory hist(8);
  hist.push(0, 0.3);
  hist.push(1, -0.1);
  hist.push(2, 0.7);

  CHECK(innovation_step(std::nullopt, 2, fp, pp, hist).coeff == pp.a);
  Packet pkt;
  pkt.t_gen = 1;
  pkt.sigma2_s = 0.5;
  pkt.obs_noise = 0.4;
  const Innovation inn = innovation_step(pkt, 2, fp, pp, hist);
  CHECK(inn.coeff == fp.a_c);
  REQUIRE(inn.noise.has_value());
  // w(2) + a K w(1) - a^2 K sqrt(0.5) n
  const double expected =
      0.7 + 0.9 * 0.2 * (-0.1) - 0.81 * 0.2 * std::sqrt(0.5) * 0.4;
  CHECK(*inn.noise == Catch::Approx(expected).epsilon(1e-14));
}

TEST_CASE("innovation history window excludes too-old packets") {
  ProcessParams pp{0.9, 1.0};
  FilterParams fp = make_filter_params(0.2, pp);
  NoiseHistory hist(4);
  for (Slot s = 0; s <= 10; ++s) hist.push(s, 0.1 * static_cast<double>(s));
  Packet old_pkt;
  old_pkt.t_gen = 2;  // age 8 at t = 10, window holds only 4
  CHECK_FALSE(innovation_step(old_pkt, 10, fp, pp, hist).noise.has_value());
  Packet young;
  young.t_gen = 9;
  CHECK(innovation_step(young, 10, fp, pp, hist).noise.has_value());
}

TEST_CASE("episode innovation decomposition reconstructs the error update") {
  EpisodeConfig cfg;
  cfg.horizon = 60;
  cfg.block.process = ProcessParams{0.8, 0.7};
  cfg.block.filter = make_filter_params(0.25, cfg.block.process);
  cfg.block.sources = {SourceProfile{1, 0.4, 0.5}, SourceProfile{2, 1.3, 0.4}};
  cfg.channel.p = 0.6;
  cfg.block.e0 = 0.7;
  cfg.seed = 42;
  RunFlags flags;
  flags.record_innovations = true;
  const EpisodeResult res = run_episode(cfg, PolicyKind::index_voi, 0, flags);
  REQUIRE(res.innovations.size() == static_cast<std::size_t>(cfg.horizon - 1));
  std::size_t reconstructed = 0;
  for (const auto& rec : res.innovations) {
    if (!rec.noise) continue;
    ++reconstructed;
    const double predicted = rec.coeff * rec.e_before + *rec.noise;
    CHECK(rec.e_after ==
          Catch::Approx(predicted).epsilon(1e-11).margin(1e-12));
  }
  CHECK(reconstructed > 40);  // window is large enough for almost every slot
}

TEST_CASE("no-delivery branch follows e' = a e + w and the variance curve") {
  EpisodeConfig cfg = no_delivery_config();
  RunFlags flags;
  flags.record_innovations = true;
  flags.record_trace = true;
  const EpisodeResult res = run_episode(cfg, PolicyKind::index_voi, 1, flags);
  CHECK(res.deliveries == 0);
  for (const auto& rec : res.innovations) {
    CHECK(rec.coeff == cfg.block.process.a);
    REQUIRE(rec.noise.has_value());
    CHECK(rec.e_after == Catch::Approx(rec.coeff * rec.e_before + *rec.noise)
                             .epsilon(1e-13)
                             .margin(1e-15));
  }

  // mean e^2(t) against sigma2 (1 - a^{2t})/(1 - a^2), e(0) = 0
  const std::size_t reps = 100'000;
  McSummary mc = run_monte_carlo(cfg, PolicyKind::index_voi, reps);
  for (Slot t : {1, 2, 3, 5, 8}) {
    const double expected =
        cfg.block.process.sigma2 * (1.0 - ipow(0.36, t)) / (1.0 - 0.36);
    const double se = expected * std::sqrt(2.0 / static_cast<double>(reps));
    INFO("slot " << t);
    CHECK(std::abs(mc.mean_e2[static_cast<std::size_t>(t - 1)] - expected) <
          3.0 * se);
  }
}

TEST_CASE("tracked error equals recomputed error after every step") {
  EstimatorState est{0.0, -0.5, 0.5, 0};
  ProcessParams pp{0.7, 1.0};
  FilterParams fp = make_filter_params(0.3, pp);
  RandomStream rng(9);
  for (int i = 0; i < 200; ++i) {
    est = step_estimator(est, std::nullopt, fp, pp, rng.gaussian());
    CHECK(est.e == est.x - est.x_hat);  // exact by construction
  }
}

TEST_CASE("identical config and seed give bit-identical episodes") {
  EpisodeConfig cfg;
  cfg.horizon = 40;
  cfg.block.process = ProcessParams{0.6, 1.0};
  cfg.block.filter = make_filter_params(0.3, cfg.block.process);
  cfg.block.sources = {SourceProfile{1, 0.3, 0.4}, SourceProfile{2, 1.5, 0.3}};
  cfg.channel.p = 0.7;
  cfg.seed = 123;
  const EpisodeResult a = run_episode(cfg, PolicyKind::index_voi, 3);
  const EpisodeResult b = run_episode(cfg, PolicyKind::index_voi, 3);
  REQUIRE(a.e2.size() == b.e2.size());
  for (std::size_t i = 0; i < a.e2.size(); ++i) CHECK(a.e2[i] == b.e2[i]);
  CHECK(a.cumulative_cost == b.cumulative_cost);
  REQUIRE(a.attempts.size() == b.attempts.size());
  for (std::size_t i = 0; i < a.attempts.size(); ++i) {
    CHECK(a.attempts[i].slot == b.attempts[i].slot);
    CHECK(a.attempts[i].packet_id == b.attempts[i].packet_id);
    CHECK(a.attempts[i].success == b.attempts[i].success);
  }
}
