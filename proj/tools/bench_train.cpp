#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "olg/trainer.hpp"

using namespace olg;

int main(int argc, char** argv) {
    TrainConfig cfg;
    cfg.episodes_max = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 5;
    cfg.lr = argc > 2 ? std::strtod(argv[2], nullptr) : 1e-4;
    cfg.hidden_width = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 128;
    auto fam = argc > 4 ? parse_family(argv[4]) : PolicyFamily::Bau;
    auto spec = default_sampling_spec(fam);
    auto t0 = std::chrono::steady_clock::now();
    auto res = train(cfg, spec, 1, [&](const EpisodeLog& e, const DeqnModel& m, const AdamState&) {
        double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (e.episode % 10 == 0 || e.episode < 10 || e.drops > 0 || e.rolled_back)
            std::printf("ep %llu loss %.3e pen %zu drops %zu ab %d rb %d lr %.2e t=%.1fs\n", (unsigned long long)e.episode, e.loss, e.penalized, e.drops, (int)e.aborted, (int)e.rolled_back, e.lr, s);
        if (e.episode % 100 == 99) {
            auto rep = accuracy_metrics(m, spec, 200, 30, 99);
            double worst_mean = 0, worst_p = 0;
            for (auto& g : rep.generations) { worst_mean = std::max(worst_mean, g.ee_mean); worst_p = std::max(worst_p, g.ee_p999); }
            std::printf("  metrics worst ee mean %.2e p999 %.2e\n", worst_mean, worst_p);
        }
        std::fflush(stdout);
    });
    std::printf("%s\n", res.message.c_str());
    auto rep = accuracy_metrics(res.model, spec, 200, 30, 99);
    for (std::size_t j = 0; j < kChoices; ++j)
        std::printf("gen %zu ee %.2e %.2e v %.2e %.2e\n", j + 1, rep.generations[j].ee_mean, rep.generations[j].ee_p999,
                    rep.generations[j].v_mean, rep.generations[j].v_p999);
}
