/* Minimal C client: trains a small victim and generator through the
 * staged pipeline, then steers the generator toward a class the sealed
 * oracle is confident about. Build instructions are in the README. */

#include <stdio.h>
#include <stdint.h>
#include <string.h>

#include "ripper.h"

static const char *CONFIG_TEXT =
    "[experiment]\n"
    "seed = 5\n"
    "\n"
    "[data]\n"
    "family = gaussian-mixture\n"
    "dimension = 8\n"
    "true_classes = 3\n"
    "proxy_classes = 3\n"
    "samples_per_class = 20\n"
    "noise_std = 0.03\n"
    "\n"
    "[teacher]\n"
    "epochs = 100\n"
    "batch_size = 16\n"
    "learning_rate = 0.005\n"
    "\n"
    "[generator]\n"
    "epochs = 40\n"
    "batch_size = 16\n"
    "learning_rate = 0.003\n"
    "latent_dim = 3\n"
    "hidden_dim = 12\n"
    "\n"
    "[evolution]\n"
    "population_size = 8\n"
    "elite_size = 3\n"
    "max_generations = 5\n";

static int check(RipStatus status, const char *what) {
    if (status != RIP_STATUS_OK) {
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)status, rip_last_error());
        return 1;
    }
    return 0;
}

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: %s OUT_DIR\n", argv[0]);
        return 64;
    }
    const char *out_dir = argv[1];

    RipConfig *cfg = NULL;
    if (check(rip_config_parse(CONFIG_TEXT, &cfg), "config parse")) return 1;
    if (check(rip_config_set_output_dir(cfg, out_dir), "set output dir")) return 1;
    if (check(rip_config_set_deterministic(cfg, true), "set deterministic")) return 1;

    const char *stages[] = {"data", "teacher", "generator"};
    for (int i = 0; i < 3; i++) {
        if (check(rip_run_stage(cfg, stages[i]), stages[i])) return 1;
    }

    char path[4096];
    snprintf(path, sizeof path, "%s/teacher.bbr", out_dir);
    RipOracle *oracle = NULL;
    if (check(rip_oracle_open(path, "full-probabilities", &oracle), "oracle open")) return 1;

    size_t input_dim = 0, n_classes = 0;
    rip_oracle_input_dim(oracle, &input_dim);
    rip_oracle_n_classes(oracle, &n_classes);
    printf("oracle: %zu features -> %zu classes\n", input_dim, n_classes);

    snprintf(path, sizeof path, "%s/vae.bbr", out_dir);
    RipGenerator *generator = NULL;
    if (check(rip_generator_open(path, &generator), "generator open")) return 1;

    RipSearchResult *result = NULL;
    if (check(rip_evolve(oracle, generator, cfg, 0, 1, &result), "evolve")) return 1;

    double fitness = 0.0;
    uint32_t generations = 0;
    uint64_t spent = 0;
    bool reached = false;
    rip_search_result_fitness(result, &fitness);
    rip_search_result_generations(result, &generations);
    rip_search_result_oracle_samples(result, &spent);
    rip_search_result_reached_threshold(result, &reached);
    printf("search: fitness %.6f after %u generations, %llu oracle samples, reached=%d\n",
           fitness, (unsigned)generations, (unsigned long long)spent, (int)reached);

    uint64_t counted = 0;
    rip_oracle_call_count(oracle, &counted);
    if (counted != spent) {
        fprintf(stderr, "budget mismatch: counter %llu vs result %llu\n",
                (unsigned long long)counted, (unsigned long long)spent);
        return 1;
    }

    rip_search_result_free(result);
    rip_generator_free(generator);
    rip_oracle_free(oracle);
    rip_config_free(cfg);
    printf("C_DEMO_OK\n");
    return 0;
}
