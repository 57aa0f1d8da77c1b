#include <math.h>
#include <stdio.h>

#include "tapsim.h"

#define CHECK(call)                                                          \
  do {                                                                       \
    TapsimStatus s_ = (call);                                                \
    if (s_ != TAPSIM_STATUS_OK) {                                            \
      const char *m_ = tapsim_last_error_message();                          \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, m_ ? m_ : "(none)"); \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(void) {
  size_t mu = 0;
  CHECK(tapsim_compute_mu(1000.0, 200.0, &mu));
  if (mu != 5) return 2;

  TapsimGru *gru = NULL;
  CHECK(tapsim_gru_new(1, 2, 4, 3, 2, 1, &gru));
  double window[8] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  double block[4];
  CHECK(tapsim_gru_forward(gru, window, 8, block, 4));
  for (int i = 0; i < 4; i++)
    if (!(block[i] > 0.0 && block[i] < 1.0)) return 3;

  TapsimEngine *engine = NULL;
  double initial[2] = {0.0, 0.0};
  CHECK(tapsim_engine_new("{\"window\": 6, \"horizon\": 2}", TAPSIM_STRATEGY_NON_PREDICTIVE, initial, 2, NULL, &engine));
  size_t slot = 0;
  double cmd[2];
  TapsimSource source;
  CHECK(tapsim_engine_ingest(engine, &slot, window, 1, true, 0));
  CHECK(tapsim_engine_decide(engine, 0, cmd, 2, &source));
  if (source != TAPSIM_SOURCE_ACTUAL || cmd[0] != 0.1) return 4;
  CHECK(tapsim_engine_decide(engine, 1, cmd, 2, &source));
  if (source != TAPSIM_SOURCE_HOLD_LAST) return 5;

  if (tapsim_gru_load("/nonexistent", &gru) != TAPSIM_STATUS_IO) return 6;
  if (tapsim_last_error_message() == NULL) return 7;

  tapsim_engine_free(engine);
  tapsim_gru_free(gru);
  puts("ok");
  return 0;
}
