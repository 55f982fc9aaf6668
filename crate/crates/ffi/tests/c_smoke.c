#include <stdio.h>
#include "topkmon.h"

#define CHECK(expr)                                                          \
  do {                                                                       \
    enum TkmStatus s_ = (expr);                                              \
    if (s_ != TKM_STATUS_OK) {                                               \
      fprintf(stderr, "%s: %s (%s)\n", #expr, tkm_status_name(s_),           \
              tkm_last_error() ? tkm_last_error() : "");                     \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(void) {
  TkmTrace *trace = NULL;
  CHECK(tkm_trace_generate(TKM_FAMILY_UNIFORM, 8, 2, 100, 5, &trace));

  uint64_t lb = 0;
  CHECK(tkm_oracle_lower_bound(trace, 2, &lb));

  uint64_t row[8];
  CHECK(tkm_trace_values(trace, 1, row, 8));
  TkmMonitor *monitor = NULL;
  CHECK(tkm_monitor_new(row, 8, 2, 5, &monitor));
  for (uint64_t t = 2; t <= tkm_trace_len(trace); t++) {
    TkmStepReport report;
    CHECK(tkm_trace_values(trace, t, row, 8));
    CHECK(tkm_monitor_step(monitor, row, 8, &report));
  }
  uint32_t ids[2];
  size_t len = 0;
  CHECK(tkm_monitor_top_k(monitor, ids, 2, &len));
  TkmTally tally;
  CHECK(tkm_monitor_tally(monitor, &tally));

  if (tkm_monitor_new(row, 8, 0, 5, &monitor) != TKM_STATUS_INVALID_ARGUMENT) return 2;

  printf("lower_bound=%llu total=%llu top=%u,%u len=%zu\n", (unsigned long long)lb,
         (unsigned long long)tally.total, ids[0], ids[1], len);
  tkm_monitor_free(monitor);
  tkm_trace_free(trace);
  return 0;
}
