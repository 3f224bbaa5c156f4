/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef WRMCU_H
#define WRMCU_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Order kinds as seen from C.
#define WR_ORDER_VELOCITY 0

#define WR_ORDER_TENSION 1

#define WR_ORDER_CURRENT 2

#define WR_ORDER_STOP 3

// Decoded message tags.
#define WR_DECODED_NONE 0

#define WR_DECODED_ORDER 1

#define WR_DECODED_TELEMETRY 2

// Result code of every call. Negative values are errors.
typedef enum WrStatus {
  WR_STATUS_OK = 0,
  // The decoder consumed all input without completing a frame.
  WR_STATUS_NEED_MORE = 1,
  // The simulation has run all its cycles.
  WR_STATUS_DONE = 2,
  WR_STATUS_NULL_POINTER = -1,
  WR_STATUS_RANGE = -2,
  WR_STATUS_CHECKSUM = -3,
  WR_STATUS_UNKNOWN_TYPE = -4,
  WR_STATUS_MALFORMED = -5,
  WR_STATUS_BUFFER_TOO_SMALL = -6,
  WR_STATUS_INVALID_ARGUMENT = -7,
  WR_STATUS_INTERNAL = -8,
} WrStatus;

// Opaque incremental frame decoder.
typedef struct WrDecoder WrDecoder;

// Opaque running simulation.
typedef struct WrSimulation WrSimulation;

typedef struct WrOrder {
  // One of the `WR_ORDER_*` constants.
  uint8_t kind;
  double wheels[4];
  double steering;
} WrOrder;

typedef struct WrTelemetry {
  uint16_t cycle;
  double velocity[4];
  double current[4];
  double position;
  uint16_t compute_us;
  uint8_t op_state;
  uint8_t mode;
  bool fault;
} WrTelemetry;

typedef struct WrDecoded {
  // One of the `WR_DECODED_*` constants; selects the valid field.
  uint8_t tag;
  struct WrOrder order;
  struct WrTelemetry telemetry;
} WrDecoded;

// Operation state for wr_fsm_step. `op_code` is 0 working, 1..=n
// waiting, 127 reconnecting; `mode` indexes a ring of `mode_count` modes.
typedef struct WrFsmState {
  uint8_t op_code;
  uint32_t mode;
  uint8_t n;
  uint32_t mode_count;
} WrFsmState;

typedef struct WrSimOptions {
  // Built-in scenario 1..=4.
  uint8_t scenario;
  // Cycle count; negative keeps the scenario's default.
  int64_t cycles;
  bool threaded;
  // Measure compute time with the host clock; otherwise report 0.
  bool wall_timing;
  // Inject set-points as RC pulses instead of PC frames.
  bool rc_source;
  uint64_t seed;
} WrSimOptions;

typedef struct WrCycleMetrics {
  uint64_t cycle;
  uint64_t compute_us;
  uint8_t op_state;
  uint8_t mode;
  double wheel_setpoint[4];
  double wheel_rpm[4];
  double wheel_volts[4];
  double wheel_ma[4];
  double steer_setpoint;
  double steer_deg;
  bool fault;
} WrCycleMetrics;

typedef struct WrSummary {
  uint64_t cycles;
  double avg_ms;
  double max_ms;
  double budget_ms;
  uint64_t violations;
  uint64_t faults;
  bool empty;
} WrSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` as a
// NUL-terminated string and returns the full message length (without NUL).
// Pass a null `buf` to query the length.
size_t wr_last_error(char *buf, size_t cap);

// CRC-8 (polynomial 0x07) of `len` bytes.
enum WrStatus wr_crc8(const uint8_t *data, size_t len, uint8_t *out);

// Encodes an order into `buf`. `*written` receives the frame length, also
// when the buffer is too small.
enum WrStatus wr_encode_order(const struct WrOrder *order,
                              uint8_t *buf,
                              size_t cap,
                              size_t *written);

enum WrStatus wr_encode_telemetry(const struct WrTelemetry *telemetry,
                                  uint8_t *buf,
                                  size_t cap,
                                  size_t *written);

struct WrDecoder *wr_decoder_new(void);

void wr_decoder_free(struct WrDecoder *decoder);

// Feeds bytes until a frame completes or the input is exhausted.
// `*consumed` is how many bytes were used. Returns `Ok` with `*out` filled
// for a valid frame, a negative status for a rejected frame, or `NeedMore`.
enum WrStatus wr_decoder_feed(struct WrDecoder *decoder,
                              const uint8_t *data,
                              size_t len,
                              size_t *consumed,
                              struct WrDecoded *out);

// One step of the operation state machine. `*read_new` is set when the
// controller should read the pending message.
enum WrStatus wr_fsm_step(const struct WrFsmState *state,
                          bool available,
                          struct WrFsmState *next,
                          bool *read_new);

// Builds a simulation of a built-in scenario. `config` is optional
// `key=value` text layered over the defaults.
enum WrStatus wr_simulation_new(const struct WrSimOptions *options,
                                const char *config,
                                struct WrSimulation **out);

// Runs one control cycle. Returns `Done` once every cycle has run.
enum WrStatus wr_simulation_step(struct WrSimulation *sim, struct WrCycleMetrics *out);

// Summary of the cycles run so far.
enum WrStatus wr_simulation_summary(const struct WrSimulation *sim, struct WrSummary *out);

void wr_simulation_free(struct WrSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WRMCU_H */
