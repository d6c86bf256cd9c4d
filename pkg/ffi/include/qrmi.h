/*
 * qrmi.h - flat C surface over the quantum resource management library.
 *
 * The library embeds a Python interpreter on first qrmi_open(); handles are
 * safe for concurrent use by multiple native threads. All calls are
 * synchronous; a blocking acquire blocks only the calling thread and no
 * callback ever crosses this boundary.
 *
 * String outputs are UTF-8 copies into caller-owned buffers. Every function
 * with an output buffer takes (buf, buf_len, out_len): on success *out_len
 * is the number of bytes written including the NUL terminator; when the
 * buffer is too small the call returns QRMI_E_BUFFER_TOO_SMALL and *out_len
 * holds the required length. A too-small buffer on qrmi_acquire or
 * qrmi_task_start rolls the side effect back (the slot is released / the
 * task is stopped) before returning.
 *
 * qrmi_close is an idempotent no-op on an already-closed handle; closed
 * handle structs are retained (a few bytes each) so double close is safe.
 */

#ifndef QRMI_H
#define QRMI_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define QRMI_ABI_VERSION 1

/* Generous upper bounds for fixed-size caller buffers. */
#define QRMI_TOKEN_BUFLEN 128
#define QRMI_TASK_ID_BUFLEN 64
#define QRMI_STATUS_BUFLEN 16

typedef struct qrmi_handle qrmi_handle;

typedef enum qrmi_status_code {
    QRMI_OK = 0,
    QRMI_E_RUNTIME = -1,
    QRMI_E_UNKNOWN_RESOURCE = -2,
    QRMI_E_RESOURCE_UNAVAILABLE = -3,
    QRMI_E_ACQUIRE_TIMEOUT = -4,
    QRMI_E_INVALID_TOKEN = -5,
    QRMI_E_ALREADY_RELEASED = -6,
    QRMI_E_MALFORMED_PAYLOAD = -7,
    QRMI_E_UNKNOWN_TASK = -8,
    QRMI_E_TASK_FAILED = -9,
    QRMI_E_TASK_CANCELLED = -10,
    QRMI_E_POOL_CLOSED = -11,
    QRMI_E_AUTH_FAILED = -12,
    QRMI_E_GATEWAY_UNREACHABLE = -13,
    QRMI_E_BUFFER_TOO_SMALL = -14,
    QRMI_E_BAD_ARGUMENT = -15
} qrmi_status_code;

/* Open a registry from a config file; NULL on failure (see qrmi_last_error). */
qrmi_handle *qrmi_open(const char *config_path);

/* Close the registry; safe to call twice. */
void qrmi_close(qrmi_handle *handle);

/* Last error message for the calling thread (empty string if none). */
const char *qrmi_last_error(void);

/* Liveness probe; *out_accessible is 1 or 0. */
int qrmi_is_accessible(qrmi_handle *handle, const char *resource_id, int *out_accessible);

/* Blocking slot acquisition. timeout_ms < 0 waits forever. The token string
 * written to token_buf is the capability passed to task_start/release. */
int qrmi_acquire(qrmi_handle *handle, const char *resource_id, double timeout_ms,
                 char *token_buf, size_t token_buf_len, size_t *out_len);

/* Release a held token; double release returns QRMI_E_ALREADY_RELEASED. */
int qrmi_release(qrmi_handle *handle, const char *token);

/* Start a task under a token. format is a payload tag such as "circuit-v1";
 * body is the payload bytes; shots must match the payload for circuit-v1. */
int qrmi_task_start(qrmi_handle *handle, const char *token, const char *format,
                    const unsigned char *body, size_t body_len, int shots,
                    char *task_id_buf, size_t task_id_buf_len, size_t *out_len);

/* Cancel a task; success no-op when it is already terminal. */
int qrmi_task_stop(qrmi_handle *handle, const char *task_id);

/* Current lifecycle state as text: Queued, Running, Completed, Failed,
 * Cancelled. */
int qrmi_task_status(qrmi_handle *handle, const char *task_id,
                     char *status_buf, size_t status_buf_len, size_t *out_len);

/* Result of a terminal task as JSON, e.g. {"counts":{"00":506,...},...}.
 * Blocks until the task is terminal; Failed/Cancelled tasks return their
 * error codes instead. */
int qrmi_task_result(qrmi_handle *handle, const char *task_id,
                     char *json_buf, size_t json_buf_len, size_t *out_len);

/* Serialized device constraints as JSON (stable bytes per config). */
int qrmi_target(qrmi_handle *handle, const char *resource_id,
                char *json_buf, size_t json_buf_len, size_t *out_len);

/* Device metadata as a JSON object of strings. */
int qrmi_metadata(qrmi_handle *handle, const char *resource_id,
                  char *json_buf, size_t json_buf_len, size_t *out_len);

#ifdef __cplusplus
}
#endif

#endif /* QRMI_H */
