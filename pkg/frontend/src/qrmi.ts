/**
 * Node bindings for libqrmi.so, the C surface of the quantum resource
 * management library.
 *
 * The shared library embeds a Python interpreter, so it is loaded with
 * global symbol visibility (and libpython is preloaded when found) to let
 * the embedded runtime resolve its extension modules.
 */

import * as koffi from "koffi";
import { existsSync } from "node:fs";
import { join } from "node:path";

export enum QrmiStatus {
  Ok = 0,
  Runtime = -1,
  UnknownResource = -2,
  ResourceUnavailable = -3,
  AcquireTimeout = -4,
  InvalidToken = -5,
  AlreadyReleased = -6,
  MalformedPayload = -7,
  UnknownTask = -8,
  TaskFailed = -9,
  TaskCancelled = -10,
  PoolClosed = -11,
  AuthFailed = -12,
  GatewayUnreachable = -13,
  BufferTooSmall = -14,
  BadArgument = -15,
}

export const TOKEN_BUFLEN = 128;
export const TASK_ID_BUFLEN = 64;
export const STATUS_BUFLEN = 16;

const DEFAULT_LIB_CANDIDATES = [
  process.env.QRMI_LIB ?? "",
  join(__dirname, "..", "..", "ffi", "libqrmi.so"),
  join(__dirname, "..", "..", "..", "ffi", "libqrmi.so"),
].filter((p) => p.length > 0);

export interface QrmiSymbols {
  qrmi_open: (path: string) => unknown;
  qrmi_close: (handle: unknown) => void;
  qrmi_last_error: () => string;
  qrmi_is_accessible: (handle: unknown, rid: string, out: number[]) => number;
  qrmi_acquire: (
    handle: unknown, rid: string, timeoutMs: number,
    buf: Buffer, bufLen: number, outLen: number[] | null,
  ) => number;
  qrmi_release: (handle: unknown, token: string) => number;
  qrmi_task_start: (
    handle: unknown, token: string, format: string,
    body: Buffer, bodyLen: number, shots: number,
    buf: Buffer, bufLen: number, outLen: number[] | null,
  ) => number;
  qrmi_task_stop: (handle: unknown, taskId: string) => number;
  qrmi_task_status: (
    handle: unknown, taskId: string, buf: Buffer, bufLen: number, outLen: number[] | null,
  ) => number;
  qrmi_task_result: (
    handle: unknown, taskId: string, buf: Buffer, bufLen: number, outLen: number[] | null,
  ) => number;
  qrmi_target: (
    handle: unknown, rid: string, buf: Buffer, bufLen: number, outLen: number[] | null,
  ) => number;
  qrmi_metadata: (
    handle: unknown, rid: string, buf: Buffer, bufLen: number, outLen: number[] | null,
  ) => number;
}

let cached: QrmiSymbols | null = null;

export function loadLibrary(libPath?: string): QrmiSymbols {
  if (cached && !libPath) return cached;
  const path = libPath ?? DEFAULT_LIB_CANDIDATES.find((p) => existsSync(p));
  if (!path || !existsSync(path)) {
    throw new Error(
      `libqrmi.so not found (tried ${DEFAULT_LIB_CANDIDATES.join(", ")}); build it with 'make -C ffi'`,
    );
  }
  // The embedded interpreter's extension modules need libpython symbols in
  // the global scope; harmless to skip when the soname differs.
  for (const soname of ["libpython3.10.so.1.0", "libpython3.11.so.1.0", "libpython3.12.so.1.0"]) {
    try {
      koffi.load(soname, { global: true, lazy: true });
      break;
    } catch {
      /* try the next soname */
    }
  }
  const lib = koffi.load(path, { global: true });
  const symbols: QrmiSymbols = {
    qrmi_open: lib.func("void *qrmi_open(const char *path)") as QrmiSymbols["qrmi_open"],
    qrmi_close: lib.func("void qrmi_close(void *handle)") as QrmiSymbols["qrmi_close"],
    qrmi_last_error: lib.func("const char *qrmi_last_error()") as QrmiSymbols["qrmi_last_error"],
    qrmi_is_accessible: lib.func(
      "int qrmi_is_accessible(void *handle, const char *rid, _Out_ int *out)",
    ) as QrmiSymbols["qrmi_is_accessible"],
    qrmi_acquire: lib.func(
      "int qrmi_acquire(void *handle, const char *rid, double timeout_ms, _Out_ char *buf, size_t buf_len, _Out_ size_t *out_len)",
    ) as QrmiSymbols["qrmi_acquire"],
    qrmi_release: lib.func(
      "int qrmi_release(void *handle, const char *token)",
    ) as QrmiSymbols["qrmi_release"],
    qrmi_task_start: lib.func(
      "int qrmi_task_start(void *handle, const char *token, const char *format, const uint8_t *body, size_t body_len, int shots, _Out_ char *buf, size_t buf_len, _Out_ size_t *out_len)",
    ) as QrmiSymbols["qrmi_task_start"],
    qrmi_task_stop: lib.func(
      "int qrmi_task_stop(void *handle, const char *task_id)",
    ) as QrmiSymbols["qrmi_task_stop"],
    qrmi_task_status: lib.func(
      "int qrmi_task_status(void *handle, const char *task_id, _Out_ char *buf, size_t buf_len, _Out_ size_t *out_len)",
    ) as QrmiSymbols["qrmi_task_status"],
    qrmi_task_result: lib.func(
      "int qrmi_task_result(void *handle, const char *task_id, _Out_ char *buf, size_t buf_len, _Out_ size_t *out_len)",
    ) as QrmiSymbols["qrmi_task_result"],
    qrmi_target: lib.func(
      "int qrmi_target(void *handle, const char *rid, _Out_ char *buf, size_t buf_len, _Out_ size_t *out_len)",
    ) as QrmiSymbols["qrmi_target"],
    qrmi_metadata: lib.func(
      "int qrmi_metadata(void *handle, const char *rid, _Out_ char *buf, size_t buf_len, _Out_ size_t *out_len)",
    ) as QrmiSymbols["qrmi_metadata"],
  };
  if (!libPath) cached = symbols;
  return symbols;
}

export class QrmiError extends Error {
  constructor(readonly code: QrmiStatus, message: string) {
    super(`[${QrmiStatus[code] ?? code}] ${message}`);
    this.name = "QrmiError";
  }
}

function readCString(buf: Buffer): string {
  const end = buf.indexOf(0);
  return buf.toString("utf8", 0, end < 0 ? buf.length : end);
}

export interface TaskResult {
  task: string;
  completed_at: number;
  counts?: Record<string, number>;
  raw_b64?: string;
}

/** High-level session: one open registry behind an opaque native handle. */
export class QrmiSession {
  private constructor(
    private readonly lib: QrmiSymbols,
    private handle: unknown,
  ) {}

  static open(configPath: string, libPath?: string): QrmiSession {
    const lib = loadLibrary(libPath);
    const handle = lib.qrmi_open(configPath);
    if (!handle) {
      throw new QrmiError(QrmiStatus.Runtime, lib.qrmi_last_error());
    }
    return new QrmiSession(lib, handle);
  }

  private check(code: number): void {
    if (code !== QrmiStatus.Ok) {
      throw new QrmiError(code, this.lib.qrmi_last_error());
    }
  }

  private stringCall(
    fn: (buf: Buffer, bufLen: number, outLen: number[] | null) => number,
    bufLen: number,
  ): string {
    const buf = Buffer.alloc(bufLen);
    this.check(fn(buf, bufLen, null));
    return readCString(buf);
  }

  isAccessible(resourceId: string): boolean {
    const out = [0];
    this.check(this.lib.qrmi_is_accessible(this.handle, resourceId, out));
    return out[0] === 1;
  }

  /** Blocking slot acquisition; timeoutMs < 0 waits forever. */
  acquire(resourceId: string, timeoutMs = -1): string {
    return this.stringCall(
      (buf, len, out) => this.lib.qrmi_acquire(this.handle, resourceId, timeoutMs, buf, len, out),
      TOKEN_BUFLEN,
    );
  }

  release(token: string): void {
    this.check(this.lib.qrmi_release(this.handle, token));
  }

  taskStart(token: string, format: string, body: Buffer | string, shots: number): string {
    const bytes = typeof body === "string" ? Buffer.from(body, "utf8") : body;
    return this.stringCall(
      (buf, len, out) =>
        this.lib.qrmi_task_start(this.handle, token, format, bytes, bytes.length, shots, buf, len, out),
      TASK_ID_BUFLEN,
    );
  }

  taskStop(taskId: string): void {
    this.check(this.lib.qrmi_task_stop(this.handle, taskId));
  }

  taskStatus(taskId: string): string {
    return this.stringCall(
      (buf, len, out) => this.lib.qrmi_task_status(this.handle, taskId, buf, len, out),
      STATUS_BUFLEN,
    );
  }

  /** Blocks until the task is terminal; Failed/Cancelled tasks throw. */
  taskResult(taskId: string, bufLen = 1 << 20): TaskResult {
    const text = this.stringCall(
      (buf, len, out) => this.lib.qrmi_task_result(this.handle, taskId, buf, len, out),
      bufLen,
    );
    return JSON.parse(text) as TaskResult;
  }

  target(resourceId: string): { resource: string; format: string; body: string; version: number } {
    const text = this.stringCall(
      (buf, len, out) => this.lib.qrmi_target(this.handle, resourceId, buf, len, out),
      1 << 16,
    );
    return JSON.parse(text);
  }

  metadata(resourceId: string): Record<string, string> {
    const text = this.stringCall(
      (buf, len, out) => this.lib.qrmi_metadata(this.handle, resourceId, buf, len, out),
      1 << 16,
    );
    return JSON.parse(text);
  }

  /** Idempotent: closing twice is safe. */
  close(): void {
    this.lib.qrmi_close(this.handle);
  }
}
