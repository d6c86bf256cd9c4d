import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  QrmiError,
  QrmiSession,
  QrmiStatus,
  TOKEN_BUFLEN,
  loadLibrary,
} from "../src/qrmi";

const BELL_CIRCUIT = "qubits 2\nh 0\ncx 0 1\nmeasure_all\nshots 1000\nseed 42\n";

// Frozen from the native-path run of the same seeded circuit; any drift
// here is a cross-language determinism regression.
const BELL_GOLDEN: Record<string, number> = { "00": 506, "11": 494 };

let configPath: string;
let session: QrmiSession;

beforeAll(() => {
  const dir = mkdtempSync(join(tmpdir(), "qrmi-node-"));
  configPath = join(dir, "qrmi_config.json");
  writeFileSync(
    configPath,
    JSON.stringify({
      version: 1,
      resources: [
        {
          id: "qpu0",
          backend: "simulated",
          lanes: 2,
          device: { num_qubits: 2, num_lanes: 2, exec_time_per_shot: 0.001 },
        },
      ],
    }),
  );
  session = QrmiSession.open(configPath);
});

afterAll(() => {
  session.close();
  session.close(); // double close must be a safe no-op
});

describe("session lifecycle", () => {
  it("rejects a bad config path with a message naming it", () => {
    expect(() => QrmiSession.open("/definitely/not/here.json")).toThrowError(/not\/here/);
  });

  it("probes accessibility", () => {
    expect(session.isAccessible("qpu0")).toBe(true);
  });

  it("maps unknown resources to their status code", () => {
    try {
      session.isAccessible("ghost");
      expect.unreachable("ghost resource must throw");
    } catch (error) {
      expect((error as QrmiError).code).toBe(QrmiStatus.UnknownResource);
    }
  });
});

describe("bell round trip", () => {
  it("reproduces the native-path counts byte for byte", () => {
    const token = session.acquire("qpu0");
    expect(token.length).toBeGreaterThanOrEqual(16);
    const taskId = session.taskStart(token, "circuit-v1", BELL_CIRCUIT, 1000);
    const status = session.taskStatus(taskId);
    expect(["Queued", "Running", "Completed"]).toContain(status);
    const result = session.taskResult(taskId);
    expect(result.counts).toEqual(BELL_GOLDEN);
    const total = Object.values(result.counts!).reduce((a, b) => a + b, 0);
    expect(total).toBe(1000);
    session.release(token);
  });

  it("reports ALREADY_RELEASED on double release", () => {
    const token = session.acquire("qpu0");
    session.release(token);
    try {
      session.release(token);
      expect.unreachable("double release must throw");
    } catch (error) {
      expect((error as QrmiError).code).toBe(QrmiStatus.AlreadyReleased);
    }
  });

  it("cancels tasks and reports them", () => {
    const slow = "qubits 1\nx 0\nmeasure_all\nshots 100000\nseed 1\n";
    const token = session.acquire("qpu0");
    const taskId = session.taskStart(token, "circuit-v1", slow, 100000);
    session.taskStop(taskId);
    expect(session.taskStatus(taskId)).toBe("Cancelled");
    try {
      session.taskResult(taskId);
      expect.unreachable("cancelled task result must throw");
    } catch (error) {
      expect((error as QrmiError).code).toBe(QrmiStatus.TaskCancelled);
    }
    session.release(token);
  });

  it("times out immediately on a busy pool", () => {
    const first = session.acquire("qpu0");
    const second = session.acquire("qpu0");
    try {
      session.acquire("qpu0", 0);
      expect.unreachable("third acquire on two lanes must time out");
    } catch (error) {
      expect((error as QrmiError).code).toBe(QrmiStatus.AcquireTimeout);
    } finally {
      session.release(first);
      session.release(second);
    }
  });
});

describe("descriptors", () => {
  it("returns metadata with required keys", () => {
    const metadata = session.metadata("qpu0");
    expect(metadata.backend_type).toBe("simulated");
    expect(metadata.num_lanes).toBe("2");
  });

  it("returns a stable versioned target", () => {
    const first = session.target("qpu0");
    const second = session.target("qpu0");
    expect(first.version).toBe(1);
    expect(first.body).toBe(second.body);
  });
});

describe("raw buffer protocol", () => {
  it("reports the required length for undersized buffers", () => {
    const lib = loadLibrary();
    const token = session.acquire("qpu0");
    const taskId = session.taskStart(token, "circuit-v1", BELL_CIRCUIT, 1000);
    session.taskResult(taskId); // wait until terminal
    const tiny = Buffer.alloc(4);
    const needed = [0];
    const code = lib.qrmi_task_result(
      (session as unknown as { handle: unknown }).handle, taskId, tiny, 4, needed,
    );
    expect(code).toBe(QrmiStatus.BufferTooSmall);
    expect(needed[0]).toBeGreaterThan(4);
    session.release(token);
  });

  it("exposes token buffer sizing", () => {
    expect(TOKEN_BUFLEN).toBeGreaterThanOrEqual(33); // 32 hex chars + NUL
  });
});
