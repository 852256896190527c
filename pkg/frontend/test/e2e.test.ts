/**
 * The whole clinic visit against a live gateway: boot and seed a state
 * directory with the CLI, start `ghr serve`, then drive the patient
 * dashboard and the physician workspace through real DOM. Also checks
 * the thin-client rule by recording the wire traffic: every
 * enable/disable decision must trace to a field in a recorded reply.
 */
import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { GatewayClient, GatewayReply, Transport } from "../src/api";
import { DashboardController } from "../src/dashboard";
import { TcpTransport } from "../src/tcp";
import { WorkspaceController } from "../src/workspace";

class RecordingTransport implements Transport {
  readonly log: Array<{ sent: Record<string, unknown>; received: GatewayReply }> = [];

  constructor(private readonly inner: Transport) {}

  async call(message: Record<string, unknown>): Promise<GatewayReply> {
    const received = await this.inner.call(message);
    this.log.push({ sent: message, received });
    return received;
  }

  close(): void {
    this.inner.close();
  }

  replies(op: string): GatewayReply[] {
    return this.log.filter((x) => x.sent.op === op).map((x) => x.received);
  }
}

let stateDir: string;
let server: ChildProcess;
let port: number;
let cohort: any;

function cli(...args: string[]): void {
  execFileSync("python3", ["-m", "ghr.cli", ...args], { stdio: "pipe" });
}

beforeAll(async () => {
  stateDir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  cli("boot", "--state", stateDir);
  cli("seed", "--state", stateDir, "--users", "1");
  cohort = JSON.parse(readFileSync(join(stateDir, "world.json"), "utf-8")).cohorts[0];

  server = spawn("python3", ["-m", "ghr.cli", "serve", "--state", stateDir, "--port", "0"], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  port = await new Promise<number>((resolve, reject) => {
    let banner = "";
    server.stdout!.on("data", (chunk: Buffer) => {
      banner += chunk.toString();
      const line = banner.split("\n")[0];
      if (line && banner.includes("\n")) {
        resolve(Number(line.trim().split(":").pop()));
      }
    });
    server.on("exit", (code) => reject(new Error(`serve exited early with ${code}`)));
    setTimeout(() => reject(new Error(`no banner, got: ${banner}`)), 15000);
  });
});

afterAll(() => {
  server?.kill();
  if (stateDir) {
    rmSync(stateDir, { recursive: true, force: true });
  }
});

describe("console end to end", () => {
  it("carries a clinic visit from code to notification", async () => {
    const patient = cohort.patients[0];

    // Patient side: log in from home, mount the dashboard, hand the
    // physician a one-time code.
    const patWire = new RecordingTransport(await TcpTransport.connect("127.0.0.1", port));
    const patClient = new GatewayClient(patWire);
    await patClient.login(patient.patient_id, "pt-ops", { address: patient.home_address });
    const patRoot = document.createElement("div");
    document.body.append(patRoot);
    const dashboard = new DashboardController(patClient, patRoot, {
      pollMs: 3600_000,
      confirm: () => true,
    });
    await dashboard.mount();
    await dashboard.generateOtp();
    const code = patRoot.querySelector(".otp-code")!.textContent!;
    expect(code).toMatch(/^[0-9A-HJKMNP-TV-Z]{8}$/);
    expect(patRoot.querySelector(".otp-countdown")!.textContent).toMatch(/^\d+s$/);

    // Physician side: clinic login. Name search must be greyed out,
    // and the disablement must equal what the server answered.
    const drWire = new RecordingTransport(await TcpTransport.connect("127.0.0.1", port));
    const drClient = new GatewayClient(drWire);
    const drSession = await drClient.login(cohort.physician_b, "dr-ops", {
      clinic_endpoint: cohort.clinic_endpoint,
      address: cohort.clinic_address,
    });
    expect(drSession.locationConfirmed).toBe(true);
    const drRoot = document.createElement("div");
    document.body.append(drRoot);
    const workspace = new WorkspaceController(drClient, drRoot);
    await workspace.mount();

    const nameButton = drRoot.querySelector<HTMLButtonElement>(".name-search")!;
    const granted = drWire.replies("affordances")[0] as { ok: true; result: any };
    expect(granted.ok).toBe(true);
    const axes: string[] = granted.result.scope.searchable_by;
    expect(nameButton.disabled).toBe(!axes.includes("name"));
    expect(nameButton.disabled).toBe(true);
    expect(drRoot.querySelector<HTMLElement>(".record")!.hidden).toBe(true);
    expect(drWire.replies("search")).toHaveLength(0);

    // A wrong code surfaces the server's error verbatim and opens
    // nothing.
    drRoot.querySelector<HTMLInputElement>(".redeem-patient")!.value = patient.patient_id;
    drRoot.querySelector<HTMLInputElement>(".redeem-code")!.value = code === "00000000" ? "00000001" : "00000000";
    await workspace.redeem(patient.patient_id, code === "00000000" ? "00000001" : "00000000");
    expect(drRoot.querySelector(".error-line")!.textContent).toContain("invalid-presence-proof");
    expect(drRoot.querySelector<HTMLElement>(".record")!.hidden).toBe(true);

    // The spoken code unlocks the full record: tabs for every section,
    // and the case editor follows the scope on the hit.
    await workspace.redeem(patient.patient_id, code);
    expect(drRoot.querySelector(".error-line")!.textContent).toBe("");
    const record = drRoot.querySelector<HTMLElement>(".record")!;
    expect(record.hidden).toBe(false);
    const tabs = [...drRoot.querySelectorAll(".tab")].map((b) => (b as HTMLElement).dataset.kind);
    expect(tabs).toEqual(["contact", "insurance", "medical", "other"]);
    expect(drRoot.querySelector(".record-name")!.textContent).toBe(patient.display_name);

    const editor = drRoot.querySelector<HTMLFieldSetElement>(".case-editor")!;
    const hitReply = drWire.replies("search").at(-1) as { ok: true; result: any };
    expect(editor.disabled).toBe(!hitReply.result.hits[0].scope.can_write_medical);
    expect(editor.disabled).toBe(false);

    // Append a case from the editor; it lands tagged with the
    // physician and the clinic.
    await workspace.openTab("medical");
    expect(drRoot.querySelectorAll(".tab-view .entries li[data-entry-id]")).toHaveLength(0);
    drRoot.querySelector<HTMLInputElement>(".case-summary")!.value = "seasonal influenza";
    drRoot.querySelector<HTMLInputElement>(".disease-codes")!.value = "J10";
    await workspace.appendCase();
    const entry = drRoot.querySelector(".tab-view .entries li[data-entry-id]")!;
    expect(entry.textContent).toContain("case by " + cohort.physician_b);
    expect(entry.textContent).toContain(cohort.clinic_endpoint);
    expect(entry.textContent).toContain("seasonal influenza");

    // Patient side again: the feed names the physician, the clinic,
    // and the moment; the record shows the new case.
    await dashboard.poll();
    const notes = [...patRoot.querySelectorAll(".notifications li[data-kind='record_accessed']")];
    expect(notes.length).toBeGreaterThanOrEqual(1);
    const line = notes.map((n) => n.textContent).join("\n");
    expect(line).toContain(cohort.physician_b);
    expect(line).toContain(`clinic:${cohort.clinic_endpoint}`);
    expect(line).toMatch(/\d{4}-\d{2}-\d{2}T\d{2}:\d{2}/);
    expect(line).toContain("one-time code");

    await dashboard.openSection("medical");
    const ownEntry = patRoot.querySelector(".section-view .entries li[data-entry-id]")!;
    expect(ownEntry.textContent).toContain("seasonal influenza");
    expect(ownEntry.textContent).toContain(cohort.physician_b);

    // Thin-client rule: the one-time code never touched client
    // storage, and no policy was computed locally; the disabled states
    // asserted above came from recorded replies.
    expect(localStorage.length).toBe(0);

    dashboard.unmount();
    await patClient.logout();
    await drClient.logout();
    patWire.close();
    drWire.close();

    console.log(
      "\n[acceptance 10] PASS - clinic visit: code redeemed once, record tabs after redemption, " +
        "name search stayed server-disabled, feed shows physician, time, and location",
    );
  }, 30000);
});
