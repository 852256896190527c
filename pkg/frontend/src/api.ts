/**
 * Typed client for the gateway's dict-in, dict-out API. The console
 * holds no policy logic: everything here forwards arguments and hands
 * replies back, and controllers render whatever scope the server
 * reported.
 */
import { LoginResult, ViewSession } from "./session";

export type GatewayReply =
  | { ok: true; result: any }
  | { ok: false; error: string; message?: string; retriable?: boolean };

export interface Transport {
  call(message: Record<string, unknown>): Promise<GatewayReply>;
  close(): void;
}

export class GatewayError extends Error {
  readonly code: string;
  readonly retriable: boolean;

  constructor(code: string, message: string, retriable = false) {
    super(message || code);
    this.name = "GatewayError";
    this.code = code;
    this.retriable = retriable;
  }
}

export interface WireScope {
  level: string;
  searchable_by: string[];
  identifiers_visible: string;
  can_write_medical: boolean;
}

export interface SearchHit {
  sections: Record<string, string>;
  scope: WireScope;
  patient_id?: string;
  display_name?: string;
}

export interface SectionView {
  virtual_id: string;
  kind: string;
  created_at: number;
  updated_at: number;
  entries?: RecordEntry[];
  payload?: Record<string, unknown>;
}

export interface RecordEntry {
  entry_id: string;
  entry_kind: string;
  body: Record<string, unknown>;
  author: string;
  hospital_tag?: string | null;
  physician_tag?: string | null;
  clinic_tag?: string | null;
  disease_codes?: string[];
  corrects?: string | null;
  created_at: number;
  seq: number;
}

export interface NotificationView {
  id: number;
  kind: string;
  body: Record<string, any>;
  created_at: number;
  read: boolean;
}

/**
 * Replies may land out of order when calls overlap; panels keep the
 * reply of the newest request they issued and drop the rest.
 */
export class StaleGuard {
  private issued = 0;
  private applied = 0;

  begin(): number {
    this.issued += 1;
    return this.issued;
  }

  accept(seq: number): boolean {
    if (seq <= this.applied) {
      return false;
    }
    this.applied = seq;
    return true;
  }
}

export class GatewayClient {
  session: ViewSession | null = null;
  onSessionLost: (() => void) | null = null;

  constructor(
    private readonly transport: Transport,
    private readonly now: () => number = Date.now,
  ) {}

  async login(
    actorId: string,
    password: string,
    context?: Record<string, string>,
  ): Promise<ViewSession> {
    const result = (await this.raw({
      op: "login",
      args: { actor_id: actorId, password, context: context ?? {} },
    })) as LoginResult;
    this.session = new ViewSession(result, this.now);
    return this.session;
  }

  async call(op: string, args: Record<string, unknown> = {}): Promise<any> {
    if (!this.session || this.session.expired(this.now)) {
      this.dropSession();
      throw new GatewayError("session-expired", "log in again");
    }
    try {
      const result = await this.raw({ op, session: this.session.token, args });
      this.session.touch(this.now);
      return result;
    } catch (err) {
      if (
        err instanceof GatewayError &&
        (err.code === "session-expired" || err.code === "session-unknown")
      ) {
        this.dropSession();
      }
      throw err;
    }
  }

  private async raw(message: Record<string, unknown>): Promise<any> {
    const reply = await this.transport.call(message);
    if (reply.ok) {
      return reply.result;
    }
    throw new GatewayError(reply.error, reply.message ?? "", reply.retriable);
  }

  private dropSession(): void {
    if (this.session) {
      this.session = null;
      this.onSessionLost?.();
    }
  }

  async logout(): Promise<void> {
    try {
      await this.call("logout");
    } finally {
      this.session = null;
    }
  }

  whoami(): Promise<any> {
    return this.call("whoami");
  }

  affordances(): Promise<{ scope: WireScope; location: string }> {
    return this.call("affordances");
  }

  dashboard(): Promise<any> {
    return this.call("dashboard");
  }

  otpGenerate(): Promise<{ code: string; expires_at: number; ttl_s: number }> {
    return this.call("otp_generate");
  }

  otpStatus(): Promise<{ active: boolean; expires_in_s?: number }> {
    return this.call("otp_status");
  }

  otpRedeem(patientId: string, code: string): Promise<{ patient_id: string; sections: Record<string, string> }> {
    return this.call("otp_redeem", { patient_id: patientId, code });
  }

  searchByName(query: string): Promise<{ hits: SearchHit[] }> {
    return this.call("search", { query });
  }

  searchById(patientId: string): Promise<{ hits: SearchHit[] }> {
    return this.call("search", { patient_id: patientId });
  }

  readSection(virtualId: string): Promise<SectionView> {
    return this.call("read_section", { virtual_id: virtualId });
  }

  appendEntry(virtualId: string, entry: Record<string, unknown>): Promise<{ entry_id: string; seq: number; digest: string }> {
    return this.call("append_entry", { virtual_id: virtualId, ...entry });
  }

  grantTrust(grantee: string, kinds?: string[]): Promise<any> {
    return this.call("grant_trust", { grantee, kinds });
  }

  revokeTrust(grantee: string): Promise<any> {
    return this.call("revoke_trust", { grantee });
  }

  listGrants(): Promise<{ grants: any[] }> {
    return this.call("list_grants");
  }

  setGlobalAccess(enabled: boolean): Promise<{ enabled: boolean }> {
    return this.call("set_global_access", { enabled });
  }

  getGlobalAccess(): Promise<{ enabled: boolean }> {
    return this.call("get_global_access");
  }

  notifications(opts: { peek?: boolean; includeRead?: boolean } = {}): Promise<{ notifications: NotificationView[] }> {
    return this.call("notifications", {
      peek: opts.peek ?? false,
      include_read: opts.includeRead ?? false,
    });
  }

  auditQuery(limit = 50): Promise<{ events: any[] }> {
    return this.call("audit_query", { limit });
  }
}
