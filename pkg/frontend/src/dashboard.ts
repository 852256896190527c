/**
 * Patient dashboard: record summary, live one-time code, trust
 * manager, cross-border flag, and the access feed. Every state change
 * renders what the server answered; the widget never predicts policy.
 */
import { GatewayClient, NotificationView, StaleGuard } from "./api";

export interface DashboardOptions {
  /** Notification poll period; 5 s unless the deployment overrides it. */
  pollMs?: number;
  /** Confirmation hook for the global flag; window.confirm in the browser. */
  confirm?: (question: string) => boolean;
  now?: () => number;
}

interface OtpView {
  code: string;
  deadlineMs: number;
}

export class DashboardController {
  readonly root: HTMLElement;
  private readonly pollMs: number;
  private readonly askConfirm: (question: string) => boolean;
  private readonly now: () => number;
  private readonly summaryGuard = new StaleGuard();
  private readonly feedGuard = new StaleGuard();
  private sectionIds: Record<string, string> = {};
  // Lives only in this field and the DOM; storage APIs are never touched,
  // so a refresh forgets the code.
  private otp: OtpView | null = null;
  private globalAccess = false;
  private timers: ReturnType<typeof setInterval>[] = [];

  constructor(
    private readonly client: GatewayClient,
    root: HTMLElement,
    opts: DashboardOptions = {},
  ) {
    this.root = root;
    this.pollMs = opts.pollMs ?? 5000;
    this.askConfirm = opts.confirm ?? ((question) => window.confirm(question));
    this.now = opts.now ?? Date.now;
  }

  async mount(): Promise<void> {
    this.root.innerHTML = `
      <div class="dashboard">
        <section class="summary">
          <h2></h2>
          <ul class="sections"></ul>
          <div class="section-view" hidden><h3></h3><ul class="entries"></ul></div>
        </section>
        <section class="otp">
          <button class="otp-generate" type="button">New access code</button>
          <output class="otp-code" hidden></output>
          <output class="otp-countdown"></output>
        </section>
        <section class="global">
          <label><input type="checkbox" class="global-flag"> reachable from abroad</label>
        </section>
        <section class="trust">
          <input class="grantee" placeholder="physician id">
          <button class="grant-go" type="button">Trust</button>
          <ul class="grants"></ul>
        </section>
        <section class="feed">
          <span class="unread-badge"></span>
          <ul class="notifications"></ul>
        </section>
        <section class="audit">
          <ul class="audit-events"></ul>
        </section>
      </div>`;
    this.part<HTMLButtonElement>(".otp-generate").addEventListener("click", () => {
      void this.generateOtp();
    });
    this.part<HTMLInputElement>(".global-flag").addEventListener("change", () => {
      void this.toggleGlobal();
    });
    this.part<HTMLButtonElement>(".grant-go").addEventListener("click", () => {
      const grantee = this.part<HTMLInputElement>(".grantee").value.trim();
      if (grantee) {
        void this.grant(grantee);
      }
    });
    this.timers.push(setInterval(() => void this.poll(), this.pollMs));
    this.timers.push(setInterval(() => this.tick(), 1000));
    await this.refresh();
    await this.poll();
  }

  unmount(): void {
    for (const timer of this.timers) {
      clearInterval(timer);
    }
    this.timers = [];
    this.otp = null;
  }

  /** Pull the summary panel: sections, grants, flag, unread count. */
  async refresh(): Promise<void> {
    const seq = this.summaryGuard.begin();
    const view = await this.client.dashboard();
    const standing = await this.client.listGrants();
    if (!this.summaryGuard.accept(seq)) {
      return;
    }
    this.sectionIds = view.section_ids ?? {};
    this.globalAccess = Boolean(view.global_access);
    this.part("h2").textContent = this.client.session?.displayName ?? "";
    const sections = this.part(".sections");
    sections.replaceChildren(
      ...view.sections.map((kind: string) => {
        const item = document.createElement("li");
        item.dataset.kind = kind;
        const open = document.createElement("button");
        open.type = "button";
        open.textContent = kind;
        open.addEventListener("click", () => void this.openSection(kind));
        item.append(open);
        return item;
      }),
    );
    this.renderGrants(standing.grants ?? []);
    this.part<HTMLInputElement>(".global-flag").checked = this.globalAccess;
    this.part(".unread-badge").textContent = String(view.notifications_pending ?? 0);
  }

  async openSection(kind: string): Promise<void> {
    const view = await this.client.readSection(this.sectionIds[kind]);
    const panel = this.part<HTMLElement>(".section-view");
    panel.hidden = false;
    panel.querySelector("h3")!.textContent = kind;
    const list = panel.querySelector(".entries")!;
    if (view.entries) {
      list.replaceChildren(
        ...view.entries.map((entry) => {
          const item = document.createElement("li");
          item.dataset.entryId = entry.entry_id;
          const tags = [entry.hospital_tag, entry.clinic_tag, entry.physician_tag]
            .filter(Boolean)
            .join(" ");
          item.textContent = `${entry.entry_kind} by ${entry.author} ${tags} ${JSON.stringify(entry.body)}`;
          return item;
        }),
      );
    } else {
      const item = document.createElement("li");
      item.textContent = JSON.stringify(view.payload ?? {});
      list.replaceChildren(item);
    }
  }

  async generateOtp(): Promise<void> {
    const granted = await this.client.otpGenerate();
    this.otp = { code: granted.code, deadlineMs: this.now() + granted.ttl_s * 1000 };
    const face = this.part<HTMLOutputElement>(".otp-code");
    face.hidden = false;
    face.textContent = granted.code;
    this.tick();
  }

  /** Drive the countdown; called every second while mounted. */
  tick(): void {
    const label = this.part(".otp-countdown");
    if (!this.otp) {
      label.textContent = "";
      return;
    }
    const left = Math.max(0, Math.ceil((this.otp.deadlineMs - this.now()) / 1000));
    if (left === 0) {
      this.otp = null;
      const face = this.part<HTMLOutputElement>(".otp-code");
      face.hidden = true;
      face.textContent = "";
      label.textContent = "expired";
      return;
    }
    label.textContent = `${left}s`;
  }

  async toggleGlobal(): Promise<void> {
    const box = this.part<HTMLInputElement>(".global-flag");
    const wanted = box.checked;
    const question = wanted
      ? "Allow physicians abroad to read the medical record?"
      : "Stop answering lookups from abroad?";
    if (!this.askConfirm(question)) {
      box.checked = this.globalAccess;
      return;
    }
    const answer = await this.client.setGlobalAccess(wanted);
    this.globalAccess = Boolean(answer.enabled);
    box.checked = this.globalAccess;
  }

  async grant(grantee: string, kinds: string[] = ["medical"]): Promise<void> {
    await this.client.grantTrust(grantee, kinds);
    await this.refresh();
  }

  async revoke(grantee: string): Promise<void> {
    await this.client.revokeTrust(grantee);
    await this.refresh();
  }

  /** Fetch the notification feed; runs on the poll interval. */
  async poll(): Promise<void> {
    const seq = this.feedGuard.begin();
    const feed = await this.client.notifications({ includeRead: true });
    if (!this.feedGuard.accept(seq)) {
      return;
    }
    this.renderFeed(feed.notifications);
    const trail = await this.client.auditQuery(20);
    this.part(".audit-events").replaceChildren(
      ...trail.events.slice(-20).map((event: any) => {
        const item = document.createElement("li");
        item.textContent = `${event.action} ${event.target ?? ""} by ${event.actor}`;
        return item;
      }),
    );
  }

  private renderGrants(grants: any[]): void {
    this.part(".grants").replaceChildren(
      ...grants
        .filter((grant) => !grant.revoked_at)
        .map((grant) => {
          const item = document.createElement("li");
          item.dataset.grantee = grant.grantee_id;
          item.textContent = `${grant.grantee_id} (${grant.kinds.join(", ")}) `;
          const drop = document.createElement("button");
          drop.type = "button";
          drop.textContent = "Revoke";
          drop.addEventListener("click", () => void this.revoke(grant.grantee_id));
          item.append(drop);
          return item;
        }),
    );
  }

  private renderFeed(notes: NotificationView[]): void {
    this.part(".notifications").replaceChildren(
      ...notes.map((note) => {
        const item = document.createElement("li");
        item.dataset.kind = note.kind;
        if (note.kind === "record_accessed") {
          const at = new Date(note.body.time * 1000).toISOString();
          item.textContent = `${note.body.physician} opened your record from ${note.body.location} at ${at} (${note.body.via})`;
        } else {
          item.textContent = `${note.kind}: ${JSON.stringify(note.body)}`;
        }
        return item;
      }),
    );
  }

  private part<T extends Element = Element>(selector: string): T {
    const found = this.root.querySelector<T>(selector);
    if (!found) {
      throw new Error(`dashboard is missing ${selector}`);
    }
    return found;
  }
}
