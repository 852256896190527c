/**
 * Physician workspace: search, code redemption, record tabs, case
 * editor. Which controls are live comes straight from the scope the
 * gateway reports; the workspace renders that answer and nothing else.
 */
import { GatewayClient, GatewayError, SearchHit, StaleGuard, WireScope } from "./api";

export class WorkspaceController {
  readonly root: HTMLElement;
  private readonly searchGuard = new StaleGuard();
  private baseline: WireScope | null = null;
  private openPatient: { patientId: string; sections: Record<string, string>; scope: WireScope } | null = null;

  constructor(
    private readonly client: GatewayClient,
    root: HTMLElement,
  ) {
    this.root = root;
  }

  async mount(): Promise<void> {
    this.root.innerHTML = `
      <div class="workspace">
        <section class="search">
          <input class="name-query" placeholder="patient name">
          <button class="name-search" type="button" disabled>Search by name</button>
          <input class="id-query" placeholder="record id">
          <button class="id-search" type="button" disabled>Search by id</button>
          <p class="search-hint"></p>
          <ul class="hits"></ul>
        </section>
        <section class="redeem">
          <input class="redeem-patient" placeholder="record id">
          <input class="redeem-code" placeholder="one-time code">
          <button class="redeem-go" type="button">Redeem</button>
        </section>
        <section class="record" hidden>
          <h2 class="record-name"></h2>
          <nav class="tabs"></nav>
          <div class="tab-view"><h3></h3><ul class="entries"></ul></div>
          <fieldset class="case-editor" disabled>
            <select class="entry-kind">
              <option value="case">case</option>
              <option value="visit">visit</option>
            </select>
            <input class="case-summary" placeholder="summary">
            <input class="disease-codes" placeholder="disease codes, comma separated">
            <button class="case-submit" type="button">Append</button>
          </fieldset>
        </section>
        <p class="error-line"></p>
      </div>`;
    this.part<HTMLButtonElement>(".name-search").addEventListener("click", () => {
      void this.searchByName(this.part<HTMLInputElement>(".name-query").value.trim());
    });
    this.part<HTMLButtonElement>(".id-search").addEventListener("click", () => {
      void this.searchById(this.part<HTMLInputElement>(".id-query").value.trim());
    });
    this.part<HTMLButtonElement>(".redeem-go").addEventListener("click", () => {
      void this.redeem(
        this.part<HTMLInputElement>(".redeem-patient").value.trim(),
        this.part<HTMLInputElement>(".redeem-code").value.trim(),
      );
    });
    this.part<HTMLButtonElement>(".case-submit").addEventListener("click", () => {
      void this.appendCase();
    });
    await this.refreshAffordances();
  }

  /**
   * Ask the gateway what this session may do toward a stranger and
   * wire the search controls to exactly that answer.
   */
  async refreshAffordances(): Promise<void> {
    const answer = await this.client.affordances();
    this.baseline = answer.scope;
    const axes = answer.scope.searchable_by;
    this.part<HTMLButtonElement>(".name-search").disabled = !axes.includes("name");
    this.part<HTMLButtonElement>(".id-search").disabled = !axes.includes("patient_id");
    this.part(".search-hint").textContent =
      `from ${answer.location}: searchable by ` + (axes.length ? axes.join(", ") : "nothing");
  }

  get baselineScope(): WireScope | null {
    return this.baseline;
  }

  async searchByName(query: string): Promise<void> {
    const seq = this.searchGuard.begin();
    const found = await this.report(() => this.client.searchByName(query));
    if (found && this.searchGuard.accept(seq)) {
      this.renderHits(found.hits);
    }
  }

  async searchById(patientId: string): Promise<void> {
    const seq = this.searchGuard.begin();
    const found = await this.report(() => this.client.searchById(patientId));
    if (found && this.searchGuard.accept(seq)) {
      this.renderHits(found.hits);
    }
  }

  /**
   * Trade a spoken one-time code for the record, then fetch the hit
   * again so the tabs and editor follow the scope the token earned.
   */
  async redeem(patientId: string, code: string): Promise<void> {
    const unlocked = await this.report(() => this.client.otpRedeem(patientId, code));
    if (!unlocked) {
      return;
    }
    const found = await this.report(() => this.client.searchById(unlocked.patient_id));
    const hit = found?.hits[0];
    if (hit) {
      this.openRecord(unlocked.patient_id, hit);
    }
  }

  private openRecord(patientId: string, hit: SearchHit): void {
    this.openPatient = { patientId, sections: hit.sections, scope: hit.scope };
    const panel = this.part<HTMLElement>(".record");
    panel.hidden = false;
    this.part(".record-name").textContent = hit.display_name ?? patientId;
    this.part(".tabs").replaceChildren(
      ...Object.keys(hit.sections)
        .sort()
        .map((kind) => {
          const tab = document.createElement("button");
          tab.type = "button";
          tab.className = "tab";
          tab.dataset.kind = kind;
          tab.textContent = kind;
          tab.addEventListener("click", () => void this.openTab(kind));
          return tab;
        }),
    );
    this.part<HTMLFieldSetElement>(".case-editor").disabled = !hit.scope.can_write_medical;
  }

  async openTab(kind: string): Promise<void> {
    if (!this.openPatient) {
      return;
    }
    const view = await this.report(() => this.client.readSection(this.openPatient!.sections[kind]));
    if (!view) {
      return;
    }
    this.part(".tab-view h3").textContent = kind;
    const list = this.part(".tab-view .entries");
    if (view.entries) {
      list.replaceChildren(
        ...view.entries.map((entry) => {
          const item = document.createElement("li");
          item.dataset.entryId = entry.entry_id;
          const tags = [entry.hospital_tag, entry.clinic_tag, entry.physician_tag]
            .filter(Boolean)
            .join(" ");
          item.textContent = `#${entry.seq} ${entry.entry_kind} by ${entry.author} ${tags} ${JSON.stringify(entry.body)}`;
          return item;
        }),
      );
    } else {
      const item = document.createElement("li");
      item.textContent = JSON.stringify(view.payload ?? {});
      list.replaceChildren(item);
    }
  }

  async appendCase(): Promise<void> {
    if (!this.openPatient) {
      return;
    }
    const me = this.client.session;
    const codes = this.part<HTMLInputElement>(".disease-codes").value
      .split(",")
      .map((code) => code.trim())
      .filter(Boolean);
    const entry: Record<string, unknown> = {
      entry_kind: this.part<HTMLSelectElement>(".entry-kind").value,
      body: { summary: this.part<HTMLInputElement>(".case-summary").value },
      physician_tag: me?.actorId,
      disease_codes: codes,
    };
    // Care entries carry the place they happened; the session location
    // fingerprint is "kind:value".
    const place = me?.location ?? "";
    if (place.startsWith("clinic:")) {
      entry.clinic_tag = place.slice("clinic:".length);
    } else if (place.startsWith("hospital:")) {
      entry.hospital_tag = place.slice("hospital:".length);
    }
    const receipt = await this.report(() =>
      this.client.appendEntry(this.openPatient!.sections["medical"], entry),
    );
    if (receipt) {
      await this.openTab("medical");
    }
  }

  private renderHits(hits: SearchHit[]): void {
    this.part(".hits").replaceChildren(
      ...hits.map((hit) => {
        const item = document.createElement("li");
        if (hit.patient_id) {
          item.dataset.patientId = hit.patient_id;
        }
        item.textContent = [hit.display_name, hit.patient_id, hit.scope.level]
          .filter(Boolean)
          .join(" ");
        const open = document.createElement("button");
        open.type = "button";
        open.textContent = "Open";
        open.addEventListener("click", () => this.openRecord(hit.patient_id ?? "", hit));
        item.append(open);
        return item;
      }),
    );
  }

  /** Run a call, surfacing gateway errors verbatim in the error line. */
  private async report<T>(action: () => Promise<T>): Promise<T | null> {
    try {
      const outcome = await action();
      this.part(".error-line").textContent = "";
      return outcome;
    } catch (err) {
      if (err instanceof GatewayError) {
        this.part(".error-line").textContent = `${err.code}: ${err.message}`;
        return null;
      }
      throw err;
    }
  }

  private part<T extends Element = Element>(selector: string): T {
    const found = this.root.querySelector<T>(selector);
    if (!found) {
      throw new Error(`workspace is missing ${selector}`);
    }
    return found;
  }
}
