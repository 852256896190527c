/** Client-side mirror of a gateway login session. */

export interface LoginResult {
  session: string;
  actor_id: string;
  kind: string;
  display_name: string;
  location: string;
  location_confirmed: boolean;
  session_ttl_s: number;
}

/**
 * Tracks the token plus a local expiry estimate. The gateway slides the
 * idle window on every request, so each successful call refreshes the
 * estimate; when it lapses the UI forces a fresh login instead of
 * letting a request fail mid-action.
 */
export class ViewSession {
  readonly token: string;
  readonly actorId: string;
  readonly kind: string;
  readonly displayName: string;
  readonly location: string;
  readonly locationConfirmed: boolean;
  private readonly ttlMs: number;
  private deadline: number;

  constructor(result: LoginResult, now: () => number = Date.now) {
    this.token = result.session;
    this.actorId = result.actor_id;
    this.kind = result.kind;
    this.displayName = result.display_name;
    this.location = result.location;
    this.locationConfirmed = result.location_confirmed;
    this.ttlMs = result.session_ttl_s * 1000;
    this.deadline = now() + this.ttlMs;
  }

  touch(now: () => number = Date.now): void {
    this.deadline = now() + this.ttlMs;
  }

  expired(now: () => number = Date.now): boolean {
    return now() >= this.deadline;
  }
}
