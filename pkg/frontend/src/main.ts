/**
 * Browser entry point. Reads the runtime config, connects the
 * WebSocket bridge, shows a login form, and mounts the view that fits
 * the account kind the gateway reported.
 */
import { GatewayClient } from "./api";
import { WebSocketTransport } from "./bridge";
import { DashboardController } from "./dashboard";
import { WorkspaceController } from "./workspace";

interface ConsoleConfig {
  endpoint: string;
  pollMs?: number;
}

async function loadConfig(): Promise<ConsoleConfig> {
  const inline = (window as any).__CONSOLE_CONFIG__;
  if (inline) {
    return inline as ConsoleConfig;
  }
  const fetched = await fetch("console.json");
  return (await fetched.json()) as ConsoleConfig;
}

function loginContext(form: HTMLFormElement): Record<string, string> {
  const context: Record<string, string> = {};
  for (const name of ["address", "clinic_endpoint", "hospital_tunnel", "tunnel_secret"]) {
    const field = form.elements.namedItem(name) as HTMLInputElement | null;
    if (field && field.value.trim()) {
      context[name] = field.value.trim();
    }
  }
  return context;
}

async function start(): Promise<void> {
  const config = await loadConfig();
  const transport = await WebSocketTransport.connect(config.endpoint);
  const client = new GatewayClient(transport);
  const loginPane = document.querySelector<HTMLElement>("#login")!;
  const viewPane = document.querySelector<HTMLElement>("#view")!;
  const form = loginPane.querySelector("form")!;
  const errorLine = loginPane.querySelector<HTMLElement>(".login-error")!;

  let active: DashboardController | WorkspaceController | null = null;

  const showLogin = () => {
    if (active instanceof DashboardController) {
      active.unmount();
    }
    active = null;
    viewPane.hidden = true;
    loginPane.hidden = false;
  };
  client.onSessionLost = showLogin;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const actorId = (form.elements.namedItem("actor_id") as HTMLInputElement).value.trim();
    const password = (form.elements.namedItem("password") as HTMLInputElement).value;
    client
      .login(actorId, password, loginContext(form))
      .then(async (session) => {
        loginPane.hidden = true;
        viewPane.hidden = false;
        errorLine.textContent = "";
        if (session.kind === "patient") {
          active = new DashboardController(client, viewPane, { pollMs: config.pollMs });
        } else {
          active = new WorkspaceController(client, viewPane);
        }
        await active.mount();
      })
      .catch((err) => {
        errorLine.textContent = String(err.message ?? err);
      });
  });
}

start().catch((err) => {
  document.body.textContent = `console failed to start: ${err.message ?? err}`;
});
