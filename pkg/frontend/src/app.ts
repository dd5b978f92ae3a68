// Application shell: login, hash routing, role-gated views. A thin client:
// the server owns every decision, including who may see which affordances.

import { AdminView } from "./admin";
import { ApiClient, ApiError } from "./api";
import { ConsultView } from "./consult";
import { clear, el } from "./dom";
import { EditorView } from "./editor";

type Route = "consult" | "editor" | "admin";

const EDITOR_ROLES = new Set(["admin", "knowledge_engineer"]);

export class App {
  private route: Route = "consult";
  private error: string | null = null;

  constructor(
    private client: ApiClient,
    private root: HTMLElement,
  ) {}

  start(): void {
    window.addEventListener("hashchange", () => {
      this.route = this.routeFromHash();
      void this.renderRoute();
    });
    this.route = this.routeFromHash();
    void this.renderRoute();
  }

  private routeFromHash(): Route {
    const hash = window.location.hash.replace(/^#\/?/, "");
    if (hash === "editor" || hash === "admin") return hash;
    return "consult";
  }

  private async renderRoute(): Promise<void> {
    clear(this.root);
    if (!this.client.token) {
      this.renderLogin();
      return;
    }
    const main = el("main", { id: "view" });
    this.root.append(this.renderNav(), main);
    try {
      if (this.route === "admin") {
        if (this.client.role !== "admin") {
          main.append(accessDenied("administration"));
          return;
        }
        await new AdminView(this.client, main).mount();
      } else if (this.route === "editor") {
        if (!EDITOR_ROLES.has(this.client.role ?? "")) {
          main.append(accessDenied("the knowledge-base editor"));
          return;
        }
        await new EditorView(this.client, main).mount();
      } else {
        await new ConsultView(this.client, main).mount();
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 401) {
        this.client.logout();
        this.renderLogin("Your session expired; please sign in again.");
        return;
      }
      main.append(
        el(
          "p",
          { class: "error-banner" },
          err instanceof ApiError ? `${err.status}: ${err.detail}` : String(err),
        ),
      );
    }
  }

  private renderNav(): HTMLElement {
    const links: HTMLElement[] = [
      el("a", { href: "#/consult", class: "nav-link" }, "Consult"),
    ];
    if (EDITOR_ROLES.has(this.client.role ?? "")) {
      links.push(el("a", { href: "#/editor", class: "nav-link" }, "Editor"));
    }
    if (this.client.role === "admin") {
      links.push(el("a", { href: "#/admin", class: "nav-link" }, "Admin"));
    }
    return el(
      "nav",
      { class: "topbar" },
      el("span", { class: "brand" }, "chainshell"),
      ...links,
      el(
        "span",
        { class: "whoami" },
        `${this.client.username} (${this.client.role})`,
      ),
      el(
        "button",
        {
          id: "logout-btn",
          onclick: (() => {
            this.client.logout();
            void this.renderRoute();
          }) as EventListener,
        },
        "sign out",
      ),
    );
  }

  private renderLogin(message?: string): void {
    clear(this.root);
    const username = el("input", { id: "login-username", type: "text", placeholder: "username" });
    const password = el("input", {
      id: "login-password",
      type: "password",
      placeholder: "password",
    });
    this.root.append(
      el(
        "section",
        { class: "card login-card" },
        el("h1", {}, "chainshell"),
        message ? el("p", { class: "login-message" }, message) : null,
        el(
          "form",
          {
            id: "login-form",
            onsubmit: ((event: Event) => {
              event.preventDefault();
              void this.login(username.value, password.value);
            }) as EventListener,
          },
          username,
          password,
          el("button", { id: "login-btn", type: "submit" }, "sign in"),
        ),
        this.error ? el("p", { class: "login-error error-banner" }, this.error) : null,
      ),
    );
  }

  private async login(username: string, password: string): Promise<void> {
    this.error = null;
    try {
      await this.client.login(username, password);
      await this.renderRoute();
    } catch (err) {
      this.error =
        err instanceof ApiError && err.status === 401
          ? "Invalid credentials."
          : String(err);
      this.renderLogin();
    }
  }
}

function accessDenied(what: string): HTMLElement {
  return el(
    "section",
    { class: "card access-denied" },
    el("h2", {}, "Access denied"),
    el("p", {}, `Your role does not allow access to ${what}.`),
  );
}

export function mountApp(root: HTMLElement, client: ApiClient): App {
  const app = new App(client, root);
  app.start();
  return app;
}
