// User administration: list, create with a role, delete (the server refuses
// to delete the last admin; that refusal is surfaced as a blocking notice).

import { ApiClient, ApiError } from "./api";
import { clear, el } from "./dom";
import type { Role, UserView } from "./types";

// least privilege first: it is the default selection in the create form
const ROLES: Role[] = ["practitioner", "knowledge_engineer", "admin"];

export class AdminView {
  private users: UserView[] = [];
  private notice: string | null = null;

  constructor(
    private client: ApiClient,
    private root: HTMLElement,
  ) {}

  async mount(): Promise<void> {
    await this.refresh();
  }

  private async refresh(): Promise<void> {
    this.users = await this.client.listUsers();
    this.render();
  }

  private async create(username: string, password: string, role: Role): Promise<void> {
    this.notice = null;
    try {
      await this.client.createUser(username, password, role);
      await this.refresh();
    } catch (err) {
      this.notice = err instanceof ApiError ? err.detail : String(err);
      this.render();
    }
  }

  private async remove(username: string): Promise<void> {
    this.notice = null;
    try {
      await this.client.deleteUser(username);
      await this.refresh();
    } catch (err) {
      this.notice = err instanceof ApiError ? err.detail : String(err);
      this.render();
    }
  }

  private render(): void {
    clear(this.root);
    const rows = this.users.map((user) =>
      el(
        "tr",
        { class: "user-row", "data-username": user.username },
        el("td", {}, user.username),
        el("td", {}, user.role),
        el(
          "td",
          {},
          el(
            "button",
            {
              class: "user-delete",
              onclick: (() => void this.remove(user.username)) as EventListener,
            },
            "delete",
          ),
        ),
      ),
    );
    const username = el("input", { id: "user-name", type: "text", placeholder: "username" });
    const password = el("input", { id: "user-password", type: "password", placeholder: "password" });
    const role = el(
      "select",
      { id: "user-role" },
      ...ROLES.map((r) => el("option", { value: r }, r)),
    );
    this.root.append(
      el(
        "section",
        { class: "card admin-card" },
        el("h2", {}, "Users"),
        el(
          "table",
          { class: "user-table" },
          el("thead", {}, el("tr", {}, el("th", {}, "username"), el("th", {}, "role"), el("th", {}, ""))),
          el("tbody", {}, ...rows),
        ),
        el(
          "form",
          {
            class: "user-create",
            onsubmit: ((event: Event) => {
              event.preventDefault();
              void this.create(
                username.value.trim(),
                password.value,
                role.value as Role,
              );
            }) as EventListener,
          },
          username,
          password,
          role,
          el("button", { id: "user-create-btn", type: "submit" }, "create user"),
        ),
        this.notice ? el("p", { class: "admin-notice error-banner" }, this.notice) : null,
      ),
    );
  }
}
