// Scripted run of the demo golden transcript against the real service:
// login, answer fever/cough/wheezing/sputum, read the outcome screen.

import { afterAll, beforeAll, beforeEach, describe, expect, it } from "vitest";
import { ApiClient } from "../../src/api";
import { mountApp } from "../../src/app";
import {
  ADMIN_PASSWORD,
  type Service,
  click,
  demoKbText,
  loginThroughForm,
  q,
  setSelect,
  startService,
  text,
  waitFor,
} from "./harness";

let service: Service;
let fetchBroken = false;

const GOLDEN_HOW = [
  "diagnosis = bronchitis  [rule R3]",
  "  suspicion = respiratory_infection  [rule R1]",
  "    fever = true  [answered]",
  "    cough = true  [answered]",
  "  sputum = purulent  [answered]",
].join("\n");

function appClient(): ApiClient {
  // the app's fetch can be cut off mid-session to prove nothing runs locally
  return new ApiClient(service.url, ((input: RequestInfo | URL, init?: RequestInit) => {
    if (fetchBroken) return Promise.reject(new TypeError("network unreachable"));
    return fetch(input, init);
  }) as typeof fetch);
}

beforeAll(async () => {
  service = await startService();
  const seed = new ApiClient(service.url);
  await seed.login("admin", ADMIN_PASSWORD);
  await seed.uploadKb({ id: "chest", dsl: demoKbText() });
  await seed.createUser("drlee", "lee-pw", "practitioner");
});

afterAll(async () => {
  await service.stop();
});

beforeEach(() => {
  fetchBroken = false;
  document.body.innerHTML = '<div id="app"></div>';
  window.location.hash = "#/consult";
});

async function answerQuestion(value: string): Promise<void> {
  const button = await waitFor(
    () => q<HTMLButtonElement>(`.answer-btn[data-value="${value}"]`),
    `answer button ${value}`,
  );
  click(button);
}

async function promptShows(fragment: string): Promise<void> {
  await waitFor(
    () => text(".question-prompt").includes(fragment),
    `question prompt containing ${fragment}`,
  );
}

describe("consultation flow", () => {
  it("runs the golden transcript to the bronchitis outcome with the HOW tree", async () => {
    const client = appClient();
    mountApp(document.getElementById("app")!, client);
    await loginThroughForm("drlee", "lee-pw");

    click(await waitFor(() => q<HTMLButtonElement>("#start-consult"), "start button"));
    await promptShows("Does the patient have fever?");
    await answerQuestion("true");
    await promptShows("persistent cough");
    await answerQuestion("true");

    // the why? panel at the wheezing question names R2
    await promptShows("wheezing");
    click(q<HTMLButtonElement>("#answer-why")!);
    const whyText = await waitFor(() => text(".why-text") || null, "why panel");
    expect(whyText).toContain("rule R2");
    expect(whyText).toContain("to establish diagnosis");

    await answerQuestion("false");
    await promptShows("sputum");
    await answerQuestion("purulent");

    await waitFor(() => q(".outcome-card"), "outcome screen");
    expect(text(".outcome-value")).toBe("diagnosis = bronchitis");
    expect(text(".recommendation")).toBe("recommend: Consider antibiotic therapy");
    const howTree = await waitFor(() => q(".how-tree"), "how tree");
    expect(howTree.textContent).toBe(GOLDEN_HOW);

    // record/replay: the UI's answer sequence, replayed through the raw API,
    // produces the identical outcome
    const raw = new ApiClient(service.url);
    await raw.login("drlee", "lee-pw");
    let replay = await raw.createSession({ kb_id: "chest", mode: "backward", goal: "diagnosis" });
    for (const answer of [
      { kind: "boolean" as const, payload: true },
      { kind: "boolean" as const, payload: true },
      { kind: "boolean" as const, payload: false },
      { kind: "symbol" as const, payload: "purulent" },
    ]) {
      replay = await raw.postAnswer(replay.id, answer);
    }
    expect(replay.status).toBe("done");
    expect(replay.outcome?.value).toEqual({ kind: "symbol", payload: "bronchitis" });
  });

  it("answers unknown everywhere and lands on the not-proven screen", async () => {
    mountApp(document.getElementById("app")!, appClient());
    await loginThroughForm("drlee", "lee-pw");
    click(await waitFor(() => q<HTMLButtonElement>("#start-consult"), "start button"));
    for (;;) {
      await waitFor(() => q("#answer-unknown") || q(".outcome-card"), "question or outcome");
      if (q(".outcome-card")) break;
      click(q<HTMLButtonElement>("#answer-unknown")!);
      await new Promise((r) => setTimeout(r, 30));
    }
    expect(text(".outcome-value")).toBe("diagnosis not proven");
  });

  it("steps back through history by replaying the answer prefix", async () => {
    mountApp(document.getElementById("app")!, appClient());
    await loginThroughForm("drlee", "lee-pw");
    click(await waitFor(() => q<HTMLButtonElement>("#start-consult"), "start button"));
    await answerQuestion("true"); // fever
    await promptShows("persistent cough");
    await answerQuestion("true"); // cough
    await promptShows("wheezing");
    const back = await waitFor(
      () => q<HTMLButtonElement>('.history-entry button[data-index="1"]'),
      "back-to-cough button",
    );
    click(back);
    // a fresh session replayed fever=true now asks cough again
    await promptShows("persistent cough");
    expect(document.querySelectorAll(".history-entry").length).toBe(1);
  });

  it("cannot produce an outcome once the network is gone", async () => {
    mountApp(document.getElementById("app")!, appClient());
    await loginThroughForm("drlee", "lee-pw");
    click(await waitFor(() => q<HTMLButtonElement>("#start-consult"), "start button"));
    await promptShows("fever");
    fetchBroken = true;
    await answerQuestion("true");
    await waitFor(() => q(".consult-error"), "network error banner");
    expect(q(".outcome-card")).toBeNull();
    expect(text(".question-prompt")).toContain("fever"); // still on the question
  });

  it("hybrid mode asks the same questions and derives the same facts", async () => {
    mountApp(document.getElementById("app")!, appClient());
    await loginThroughForm("drlee", "lee-pw");
    const mode = await waitFor(() => q<HTMLSelectElement>("#mode-select"), "mode select");
    setSelect(mode, "hybrid");
    click(await waitFor(() => q<HTMLButtonElement>("#start-consult"), "start button"));
    for (const value of ["true", "true", "false", "purulent"]) {
      await answerQuestion(value);
    }
    await waitFor(() => q(".outcome-card"), "outcome screen");
    const derived = Array.from(document.querySelectorAll(".outcome-value")).map(
      (node) => node.textContent,
    );
    expect(derived).toContain("diagnosis = bronchitis");
    expect(derived).toContain("suspicion = respiratory_infection");
  });
});
