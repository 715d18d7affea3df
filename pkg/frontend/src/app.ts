/**
 * DOM wiring: class cards on the left, suggestion panel on the right.
 *
 * The heavy lifting lives in EditorState and RecommendClient; this file only
 * renders state and forwards events.
 */

import { EditorState } from "./editor.js";
import { RecommendClient, ServiceError } from "./client.js";

const SERVICE_URL =
  new URLSearchParams(window.location.search).get("service") ?? "http://127.0.0.1:8080";

const state = new EditorState();
const client = new RecommendClient(SERVICE_URL);

const root = document.getElementById("app")!;

function el(tag: string, attrs: Record<string, string> = {}, text = ""): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) node.textContent = text;
  return node;
}

function flash(message: string): void {
  const banner = document.getElementById("banner")!;
  banner.textContent = message;
  banner.classList.add("visible");
  setTimeout(() => banner.classList.remove("visible"), 4000);
}

async function requestSuggestions(): Promise<void> {
  if (!state.slot) return;
  state.panel.loading = true;
  render();
  try {
    const response = await client.recommend(state.buildRequest());
    state.applySuggestions(response.candidates, response.context_size);
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") return;
    state.panel.loading = false;
    state.panel.error =
      err instanceof ServiceError ? err.message : "service unreachable, retry";
  }
  render();
}

function acceptSuggestion(index: number): void {
  const problem = state.acceptSuggestion(index);
  if (problem) flash(problem);
  render();
}

function classCard(clsIndex: number): HTMLElement {
  const cls = state.metamodel.classes[clsIndex];
  const card = el("div", { class: "card" });
  const head = el("div", { class: "card-head" });
  const title = el("strong", {}, cls.name);
  title.onclick = () => {
    state.selectRenameTarget({ kind: "class", class_index: clsIndex });
    void requestSuggestions();
  };
  head.append(title, el("span", { class: "hint" }, "click name to rename"));
  card.append(head);

  const members = el("ul", { class: "members" });
  cls.attributes.forEach((attr, i) => {
    const row = el("li", {}, `${attr.name}: ${attr.type}`);
    row.onclick = () => {
      state.selectRenameTarget({ kind: "attribute", class_index: clsIndex, member_index: i });
      void requestSuggestions();
    };
    members.append(row);
  });
  cls.associations.forEach((assoc, i) => {
    const row = el("li", {}, `${assoc.name} → ${assoc.target}`);
    row.onclick = () => {
      state.selectRenameTarget({ kind: "association", class_index: clsIndex, member_index: i });
      void requestSuggestions();
    };
    members.append(row);
  });
  card.append(members);

  const addAttr = el("button", {}, "+ attribute");
  addAttr.onclick = () => {
    state.selectPendingSlot({ kind: "attribute", owner: cls.name, type: "EString" });
    void requestSuggestions();
  };
  const addAssoc = el("button", {}, "+ association");
  addAssoc.onclick = () => {
    const target = prompt(`target class for the new association from ${cls.name}:`);
    if (!target) return;
    if (!state.metamodel.classes.some((c) => c.name === target)) {
      flash(`target class "${target}" does not exist yet`);
      return;
    }
    state.selectPendingSlot({ kind: "association", owner: cls.name, target });
    void requestSuggestions();
  };
  card.append(addAttr, addAssoc);
  return card;
}

function suggestionPanel(): HTMLElement {
  const panel = el("div", { class: "panel" });
  panel.append(el("h2", {}, "Suggestions"));
  if (state.panel.contextSize !== null) {
    panel.append(el("p", { class: "hint" }, `context size: ${state.panel.contextSize}`));
  }
  if (state.panel.loading) {
    panel.append(el("p", {}, "thinking..."));
  } else if (state.panel.error) {
    const row = el("p", { class: "error" }, state.panel.error);
    const retry = el("button", {}, "retry");
    retry.onclick = () => void requestSuggestions();
    row.append(" ", retry);
    panel.append(row);
  } else if (state.panel.candidates.length === 0) {
    panel.append(el("p", { class: "hint" }, "select a slot to get suggestions"));
  }
  state.panel.candidates.forEach((candidate, i) => {
    const row = el("div", { class: "candidate" });
    const accept = el("button", { class: "accept" }, `${i + 1}. ${candidate.text}`);
    accept.onclick = () => acceptSuggestion(i);
    row.append(accept, el("span", { class: "score" }, candidate.score.toFixed(3)));
    panel.append(row);
  });
  if (state.panel.candidates.length > 0) {
    const reject = el("button", {}, "reject all");
    reject.onclick = () => {
      state.rejectAll();
      render();
    };
    panel.append(reject);
  }
  return panel;
}

function toolbar(): HTMLElement {
  const bar = el("div", { class: "toolbar" });

  const mode = el("select") as HTMLSelectElement;
  for (const value of ["construct", "rename"]) {
    mode.append(new Option(`${value} mode`, value, false, state.mode === value));
  }
  mode.onchange = () => {
    state.mode = mode.value as "construct" | "rename";
    render();
  };

  const k = el("select") as HTMLSelectElement;
  for (const value of [1, 5, 10, 20]) {
    k.append(new Option(`top-${value}`, String(value), false, state.k === value));
  }
  k.onchange = () => {
    state.k = Number(k.value);
  };

  const addClass = el("button", {}, "+ class");
  addClass.onclick = () => {
    state.selectPendingSlot({ kind: "class" });
    void requestSuggestions();
  };

  const addClassNamed = el("button", {}, "+ class (typed name)");
  addClassNamed.onclick = () => {
    const name = prompt("class name:");
    if (!name) return;
    const problem = state.addClass(name);
    if (problem) flash(problem);
    render();
  };

  const exportBtn = el("button", {}, "export JSON");
  exportBtn.onclick = () => {
    const blob = new Blob([state.exportJson(2)], { type: "application/json" });
    const link = el("a", {
      href: URL.createObjectURL(blob),
      download: `${state.metamodel.id || "metamodel"}.json`,
    }) as HTMLAnchorElement;
    link.click();
  };

  const importInput = el("input", { type: "file", accept: ".json" }) as HTMLInputElement;
  importInput.onchange = async () => {
    const file = importInput.files?.[0];
    if (!file) return;
    const problem = state.importJson(await file.text());
    if (problem) flash(problem);
    render();
  };

  const undoBtn = el("button", {}, "undo");
  undoBtn.onclick = () => {
    if (!state.undo()) flash("nothing to undo");
    render();
  };

  bar.append(mode, k, addClass, addClassNamed, undoBtn, exportBtn, importInput);
  return bar;
}

function render(): void {
  root.replaceChildren();
  root.append(toolbar());
  const main = el("div", { class: "columns" });
  const cards = el("div", { class: "cards" });
  state.metamodel.classes.forEach((_, i) => cards.append(classCard(i)));
  if (state.metamodel.classes.length === 0) {
    cards.append(el("p", { class: "hint" }, "empty metamodel; add a class to begin"));
  }
  main.append(cards, suggestionPanel());
  root.append(main);
}

async function start(): Promise<void> {
  render();
  try {
    const health = await client.health();
    if (health.status !== "ready") flash("service is still loading its model");
  } catch {
    flash(`cannot reach service at ${SERVICE_URL}; pass ?service=http://host:port`);
  }
}

void start();
