// Wires the session to the static shell. boot() returns the session so a
// scripted harness can drive the page and inspect its state.

import { createClient } from "./api";
import { Session } from "./session";
import { Handlers, render } from "./view";

const input = (doc: Document, id: string): HTMLInputElement =>
  doc.getElementById(id) as HTMLInputElement;

export const boot = (base = "", doc: Document = document): Session => {
  const client = createClient(base);
  const handlers: Handlers = {
    onCandidate: (i) => void session.clickCandidate(i),
    onAcceptGhost: (i) => void session.acceptGhost(i),
    onRejectGhost: () => session.rejectGhost(),
    onDismissBanner: (id) => session.dismissBanner(id),
  };
  const session = new Session(client, () => render(doc, session.state, handlers));

  const addForm = doc.getElementById("add-form") as HTMLFormElement;
  addForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const field = input(doc, "token-input");
    void session.appendTokens(field.value.split(/\s+/));
    field.value = "";
  });
  input(doc, "token-input").addEventListener("input", (event) => {
    const raw = (event.target as HTMLInputElement).value;
    const last = raw.split(/\s+/).pop() ?? "";
    void session.suggest(last);
  });

  doc.getElementById("undo-btn")!.addEventListener("click", () => void session.undoStep());
  doc.getElementById("redo-btn")!.addEventListener("click", () => void session.redoStep());
  doc.getElementById("pop-btn")!.addEventListener("click", () => void session.popToken());
  doc.getElementById("clear-btn")!.addEventListener("click", () => void session.clearContext());

  input(doc, "gap-width").addEventListener("change", (event) => {
    session.setGapWidth(Number((event.target as HTMLInputElement).value));
  });
  doc.getElementById("preview-btn")!.addEventListener("click", () => void session.previewGap());
  doc.getElementById("k-select")!.addEventListener("change", (event) => {
    void session.setK(Number((event.target as HTMLSelectElement).value));
  });

  void session.start();
  return session;
};
